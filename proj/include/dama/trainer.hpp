#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dama/corpus.hpp"
#include "dama/hardness.hpp"
#include "dama/objective.hpp"
#include "dama/policy.hpp"
#include "dama/responsiveness.hpp"

namespace dama {

/// Which adaptive factors are active.
enum class TrainMode {
    dpo,   ///< static beta
    d2po,  ///< data hardness only
    mdpo,  ///< model responsiveness only (with outlier filtering)
    dama,  ///< both
};

enum class CombineStrategy { multiply, weighted };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);
std::string to_string(CombineStrategy combine);
CombineStrategy parse_combine_strategy(const std::string& text);

struct TrainConfig {
    double base_beta = 0.1;
    std::size_t batch_size = 16;
    std::size_t keep_k = 12;
    double gamma = 0.9;
    std::size_t epochs = 4;
    double learning_rate = 0.05;
    TrainMode mode = TrainMode::dama;
    CombineStrategy combine = CombineStrategy::multiply;
    double rho = 0.5;  ///< only used by the weighted combination
    FilterStrategy filter = FilterStrategy::extremes;
    HardnessMode hardness_mode = HardnessMode::probabilities;
    /// Divide the retained gap sum by (batch_size - keep_k) instead of the retained count.
    bool legacy_eq12_norm = false;
    /// Filter raw gaps against the running mean instead of normalized gaps.
    bool filter_on_raw = false;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::size_t context_count = 64;
    /// Force the data factor to 1 regardless of mode.
    bool force_alpha_d_one = false;
    /// Force the model factor to 1 regardless of mode (also skips the running-mean update).
    bool force_alpha_m_one = false;
    /// Global-norm gradient clip; 0 disables.
    double grad_clip = 0.0;
    /// Worker threads for per-instance work. Results do not depend on it.
    std::size_t threads = 1;

    /// Throws InputError describing the first violated constraint.
    void validate() const;

    [[nodiscard]] bool uses_data_factor() const;
    [[nodiscard]] bool uses_model_factor() const;
    [[nodiscard]] bool uses_filter() const;
};

struct BatchReport {
    std::size_t epoch = 0;
    std::size_t batch_index = 0;
    double loss = 0.0;
    double alpha_m = 1.0;
    double mean_beta_c = 0.0;
    /// Running mean in effect while this batch was processed (before its update).
    double running_mean = 0.0;
    std::size_t retained_count = 0;
    double mean_raw_gap = 0.0;
    /// Filtered batch mean of normalized gaps. Not part of metrics.csv.
    double batch_responsiveness = 0.0;
};

struct EvalReport {
    double preference_accuracy = 0.0;
    double mean_gap_easy = 0.0;
    double mean_gap_hard = 0.0;
    double bucket_threshold = 0.0;
    std::size_t easy_count = 0;
    std::size_t hard_count = 0;
    double mean_gap = 0.0;
};

struct TrainResult {
    PolicyParams policy;
    ReferenceSnapshot reference;
    std::vector<BatchReport> reports;
};

/// Raised when the loss stops being finite. Carries the telemetry up to that point.
class TrainingAborted : public std::runtime_error {
public:
    TrainingAborted(const std::string& what, std::vector<BatchReport> reports)
        : std::runtime_error(what), reports_(std::move(reports)) {}
    [[nodiscard]] const std::vector<BatchReport>& reports() const { return reports_; }

private:
    std::vector<BatchReport> reports_;
};

/// Batch order for one epoch; independent of other epochs.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t count);

/// Initial policy for a run: uniform logits in [-0.1, 0.1] drawn from the seed.
PolicyParams initial_policy(const TrainConfig& config, std::size_t vocab_size);

/// Sequence log-probabilities of one batch under the policy and the reference.
struct BatchLogProbs {
    std::vector<double> theta_w, ref_w, theta_l, ref_l;
    std::vector<double> delta_w, delta_l;
};

BatchLogProbs batch_log_probs(const PolicyParams& policy, const PolicyParams& reference,
                              const std::vector<TokenizedInstance>& corpus, std::span<const std::size_t> members,
                              std::size_t threads = 1);

/// Dense gradient of the batch loss w.r.t. the policy logits, given the loss
/// report for the same batch. Masked-out instances contribute nothing.
std::vector<double> batch_logit_gradient(const PolicyParams& policy, const std::vector<TokenizedInstance>& corpus,
                                         std::span<const std::size_t> members, const LossReport& loss,
                                         std::span<const std::uint8_t> mask, std::size_t threads = 1);

/// Optional per-batch observer, called after each update.
using BatchObserver = std::function<void(const BatchReport&, const PolicyParams&)>;

TrainResult run_training(const TrainConfig& config, const std::vector<TokenizedInstance>& corpus,
                         std::size_t vocab_size, const HardnessTable& hardness, const BatchObserver& observer = {});

/// Per-instance reward gaps at a fixed beta.
std::vector<double> evaluate_gaps(const PolicyParams& policy, const ReferenceSnapshot& reference,
                                  const std::vector<TokenizedInstance>& corpus, double beta, std::size_t threads = 1);

EvalReport evaluate(const PolicyParams& policy, const ReferenceSnapshot& reference,
                    const std::vector<TokenizedInstance>& corpus, const std::vector<HardnessRecord>& hardness,
                    double beta, std::size_t threads = 1);

inline constexpr const char* kMetricsHeader =
    "epoch,batch,loss,alpha_m,mean_beta_c,running_mean,retained_count,mean_raw_gap";

void write_metrics_csv(const std::filesystem::path& path, const std::vector<BatchReport>& reports);
std::vector<BatchReport> load_metrics_csv(const std::filesystem::path& path);

void write_eval_json(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_eval_json(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace dama
