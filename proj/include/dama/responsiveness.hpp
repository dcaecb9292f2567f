#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dama {

/// Which instances the outlier filter drops.
enum class FilterStrategy {
    none,      ///< keep everything
    bottom,    ///< drop the N-K lowest gaps
    top,       ///< drop the N-K highest gaps
    extremes,  ///< keep the K gaps closest (squared distance) to the reference mean
};

std::string to_string(FilterStrategy strategy);
FilterStrategy parse_filter_strategy(const std::string& text);

inline constexpr double kDefaultGamma = 0.9;
inline constexpr double kDefaultGuardEpsilon = 1e-8;

/// Running mean of batch responsiveness. Single writer: the trainer.
struct ResponsivenessState {
    double running_mean = 0.0;
    double gamma = kDefaultGamma;
    std::uint64_t step = 0;
    double epsilon = kDefaultGuardEpsilon;

    /// Throws InputError unless gamma is in [0, 1), epsilon > 0 and the mean is finite.
    void validate() const;
};

struct BatchGapReport {
    std::vector<double> raw_gaps;
    std::vector<double> normalized_gaps;
    std::vector<std::uint8_t> mask;
    std::size_t retained_count = 0;
    double batch_responsiveness = 0.0;
    double alpha_m = 1.0;
};

/// beta * [(logp_theta(y_w) - logp_ref(y_w)) - (logp_theta(y_l) - logp_ref(y_l))] per instance.
std::vector<double> reward_gaps(std::span<const double> logp_theta_w, std::span<const double> logp_ref_w,
                                std::span<const double> logp_theta_l, std::span<const double> logp_ref_l,
                                double beta);

/// Divides by the running mean unless |running_mean| < epsilon, in which case gaps pass through.
std::vector<double> normalize_gaps(std::span<const double> raw_gaps, const ResponsivenessState& state);

/// 0/1 mask with exactly min(keep_k, N) ones for every strategy except `none`.
/// Ties are resolved in favour of the lower index.
std::vector<std::uint8_t> outlier_mask(std::span<const double> gaps, double reference_mean, std::size_t keep_k,
                                       FilterStrategy strategy);

/// Mean of retained gaps. Throws InputError if nothing is retained.
double batch_responsiveness(std::span<const double> normalized_gaps, std::span<const std::uint8_t> mask);

/// Sum of retained gaps divided by a fixed `divisor` (the literal N-K form).
double batch_responsiveness_fixed_divisor(std::span<const double> normalized_gaps,
                                          std::span<const std::uint8_t> mask, double divisor);

/// sigmoid(batch) / sigmoid(running mean).
double alpha_model(double batch_responsiveness, const ResponsivenessState& state);

/// R <- gamma * R + (1 - gamma) * batch; step + 1.
ResponsivenessState update_running_mean(const ResponsivenessState& state, double batch_responsiveness);

}  // namespace dama
