#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "dama/corpus.hpp"

namespace dama {

/// Context-conditioned categorical token model: every token of a response is
/// drawn independently from softmax(logits[context]).
class PolicyParams {
public:
    PolicyParams() = default;
    PolicyParams(std::size_t context_count, std::size_t vocab_size, double fill = 0.0);
    PolicyParams(std::size_t context_count, std::size_t vocab_size, std::vector<double> logits);

    /// i.i.d. uniform logits in [-spread, spread], reproducible across platforms.
    static PolicyParams random(std::size_t context_count, std::size_t vocab_size, std::uint64_t seed,
                               double spread = 0.1);

    [[nodiscard]] std::size_t context_count() const { return context_count_; }
    [[nodiscard]] std::size_t vocab_size() const { return vocab_size_; }
    [[nodiscard]] std::span<const double> row(std::size_t context) const;
    [[nodiscard]] std::span<double> row(std::size_t context);
    [[nodiscard]] const std::vector<double>& logits() const { return logits_; }
    [[nodiscard]] std::vector<double>& logits() { return logits_; }

    bool operator==(const PolicyParams&) const = default;

private:
    std::size_t context_count_ = 0;
    std::size_t vocab_size_ = 0;
    std::vector<double> logits_;
};

/// Frozen copy of a policy. Shares immutable storage, so copies are cheap.
class ReferenceSnapshot {
public:
    ReferenceSnapshot() = default;
    explicit ReferenceSnapshot(PolicyParams params)
        : params_(std::make_shared<const PolicyParams>(std::move(params))) {}

    [[nodiscard]] const PolicyParams& params() const { return *params_; }

private:
    std::shared_ptr<const PolicyParams> params_;
};

ReferenceSnapshot snapshot_reference(const PolicyParams& params);

/// Gradient restricted to a single context row.
struct SparseRowGradient {
    std::size_t context_id = 0;
    std::vector<double> row;
};

/// Sum over tokens of log softmax(logits[context])[token].
double log_prob(const PolicyParams& params, std::size_t context_id, std::span<const TokenId> tokens);

/// d log_prob / d logits[context][v] = count_v - T * softmax_v.
SparseRowGradient log_prob_gradient(const PolicyParams& params, std::size_t context_id,
                                    std::span<const TokenId> tokens);

/// softmax(logits[context]).
std::vector<double> row_softmax(const PolicyParams& params, std::size_t context_id);

/// Descent step: logits -= learning_rate * gradient. With clip_norm > 0 the
/// gradient is first rescaled so its global L2 norm is at most clip_norm.
void apply_gradient(PolicyParams& params, std::span<const double> gradient, double learning_rate,
                    double clip_norm = 0.0);

struct Checkpoint {
    PolicyParams policy;
    PolicyParams reference;
};

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& policy,
                     const ReferenceSnapshot& reference);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dama
