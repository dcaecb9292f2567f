#include "dama/responsiveness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dama/error.hpp"
#include "dama/numeric.hpp"

namespace dama {

std::string to_string(FilterStrategy strategy) {
    switch (strategy) {
        case FilterStrategy::none: return "none";
        case FilterStrategy::bottom: return "bottom";
        case FilterStrategy::top: return "top";
        case FilterStrategy::extremes: return "extremes";
    }
    return "?";
}

FilterStrategy parse_filter_strategy(const std::string& text) {
    if (text == "none") return FilterStrategy::none;
    if (text == "bottom") return FilterStrategy::bottom;
    if (text == "top") return FilterStrategy::top;
    if (text == "extremes") return FilterStrategy::extremes;
    throw InputError("unknown filter strategy '" + text + "' (expected none, bottom, top or extremes)");
}

void ResponsivenessState::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) {
        throw InputError("gamma must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw InputError("epsilon must be positive");
    }
    if (!std::isfinite(running_mean)) {
        throw InvariantError("running mean is not finite");
    }
}

std::vector<double> reward_gaps(std::span<const double> logp_theta_w, std::span<const double> logp_ref_w,
                                std::span<const double> logp_theta_l, std::span<const double> logp_ref_l,
                                double beta) {
    const std::size_t n = logp_theta_w.size();
    if (logp_ref_w.size() != n || logp_theta_l.size() != n || logp_ref_l.size() != n) {
        throw InputError("reward_gaps: log-probability lists differ in length");
    }
    if (!(beta > 0.0)) {
        throw InputError("reward_gaps: beta must be positive");
    }
    std::vector<double> gaps(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double margin = (logp_theta_w[i] - logp_ref_w[i]) - (logp_theta_l[i] - logp_ref_l[i]);
        gaps[i] = beta * margin;
    }
    return gaps;
}

std::vector<double> normalize_gaps(std::span<const double> raw_gaps, const ResponsivenessState& state) {
    std::vector<double> out(raw_gaps.begin(), raw_gaps.end());
    if (std::abs(state.running_mean) >= state.epsilon) {
        for (double& g : out) {
            g /= state.running_mean;
        }
    }
    return out;
}

std::vector<std::uint8_t> outlier_mask(std::span<const double> gaps, double reference_mean, std::size_t keep_k,
                                       FilterStrategy strategy) {
    if (keep_k < 1) {
        throw InputError("outlier_mask: keep_k must be at least 1");
    }
    const std::size_t n = gaps.size();
    if (strategy == FilterStrategy::none) {
        return std::vector<std::uint8_t>(n, 1);
    }
    // Rank instances so the ones to keep come first; index breaks ties.
    std::vector<double> key(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (strategy) {
            case FilterStrategy::extremes: {
                const double d = gaps[i] - reference_mean;
                key[i] = d * d;
                break;
            }
            case FilterStrategy::bottom: key[i] = -gaps[i]; break;
            case FilterStrategy::top: key[i] = gaps[i]; break;
            case FilterStrategy::none: break;
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    std::vector<std::uint8_t> mask(n, 0);
    const std::size_t keep = std::min(keep_k, n);
    for (std::size_t r = 0; r < keep; ++r) {
        mask[order[r]] = 1;
    }
    return mask;
}

namespace {

double masked_sum(std::span<const double> gaps, std::span<const std::uint8_t> mask, std::size_t& retained) {
    if (gaps.size() != mask.size()) {
        throw InputError("batch_responsiveness: gap and mask lengths differ");
    }
    std::vector<double> kept;
    kept.reserve(gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (mask[i]) {
            kept.push_back(gaps[i]);
        }
    }
    if (kept.empty()) {
        throw InputError("batch_responsiveness: mask retains no instances");
    }
    retained = kept.size();
    return stable_sum(kept);
}

}  // namespace

double batch_responsiveness(std::span<const double> normalized_gaps, std::span<const std::uint8_t> mask) {
    std::size_t retained = 0;
    const double sum = masked_sum(normalized_gaps, mask, retained);
    return sum / static_cast<double>(retained);
}

double batch_responsiveness_fixed_divisor(std::span<const double> normalized_gaps,
                                          std::span<const std::uint8_t> mask, double divisor) {
    if (!(divisor > 0.0)) {
        throw InputError("batch_responsiveness: divisor must be positive");
    }
    std::size_t retained = 0;
    return masked_sum(normalized_gaps, mask, retained) / divisor;
}

double alpha_model(double batch_responsiveness, const ResponsivenessState& state) {
    return sigmoid(batch_responsiveness) / sigmoid(state.running_mean);
}

ResponsivenessState update_running_mean(const ResponsivenessState& state, double batch_responsiveness) {
    ResponsivenessState next = state;
    next.running_mean = state.gamma * state.running_mean + (1.0 - state.gamma) * batch_responsiveness;
    next.step = state.step + 1;
    return next;
}

}  // namespace dama
