#include "dama/objective.hpp"

#include <cmath>

#include "dama/error.hpp"
#include "dama/numeric.hpp"

namespace dama {

std::vector<double> combine_multiplicative(std::span<const double> alpha_d, double alpha_m) {
    if (!(alpha_m > 0.0)) {
        throw InputError("combine_multiplicative: alpha_m must be positive");
    }
    std::vector<double> out(alpha_d.size());
    for (std::size_t i = 0; i < alpha_d.size(); ++i) {
        if (!(alpha_d[i] > 0.0)) {
            throw InputError("combine_multiplicative: alpha_d entries must be positive");
        }
        out[i] = alpha_d[i] * alpha_m;
    }
    return out;
}

std::vector<double> combine_weighted(std::span<const double> alpha_d, double alpha_m, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) {
        throw InputError("combine_weighted: rho must lie in [0, 1]");
    }
    std::vector<double> out(alpha_d.size());
    for (std::size_t i = 0; i < alpha_d.size(); ++i) {
        out[i] = (1.0 - rho) * alpha_m + rho * alpha_d[i];
    }
    return out;
}

EffectiveBeta effective_beta(double base_beta, std::span<const double> alpha) {
    if (!(base_beta > 0.0) || !std::isfinite(base_beta)) {
        throw InputError("effective_beta: base beta must be positive and finite");
    }
    EffectiveBeta out;
    out.base_beta = base_beta;
    out.alpha.assign(alpha.begin(), alpha.end());
    out.values.resize(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        // A non-positive factor would flip which response is preferred.
        if (!(alpha[i] > 0.0) || !std::isfinite(alpha[i])) {
            throw InputError("effective_beta: scaling factor at position " + std::to_string(i) +
                             " is not positive and finite");
        }
        out.values[i] = base_beta * alpha[i];
    }
    return out;
}

LossReport dpo_loss_and_grad(std::span<const double> delta_w, std::span<const double> delta_l,
                             const EffectiveBeta& betas, std::span<const std::uint8_t> mask) {
    const std::size_t n = delta_w.size();
    if (delta_l.size() != n || betas.values.size() != n || mask.size() != n) {
        throw InputError("dpo_loss_and_grad: input lengths differ");
    }
    std::size_t retained = 0;
    for (auto m : mask) {
        retained += m ? 1 : 0;
    }
    if (retained == 0) {
        throw InputError("dpo_loss_and_grad: mask retains no instances");
    }
    const double inv_retained = 1.0 / static_cast<double>(retained);

    LossReport report;
    report.per_instance_loss.resize(n);
    report.per_instance_z.resize(n);
    report.gradient_wrt_delta_w.assign(n, 0.0);
    report.gradient_wrt_delta_l.assign(n, 0.0);
    std::vector<double> kept;
    kept.reserve(retained);
    for (std::size_t i = 0; i < n; ++i) {
        const double beta = betas.values[i];
        const double z = beta * (delta_w[i] - delta_l[i]);
        // -log sigmoid(z) = softplus(-z)
        const double loss = softplus(-z);
        report.per_instance_z[i] = z;
        report.per_instance_loss[i] = loss;
        if (mask[i]) {
            kept.push_back(loss);
            const double g = beta * sigmoid(-z) * inv_retained;
            report.gradient_wrt_delta_w[i] = -g;
            report.gradient_wrt_delta_l[i] = g;
        }
    }
    report.loss = stable_sum(kept) * inv_retained;
    return report;
}

}  // namespace dama
