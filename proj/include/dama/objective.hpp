#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dama {

/// Per-instance beta for one batch. Treated as a constant by the gradient.
struct EffectiveBeta {
    std::vector<double> values;
    double base_beta = 0.1;
    std::vector<double> alpha;
};

struct LossReport {
    /// Mean of per-instance losses over retained instances.
    double loss = 0.0;
    /// Recorded for every instance, masked-out ones included.
    std::vector<double> per_instance_loss;
    std::vector<double> per_instance_z;
    /// Gradients of the batch loss (mask and retained-count normalization applied).
    std::vector<double> gradient_wrt_delta_w;
    std::vector<double> gradient_wrt_delta_l;
};

/// alpha_i = alpha_d_i * alpha_m.
std::vector<double> combine_multiplicative(std::span<const double> alpha_d, double alpha_m);

/// alpha_i = (1 - rho) * alpha_m + rho * alpha_d_i.
std::vector<double> combine_weighted(std::span<const double> alpha_d, double alpha_m, double rho);

/// beta_i = base_beta * alpha_i. Throws InputError on a non-positive or non-finite factor.
EffectiveBeta effective_beta(double base_beta, std::span<const double> alpha);

/// DPO loss with per-instance beta on a masked batch. `delta_w` / `delta_l` are
/// policy-minus-reference sequence log-probabilities of the chosen / rejected response.
LossReport dpo_loss_and_grad(std::span<const double> delta_w, std::span<const double> delta_l,
                             const EffectiveBeta& betas, std::span<const std::uint8_t> mask);

}  // namespace dama
