#include "sta/errors.hpp"
#include "sta/sae.hpp"

#include <cmath>

namespace sta {

namespace {

constexpr double kStep = 1e-5;
// Gradients smaller than this are compared in absolute terms; below it the
// central difference is dominated by floating-point cancellation.
constexpr double kRelFloor = 1e-4;

std::vector<bool> active_pattern(const SaeParams& p, const Tensor& h) {
    const Tensor z = sae_pre_activations(p, h);
    const std::size_t m = p.latent_dim();
    std::vector<bool> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = z[i] > p.theta[i % m];
    }
    return out;
}

}  // namespace

GradCheckResult gradient_check(const SaeParams& params, const Tensor& h, const SaeTrainConfig& config) {
    config.validate();
    params.validate();
    const Tensor rows = h.rank() == 1 ? Tensor({1, h.size()}, std::vector<double>(h.values())) : h;
    if (rows.cols() != params.input_dim()) {
        throw DimensionError("gradient_check: input width " + std::to_string(rows.cols()) + " vs SAE input_dim " +
                             std::to_string(params.input_dim()));
    }
    const SaeParams analytic = sae_gradient(params, rows, config);
    const std::vector<bool> base_pattern = active_pattern(params, rows);
    const Tensor z = sae_pre_activations(params, rows);
    GradCheckResult result;
    SaeParams probe = params;

    auto check_tensor = [&](Tensor SaeParams::*member, bool is_theta) {
        Tensor& target = probe.*member;
        const Tensor& grad = analytic.*member;
        for (std::size_t i = 0; i < target.size(); ++i) {
            if (is_theta) {
                bool near = false;
                for (std::size_t r = 0; r < z.rows(); ++r) {
                    near = near || std::abs(z.at(r, i) - params.theta[i]) < 2.0 * config.bandwidth;
                }
                if (near || params.theta[i] < kStep) {
                    ++result.skipped;
                    continue;
                }
            }
            const double original = target[i];
            target[i] = original + kStep;
            const bool plus_same = active_pattern(probe, rows) == base_pattern;
            const double f_plus = sae_loss(probe, rows, config.gamma).total;
            target[i] = original - kStep;
            const bool minus_same = active_pattern(probe, rows) == base_pattern;
            const double f_minus = sae_loss(probe, rows, config.gamma).total;
            target[i] = original;
            if (!plus_same || !minus_same) {
                ++result.skipped;
                continue;
            }
            const double numeric = (f_plus - f_minus) / (2.0 * kStep);
            const double a = grad[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), kRelFloor});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
            ++result.checked;
        }
    };
    check_tensor(&SaeParams::w_enc, false);
    check_tensor(&SaeParams::b_enc, false);
    check_tensor(&SaeParams::w_dec, false);
    check_tensor(&SaeParams::b_dec, false);
    check_tensor(&SaeParams::theta, true);
    return result;
}

}  // namespace sta
