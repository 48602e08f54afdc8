#pragma once

#include "sta/numerics.hpp"
#include "sta/training_report.hpp"

#include <cstdint>
#include <utility>

namespace sta {

// JumpReLU sparse autoencoder over D-dimensional residual states with M > D atoms.
//
//   a      = z * 1[z > theta],   z = (h - input_mean) W_enc + b_enc
//   h_sae  = a W_dec + b_dec     (centered space; add input_mean to return to model space)
//
// input_mean is fixed at training time from the dataset and is zero for a
// freshly constructed SaeParams, in which case encode is exactly h W_enc + b_enc.
struct SaeParams {
    Tensor w_enc;       // [D x M]
    Tensor b_enc;       // [M]
    Tensor w_dec;       // [M x D], row j is the direction of atom j
    Tensor b_dec;       // [D]
    Tensor theta;       // [M], JumpReLU thresholds, >= 0
    Tensor input_mean;  // [D]

    std::size_t input_dim() const noexcept { return w_enc.rows(); }
    std::size_t latent_dim() const noexcept { return w_enc.cols(); }

    static SaeParams zeros(std::size_t input_dim, std::size_t latent_dim);
    void validate() const;
};

enum class SaeOptimizer { sgd, adam };

struct SaeTrainConfig {
    std::size_t latent_dim = 256;
    double gamma = 0.01;       // L0 weight
    double bandwidth = 0.001;  // straight-through rectangle kernel width
    double lr = 1e-2;
    double theta_lr = 0.05;  // step for log(theta), which has to travel several e-folds
    std::size_t steps = 500;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    double theta_init = 0.001;
    SaeOptimizer optimizer = SaeOptimizer::adam;
    bool center = true;  // subtract the dataset mean before encoding
    std::size_t eval_every = 50;
    std::size_t eval_subset = 1024;

    void validate() const;
};

struct SaeLoss {
    double total = 0.0;
    double recon = 0.0;
    double sparsity = 0.0;
};

// Pre-activations z, same leading shape as h.
Tensor sae_pre_activations(const SaeParams& params, const Tensor& h);
Tensor encode(const SaeParams& params, const Tensor& h);
Tensor decode(const SaeParams& params, const Tensor& a);
// decode(encode(h)) mapped back to model space.
Tensor reconstruct(const SaeParams& params, const Tensor& h);

// Per-example mean over the rows of h of ||h - h_sae||^2 and gamma * L0.
SaeLoss sae_loss(const SaeParams& params, const Tensor& h, double gamma);

// Gradient of the straight-through surrogate: exact through the active set,
// rectangle-kernel pseudo-derivatives for theta. Same layout as SaeParams
// (input_mean entry unused).
SaeParams sae_gradient(const SaeParams& params, const Tensor& h, const SaeTrainConfig& config, SaeLoss* loss = nullptr);

SaeParams init_sae(std::size_t input_dim, const SaeTrainConfig& config, const Tensor& input_mean);

std::pair<SaeParams, TrainingReport> train_sae(const Tensor& activations, const SaeTrainConfig& config);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

// Central finite differences (step 1e-5) against sae_gradient. Coordinates
// whose perturbation changes the active set, and thresholds with a
// pre-activation within 2 * bandwidth, are skipped.
GradCheckResult gradient_check(const SaeParams& params, const Tensor& h, const SaeTrainConfig& config);

}  // namespace sta
