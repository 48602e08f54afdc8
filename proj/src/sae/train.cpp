#include "sta/errors.hpp"
#include "sta/sae.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace sta {

namespace {

void normalize_decoder_rows(Tensor& w_dec) {
    for (std::size_t j = 0; j < w_dec.rows(); ++j) {
        auto row = w_dec.row(j);
        const double norm = l2_norm(row);
        if (norm > 0.0) {
            for (double& v : row) {
                v /= norm;
            }
        }
    }
}

class Optimizer {
public:
    Optimizer(SaeOptimizer kind, double lr) : kind_(kind), lr_(lr) {}

    // Applies one update to `values` given `grads`; `slot` identifies the moment buffers.
    void apply(std::size_t slot, std::span<double> values, std::span<const double> grads) {
        if (kind_ == SaeOptimizer::sgd) {
            for (std::size_t i = 0; i < values.size(); ++i) {
                values[i] -= lr_ * grads[i];
            }
            return;
        }
        if (m_.size() <= slot) {
            m_.resize(slot + 1);
            v_.resize(slot + 1);
        }
        if (m_[slot].empty()) {
            m_[slot].assign(values.size(), 0.0);
            v_[slot].assign(values.size(), 0.0);
        }
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        auto& m = m_[slot];
        auto& v = v_[slot];
        for (std::size_t i = 0; i < values.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * grads[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * grads[i] * grads[i];
            values[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }

    void next_step() { ++step_; }

private:
    SaeOptimizer kind_;
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::size_t step_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

double mean_l0(const SaeParams& params, const Tensor& h) {
    const Tensor a = encode(params, h);
    double count = 0.0;
    for (double v : a.data()) {
        count += v != 0.0 ? 1.0 : 0.0;
    }
    return count / static_cast<double>(a.rows());
}

}  // namespace

SaeParams init_sae(std::size_t input_dim, const SaeTrainConfig& config, const Tensor& input_mean) {
    config.validate();
    const std::size_t m = config.latent_dim;
    if (m <= input_dim) {
        throw ParameterError("SAE latent_dim (" + std::to_string(m) + ") must exceed input_dim (" +
                             std::to_string(input_dim) + ")");
    }
    if (input_mean.size() != input_dim) {
        throw DimensionError("SAE input_mean has length " + std::to_string(input_mean.size()) + ", expected " +
                             std::to_string(input_dim));
    }
    SaeParams p = SaeParams::zeros(input_dim, m);
    std::mt19937_64 rng(derive_seed(config.seed, "sae-init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : p.w_dec.data()) {
        v = normal(rng);
    }
    normalize_decoder_rows(p.w_dec);
    p.w_enc = transpose(p.w_dec);
    p.theta.fill(config.theta_init);
    p.input_mean = input_mean;
    return p;
}

std::pair<SaeParams, TrainingReport> train_sae(const Tensor& activations, const SaeTrainConfig& config) {
    config.validate();
    if (activations.empty() || activations.rank() != 2) {
        throw InputError("train_sae: activations must be a non-empty [N x D] matrix");
    }
    const std::size_t n = activations.rows();
    const std::size_t d = activations.cols();
    const Tensor mean = config.center ? mean_rows(activations) : Tensor({d});
    SaeParams params = init_sae(d, config, mean);

    const std::size_t n_eval = std::min(config.eval_subset, n);
    Tensor eval_rows({n_eval, d});
    for (std::size_t r = 0; r < n_eval; ++r) {
        // Evenly strided so the subset spans the whole dump.
        const std::size_t src = r * n / n_eval;
        std::copy(activations.row(src).begin(), activations.row(src).end(), eval_rows.row(r).begin());
    }

    TrainingReport report;
    report.notes = "loss is the per-token mean of ||h - h_sae||^2 + gamma * L0";
    auto record = [&](std::size_t step) {
        const SaeLoss l = sae_loss(params, eval_rows, config.gamma);
        report.eval_steps.push_back(step);
        report.loss.push_back(l.total);
        report.recon_loss.push_back(l.recon);
        report.mean_l0.push_back(mean_l0(params, eval_rows));
    };
    record(0);

    std::mt19937_64 rng(derive_seed(config.seed, "sae-batches"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    const std::size_t batch = std::min(config.batch_size, n);
    Optimizer opt(config.optimizer, config.lr);
    Optimizer theta_opt(config.optimizer, config.theta_lr);
    Tensor rows({batch, d});
    std::vector<double> log_theta(params.latent_dim());
    std::vector<double> log_grad(params.latent_dim());
    for (std::size_t step = 1; step <= config.steps; ++step) {
        for (std::size_t b = 0; b < batch; ++b) {
            if (cursor == n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto src = activations.row(order[cursor++]);
            std::copy(src.begin(), src.end(), rows.row(b).begin());
        }
        SaeLoss batch_loss;
        const SaeParams g = sae_gradient(params, rows, config, &batch_loss);
        report.batch_loss.push_back(batch_loss.total);

        opt.next_step();
        theta_opt.next_step();
        opt.apply(0, params.w_enc.data(), g.w_enc.data());
        opt.apply(1, params.b_enc.data(), g.b_enc.data());
        opt.apply(2, params.w_dec.data(), g.w_dec.data());
        opt.apply(3, params.b_dec.data(), g.b_dec.data());
        // Thresholds are optimized in log space so they stay positive.
        for (std::size_t j = 0; j < log_theta.size(); ++j) {
            log_theta[j] = std::log(params.theta[j]);
            log_grad[j] = g.theta[j] * params.theta[j];
        }
        theta_opt.apply(0, log_theta, log_grad);
        for (std::size_t j = 0; j < log_theta.size(); ++j) {
            params.theta[j] = std::exp(log_theta[j]);
        }
        normalize_decoder_rows(params.w_dec);

        if (step % std::max<std::size_t>(config.eval_every, 1) == 0 || step == config.steps) {
            record(step);
        }
    }
    return {std::move(params), std::move(report)};
}

}  // namespace sta
