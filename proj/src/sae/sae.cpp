#include "sta/errors.hpp"
#include "sta/sae.hpp"

#include <cmath>

namespace sta {

namespace {

Tensor as_rows(const Tensor& h, std::size_t width, const char* op) {
    if (h.empty() || h.cols() != width || h.rank() > 2) {
        throw DimensionError(std::string(op) + ": expected last dimension " + std::to_string(width) + ", got " +
                             shape_string(h.shape()));
    }
    return h;
}

Tensor shaped_like_input(Tensor rows, const Tensor& input, std::size_t width) {
    if (input.rank() == 1) {
        return Tensor({width}, std::vector<double>(rows.values()));
    }
    return rows;
}

bool rectangle(double u) {
    return std::abs(u) < 0.5;
}

}  // namespace

SaeParams SaeParams::zeros(std::size_t input_dim, std::size_t latent_dim) {
    SaeParams p;
    p.w_enc = Tensor({input_dim, latent_dim});
    p.b_enc = Tensor({latent_dim});
    p.w_dec = Tensor({latent_dim, input_dim});
    p.b_dec = Tensor({input_dim});
    p.theta = Tensor({latent_dim});
    p.input_mean = Tensor({input_dim});
    return p;
}

void SaeParams::validate() const {
    const std::size_t d = input_dim();
    const std::size_t m = latent_dim();
    if (w_enc.rank() != 2 || w_dec.shape() != Tensor::Shape{m, d} || b_enc.size() != m || b_dec.size() != d ||
        theta.size() != m || input_mean.size() != d) {
        throw DimensionError("inconsistent SAE parameter shapes (W_enc " + shape_string(w_enc.shape()) + ", W_dec " +
                             shape_string(w_dec.shape()) + ")");
    }
    for (double t : theta.data()) {
        if (!(t >= 0.0)) {
            throw ParameterError("SAE thresholds must be nonnegative");
        }
    }
}

void SaeTrainConfig::validate() const {
    if (gamma < 0.0) {
        throw ParameterError("gamma must be >= 0, got " + std::to_string(gamma));
    }
    if (!(bandwidth > 0.0)) {
        throw ParameterError("bandwidth must be > 0");
    }
    if (lr < 0.0 || theta_lr < 0.0) {
        throw ParameterError("lr and theta_lr must be >= 0");
    }
    if (latent_dim == 0 || batch_size == 0) {
        throw ParameterError("latent_dim and batch_size must be positive");
    }
    if (!(theta_init > 0.0)) {
        throw ParameterError("theta_init must be > 0");
    }
}

Tensor sae_pre_activations(const SaeParams& params, const Tensor& h) {
    const std::size_t d = params.input_dim();
    const std::size_t m = params.latent_dim();
    const Tensor rows = as_rows(h, d, "encode");
    Tensor z({rows.rows(), m});
    std::vector<double> centered(d);
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto x = rows.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            centered[i] = x[i] - params.input_mean[i];
        }
        kernels::row_times_matrix_bias(centered, params.w_enc, params.b_enc.data(), z.row(r));
    }
    return shaped_like_input(std::move(z), h, m);
}

Tensor encode(const SaeParams& params, const Tensor& h) {
    Tensor a = sae_pre_activations(params, h);
    const std::size_t m = params.latent_dim();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i] > params.theta[i % m])) {
            a[i] = 0.0;
        }
    }
    return a;
}

Tensor decode(const SaeParams& params, const Tensor& a) {
    const std::size_t d = params.input_dim();
    const std::size_t m = params.latent_dim();
    const Tensor rows = as_rows(a, m, "decode");
    Tensor out({rows.rows(), d});
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        kernels::row_times_matrix_bias(rows.row(r), params.w_dec, params.b_dec.data(), out.row(r));
    }
    return shaped_like_input(std::move(out), a, d);
}

Tensor reconstruct(const SaeParams& params, const Tensor& h) {
    Tensor out = decode(params, encode(params, h));
    const std::size_t d = params.input_dim();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += params.input_mean[i % d];
    }
    return out;
}

SaeLoss sae_loss(const SaeParams& params, const Tensor& h, double gamma) {
    if (gamma < 0.0) {
        throw ParameterError("sae_loss: gamma must be >= 0, got " + std::to_string(gamma));
    }
    const std::size_t d = params.input_dim();
    const Tensor rows = as_rows(h, d, "sae_loss");
    const Tensor a = encode(params, rows);
    const Tensor rec = decode(params, a);
    SaeLoss loss;
    double l0 = 0.0;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto x = rows.row(r);
        const auto y = rec.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = (x[i] - params.input_mean[i]) - y[i];
            loss.recon += diff * diff;
        }
        for (double v : a.row(r)) {
            l0 += v != 0.0 ? 1.0 : 0.0;
        }
    }
    const auto n = static_cast<double>(rows.rows());
    loss.recon /= n;
    loss.sparsity = gamma * l0 / n;
    loss.total = loss.recon + loss.sparsity;
    return loss;
}

SaeParams sae_gradient(const SaeParams& params, const Tensor& h, const SaeTrainConfig& config, SaeLoss* loss) {
    config.validate();
    const std::size_t d = params.input_dim();
    const std::size_t m = params.latent_dim();
    const Tensor rows = as_rows(h, d, "sae_gradient");
    const auto n = static_cast<double>(rows.rows());
    const double eps = config.bandwidth;
    const double gamma = config.gamma;

    SaeParams g = SaeParams::zeros(d, m);
    std::vector<double> x(d), z(m), a(m), r(d), da(m), dz(m);
    double recon = 0.0;
    double l0 = 0.0;
    for (std::size_t row = 0; row < rows.rows(); ++row) {
        const auto h_row = rows.row(row);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = h_row[i] - params.input_mean[i];
        }
        kernels::row_times_matrix_bias(x, params.w_enc, params.b_enc.data(), z);
        for (std::size_t j = 0; j < m; ++j) {
            a[j] = z[j] > params.theta[j] ? z[j] : 0.0;
            l0 += a[j] != 0.0 ? 1.0 : 0.0;
        }
        kernels::row_times_matrix_bias(a, params.w_dec, params.b_dec.data(), r);
        for (std::size_t i = 0; i < d; ++i) {
            r[i] -= x[i];
            recon += r[i] * r[i];
            r[i] *= 2.0 / n;  // dL/dr for the batch mean
            g.b_dec[i] += r[i];
        }
        for (std::size_t j = 0; j < m; ++j) {
            const auto wrow = params.w_dec.row(j);
            double s = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                s += wrow[i] * r[i];
            }
            da[j] = s;
            if (a[j] != 0.0) {
                auto grow = g.w_dec.row(j);
                for (std::size_t i = 0; i < d; ++i) {
                    grow[i] += a[j] * r[i];
                }
            }
            const bool active = z[j] > params.theta[j];
            dz[j] = active ? da[j] : 0.0;
            g.b_enc[j] += dz[j];
            const double u = (z[j] - params.theta[j]) / eps;
            if (rectangle(u)) {
                // d a_j / d theta_j = -(theta_j / eps) K(u); d 1[z_j > theta_j] / d theta_j = -(1 / eps) K(u)
                g.theta[j] += da[j] * (-params.theta[j] / eps) + (gamma / n) * (-1.0 / eps);
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            auto grow = g.w_enc.row(i);
            const double xi = x[i];
            for (std::size_t j = 0; j < m; ++j) {
                grow[j] += xi * dz[j];
            }
        }
    }
    if (loss != nullptr) {
        loss->recon = recon / n;
        loss->sparsity = gamma * l0 / n;
        loss->total = loss->recon + loss->sparsity;
    }
    return g;
}

}  // namespace sta
