#include "forwarder.hpp"
#include "sta/errors.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace sta {

namespace {

using detail::Forwarder;
using detail::LayerCache;

// Backward through out = norm * gain + bias, norm = (x - mean) * inv.
void layer_norm_backward(std::span<const double> dout, std::span<const double> norm, double inv,
                         std::span<const double> gain, std::span<double> dgain, std::span<double> dbias,
                         std::span<double> dx_accum) {
    const std::size_t n = dout.size();
    double mean_dn = 0.0;
    double mean_dn_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dn = dout[i] * gain[i];
        dgain[i] += dout[i] * norm[i];
        dbias[i] += dout[i];
        mean_dn += dn;
        mean_dn_norm += dn * norm[i];
    }
    mean_dn /= static_cast<double>(n);
    mean_dn_norm /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dn = dout[i] * gain[i];
        dx_accum[i] += inv * (dn - mean_dn - norm[i] * mean_dn_norm);
    }
}

// dw[k x n] += x[k] outer dy[n]
void outer_accumulate(std::span<const double> x, std::span<const double> dy, Tensor& dw) {
    const std::size_t n = dw.cols();
    double* w = dw.data().data();
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double xk = x[k];
        if (xk == 0.0) {
            continue;
        }
        double* row = w + k * n;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] += xk * dy[j];
        }
    }
}

// dx[k] += sum_j w[k x n][j] * dy[j]
void matrix_times_grad(const Tensor& w, std::span<const double> dy, std::span<double> dx) {
    const std::size_t n = w.cols();
    const double* wp = w.data().data();
    for (std::size_t k = 0; k < dx.size(); ++k) {
        const double* row = wp + k * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += row[j] * dy[j];
        }
        dx[k] += s;
    }
}

template <class Buf>
auto at(Buf& buf, std::size_t pos, std::size_t width) {
    return std::span(buf).subspan(pos * width, width);
}

// Accumulates the gradient of (sum of target cross-entropies) * weight into grad.
double backward_sequence(const Forwarder& fw, double weight, Model& grad) {
    const Model& model = fw.model();
    const auto& c = model.config;
    const std::size_t n = fw.length();
    const std::size_t d = c.d_model;
    const std::size_t f = c.d_ff();
    const std::size_t hd = c.head_dim();
    const std::size_t vsz = c.vocab_size;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const TokenSeq& toks = fw.tokens();

    double loss = 0.0;
    std::vector<double> dres(n * d, 0.0);  // gradient w.r.t. the current residual stream
    {
        std::vector<double> probs(vsz);
        std::vector<double> dfo(d);
        for (std::size_t t = 0; t + 1 < n; ++t) {
            const auto lg = fw.logits(t);
            std::copy(lg.begin(), lg.end(), probs.begin());
            kernels::softmax_inplace(probs);
            const auto target = static_cast<std::size_t>(toks[t + 1]);
            loss -= std::log(std::max(probs[target], 1e-300));
            probs[target] -= 1.0;
            for (double& p : probs) {
                p *= weight;
            }
            const auto fo = at(fw.final_out(), t, d);
            std::fill(dfo.begin(), dfo.end(), 0.0);
            for (std::size_t v = 0; v < vsz; ++v) {
                const double g = probs[v];
                auto de = grad.token_embedding.row(v);
                const auto e = model.token_embedding.row(v);
                for (std::size_t i = 0; i < d; ++i) {
                    de[i] += g * fo[i];
                    dfo[i] += g * e[i];
                }
            }
            layer_norm_backward(dfo, at(fw.final_norm(), t, d), fw.final_inv()[t], model.final_gain.data(),
                                grad.final_gain.data(), grad.final_bias.data(), at(dres, t, d));
        }
    }

    std::vector<double> dmid(n * d), dconcat(n * d), dq(n * d), dk(n * d), dv(n * d), dln(n * d);
    std::vector<double> dact(f), dln2(d), dp(n);
    for (std::size_t li = c.n_layers; li-- > 0;) {
        const LayerParams& p = model.layers[li];
        LayerParams& g = grad.layers[li];
        const LayerCache& lc = fw.layer(li);

        // out = mid + mlp(ln2(mid))
        std::copy(dres.begin(), dres.end(), dmid.begin());
        for (std::size_t t = 0; t < n; ++t) {
            const auto dout = at(dres, t, d);
            outer_accumulate(at(lc.act, t, f), dout, g.w_down);
            for (std::size_t i = 0; i < d; ++i) {
                g.b_down[i] += dout[i];
            }
            std::fill(dact.begin(), dact.end(), 0.0);
            matrix_times_grad(p.w_down, dout, dact);
            const auto up = at(lc.up, t, f);
            for (std::size_t i = 0; i < f; ++i) {
                dact[i] *= detail::gelu_grad(up[i]);
                g.b_up[i] += dact[i];
            }
            outer_accumulate(at(lc.ln2_out, t, d), dact, g.w_up);
            std::fill(dln2.begin(), dln2.end(), 0.0);
            matrix_times_grad(p.w_up, dact, dln2);
            layer_norm_backward(dln2, at(lc.ln2_norm, t, d), lc.ln2_inv[t], p.ln2_gain.data(), g.ln2_gain.data(),
                                g.ln2_bias.data(), at(dmid, t, d));
        }

        // mid = x_in + concat * w_out
        std::fill(dconcat.begin(), dconcat.end(), 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            outer_accumulate(at(lc.concat, t, d), at(dmid, t, d), g.w_out);
            matrix_times_grad(p.w_out, at(dmid, t, d), at(dconcat, t, d));
        }

        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        const std::size_t cap = fw.capacity();
        for (std::size_t h = 0; h < c.n_heads; ++h) {
            const std::size_t off = h * hd;
            for (std::size_t t = 0; t < n; ++t) {
                const double* prow = lc.probs[h].data() + t * cap;
                const double* dot_o = dconcat.data() + t * d + off;
                double weighted = 0.0;
                for (std::size_t s = 0; s <= t; ++s) {
                    const double* vs = lc.v.data() + s * d + off;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < hd; ++i) {
                        acc += dot_o[i] * vs[i];
                        dv[s * d + off + i] += prow[s] * dot_o[i];
                    }
                    dp[s] = acc;
                    weighted += prow[s] * acc;
                }
                const double* qt = lc.q.data() + t * d + off;
                for (std::size_t s = 0; s <= t; ++s) {
                    const double dscore = prow[s] * (dp[s] - weighted) * att_scale;
                    const double* ks = lc.k.data() + s * d + off;
                    for (std::size_t i = 0; i < hd; ++i) {
                        dq[t * d + off + i] += dscore * ks[i];
                        dk[s * d + off + i] += dscore * qt[i];
                    }
                }
            }
        }

        // q, k, v = ln1_out * W; x_in gets the residual path plus ln1 backward.
        std::fill(dln.begin(), dln.end(), 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const auto ln1 = at(lc.ln1_out, t, d);
            auto dl = at(dln, t, d);
            outer_accumulate(ln1, at(dq, t, d), g.w_query);
            outer_accumulate(ln1, at(dk, t, d), g.w_key);
            outer_accumulate(ln1, at(dv, t, d), g.w_value);
            matrix_times_grad(p.w_query, at(dq, t, d), dl);
            matrix_times_grad(p.w_key, at(dk, t, d), dl);
            matrix_times_grad(p.w_value, at(dv, t, d), dl);
        }
        std::copy(dmid.begin(), dmid.end(), dres.begin());
        for (std::size_t t = 0; t < n; ++t) {
            layer_norm_backward(at(dln, t, d), at(lc.ln1_norm, t, d), lc.ln1_inv[t], p.ln1_gain.data(),
                                g.ln1_gain.data(), g.ln1_bias.data(), at(dres, t, d));
        }
    }

    for (std::size_t t = 0; t < n; ++t) {
        auto de = grad.token_embedding.row(static_cast<std::size_t>(toks[t]));
        auto dpe = grad.position_embedding.row(t);
        const auto dx = at(dres, t, d);
        for (std::size_t i = 0; i < d; ++i) {
            de[i] += dx[i];
            dpe[i] += dx[i];
        }
    }
    return loss;
}

std::size_t target_count(const std::vector<TokenSeq>& sequences) {
    std::size_t count = 0;
    for (const auto& s : sequences) {
        count += s.size() > 0 ? s.size() - 1 : 0;
    }
    return count;
}

Forwarder run_sequence(const Model& model, const TokenSeq& seq) {
    validate_tokens(model, seq);
    Forwarder fw(model, nullptr, seq.size());
    for (TokenId t : seq) {
        fw.append(t);
    }
    return fw;
}

struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;

    void update(Model& model, Model& grad, double lr) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        std::vector<std::span<double>> grads;
        grad.for_each_param([&](const std::string&, Tensor& t) { grads.push_back(t.data()); });
        std::size_t idx = 0;
        model.for_each_param([&](const std::string&, Tensor& t) {
            if (m.size() <= idx) {
                m.emplace_back(t.size(), 0.0);
                v.emplace_back(t.size(), 0.0);
            }
            auto w = t.data();
            const auto gr = grads[idx];
            auto& mi = m[idx];
            auto& vi = v[idx];
            for (std::size_t i = 0; i < w.size(); ++i) {
                mi[i] = beta1 * mi[i] + (1.0 - beta1) * gr[i];
                vi[i] = beta2 * vi[i] + (1.0 - beta2) * gr[i] * gr[i];
                w[i] -= lr * (mi[i] / bc1) / (std::sqrt(vi[i] / bc2) + eps);
            }
            ++idx;
        });
    }
};

}  // namespace

double sequence_loss(const Model& model, const std::vector<TokenSeq>& sequences) {
    const std::size_t count = target_count(sequences);
    if (count == 0) {
        throw InputError("sequence_loss: no next-token targets");
    }
    double loss = 0.0;
    std::vector<double> probs(model.config.vocab_size);
    for (const auto& seq : sequences) {
        auto fw = run_sequence(model, seq);
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
            const auto lg = fw.logits(t);
            std::copy(lg.begin(), lg.end(), probs.begin());
            kernels::softmax_inplace(probs);
            loss -= std::log(std::max(probs[static_cast<std::size_t>(seq[t + 1])], 1e-300));
        }
    }
    return loss / static_cast<double>(count);
}

double loss_and_gradient(const Model& model, const std::vector<TokenSeq>& sequences, Model& grad) {
    const std::size_t count = target_count(sequences);
    if (count == 0) {
        throw InputError("loss_and_gradient: no next-token targets");
    }
    grad = zeros_like(model);
    const double weight = 1.0 / static_cast<double>(count);
    double loss = 0.0;
    for (const auto& seq : sequences) {
        auto fw = run_sequence(model, seq);
        loss += backward_sequence(fw, weight, grad);
    }
    return loss * weight;
}

TrainingReport train_toy(Model& model, const std::vector<TokenSeq>& corpus, const ToyTrainConfig& config) {
    if (corpus.empty()) {
        throw InputError("train_toy: empty corpus");
    }
    if (config.batch_size == 0) {
        throw ParameterError("train_toy: batch_size must be positive");
    }
    if (config.lr < 0.0) {
        throw ParameterError("train_toy: lr must be >= 0");
    }
    for (const auto& s : corpus) {
        validate_tokens(model, s);
    }
    const std::vector<TokenSeq> eval_set(corpus.begin(),
                                         corpus.begin() + static_cast<long>(std::min(config.eval_subset, corpus.size())));
    TrainingReport report;
    auto record_eval = [&](std::size_t step) {
        report.eval_steps.push_back(step);
        report.loss.push_back(sequence_loss(model, eval_set));
    };

    std::mt19937_64 rng(derive_seed(model.config.seed, "toy-train-batches"));
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    Adam adam;
    Model grad = zeros_like(model);
    record_eval(0);
    for (std::size_t step = 1; step <= config.steps; ++step) {
        std::vector<TokenSeq> batch;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(corpus[order[cursor++]]);
        }
        report.batch_loss.push_back(loss_and_gradient(model, batch, grad));
        if (config.grad_clip > 0.0) {
            double sq = 0.0;
            grad.for_each_param([&](const std::string&, const Tensor& t) {
                for (double v : t.data()) {
                    sq += v * v;
                }
            });
            const double norm = std::sqrt(sq);
            if (norm > config.grad_clip) {
                const double s = config.grad_clip / norm;
                grad.for_each_param([&](const std::string&, Tensor& t) {
                    for (double& v : t.data()) {
                        v *= s;
                    }
                });
            }
        }
        adam.update(model, grad, config.lr);
        if (step % std::max<std::size_t>(config.eval_every, 1) == 0 || step == config.steps) {
            record_eval(step);
        }
    }
    return report;
}

}  // namespace sta
