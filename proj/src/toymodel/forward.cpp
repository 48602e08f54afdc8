#include "forwarder.hpp"
#include "sta/errors.hpp"

#include <algorithm>

namespace sta {

namespace detail {

namespace {

std::span<double> slot(std::vector<double>& buf, std::size_t pos, std::size_t width) {
    return std::span<double>(buf).subspan(pos * width, width);
}

std::span<const double> slot(const std::vector<double>& buf, std::size_t pos, std::size_t width) {
    return std::span<const double>(buf).subspan(pos * width, width);
}

}  // namespace

Forwarder::Forwarder(const Model& model, const SteerHook* hook, std::size_t capacity)
    : model_(model), hook_(hook), capacity_(capacity) {
    const auto& c = model.config;
    if (hook_ != nullptr) {
        if (hook_->layer >= c.n_layers) {
            throw ParameterError("steer hook layer " + std::to_string(hook_->layer) + " out of range for " +
                                 std::to_string(c.n_layers) + " layers");
        }
        if (hook_->vector.size() != c.d_model) {
            throw ConfigError("steering vector dimension " + std::to_string(hook_->vector.size()) +
                              " does not match model d_model " + std::to_string(c.d_model));
        }
    }
    const std::size_t d = c.d_model;
    const std::size_t f = c.d_ff();
    layers_.resize(c.n_layers);
    for (auto& lc : layers_) {
        for (auto* buf : {&lc.x_in, &lc.ln1_norm, &lc.ln1_out, &lc.q, &lc.k, &lc.v, &lc.concat, &lc.mid,
                          &lc.ln2_norm, &lc.ln2_out, &lc.out}) {
            buf->assign(capacity * d, 0.0);
        }
        lc.up.assign(capacity * f, 0.0);
        lc.act.assign(capacity * f, 0.0);
        lc.ln1_inv.assign(capacity, 0.0);
        lc.ln2_inv.assign(capacity, 0.0);
        lc.probs.assign(c.n_heads, std::vector<double>(capacity * capacity, 0.0));
    }
    lnf_norm_.assign(capacity * d, 0.0);
    lnf_out_.assign(capacity * d, 0.0);
    lnf_inv_.assign(capacity, 0.0);
    logits_.assign(capacity * c.vocab_size, 0.0);
    tokens_.reserve(capacity);
}

void Forwarder::append(TokenId token) {
    const auto& c = model_.config;
    const std::size_t pos = tokens_.size();
    if (pos >= capacity_ || pos >= c.max_seq) {
        throw InputError("sequence exceeds max_seq " + std::to_string(c.max_seq));
    }
    if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
        throw InputError("token id " + std::to_string(token) + " outside vocabulary");
    }
    tokens_.push_back(token);

    const std::size_t d = c.d_model;
    const std::size_t f = c.d_ff();
    const std::size_t hd = c.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    {
        auto x = slot(layers_[0].x_in, pos, d);
        const auto te = model_.token_embedding.row(static_cast<std::size_t>(token));
        const auto pe = model_.position_embedding.row(pos);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = te[i] + pe[i];
        }
    }

    std::vector<double> attn(d);
    std::vector<double> down(d);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const LayerParams& p = model_.layers[l];
        LayerCache& lc = layers_[l];

        lc.ln1_inv[pos] = kernels::layer_norm_row(slot(lc.x_in, pos, d), p.ln1_gain.data(), p.ln1_bias.data(),
                                                  kLayerNormEps, slot(lc.ln1_norm, pos, d), slot(lc.ln1_out, pos, d));
        kernels::row_times_matrix(slot(lc.ln1_out, pos, d), p.w_query, slot(lc.q, pos, d));
        kernels::row_times_matrix(slot(lc.ln1_out, pos, d), p.w_key, slot(lc.k, pos, d));
        kernels::row_times_matrix(slot(lc.ln1_out, pos, d), p.w_value, slot(lc.v, pos, d));

        auto concat = slot(lc.concat, pos, d);
        std::fill(concat.begin(), concat.end(), 0.0);
        for (std::size_t h = 0; h < c.n_heads; ++h) {
            const std::size_t off = h * hd;
            const double* q = lc.q.data() + pos * d + off;
            auto prow = std::span<double>(lc.probs[h]).subspan(pos * capacity_, pos + 1);
            for (std::size_t s = 0; s <= pos; ++s) {
                const double* k = lc.k.data() + s * d + off;
                double sc = 0.0;
                for (std::size_t i = 0; i < hd; ++i) {
                    sc += q[i] * k[i];
                }
                prow[s] = sc * att_scale;
            }
            kernels::softmax_inplace(prow);
            for (std::size_t s = 0; s <= pos; ++s) {
                const double* v = lc.v.data() + s * d + off;
                const double w = prow[s];
                for (std::size_t i = 0; i < hd; ++i) {
                    concat[off + i] += w * v[i];
                }
            }
        }

        kernels::row_times_matrix(concat, p.w_out, attn);
        auto mid = slot(lc.mid, pos, d);
        const auto x_in = slot(lc.x_in, pos, d);
        for (std::size_t i = 0; i < d; ++i) {
            mid[i] = x_in[i] + attn[i];
        }

        lc.ln2_inv[pos] = kernels::layer_norm_row(mid, p.ln2_gain.data(), p.ln2_bias.data(), kLayerNormEps,
                                                  slot(lc.ln2_norm, pos, d), slot(lc.ln2_out, pos, d));
        auto up = slot(lc.up, pos, f);
        auto act = slot(lc.act, pos, f);
        kernels::row_times_matrix_bias(slot(lc.ln2_out, pos, d), p.w_up, p.b_up.data(), up);
        for (std::size_t i = 0; i < f; ++i) {
            act[i] = gelu(up[i]);
        }
        kernels::row_times_matrix_bias(act, p.w_down, p.b_down.data(), down);

        auto out = slot(lc.out, pos, d);
        for (std::size_t i = 0; i < d; ++i) {
            out[i] = mid[i] + down[i];
        }
        if (hook_ != nullptr && hook_->layer == l) {
            const double lam = hook_->multiplier;
            for (std::size_t i = 0; i < d; ++i) {
                out[i] += lam * hook_->vector[i];
            }
        }
        if (l + 1 < c.n_layers) {
            auto next = slot(layers_[l + 1].x_in, pos, d);
            std::copy(out.begin(), out.end(), next.begin());
        }
    }

    const auto last = slot(layers_.back().out, pos, d);
    auto fo = slot(lnf_out_, pos, d);
    lnf_inv_[pos] = kernels::layer_norm_row(last, model_.final_gain.data(), model_.final_bias.data(), kLayerNormEps,
                                            slot(lnf_norm_, pos, d), fo);
    auto lg = slot(logits_, pos, c.vocab_size);
    for (std::size_t t = 0; t < c.vocab_size; ++t) {
        const auto e = model_.token_embedding.row(t);
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            s += fo[i] * e[i];
        }
        lg[t] = s;
    }
}

std::span<const double> Forwarder::logits(std::size_t pos) const {
    return slot(logits_, pos, model_.config.vocab_size);
}

std::span<const double> Forwarder::hidden(std::size_t layer, std::size_t pos) const {
    return slot(layers_[layer].out, pos, model_.config.d_model);
}

ForwardTrace Forwarder::trace() const {
    const auto& c = model_.config;
    const std::size_t n = tokens_.size();
    ForwardTrace tr;
    tr.hidden.reserve(c.n_layers);
    tr.attention.resize(c.n_layers);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const auto& lc = layers_[l];
        tr.hidden.emplace_back(Tensor::Shape{n, c.d_model},
                               std::vector<double>(lc.out.begin(), lc.out.begin() + static_cast<long>(n * c.d_model)));
        for (std::size_t h = 0; h < c.n_heads; ++h) {
            Tensor a({n, n});
            for (std::size_t t = 0; t < n; ++t) {
                for (std::size_t s = 0; s <= t; ++s) {
                    a.at(t, s) = lc.probs[h][t * capacity_ + s];
                }
            }
            tr.attention[l].push_back(std::move(a));
        }
    }
    tr.logits = Tensor({n, c.vocab_size},
                       std::vector<double>(logits_.begin(), logits_.begin() + static_cast<long>(n * c.vocab_size)));
    return tr;
}

}  // namespace detail

namespace {

detail::Forwarder run(const Model& model, const TokenSeq& tokens, const SteerHook* hook) {
    validate_tokens(model, tokens);
    detail::Forwarder fw(model, hook, tokens.size());
    for (TokenId t : tokens) {
        fw.append(t);
    }
    return fw;
}

}  // namespace

ForwardTrace forward(const Model& model, const TokenSeq& tokens) {
    return run(model, tokens, nullptr).trace();
}

ForwardTrace forward_steered(const Model& model, const TokenSeq& tokens, const SteerHook& hook) {
    return run(model, tokens, &hook).trace();
}

ForwardTrace forward_with(const Model& model, const TokenSeq& tokens, const std::optional<SteerHook>& hook) {
    return run(model, tokens, hook ? &*hook : nullptr).trace();
}

Tensor last_logits(const Model& model, const TokenSeq& tokens, const std::optional<SteerHook>& hook) {
    auto fw = run(model, tokens, hook ? &*hook : nullptr);
    const auto lg = fw.logits(tokens.size() - 1);
    return Tensor::vector(std::vector<double>(lg.begin(), lg.end()));
}

Tensor hidden_states(const Model& model, const TokenSeq& tokens, std::size_t layer) {
    if (layer >= model.config.n_layers) {
        throw ParameterError("layer " + std::to_string(layer) + " out of range for " +
                             std::to_string(model.config.n_layers) + " layers");
    }
    auto fw = run(model, tokens, nullptr);
    const std::size_t d = model.config.d_model;
    Tensor out({tokens.size(), d});
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto h = fw.hidden(layer, t);
        std::copy(h.begin(), h.end(), out.row(t).begin());
    }
    return out;
}

std::vector<double> attention_to_span(const ForwardTrace& trace, std::size_t begin, std::size_t end) {
    if (end <= begin) {
        throw ParameterError("attention_to_span: empty span [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ")");
    }
    std::vector<double> per_layer;
    for (const auto& heads : trace.attention) {
        if (heads.empty()) {
            throw InputError("attention_to_span: trace has no heads");
        }
        const std::size_t n = heads.front().rows();
        if (end > n) {
            throw ParameterError("attention_to_span: span end " + std::to_string(end) + " beyond sequence length " +
                                 std::to_string(n));
        }
        // Queries are the positions after the span; a span reaching the end
        // of the sequence falls back to the final position.
        const std::size_t q_begin = end < n ? end : n - 1;
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& a : heads) {
            for (std::size_t q = q_begin; q < n; ++q) {
                double mass = 0.0;
                for (std::size_t s = begin; s < end; ++s) {
                    mass += a.at(q, s);
                }
                total += mass;
                ++count;
            }
        }
        per_layer.push_back(std::clamp(total / static_cast<double>(count), 0.0, 1.0));
    }
    return per_layer;
}

}  // namespace sta
