#pragma once

#include "sta/toymodel.hpp"

#include <cmath>
#include <vector>

namespace sta::detail {

inline constexpr double kLayerNormEps = 1e-5;

inline double gelu(double x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
    constexpr double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double th = std::tanh(u);
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * c * (1.0 + 3.0 * 0.044715 * x * x);
}

// Per-layer activations for every processed position, row-major [capacity x width].
struct LayerCache {
    std::vector<double> x_in, ln1_norm, ln1_out, q, k, v, concat, mid, ln2_norm, ln2_out, up, act, out;
    std::vector<double> ln1_inv, ln2_inv;
    std::vector<std::vector<double>> probs;  // per head, [capacity x capacity]
};

// Processes one position at a time through every layer. Because position t
// only reads positions <= t, appending tokens one by one is the same
// computation as a full forward pass, which keeps generation and the
// full-sequence trace bitwise consistent.
class Forwarder {
public:
    Forwarder(const Model& model, const SteerHook* hook, std::size_t capacity);

    void append(TokenId token);
    std::size_t length() const noexcept { return tokens_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const TokenSeq& tokens() const noexcept { return tokens_; }

    std::span<const double> logits(std::size_t pos) const;
    std::span<const double> hidden(std::size_t layer, std::size_t pos) const;
    ForwardTrace trace() const;

    const Model& model() const noexcept { return model_; }
    const LayerCache& layer(std::size_t l) const noexcept { return layers_[l]; }
    const std::vector<double>& final_norm() const noexcept { return lnf_norm_; }
    const std::vector<double>& final_out() const noexcept { return lnf_out_; }
    const std::vector<double>& final_inv() const noexcept { return lnf_inv_; }

private:
    const Model& model_;
    const SteerHook* hook_;
    std::size_t capacity_;
    TokenSeq tokens_;
    std::vector<LayerCache> layers_;
    std::vector<double> lnf_norm_, lnf_out_, lnf_inv_, logits_;
};

}  // namespace sta::detail
