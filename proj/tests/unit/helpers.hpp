#pragma once

#include "sta/sae.hpp"
#include "sta/toymodel.hpp"

#include <cmath>
#include <random>

namespace testing {

inline sta::Tensor random_tensor(std::mt19937_64& rng, sta::Tensor::Shape shape, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    sta::Tensor t(std::move(shape));
    for (double& x : t.data()) {
        x = normal(rng);
    }
    return t;
}

inline sta::SaeParams random_sae(std::mt19937_64& rng, std::size_t d, std::size_t m) {
    sta::SaeParams p = sta::SaeParams::zeros(d, m);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    p.w_enc = random_tensor(rng, {d, m}, s);
    p.w_dec = random_tensor(rng, {m, d}, s);
    p.b_enc = random_tensor(rng, {m}, 0.1);
    p.b_dec = random_tensor(rng, {d}, 0.1);
    std::uniform_real_distribution<double> uni(0.05, 0.5);
    for (double& x : p.theta.data()) {
        x = uni(rng);
    }
    return p;
}

inline sta::Model small_model(std::uint64_t seed = 7, std::size_t d = 16, std::size_t layers = 2) {
    sta::ToyModelConfig c;
    c.vocab_size = 16;
    c.d_model = d;
    c.n_layers = layers;
    c.n_heads = 2;
    c.max_seq = 24;
    c.seed = seed;
    return sta::init_model(c);
}

// Bigram corpus: each token is followed by its successor mod 12, offset past
// the reserved ids.
inline std::vector<sta::TokenSeq> bigram_corpus(std::size_t n, std::size_t len, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<sta::TokenSeq> out;
    for (std::size_t i = 0; i < n; ++i) {
        sta::TokenSeq s{sta::tokens::bos};
        sta::TokenId t = static_cast<sta::TokenId>(4 + rng() % 12);
        for (std::size_t k = 0; k < len; ++k) {
            s.push_back(t);
            t = static_cast<sta::TokenId>(4 + (t - 4 + 1) % 12);
        }
        s.push_back(sta::tokens::eos);
        out.push_back(std::move(s));
    }
    return out;
}

inline double max_abs_diff(const sta::Tensor& a, const sta::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

}  // namespace testing
