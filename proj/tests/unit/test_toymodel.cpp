#include "doctest.h"
#include "helpers.hpp"

#include "sta/errors.hpp"
#include "sta/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace sta;

namespace {

TokenSeq random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
    TokenSeq t;
    for (std::size_t i = 0; i < n; ++i) {
        t.push_back(static_cast<TokenId>(rng() % vocab));
    }
    return t;
}

// A few steps of training so the weights are no longer near-symmetric.
const Model& trained_model() {
    static const Model m = [] {
        Model model = testing::small_model(3);
        ToyTrainConfig tc;
        tc.steps = 60;
        tc.lr = 1e-2;
        train_toy(model, testing::bigram_corpus(64, 10, 1), tc);
        return model;
    }();
    return m;
}

}  // namespace

TEST_SUITE("toymodel") {

TEST_CASE("init is deterministic and seed sensitive") {
    CHECK(weight_checksum(testing::small_model(1)) == weight_checksum(testing::small_model(1)));
    CHECK(weight_checksum(testing::small_model(1)) != weight_checksum(testing::small_model(2)));
}

TEST_CASE("init weights have std near 0.02") {
    ToyModelConfig c;
    const Model m = init_model(c);
    const auto& w = m.token_embedding.values();
    double ss = 0.0;
    for (double v : w) {
        ss += v * v;
    }
    CHECK(std::sqrt(ss / static_cast<double>(w.size())) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("config validation") {
    ToyModelConfig c;
    c.d_model = 63;
    c.n_heads = 2;
    CHECK_THROWS_AS(init_model(c), ParameterError);
    c = ToyModelConfig{};
    c.vocab_size = 3;
    CHECK_THROWS_AS(init_model(c), ParameterError);
}

TEST_CASE("forward shapes") {
    ToyModelConfig c;
    const Model m = init_model(c);
    const ForwardTrace t = forward(m, {1, 5, 6, 7, 3});
    REQUIRE(t.hidden.size() == 2);
    for (const auto& h : t.hidden) {
        CHECK(h.shape() == Tensor::Shape{5, 64});
    }
    CHECK(t.logits.shape() == Tensor::Shape{5, 64});
    REQUIRE(t.attention.size() == 2);
    CHECK(t.attention[0].size() == 2);
    CHECK(t.attention[0][0].shape() == Tensor::Shape{5, 5});
}

TEST_CASE("forward input errors") {
    const Model m = testing::small_model();
    CHECK_THROWS_AS(forward(m, {}), InputError);
    CHECK_THROWS_AS(forward(m, {1, 99}), InputError);
    CHECK_THROWS_AS(forward(m, TokenSeq(25, 4)), InputError);
}

TEST_CASE("causality: later tokens never change earlier logits") {
    const Model& m = trained_model();
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        TokenSeq t = random_tokens(rng, 6, 16);
        const ForwardTrace full = forward(m, t);
        const ForwardTrace prefix = forward(m, TokenSeq(t.begin(), t.begin() + 4));
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t v = 0; v < 16; ++v) {
                CHECK(std::abs(full.logits.at(r, v) - prefix.logits.at(r, v)) <= 1e-9);
            }
        }
        TokenSeq changed = t;
        changed[4] = static_cast<TokenId>((changed[4] + 1) % 16);
        const ForwardTrace other = forward(m, changed);
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t v = 0; v < 16; ++v) {
                CHECK(full.logits.at(r, v) == other.logits.at(r, v));
            }
        }
    }
}

TEST_CASE("attention rows are normalized and causal") {
    const Model& m = trained_model();
    std::mt19937_64 rng(4);
    const ForwardTrace t = forward(m, random_tokens(rng, 10, 16));
    for (const auto& layer : t.attention) {
        for (const auto& a : layer) {
            for (std::size_t q = 0; q < a.rows(); ++q) {
                double sum = 0.0;
                for (std::size_t k = 0; k < a.cols(); ++k) {
                    sum += a.at(q, k);
                    if (k > q) {
                        CHECK(a.at(q, k) == 0.0);
                    }
                }
                CHECK(std::abs(sum - 1.0) <= 1e-9);
            }
        }
    }
}

TEST_CASE("last_logits matches the final row of forward") {
    const Model& m = trained_model();
    const TokenSeq t{1, 4, 5, 6};
    const ForwardTrace full = forward(m, t);
    const Tensor last = last_logits(m, t);
    for (std::size_t v = 0; v < 16; ++v) {
        CHECK(last[v] == full.logits.at(3, v));
    }
}

TEST_CASE("steering identity cases") {
    const Model& m = trained_model();
    const TokenSeq t{1, 4, 5, 6, 7};
    const ForwardTrace plain = forward(m, t);
    std::mt19937_64 rng(2);
    const Tensor v = testing::random_tensor(rng, {16});

    CHECK(forward_steered(m, t, {0, v, 0.0}).logits == plain.logits);
    CHECK(forward_steered(m, t, {1, Tensor({16}), 3.0}).logits == plain.logits);
    CHECK(forward_steered(m, t, {0, v, 1.0}).logits != forward_steered(m, t, {0, v, -1.0}).logits);
}

TEST_CASE("steering hook validation") {
    const Model& m = trained_model();
    CHECK_THROWS_AS(forward_steered(m, {1, 4}, {2, Tensor({16}), 1.0}), ParameterError);
    CHECK_THROWS_AS(forward_steered(m, {1, 4}, {0, Tensor({8}), 1.0}), ConfigError);
}

TEST_CASE("steered residual equals h + lambda v at the hook layer") {
    const Model& m = trained_model();
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const TokenSeq t = random_tokens(rng, 7, 16);
        const Tensor v = testing::random_tensor(rng, {16});
        const double lambda = std::normal_distribution<double>(0.0, 3.0)(rng);
        const std::size_t layer = trial % 2;
        const ForwardTrace plain = forward(m, t);
        const ForwardTrace steered = forward_steered(m, t, {layer, v, lambda});
        for (std::size_t r = 0; r < t.size(); ++r) {
            for (std::size_t i = 0; i < 16; ++i) {
                CHECK(steered.hidden[layer].at(r, i) == plain.hidden[layer].at(r, i) + lambda * v[i]);
            }
        }
    }
}

TEST_CASE("training reduces loss on a bigram corpus") {
    Model m = testing::small_model(5);
    const auto corpus = testing::bigram_corpus(64, 10, 3);
    ToyTrainConfig tc;
    tc.steps = 200;
    tc.lr = 1e-2;
    tc.eval_every = 50;
    const TrainingReport r = train_toy(m, corpus, tc);
    REQUIRE(r.loss.size() >= 2);
    CHECK(r.loss.back() < r.loss.front());
    CHECK(r.batch_loss.size() == 200);
}

TEST_CASE("lr zero leaves the loss unchanged") {
    Model m = testing::small_model(5);
    const std::uint64_t before = weight_checksum(m);
    ToyTrainConfig tc;
    tc.steps = 30;
    tc.lr = 0.0;
    tc.eval_every = 10;
    const TrainingReport r = train_toy(m, testing::bigram_corpus(16, 6, 3), tc);
    for (double l : r.loss) {
        CHECK(std::abs(l - r.loss.front()) <= 1e-12);
    }
    CHECK(weight_checksum(m) == before);
}

TEST_CASE("training is deterministic") {
    const auto corpus = testing::bigram_corpus(32, 8, 4);
    ToyTrainConfig tc;
    tc.steps = 20;
    Model a = testing::small_model(8), b = testing::small_model(8);
    const TrainingReport ra = train_toy(a, corpus, tc);
    const TrainingReport rb = train_toy(b, corpus, tc);
    CHECK(ra.loss == rb.loss);
    CHECK(ra.batch_loss == rb.batch_loss);
    CHECK(weight_checksum(a) == weight_checksum(b));
}

TEST_CASE("training input errors") {
    Model m = testing::small_model();
    CHECK_THROWS_AS(train_toy(m, {}, ToyTrainConfig{}), InputError);
}

TEST_CASE("backprop matches central finite differences") {
    const Model m = testing::small_model(12, 8, 2);
    const auto corpus = testing::bigram_corpus(3, 5, 6);
    Model grad = zeros_like(m);
    loss_and_gradient(m, corpus, grad);

    std::vector<std::pair<std::string, std::vector<double>>> analytic;
    grad.for_each_param([&](const std::string& name, const Tensor& t) { analytic.emplace_back(name, t.values()); });

    Model probe = m;
    std::size_t idx = 0;
    double worst = 0.0;
    probe.for_each_param([&](const std::string& name, Tensor& t) {
        const auto& g = analytic[idx++].second;
        // A stride keeps the check fast while touching every tensor.
        for (std::size_t i = 0; i < t.size(); i += 7) {
            const double orig = t[i];
            const double h = 1e-4;
            t[i] = orig + h;
            const double up = sequence_loss(probe, corpus);
            t[i] = orig - h;
            const double down = sequence_loss(probe, corpus);
            t[i] = orig;
            const double fd = (up - down) / (2 * h);
            const double err = std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i]));
            if (err > worst) {
                worst = err;
                INFO(name << "[" << i << "] fd " << fd << " analytic " << g[i]);
            }
        }
    });
    CHECK(worst < 1e-5);
}

TEST_CASE("attention_to_span on hand-built traces") {
    ForwardTrace t;
    Tensor uniform({4, 4}, 0.25);
    t.attention = {{uniform, uniform}, {uniform}};
    const auto half = attention_to_span(t, 0, 2);
    REQUIRE(half.size() == 2);
    CHECK(half[0] == doctest::Approx(0.5));
    CHECK(half[1] == doctest::Approx(0.5));
    const auto whole = attention_to_span(t, 0, 4);
    CHECK(whole[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(attention_to_span(t, 2, 2), ParameterError);
    CHECK_THROWS_AS(attention_to_span(t, 0, 5), ParameterError);
}

TEST_CASE("attention_to_span stays in [0, 1] on a trained model") {
    const Model& m = trained_model();
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        const TokenSeq seq = random_tokens(rng, 12, 16);
        const std::size_t b = rng() % 8;
        const std::size_t e = b + 1 + rng() % 3;
        for (double v : attention_to_span(forward(m, seq), b, e)) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("attention is invariant to a consistent vocabulary relabeling") {
    const Model m = testing::small_model(31);
    std::vector<TokenId> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(1);
    std::shuffle(perm.begin(), perm.end(), rng);
    Model relabeled = m;
    for (std::size_t v = 0; v < 16; ++v) {
        const auto src = m.token_embedding.row(v);
        std::copy(src.begin(), src.end(), relabeled.token_embedding.row(perm[v]).begin());
    }
    const TokenSeq seq{1, 4, 9, 12, 5, 3};
    TokenSeq mapped;
    for (TokenId t : seq) {
        mapped.push_back(perm[t]);
    }
    const ForwardTrace a = forward(m, seq);
    const ForwardTrace b = forward(relabeled, mapped);
    for (std::size_t l = 0; l < a.attention.size(); ++l) {
        for (std::size_t h = 0; h < a.attention[l].size(); ++h) {
            CHECK(a.attention[l][h] == b.attention[l][h]);
        }
    }
    CHECK(attention_to_span(a, 1, 3) == attention_to_span(b, 1, 3));
}

TEST_CASE("greedy generation is deterministic and agrees with forward") {
    const Model& m = trained_model();
    GenerateConfig gc;
    gc.max_new = 8;
    const TokenSeq prompt{1, 4, 5};
    const TokenSeq a = generate(m, prompt, gc);
    CHECK(a == generate(m, prompt, gc));

    TokenSeq ctx = prompt;
    for (TokenId t : a) {
        const Tensor logits = last_logits(m, ctx);
        const auto best = std::max_element(logits.values().begin(), logits.values().end()) - logits.values().begin();
        CHECK(best == t);
        ctx.push_back(t);
    }
}

TEST_CASE("generation budget and hook identity") {
    const Model& m = trained_model();
    GenerateConfig gc;
    gc.max_new = 1;
    CHECK(generate(m, {1, 4}, gc).size() <= 1);
    gc.max_new = 10;
    std::mt19937_64 rng(6);
    const SteerHook zero{0, testing::random_tensor(rng, {16}), 0.0};
    CHECK(generate(m, {1, 4}, gc, zero) == generate(m, {1, 4}, gc));
    gc.max_new = 0;
    CHECK_THROWS_AS(generate(m, {1, 4}, gc), ParameterError);
}

TEST_CASE("sampled generation is reproducible per seed") {
    const Model& m = trained_model();
    GenerateConfig gc;
    gc.max_new = 12;
    gc.temperature = 1.0;
    gc.seed = 77;
    CHECK(generate(m, {1, 4}, gc) == generate(m, {1, 4}, gc));
}

TEST_CASE("steered generation matches steered forward") {
    const Model& m = trained_model();
    std::mt19937_64 rng(8);
    const SteerHook hook{1, testing::random_tensor(rng, {16}), 2.0};
    GenerateConfig gc;
    gc.max_new = 6;
    const TokenSeq prompt{1, 6};
    TokenSeq ctx = prompt;
    for (TokenId t : generate(m, prompt, gc, hook)) {
        const Tensor logits = last_logits(m, ctx, hook);
        CHECK(std::max_element(logits.values().begin(), logits.values().end()) - logits.values().begin() == t);
        ctx.push_back(t);
    }
}

}  // TEST_SUITE
