#include "doctest.h"
#include "helpers.hpp"

#include "sta/errors.hpp"
#include "sta/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace sta;

TEST_SUITE("numerics") {

TEST_CASE("tensor shape must match data length") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
    const Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 1.5);
}

TEST_CASE("matmul examples") {
    const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
    CHECK(matmul(Tensor::matrix({{1, 0}, {0, 1}}), m) == m);
    CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})) == Tensor::matrix({{11}}));
    const Tensor z = matmul(Tensor::matrix({{0, 0}, {0, 0}}), Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
    CHECK(z == Tensor({2, 3}, 0.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}

TEST_CASE("matmul is associative on random 4x4 chains") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = testing::random_tensor(rng, {4, 4});
        const Tensor b = testing::random_tensor(rng, {4, 4});
        const Tensor c = testing::random_tensor(rng, {4, 4});
        const Tensor left = matmul(matmul(a, b), c);
        const Tensor right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < left.size(); ++i) {
            const double denom = std::max(1.0, std::abs(left[i]));
            CHECK(std::abs(left[i] - right[i]) / denom <= 1e-9);
        }
    }
}

TEST_CASE("softmax examples against direct evaluation") {
    CHECK(softmax(Tensor::vector({0, 0})) == Tensor::vector({0.5, 0.5}));

    const double e2 = std::exp(2.0), e1 = std::exp(1.0), e0 = 1.0;
    const double z = e2 + e1 + e0;
    const Tensor p = softmax(Tensor::vector({2, 1, 0}));
    CHECK(p[0] == doctest::Approx(e2 / z).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(e1 / z).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(e0 / z).epsilon(1e-12));
    CHECK(std::abs(p[0] - 0.6652) < 1e-3);
    CHECK(std::abs(p[1] - 0.2447) < 1e-3);
    CHECK(std::abs(p[2] - 0.0900) < 1e-3);

    const Tensor hot = softmax(Tensor::vector({5, 0}), 1000.0);
    CHECK(hot[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.005))).epsilon(1e-12));
    CHECK(hot[0] + hot[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax rejects nonpositive temperature") {
    CHECK_THROWS_AS(softmax(Tensor::vector({1, 2}), 0.0), ParameterError);
    CHECK_THROWS_AS(softmax(Tensor::vector({1, 2}), -1.0), ParameterError);
}

TEST_CASE("softmax is a probability vector preserving argmax") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor x = testing::random_tensor(rng, {9}, 4.0);
        const Tensor p = softmax(x, 0.5 + trial * 0.1);
        double sum = 0.0;
        for (double v : p.values()) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        const auto amax = [](const Tensor& t) {
            return std::max_element(t.values().begin(), t.values().end()) - t.values().begin();
        };
        CHECK(amax(p) == amax(x));
    }
}

TEST_CASE("softmax stays finite for huge logits") {
    const Tensor p = softmax(Tensor::vector({1000, 0, -1000}));
    CHECK(p.all_finite());
    CHECK(p[0] == doctest::Approx(1.0));
}

TEST_CASE("layer_norm examples") {
    const Tensor ones3 = Tensor::vector({1, 1, 1});
    const Tensor zeros3 = Tensor::vector({0, 0, 0});
    CHECK(layer_norm(ones3, ones3, zeros3, 1e-5) == zeros3);

    const Tensor y = layer_norm(Tensor::vector({1, -1}), Tensor::vector({1, 1}), Tensor::vector({0, 0}), 0.0);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-15));

    const Tensor passthrough =
        layer_norm(Tensor::vector({3, -7}), Tensor::vector({0, 0}), Tensor::vector({5, 5}), 1e-5);
    CHECK(passthrough == Tensor::vector({5, 5}));
}

TEST_CASE("layer_norm length mismatch") {
    CHECK_THROWS_AS(layer_norm(Tensor::vector({1, 2}), Tensor::vector({1}), Tensor::vector({0, 0}), 1e-5),
                    DimensionError);
}

TEST_CASE("layer_norm output has zero mean and unit variance") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 10;
        const Tensor x = testing::random_tensor(rng, {n}, 3.0);
        const Tensor y = layer_norm(x, Tensor({n}, 1.0), Tensor({n}, 0.0), 0.0);
        double mean = 0.0;
        for (double v : y.values()) {
            mean += v;
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : y.values()) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(n);
        CHECK(std::abs(mean) <= 1e-12);
        CHECK(std::abs(var - 1.0) <= 1e-9);
    }
}

TEST_CASE("rank_threshold examples") {
    CHECK(rank_threshold(Tensor::vector({0.9, 0.1, -0.5, 0.3}), 0.35) == 0.3);
    CHECK(rank_threshold(Tensor::vector({7}), 1.0) == 7.0);
    CHECK(rank_threshold(Tensor::vector({2, 2, 2}), 0.34) == 2.0);
}

TEST_CASE("rank_threshold rejects fractions outside (0, 1]") {
    const Tensor v = Tensor::vector({1, 2});
    CHECK_THROWS_AS(rank_threshold(v, 0.0), ParameterError);
    CHECK_THROWS_AS(rank_threshold(v, 1.5), ParameterError);
    CHECK_THROWS_AS(rank_threshold(v, -0.1), ParameterError);
}

TEST_CASE("rank_threshold matches a brute-force rank and admits enough elements") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> small(-3, 3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 23;
        std::vector<double> v(n);
        for (double& x : v) {
            // Coarse values so ties are common.
            x = small(rng) * 0.5;
        }
        const double f = 0.05 + 0.95 * static_cast<double>(trial % 20) / 19.0;
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const std::size_t k = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n)));
        const double got = rank_threshold(Tensor::vector(v), f);
        CHECK(got == sorted[k - 1]);
        CHECK(static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double x) { return x >= got; })) >= k);
        CHECK(rank_threshold(Tensor::vector(v), 1.0) == *std::min_element(v.begin(), v.end()));
    }
}

TEST_CASE("cosine similarity and norms") {
    CHECK(l2_norm(Tensor::vector({3, 4}).values()) == 5.0);
    CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({2, 0})) == doctest::Approx(1.0));
    CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 3})) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 0})), DegenerateError);
}

TEST_CASE("mean_rows accumulates row means") {
    const Tensor m = mean_rows(Tensor::matrix({{1, 2}, {3, 6}}));
    CHECK(m == Tensor::vector({2, 4}));
}

TEST_CASE("derive_seed is stable per label") {
    CHECK(derive_seed(1, "model") == derive_seed(1, "model"));
    CHECK(derive_seed(1, "model") != derive_seed(1, "sae"));
    CHECK(derive_seed(1, "model") != derive_seed(2, "model"));
}

}  // TEST_SUITE
