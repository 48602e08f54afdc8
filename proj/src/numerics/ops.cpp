#include "sta/errors.hpp"
#include "sta/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sta {

namespace {

void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) {
        throw NumericError(std::string(op) + ": non-finite output");
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows();
    const std::size_t n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        kernels::row_times_matrix(a.row(i), b, out.row(i));
    }
    require_finite(out, "matmul");
    return out;
}

Tensor softmax(const Tensor& x, double temperature) {
    if (!(temperature > 0.0)) {
        throw ParameterError("softmax: temperature must be > 0, got " + std::to_string(temperature));
    }
    if (x.empty()) {
        throw InputError("softmax: empty input");
    }
    Tensor out = x;
    kernels::softmax_inplace(out.data(), temperature);
    require_finite(out, "softmax");
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.empty()) {
        throw InputError("layer_norm: empty input");
    }
    if (gain.size() != x.size() || bias.size() != x.size()) {
        throw DimensionError("layer_norm: length mismatch x=" + std::to_string(x.size()) +
                             " gain=" + std::to_string(gain.size()) + " bias=" + std::to_string(bias.size()));
    }
    if (eps < 0.0) {
        throw ParameterError("layer_norm: eps must be >= 0");
    }
    Tensor out = Tensor::zeros_like(x);
    std::vector<double> normed(x.size());
    kernels::layer_norm_row(x.data(), gain.data(), bias.data(), eps, normed, out.data());
    // A constant input with eps == 0 is 0/0; the normalized value is defined as 0.
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::isnan(out[i])) {
            out[i] = bias[i];
        }
    }
    require_finite(out, "layer_norm");
    return out;
}

double rank_threshold(const Tensor& values, double top_fraction) {
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
        throw ParameterError("rank_threshold: top_fraction must lie in (0, 1], got " + std::to_string(top_fraction));
    }
    if (values.empty()) {
        throw InputError("rank_threshold: empty values");
    }
    std::vector<double> sorted(values.values());
    std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(top_fraction * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
    }
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b[i];
    }
    return out;
}

Tensor scale(const Tensor& a, double factor) {
    Tensor out = a;
    for (double& v : out.data()) {
        v *= factor;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    const double na = l2_norm(a.data());
    const double nb = l2_norm(b.data());
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateError("cosine_similarity: zero vector");
    }
    return dot(a.data(), b.data()) / (na * nb);
}

Tensor mean_rows(const Tensor& a) {
    if (a.rows() == 0 || a.empty()) {
        throw InputError("mean_rows: no rows");
    }
    Tensor out({a.cols()});
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[c] += row[c];
        }
    }
    const double inv = 1.0 / static_cast<double>(a.rows());
    for (double& v : out.data()) {
        v *= inv;
    }
    return out;
}

namespace kernels {

void row_times_matrix(std::span<const double> x, const Tensor& w, std::span<double> out) {
    const std::size_t n = w.cols();
    std::fill(out.begin(), out.end(), 0.0);
    const double* wp = w.data().data();
    double* op = out.data();
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double xk = x[k];
        const double* wr = wp + k * n;
        for (std::size_t j = 0; j < n; ++j) {
            op[j] += xk * wr[j];
        }
    }
}

void row_times_matrix_bias(std::span<const double> x, const Tensor& w, std::span<const double> bias,
                           std::span<double> out) {
    row_times_matrix(x, w, out);
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] += bias[j];
    }
}

double layer_norm_row(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                      double eps, std::span<double> normed, std::span<double> out) {
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < x.size(); ++i) {
        normed[i] = (x[i] - mean) * inv_std;
        out[i] = normed[i] * gain[i] + bias[i];
    }
    return inv_std;
}

void softmax_inplace(std::span<double> x, double temperature) {
    double mx = x[0];
    for (double v : x) {
        mx = std::max(mx, v);
    }
    double total = 0.0;
    for (double& v : x) {
        v = std::exp((v - mx) / temperature);
        total += v;
    }
    for (double& v : x) {
        v /= total;
    }
}

}  // namespace kernels

}  // namespace sta
