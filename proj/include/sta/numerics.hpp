#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sta {

// Dense row-major tensor of doubles. Rank 1 and 2 cover every use in this
// project; higher ranks are representable but only indexed flat.
class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Matrix views; a rank-1 tensor is treated as a single row.
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<double> row(std::size_t r) noexcept { return std::span<double>(data_).subspan(r * cols(), cols()); }
    std::span<const double> row(std::size_t r) const noexcept {
        return std::span<const double>(data_).subspan(r * cols(), cols());
    }

    void fill(double value);
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);

// --- public kernels (checked, finite outputs) ---

// Standard product; each output element sums over k left to right.
Tensor matmul(const Tensor& a, const Tensor& b);

// Temperature softmax with max subtraction.
Tensor softmax(const Tensor& x, double temperature = 1.0);

// (x - mean) / sqrt(var + eps) * gain + bias, population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Value at 1-indexed rank ceil(top_fraction * n) of the descending sort.
double rank_threshold(const Tensor& values, double top_fraction);

Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double cosine_similarity(const Tensor& a, const Tensor& b);
// Mean of the rows of an [n x d] tensor, accumulated in row order.
Tensor mean_rows(const Tensor& a);

// --- unchecked span kernels used in hot loops ---
namespace kernels {

// out[n] = x[k] * w[k x n] (+ bias), accumulating over k in order.
void row_times_matrix(std::span<const double> x, const Tensor& w, std::span<double> out);
void row_times_matrix_bias(std::span<const double> x, const Tensor& w, std::span<const double> bias,
                           std::span<double> out);
// Writes normalized x into out; returns 1/sqrt(var+eps). `normed` receives the pre-gain values.
double layer_norm_row(std::span<const double> x, std::span<const double> gain, std::span<const double> bias,
                      double eps, std::span<double> normed, std::span<double> out);
void softmax_inplace(std::span<double> x, double temperature = 1.0);

}  // namespace kernels

// Deterministic seed derivation: the same (root, label) pair always yields the
// same stream seed, independent of the order stages run in.
std::uint64_t derive_seed(std::uint64_t root, const std::string& label);

}  // namespace sta
