#include "sta/errors.hpp"
#include "sta/numerics.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace sta {

namespace {

std::size_t shape_product(const Tensor::Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " elements");
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const noexcept {
    if (shape_.size() <= 1) {
        return 1;
    }
    return data_.size() / shape_.back();
}

std::size_t Tensor::cols() const noexcept {
    return shape_.empty() ? data_.size() : shape_.back();
}

void Tensor::fill(double value) {
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::string shape_string(const Tensor::Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace sta
