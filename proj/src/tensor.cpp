#include "motion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "motion/errors.hpp"

namespace motion {

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                             " values");
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    }
    return shape_[axis];
}

std::size_t Tensor::rows() const {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? 1 : data_.size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

double Tensor::item() const {
    if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) {
        throw DimensionError("accumulate " + shape_str(other.shape_) + " into " + shape_str(shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

}  // namespace motion
