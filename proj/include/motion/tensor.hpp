#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace motion {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles. Plain value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t axis) const;

    // 2-D convenience; rank-1 tensors are treated as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double item() const;
    bool all_finite() const noexcept;
    void fill(double v) noexcept;

    // In-place accumulation; shapes must match.
    Tensor& operator+=(const Tensor& other);

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace motion
