#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fspfm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. Only rank 1 and rank 2 are used by the
/// models here, but the container itself is rank-agnostic.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::initializer_list<double> values);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
    double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

    /// View of one row of a rank-2 tensor (or the whole rank-1 tensor for row 0).
    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    void fill(double value);
    bool all_finite() const noexcept;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stacks equal-length rank-1 tensors into a [rows, n] matrix.
Tensor stack_rows(std::span<const Tensor> rows);

/// Copies row `r` of a rank-2 tensor into a rank-1 tensor.
Tensor take_row(const Tensor& matrix, std::size_t r);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace fspfm
