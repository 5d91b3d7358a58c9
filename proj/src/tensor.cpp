#include "fspfm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "fspfm/error.hpp"

namespace fspfm {

std::string_view error_class_name(ErrorClass cls) noexcept {
    switch (cls) {
        case ErrorClass::config: return "config";
        case ErrorClass::shape: return "shape";
        case ErrorClass::contract: return "contract";
        case ErrorClass::numeric: return "numeric";
        case ErrorClass::format: return "format";
        case ErrorClass::version: return "version";
        case ErrorClass::truncated: return "truncated";
        case ErrorClass::name_mismatch: return "name-mismatch";
        case ErrorClass::no_eligible_pairs: return "no-eligible-pairs";
        case ErrorClass::dependency: return "dependency";
        case ErrorClass::io: return "io";
        case ErrorClass::exists: return "exists";
    }
    return "unknown";
}

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) fail(ErrorClass::shape, "tensor shape must have rank >= 1");
    for (auto extent : shape) {
        if (extent == 0) fail(ErrorClass::shape, "tensor extents must be positive: " + shape_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        fail(ErrorClass::shape, "data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

std::span<double> Tensor::row(std::size_t r) {
    const std::size_t cols = shape_.back();
    return std::span<double>(data_).subspan(r * cols, cols);
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t cols = shape_.back();
    return std::span<const double>(data_).subspan(r * cols, cols);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) fail(ErrorClass::shape, "cannot stack zero rows");
    const std::size_t n = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.size() != n) {
            fail(ErrorClass::shape, "stack_rows expects equal-length vectors, got " +
                                        shape_string(r.shape()));
        }
        data.insert(data.end(), r.data().begin(), r.data().end());
    }
    return Tensor({rows.size(), n}, std::move(data));
}

Tensor take_row(const Tensor& matrix, std::size_t r) {
    auto view = matrix.row(r);
    return Tensor::vector(std::vector<double>(view.begin(), view.end()));
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace fspfm
