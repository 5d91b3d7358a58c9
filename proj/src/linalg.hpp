#pragma once

// Row-major Eigen views over tensor storage. Internal to the library.

#include <Eigen/Core>

namespace fspfm::linalg {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

inline ConstMatMap view(const double* p, std::size_t rows, std::size_t cols) {
    return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
inline MatMap view(double* p, std::size_t rows, std::size_t cols) {
    return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

}  // namespace fspfm::linalg
