#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace qlm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXi8 = Vector<std::int8_t>;
using VectorXi32 = Vector<std::int32_t>;
using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;
using RowMatrixXi32 = RowMatrix<std::int32_t>;

}  // namespace qlm
