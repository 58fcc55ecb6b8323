#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace idea {

using Real = double;
using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;
using RowVector = RowVectorX<Real>;
using SparseMatrix = Eigen::SparseMatrix<Real, Eigen::RowMajor>;

using NodeId = std::int64_t;
using NodeList = std::vector<NodeId>;
using LabelVector = Eigen::Matrix<int, Eigen::Dynamic, 1>;

/// Raised for malformed inputs: shape mismatches, invalid ids, inconsistent files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace idea
