#pragma once

#include "emx/factor_graph.hpp"

#include <Eigen/SparseCholesky>

#include <map>
#include <memory>
#include <span>
#include <vector>

namespace emx {

/// Covariance recovery from the Gauss-Newton information matrix of a graph at
/// its current values. The sparse LDL^T factorization is computed once; single
/// blocks come from triangular solves and the full block diagonal from the
/// sparse-inverse recursion over the factor's fill pattern.
class Marginals {
 public:
  /// Throws SingularMatrixError when the information matrix is not positive definite.
  explicit Marginals(const FactorGraph& graph);

  Eigen::MatrixXd covariance(const VariableKey& key) const;
  Cov3 pose_covariance(const VariableKey& key) const;
  Cov2 point_covariance(const VariableKey& key) const;

  /// Diagonal covariance blocks of every variable.
  std::map<VariableKey, Eigen::MatrixXd> block_diagonal() const;

  /// Columns of the full covariance for the given variables: a
  /// dimension() x (sum of key dims) matrix, columns in the order given.
  Eigen::MatrixXd covariance_columns(std::span<const VariableKey> keys) const;

  int dimension() const { return dimension_; }
  int offset(const VariableKey& key) const;
  const std::vector<VariableKey>& keys() const { return keys_; }

 private:
  using Solver = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>>;

  std::vector<VariableKey> keys_;
  std::map<VariableKey, int> offsets_;
  int dimension_ = 0;
  std::unique_ptr<Solver> solver_;
};

}  // namespace emx
