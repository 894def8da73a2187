#include "emx/marginals.hpp"

#include "emx/errors.hpp"

#include <algorithm>

namespace emx {

Marginals::Marginals(const FactorGraph& graph) {
  graph.check_gauge();
  keys_ = graph.keys();
  for (const auto& key : keys_) offsets_.emplace(key, graph.offset(key));
  dimension_ = graph.dimension();
  const LinearSystem sys = graph.linearize();
  solver_ = std::make_unique<Solver>();
  solver_->compute(sys.information);
  if (solver_->info() != Eigen::Success || (solver_->vectorD().array() <= 0.0).any()) {
    throw SingularMatrixError("information matrix is singular");
  }
}

int Marginals::offset(const VariableKey& key) const {
  auto it = offsets_.find(key);
  if (it == offsets_.end()) throw UnknownKeyError("no marginal for unknown variable " + key.str());
  return it->second;
}

Eigen::MatrixXd Marginals::covariance(const VariableKey& key) const {
  const int off = offset(key);
  const int d = key.dim();
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dimension_, d);
  for (int k = 0; k < d; ++k) rhs(off + k, k) = 1.0;
  const Eigen::MatrixXd cols = solver_->solve(rhs);
  Eigen::MatrixXd block = cols.middleRows(off, d);
  return 0.5 * (block + block.transpose());
}

Cov3 Marginals::pose_covariance(const VariableKey& key) const {
  if (!key.is_pose()) throw Error(key.str() + " is not a pose");
  return covariance(key);
}

Cov2 Marginals::point_covariance(const VariableKey& key) const {
  if (key.is_pose()) throw Error(key.str() + " is not a landmark");
  return covariance(key);
}

Eigen::MatrixXd Marginals::covariance_columns(std::span<const VariableKey> keys) const {
  int total = 0;
  for (const auto& key : keys) total += key.dim();
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dimension_, total);
  int col = 0;
  for (const auto& key : keys) {
    const int off = offset(key);
    for (int k = 0; k < key.dim(); ++k) rhs(off + k, col++) = 1.0;
  }
  return solver_->solve(rhs);
}

std::map<VariableKey, Eigen::MatrixXd> Marginals::block_diagonal() const {
  // With P A P^T = L D L^T and Z = (L D L^T)^-1, entries of Z on the pattern of
  // L satisfy, for j descending and i in struct(L(:, j)):
  //   Z(i, j) = -sum_k L(k, j) Z(k, i),   Z(j, j) = 1/d_j - sum_k L(k, j) Z(k, j).
  const auto& lmat = solver_->matrixL().nestedExpression();
  const int n = static_cast<int>(lmat.cols());
  const int* colptr = lmat.outerIndexPtr();
  const int* rowidx = lmat.innerIndexPtr();
  const double* lval = lmat.valuePtr();
  const Eigen::VectorXd& d = solver_->vectorD();

  std::vector<double> zdiag(n, 0.0);
  std::vector<double> zoff(static_cast<std::size_t>(colptr[n]), 0.0);

  auto lookup = [&](int r, int c) -> double {
    if (r == c) return zdiag[r];
    if (r < c) std::swap(r, c);
    const int* begin = rowidx + colptr[c];
    const int* end = rowidx + colptr[c + 1];
    const int* it = std::lower_bound(begin, end, r);
    if (it == end || *it != r) throw Error("sparse inverse entry outside the factor pattern");
    return zoff[static_cast<std::size_t>(it - rowidx)];
  };

  for (int j = n - 1; j >= 0; --j) {
    const int p0 = colptr[j];
    const int p1 = colptr[j + 1];
    for (int a = p0; a < p1; ++a) {
      const int i = rowidx[a];
      double s = 0.0;
      for (int b = p0; b < p1; ++b) s += lval[b] * lookup(rowidx[b], i);
      zoff[a] = -s;
    }
    double s = 0.0;
    for (int b = p0; b < p1; ++b) s += lval[b] * zoff[b];
    zdiag[j] = 1.0 / d[j] - s;
  }

  const auto& perm = solver_->permutationP().indices();
  std::map<VariableKey, Eigen::MatrixXd> out;
  for (const auto& key : keys_) {
    const int off = offsets_.at(key);
    const int dim = key.dim();
    Eigen::MatrixXd block(dim, dim);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) block(r, c) = lookup(perm[off + r], perm[off + c]);
    out.emplace_hint(out.end(), key, std::move(block));
  }
  return out;
}

}  // namespace emx
