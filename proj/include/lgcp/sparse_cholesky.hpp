#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace lgcp {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Sparse symmetric positive-definite factorization P Q P' = L L' (CHOLMOD,
// supernodal, fill-reducing ordering chosen at analysis). Every
// linear-algebra path in the project goes through this class. The symbolic
// analysis is reused while the sparsity pattern is unchanged, so the ordering
// is fixed for a given model structure. Solves on a const object may run
// concurrently.
class SparseCholesky {
 public:
  SparseCholesky();
  explicit SparseCholesky(const SpMat& q);
  ~SparseCholesky();
  SparseCholesky(const SparseCholesky&) = delete;
  SparseCholesky& operator=(const SparseCholesky&) = delete;

  // Throws NumericalError when q is not numerically SPD. Only the lower
  // triangle of q is read.
  void factorize(const SpMat& q);

  Eigen::Index size() const { return n_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  double log_det() const { return log_det_; }
  // Maps iid standard normals z to a draw with covariance Q^{-1}.
  Eigen::VectorXd sample_offset(const Eigen::VectorXd& z) const;

 private:
  struct Impl;
  bool same_pattern(const SpMat& q) const;
  Eigen::MatrixXd apply(int system, const Eigen::MatrixXd& b) const;

  Impl* impl_;
  std::vector<int> outer_;
  std::vector<int> inner_;
  Eigen::Index n_ = 0;
  double log_det_ = 0.0;
};

}  // namespace lgcp
