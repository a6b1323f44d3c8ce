#include "lgcp/sparse_cholesky.hpp"

#include <algorithm>
#include <cmath>

#include <cholmod.h>

#include "lgcp/error.hpp"

namespace lgcp {

namespace {

struct Common {
  cholmod_common c;
  Common() {
    cholmod_start(&c);
    c.supernodal = CHOLMOD_SUPERNODAL;
    c.final_ll = 1;
    c.print = 0;
    c.error_handler = nullptr;
  }
  ~Common() { cholmod_finish(&c); }
  Common(const Common&) = delete;
  Common& operator=(const Common&) = delete;
};

// Workspace for solves, one per thread so const solves can run concurrently.
cholmod_common* solve_common() {
  thread_local Common common;
  return &common.c;
}

cholmod_sparse view(const SpMat& q) {
  cholmod_sparse a{};
  a.nrow = static_cast<std::size_t>(q.rows());
  a.ncol = static_cast<std::size_t>(q.cols());
  a.nzmax = static_cast<std::size_t>(q.nonZeros());
  a.p = const_cast<int*>(q.outerIndexPtr());
  a.i = const_cast<int*>(q.innerIndexPtr());
  a.x = const_cast<double*>(q.valuePtr());
  a.stype = -1;
  a.itype = CHOLMOD_INT;
  a.xtype = CHOLMOD_REAL;
  a.dtype = CHOLMOD_DOUBLE;
  a.sorted = 1;
  a.packed = 1;
  return a;
}

cholmod_dense view(const Eigen::MatrixXd& b) {
  cholmod_dense d{};
  d.nrow = static_cast<std::size_t>(b.rows());
  d.ncol = static_cast<std::size_t>(b.cols());
  d.nzmax = d.nrow * d.ncol;
  d.d = d.nrow;
  d.x = const_cast<double*>(b.data());
  d.xtype = CHOLMOD_REAL;
  d.dtype = CHOLMOD_DOUBLE;
  return d;
}

}  // namespace

struct SparseCholesky::Impl {
  Common common;
  cholmod_factor* factor = nullptr;
  ~Impl() {
    if (factor) cholmod_free_factor(&factor, &common.c);
  }
};

SparseCholesky::SparseCholesky() : impl_(new Impl) {}

SparseCholesky::SparseCholesky(const SpMat& q) : SparseCholesky() { factorize(q); }

SparseCholesky::~SparseCholesky() { delete impl_; }

bool SparseCholesky::same_pattern(const SpMat& q) const {
  if (!impl_->factor || q.rows() != n_ || static_cast<std::size_t>(q.nonZeros()) != inner_.size()) return false;
  return std::equal(outer_.begin(), outer_.end(), q.outerIndexPtr()) &&
         std::equal(inner_.begin(), inner_.end(), q.innerIndexPtr());
}

void SparseCholesky::factorize(const SpMat& q) {
  if (q.rows() != q.cols()) throw NumericalError("factorize: matrix not square");
  if (!q.isCompressed()) {
    SpMat copy = q;
    copy.makeCompressed();
    factorize(copy);
    return;
  }
  cholmod_common* c = &impl_->common.c;
  cholmod_sparse a = view(q);
  if (!same_pattern(q)) {
    if (impl_->factor) cholmod_free_factor(&impl_->factor, c);
    impl_->factor = cholmod_analyze(&a, c);
    if (!impl_->factor) throw NumericalError("sparse Cholesky analysis failed");
    n_ = q.rows();
    outer_.assign(q.outerIndexPtr(), q.outerIndexPtr() + q.outerSize() + 1);
    inner_.assign(q.innerIndexPtr(), q.innerIndexPtr() + q.nonZeros());
  }
  cholmod_factorize(&a, impl_->factor, c);
  const cholmod_factor* f = impl_->factor;
  if (c->status == CHOLMOD_NOT_POSDEF || f->minor < f->n) {
    // Force a fresh analysis next time; the factor is unusable.
    outer_.clear();
    throw NumericalError("matrix is not positive definite");
  }
  if (c->status != CHOLMOD_OK) throw NumericalError("sparse Cholesky failed");

  // log det Q = 2 sum log diag(L), read from the supernodes.
  const auto* super = static_cast<const int*>(f->super);
  const auto* pi = static_cast<const int*>(f->pi);
  const auto* px = static_cast<const int*>(f->px);
  const auto* x = static_cast<const double*>(f->x);
  double ld = 0.0;
  for (std::size_t s = 0; s < f->nsuper; ++s) {
    const int ncols = super[s + 1] - super[s];
    const int nrows = pi[s + 1] - pi[s];
    for (int j = 0; j < ncols; ++j) {
      const double d = x[px[s] + j + static_cast<std::ptrdiff_t>(j) * nrows];
      if (!(d > 0.0) || !std::isfinite(d)) throw NumericalError("matrix is not positive definite");
      ld += std::log(d);
    }
  }
  log_det_ = 2.0 * ld;
}

Eigen::MatrixXd SparseCholesky::apply(int system, const Eigen::MatrixXd& b) const {
  if (!impl_->factor) throw NumericalError("solve before factorize");
  if (b.rows() != n_) throw NumericalError("solve: dimension mismatch");
  if (b.cols() == 0) return b;
  cholmod_common* c = solve_common();
  cholmod_dense rhs = view(b);
  cholmod_dense* out = cholmod_solve(system, impl_->factor, &rhs, c);
  if (!out) throw NumericalError("sparse solve failed");
  Eigen::MatrixXd result = Eigen::Map<const Eigen::MatrixXd>(static_cast<const double*>(out->x), b.rows(), b.cols());
  cholmod_free_dense(&out, c);
  return result;
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  return apply(CHOLMOD_A, Eigen::MatrixXd(b)).col(0);
}

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& b) const { return apply(CHOLMOD_A, b); }

Eigen::VectorXd SparseCholesky::sample_offset(const Eigen::VectorXd& z) const {
  // x = P' L^-T z has covariance P' (L L')^-1 P = Q^-1.
  return apply(CHOLMOD_Pt, apply(CHOLMOD_Lt, Eigen::MatrixXd(z))).col(0);
}

}  // namespace lgcp
