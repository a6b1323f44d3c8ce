#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lgcp/mesh.hpp"
#include "lgcp/sparse_cholesky.hpp"

namespace lgcp {

// Matérn field in the (range, sigma) parametrization. For alpha = 2 the
// smoothness is nu = 2 - d/2: 1 in 2D, 1.5 in 1D.
struct MaternParams {
  double range = 1.0;
  double sigma = 1.0;
  int dim = 2;

  double nu() const { return 2.0 - 0.5 * dim; }
  double kappa() const;
  double tau() const;
};

struct KappaTau {
  double kappa;
  double tau;
};

KappaTau params_from_range_sigma(double range, double sigma, double nu, int dim);
// Inverse of params_from_range_sigma; returns {range, sigma}.
std::pair<double, double> range_sigma_from_params(double kappa, double tau, double nu, int dim);

// Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G).
SpMat precision_alpha2(const FemMatrices& fem, double kappa, double tau);

// Matérn covariance at distance d; sigma^2 at d = 0.
double matern_cov(double d, const MaternParams& params);

// Penalized-complexity prior on (range, sigma): P(range < r0) = alpha_r and
// P(sigma > sigma0) = alpha_sigma. With a fixed range only sigma is random.
struct PcPrior {
  double r0 = 1.0;
  double alpha_r = 0.5;
  double sigma0 = 1.0;
  double alpha_sigma = 0.5;
  std::optional<double> fixed_range;

  double lambda_r(int dim) const;
  double lambda_sigma() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// log density of (range, sigma) with respect to Lebesgue measure; the range
// factor is left out when the range is fixed.
double pc_prior_logdens(double range, double sigma, const PcPrior& prior, int dim);

// A Matérn field on a mesh with its prior. Hyperparameters are theta =
// (log range, log sigma), or (log sigma) with a fixed range.
class SpdeModel {
 public:
  SpdeModel(FemMatrices fem, PcPrior prior, int dim, bool sum_to_zero);

  int size() const { return static_cast<int>(fem_.c_diag.size()); }
  int dim() const { return dim_; }
  int num_hyper() const { return prior_.fixed_range ? 1 : 2; }
  bool constrained() const { return sum_to_zero_; }
  // Row of the sum-to-zero constraint. Plain sums on 2D fields; in 1D the
  // basis integrals, so the constrained curve integrates to zero.
  Eigen::VectorXd constraint_weights() const;
  const PcPrior& prior() const { return prior_; }
  const FemMatrices& fem() const { return fem_; }

  MaternParams params(std::span<const double> theta) const;
  std::vector<double> theta_of(double range, double sigma) const;
  SpMat precision(std::span<const double> theta) const;
  // log det Q through the factorization Q = tau^2 K C^-1 K with K = kappa^2 C + G.
  double log_det_precision(std::span<const double> theta) const;
  // Log prior density of theta, including the Jacobian of the log transform.
  double log_prior(std::span<const double> theta) const;
  std::vector<double> initial_theta() const;

 private:
  FemMatrices fem_;
  PcPrior prior_;
  int dim_;
  bool sum_to_zero_;
};

SpdeModel spde_model(const Mesh2d& mesh, const PcPrior& prior, bool sum_to_zero = false);
SpdeModel spde_model(const Mesh1d& mesh, const PcPrior& prior, bool sum_to_zero = false);
// Second-order random walk as the large-fixed-range limit of the 1D field;
// sum-to-zero constraint on.
SpdeModel rw2_model(const Mesh1d& mesh, double fixed_range, double sigma0, double alpha_sigma);

}  // namespace lgcp
