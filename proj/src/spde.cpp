#include "lgcp/spde.hpp"

#include <cmath>
#include <numbers>

#include "lgcp/error.hpp"

namespace lgcp {

namespace {

// Gamma(nu) / (Gamma(nu + d/2) (4 pi)^{d/2}), the constant in sigma^2 = c / (kappa^{2nu} tau^2).
double variance_constant(double nu, int dim) {
  return std::tgamma(nu) / (std::tgamma(nu + 0.5 * dim) * std::pow(4.0 * std::numbers::pi, 0.5 * dim));
}

}  // namespace

KappaTau params_from_range_sigma(double range, double sigma, double nu, int dim) {
  const double kappa = std::sqrt(8.0 * nu) / range;
  const double tau = std::sqrt(variance_constant(nu, dim) / std::pow(kappa, 2.0 * nu)) / sigma;
  return {kappa, tau};
}

std::pair<double, double> range_sigma_from_params(double kappa, double tau, double nu, int dim) {
  const double range = std::sqrt(8.0 * nu) / kappa;
  const double sigma = std::sqrt(variance_constant(nu, dim) / std::pow(kappa, 2.0 * nu)) / tau;
  return {range, sigma};
}

double MaternParams::kappa() const { return std::sqrt(8.0 * nu()) / range; }
double MaternParams::tau() const { return params_from_range_sigma(range, sigma, nu(), dim).tau; }

SpMat precision_alpha2(const FemMatrices& fem, double kappa, double tau) {
  const double k2 = kappa * kappa;
  SpMat q = (k2 * k2) * fem.c + (2.0 * k2) * fem.g + fem.g2;
  q *= tau * tau;
  q.makeCompressed();
  return q;
}

double matern_cov(double d, const MaternParams& p) {
  const double s2 = p.sigma * p.sigma;
  if (d <= 0.0) return s2;
  const double nu = p.nu();
  const double x = p.kappa() * d;
  if (x > 700.0) return 0.0;
  return s2 * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

double PcPrior::lambda_r(int dim) const { return -std::log(alpha_r) * std::pow(r0, 0.5 * dim); }
double PcPrior::lambda_sigma() const { return -std::log(alpha_sigma) / sigma0; }

void PcPrior::validate() const {
  if (fixed_range) {
    if (!(*fixed_range > 0.0)) throw ConfigError("prior.range: fixed range must be > 0");
  } else {
    if (!(r0 > 0.0)) throw ConfigError("prior.range: r0 must be > 0");
    if (!(alpha_r > 0.0 && alpha_r < 1.0)) throw ConfigError("prior.range: probability must lie in (0, 1)");
  }
  if (!(sigma0 > 0.0)) throw ConfigError("prior.sigma: sigma0 must be > 0");
  if (!(alpha_sigma > 0.0 && alpha_sigma < 1.0)) throw ConfigError("prior.sigma: probability must lie in (0, 1)");
}

double pc_prior_logdens(double range, double sigma, const PcPrior& prior, int dim) {
  const double ls = prior.lambda_sigma();
  double out = std::log(ls) - ls * sigma;
  if (!prior.fixed_range) {
    const double lr = prior.lambda_r(dim);
    const double h = 0.5 * dim;
    out += std::log(h * lr) - (h + 1.0) * std::log(range) - lr * std::pow(range, -h);
  }
  return out;
}

SpdeModel::SpdeModel(FemMatrices fem, PcPrior prior, int dim, bool sum_to_zero)
    : fem_(std::move(fem)), prior_(prior), dim_(dim), sum_to_zero_(sum_to_zero) {
  prior_.validate();
  if (dim_ != 1 && dim_ != 2) throw ConfigError("spde: dimension must be 1 or 2");
}

MaternParams SpdeModel::params(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != num_hyper()) throw NumericalError("spde: wrong hyperparameter count");
  MaternParams p;
  p.dim = dim_;
  if (prior_.fixed_range) {
    p.range = *prior_.fixed_range;
    p.sigma = std::exp(theta[0]);
  } else {
    p.range = std::exp(theta[0]);
    p.sigma = std::exp(theta[1]);
  }
  return p;
}

std::vector<double> SpdeModel::theta_of(double range, double sigma) const {
  if (prior_.fixed_range) return {std::log(sigma)};
  return {std::log(range), std::log(sigma)};
}

SpMat SpdeModel::precision(std::span<const double> theta) const {
  const MaternParams p = params(theta);
  return precision_alpha2(fem_, p.kappa(), p.tau());
}

double SpdeModel::log_det_precision(std::span<const double> theta) const {
  const MaternParams p = params(theta);
  const double kappa = p.kappa(), tau = p.tau();
  SpMat k = (kappa * kappa) * fem_.c + fem_.g;
  const SparseCholesky factor(k);
  const double log_det_c = fem_.c_diag.array().log().sum();
  return size() * 2.0 * std::log(tau) + 2.0 * factor.log_det() - log_det_c;
}

double SpdeModel::log_prior(std::span<const double> theta) const {
  const MaternParams p = params(theta);
  // d(range, sigma) = range * sigma d(theta).
  double jac = std::log(p.sigma);
  if (!prior_.fixed_range) jac += std::log(p.range);
  return pc_prior_logdens(p.range, p.sigma, prior_, dim_) + jac;
}

std::vector<double> SpdeModel::initial_theta() const {
  // Start at a fifth of r0 and half of sigma0, inside the bulk of both priors.
  return theta_of(0.2 * prior_.r0, 0.5 * prior_.sigma0);
}

Eigen::VectorXd SpdeModel::constraint_weights() const {
  if (dim_ == 1) return fem_.c_diag;
  return Eigen::VectorXd::Ones(size());
}

SpdeModel spde_model(const Mesh2d& mesh, const PcPrior& prior, bool sum_to_zero) {
  return SpdeModel(assemble_fem(mesh), prior, 2, sum_to_zero);
}

SpdeModel spde_model(const Mesh1d& mesh, const PcPrior& prior, bool sum_to_zero) {
  return SpdeModel(fem_1d(mesh), prior, 1, sum_to_zero);
}

SpdeModel rw2_model(const Mesh1d& mesh, double fixed_range, double sigma0, double alpha_sigma) {
  PcPrior prior;
  prior.fixed_range = fixed_range;
  prior.r0 = fixed_range;
  prior.sigma0 = sigma0;
  prior.alpha_sigma = alpha_sigma;
  return SpdeModel(fem_1d(mesh), prior, 1, true);
}

}  // namespace lgcp
