#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lgcp/model.hpp"
#include "lgcp/sparse_cholesky.hpp"

namespace lgcp {

// Gaussian approximation of the latent field at fixed hyperparameters.
struct LatentGaussian {
  Eigen::VectorXd mode;
  SpMat precision;  // prior precision + negative log-likelihood Hessian at the mode
  std::shared_ptr<const SparseCholesky> factor;
  SpMat constraint_a;
  Eigen::VectorXd constraint_e;
  // Kriging pieces: W = Q^-1 A^T and the factor of A W.
  Eigen::MatrixXd w;
  Eigen::LDLT<Eigen::MatrixXd> s_factor;
  int iterations = 0;
  // Objective after the start and after each accepted Newton step.
  std::vector<double> history;

  // Moves x onto {A x = e} along Q^-1 A^T.
  void correct(Eigen::VectorXd& x) const;
};

struct NewtonOptions {
  int max_iterations = 50;
  double tolerance = 1e-8;
};

// Mode of loglik(x) - x'Qx/2 subject to A x = e, by damped Newton steps.
// Throws NumericalError with the iterate history on non-convergence.
LatentGaussian inner_newton(const LatentLikelihood& lik, const SpMat& q_prior, const SpMat& a,
                            const Eigen::VectorXd& e, const Eigen::VectorXd* start = nullptr,
                            const NewtonOptions& opts = {});

// Builds the kriging pieces for (A, e) and corrects the mode.
LatentGaussian apply_constraints(LatentGaussian lg, const SpMat& a, const Eigen::VectorXd& e);

// Laplace approximation of log p(y | theta) + log p(theta).
double laplace_log_evidence(const LatentLikelihood& lik, const LatentPrior& prior, std::span<const double> theta,
                            const LatentGaussian& lg);

enum class Strategy { EmpiricalBayes, Grid };

struct HyperPoint {
  std::vector<double> theta;
  double log_density = 0.0;
  double weight = 0.0;
};

struct HyperPosterior {
  std::vector<double> mode;
  Eigen::MatrixXd hessian;  // of -log density at the mode, theta scale
  std::vector<HyperPoint> grid;
  Strategy strategy = Strategy::EmpiricalBayes;
  std::vector<HyperPoint> trace;  // every optimizer evaluation
  int evaluations = 0;
};

struct MarginalSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

struct FitOptions {
  Strategy strategy = Strategy::EmpiricalBayes;
  // Evidence evaluations allowed to the simplex search; 0 means 100 d + 200
  // for d hyperparameters.
  int max_evaluations = 0;
  double fd_step = 1e-3;
  // Simplex size (theta scale) at which the optimizer stops.
  double simplex_tolerance = 1e-3;
  int threads = 1;
  NewtonOptions newton;
};

struct FitResult {
  // One Gaussian per grid point; a single entry for empirical Bayes.
  std::vector<LatentGaussian> latent;
  HyperPosterior hyper;
  std::vector<MarginalSummary> hyper_summary;  // natural (range, sigma) scale
  int newton_iterations = 0;
  double runtime_seconds = 0.0;
  std::vector<std::string> warnings;

  const LatentGaussian& at_mode() const { return latent.front(); }
};

FitResult fit(const LatentLikelihood& lik, const LatentPrior& prior, const FitOptions& opts = {});

// n x dim matrix of draws. Draw i uses its own stream derived from the seed,
// so results do not depend on the thread count.
Eigen::MatrixXd sample_posterior(const FitResult& fit, int n, std::uint64_t seed, int threads = 1);

// Mean, sd and quantiles of each column.
std::vector<MarginalSummary> summarize(const Eigen::MatrixXd& samples, const std::vector<std::string>& names = {});
// Empirical quantile with linear interpolation (type 7).
double quantile(std::vector<double> values, double p);
// Same, on values already sorted ascending.
double quantile_sorted(const std::vector<double>& sorted, double p);

}  // namespace lgcp
