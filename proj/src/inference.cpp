#include "lgcp/inference.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <thread>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"
#include "lgcp/rng.hpp"

namespace lgcp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kDecrementTolerance = 1e-14;

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first
// exception.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(n, 1));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

Eigen::VectorXd project_euclidean(const Eigen::VectorXd& g, const SpMat& a) {
  if (a.rows() == 0) return g;
  const Eigen::MatrixXd ad(a);
  const Eigen::MatrixXd aat = ad * ad.transpose();
  return g - ad.transpose() * aat.ldlt().solve(ad * g);
}

std::string theta_string(std::span<const double> theta) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta[i];
  os << ")";
  return os.str();
}

}  // namespace

void LatentGaussian::correct(Eigen::VectorXd& x) const {
  if (constraint_a.rows() == 0) return;
  const Eigen::VectorXd r = constraint_a * x - constraint_e;
  x -= w * s_factor.solve(r);
}

LatentGaussian apply_constraints(LatentGaussian lg, const SpMat& a, const Eigen::VectorXd& e) {
  lg.constraint_a = a;
  lg.constraint_e = e;
  if (a.rows() == 0) return lg;
  if (!lg.factor) throw NumericalError("apply_constraints: missing factorization");
  lg.w = lg.factor->solve(Eigen::MatrixXd(a.transpose()));
  const Eigen::MatrixXd s = a * lg.w;
  lg.s_factor.compute(s);
  const Eigen::VectorXd d = lg.s_factor.vectorD();
  if (lg.s_factor.info() != Eigen::Success || d.minCoeff() <= 1e-14 * std::max(1.0, d.maxCoeff()))
    throw NumericalError("constraint matrix is rank deficient");
  lg.correct(lg.mode);
  return lg;
}

LatentGaussian inner_newton(const LatentLikelihood& lik, const SpMat& q_prior, const SpMat& a,
                            const Eigen::VectorXd& e, const Eigen::VectorXd* start, const NewtonOptions& opts) {
  const int n = lik.latent_dim();
  if (q_prior.rows() != n || a.cols() != n) throw NumericalError("inner_newton: dimension mismatch");
  Eigen::VectorXd x = start ? *start : lik.initial_latent();
  if (a.rows() > 0) {
    // Start on the constraint set.
    const Eigen::MatrixXd ad(a);
    x -= ad.transpose() * (ad * ad.transpose()).ldlt().solve(ad * x - e);
  }
  auto objective = [&](const Eigen::VectorXd& v) { return lik.loglik(v) - 0.5 * v.dot(q_prior * v); };

  auto factor = std::make_shared<SparseCholesky>();
  double f = objective(x);
  std::vector<double> history{f};
  Eigen::VectorXd g;
  SpMat h;
  Eigen::MatrixXd w;
  Eigen::LDLT<Eigen::MatrixXd> s_factor;
  const Eigen::MatrixXd at = Eigen::MatrixXd(a.transpose());

  for (int it = 0;; ++it) {
    lik.grad_hess(x, g, h);
    g -= q_prior * x;
    SpMat post = q_prior + h;
    post.makeCompressed();
    factor->factorize(post);
    const Eigen::VectorXd gp = project_euclidean(g, a);
    const double scale = 1.0 + x.lpNorm<Eigen::Infinity>();
    Eigen::VectorXd d = factor->solve(g);
    if (a.rows() > 0) {
      w = factor->solve(at);
      s_factor.compute(a * w);
      d -= w * s_factor.solve(a * d);
    }
    // Newton decrement: the largest gain the quadratic model still predicts.
    // Once it is below the objective's rounding level the gradient is noise
    // from large prior precisions, not distance to the mode.
    const double predicted = g.dot(d);
    if (gp.lpNorm<Eigen::Infinity>() < opts.tolerance * scale ||
        predicted < kDecrementTolerance * (1.0 + std::abs(f))) {
      LatentGaussian lg;
      lg.mode = x;
      lg.precision = std::move(post);
      lg.factor = factor;
      lg.iterations = it;
      lg.history = history;
      return apply_constraints(std::move(lg), a, e);
    }
    if (it >= opts.max_iterations) {
      std::ostringstream msg;
      msg << "Newton iteration did not converge in " << opts.max_iterations
          << " steps; |grad| = " << gp.lpNorm<Eigen::Infinity>() << "; objective history:";
      for (double v : history) msg << ' ' << v;
      throw NumericalError(msg.str());
    }

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      const Eigen::VectorXd xn = x + t * d;
      const double fn = objective(xn);
      if (std::isfinite(fn) && fn >= f) {
        x = xn;
        f = fn;
        accepted = true;
        break;
      }
    }
    history.push_back(f);
    if (!accepted) {
      // No representable improvement left: the step is below rounding noise.
      if (predicted <= 1e-10 * (1.0 + std::abs(f))) {
        LatentGaussian lg;
        lg.mode = x;
        lg.precision = std::move(post);
        lg.factor = factor;
        lg.iterations = it;
        lg.history = history;
        return apply_constraints(std::move(lg), a, e);
      }
      throw NumericalError("Newton line search failed to improve the objective");
    }
  }
}

double laplace_log_evidence(const LatentLikelihood& lik, const LatentPrior& prior, std::span<const double> theta,
                            const LatentGaussian& lg) {
  const SpMat q = prior.precision(theta);
  const Eigen::VectorXd& x = lg.mode;
  const int n = lik.latent_dim();
  const int n_proper = n - prior.num_flat();
  double out = lik.loglik(x);
  out += -0.5 * n_proper * kLog2Pi + 0.5 * prior.log_det_proper(theta) - 0.5 * x.dot(q * x);
  out += 0.5 * n * kLog2Pi - 0.5 * lg.factor->log_det();
  if (lg.constraint_a.rows() > 0) {
    out += 0.5 * prior.log_det_constraint_cov(theta);
    out -= 0.5 * lg.s_factor.vectorD().array().log().sum();
  }
  out += prior.log_hyper_prior(theta);
  if (!std::isfinite(out)) throw NumericalError("non-finite evidence at theta = " + theta_string(theta));
  return out;
}

namespace {

struct Evaluator {
  const LatentLikelihood& lik;
  const LatentPrior& prior;
  const FitOptions& opts;
  SpMat a;
  Eigen::VectorXd e;

  std::pair<double, LatentGaussian> operator()(std::span<const double> theta, const Eigen::VectorXd* start) const {
    const SpMat q = prior.precision(theta);
    LatentGaussian lg = inner_newton(lik, q, a, e, start, opts.newton);
    const double ld = laplace_log_evidence(lik, prior, theta, lg);
    return {ld, std::move(lg)};
  }
};

struct NmContext {
  const Evaluator* eval;
  Eigen::VectorXd warm;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> best_theta;
  std::optional<LatentGaussian> best_lg;
  std::vector<HyperPoint> trace;
  int failures = 0;
  int newton_iterations = 0;
};

double nm_objective(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<NmContext*>(params);
  std::vector<double> theta(v->size);
  for (std::size_t i = 0; i < v->size; ++i) theta[i] = gsl_vector_get(v, i);
  try {
    auto [ld, lg] = (*ctx->eval)(theta, &ctx->warm);
    ctx->newton_iterations += lg.iterations;
    ctx->trace.push_back({theta, ld, 0.0});
    if (ld > ctx->best) {
      ctx->best = ld;
      ctx->best_theta = theta;
      ctx->warm = lg.mode;
      ctx->best_lg = std::move(lg);
    }
    return -ld;
  } catch (const NumericalError& err) {
    ++ctx->failures;
    logger()->debug("evidence failed at theta = {}: {}", theta_string(theta), err.what());
    ctx->trace.push_back({theta, -std::numeric_limits<double>::infinity(), 0.0});
    return 1e100;
  }
}

}  // namespace

FitResult fit(const LatentLikelihood& lik, const LatentPrior& prior, const FitOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (lik.latent_dim() != prior.latent_dim()) throw NumericalError("fit: likelihood and prior dimensions differ");
  Evaluator eval{lik, prior, opts, prior.constraint_matrix(), prior.constraint_rhs()};
  FitResult result;
  result.hyper.strategy = opts.strategy;
  const int d = prior.num_hyper();

  NmContext ctx;
  ctx.eval = &eval;
  ctx.warm = lik.initial_latent();

  if (d == 0) {
    auto [ld, lg] = eval({}, &ctx.warm);
    result.newton_iterations = lg.iterations;
    result.hyper.grid.push_back({{}, ld, 1.0});
    result.hyper.trace.push_back({{}, ld, 0.0});
    result.hyper.evaluations = 1;
    result.latent.push_back(std::move(lg));
    result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }

  // Simplex search over theta.
  gsl_set_error_handler_off();
  const std::vector<double> theta0 = prior.initial_theta();
  gsl_vector* x0 = gsl_vector_alloc(d);
  gsl_vector* step = gsl_vector_alloc(d);
  for (int i = 0; i < d; ++i) {
    gsl_vector_set(x0, i, theta0[i]);
    gsl_vector_set(step, i, 0.5);
  }
  gsl_multimin_function fn{&nm_objective, static_cast<std::size_t>(d), &ctx};
  gsl_multimin_fminimizer* nm = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, d);
  gsl_multimin_fminimizer_set(nm, &fn, x0, step);
  double size = std::numeric_limits<double>::infinity();
  bool converged = false;
  const int budget = opts.max_evaluations > 0 ? opts.max_evaluations : 100 * d + 200;
  while (static_cast<int>(ctx.trace.size()) < budget) {
    if (gsl_multimin_fminimizer_iterate(nm) != GSL_SUCCESS) break;
    size = gsl_multimin_fminimizer_size(nm);
    if (size < opts.simplex_tolerance) {
      converged = true;
      break;
    }
  }
  gsl_multimin_fminimizer_free(nm);
  gsl_vector_free(x0);
  gsl_vector_free(step);

  if (!ctx.best_lg) throw NumericalError("evidence could not be evaluated at any hyperparameter value");
  if (!converged) {
    std::ostringstream msg;
    msg << "hyperparameter optimizer stopped after " << ctx.trace.size() << " evaluations with simplex size "
        << size << " at theta = " << theta_string(ctx.best_theta);
    if (size > 10 * opts.simplex_tolerance) {
      msg << "; trace:";
      for (const auto& p : ctx.trace) msg << ' ' << theta_string(p.theta) << '=' << p.log_density;
      throw NumericalError(msg.str());
    }
    logger()->warn("{}", msg.str());
    result.warnings.push_back(msg.str());
  }
  if (ctx.failures > 0)
    result.warnings.push_back(std::to_string(ctx.failures) + " hyperparameter evaluation(s) failed and were skipped");

  result.hyper.mode = ctx.best_theta;
  result.hyper.trace = ctx.trace;
  result.newton_iterations = ctx.newton_iterations;
  const Eigen::VectorXd mode_latent = ctx.best_lg->mode;
  const double f0 = ctx.best;

  // Central finite-difference Hessian of -log density.
  struct Probe {
    std::vector<double> theta;
    double value = 0.0;
  };
  std::vector<Probe> probes;
  const double h = opts.fd_step;
  auto shifted = [&](std::initializer_list<std::pair<int, double>> moves) {
    std::vector<double> t = ctx.best_theta;
    for (auto [i, s] : moves) t[i] += s;
    return t;
  };
  for (int i = 0; i < d; ++i) {
    probes.push_back({shifted({{i, h}})});
    probes.push_back({shifted({{i, -h}})});
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      for (double si : {h, -h})
        for (double sj : {h, -h}) probes.push_back({shifted({{i, si}, {j, sj}})});
  parallel_for(static_cast<int>(probes.size()), opts.threads,
               [&](int k) { probes[k].value = eval(probes[k].theta, &mode_latent).first; });
  Eigen::MatrixXd hess(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i, k += 2) hess(i, i) = -(probes[k].value - 2 * f0 + probes[k + 1].value) / (h * h);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j, k += 4) {
      const double v = -(probes[k].value - probes[k + 1].value - probes[k + 2].value + probes[k + 3].value) / (4 * h * h);
      hess(i, j) = hess(j, i) = v;
    }
  result.hyper.hessian = hess;
  result.hyper.evaluations = static_cast<int>(ctx.trace.size() + probes.size());

  Eigen::VectorXd sd = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());
  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  if (llt.info() == Eigen::Success) {
    sd = llt.solve(Eigen::MatrixXd::Identity(d, d)).diagonal().cwiseSqrt();
  } else {
    const std::string msg = "hyperparameter Hessian is not positive definite at the mode";
    logger()->warn(msg);
    result.warnings.push_back(msg);
  }

  result.latent.push_back(std::move(*ctx.best_lg));
  result.hyper.grid.push_back({ctx.best_theta, f0, 1.0});
  if (opts.strategy == Strategy::Grid && sd.allFinite()) {
    std::vector<HyperPoint> extra;
    for (int i = 0; i < d; ++i)
      for (double z : {-2.0, -1.0, 1.0, 2.0}) extra.push_back({shifted({{i, z * sd[i]}}), 0.0, 0.0});
    std::vector<std::optional<LatentGaussian>> lgs(extra.size());
    parallel_for(static_cast<int>(extra.size()), opts.threads, [&](int p) {
      auto [ld, lg] = eval(extra[p].theta, &mode_latent);
      extra[p].log_density = ld;
      lgs[p] = std::move(lg);
    });
    for (std::size_t p = 0; p < extra.size(); ++p) {
      if (extra[p].log_density > f0 + 1e-6)
        logger()->warn("grid point {} has higher evidence than the mode", theta_string(extra[p].theta));
      result.hyper.grid.push_back(extra[p]);
      result.latent.push_back(std::move(*lgs[p]));
    }
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& p : result.hyper.grid) top = std::max(top, p.log_density);
    double total = 0.0;
    for (auto& p : result.hyper.grid) total += (p.weight = std::exp(p.log_density - top));
    for (auto& p : result.hyper.grid) p.weight /= total;
  }

  // Natural-scale summaries from the Gaussian approximation on the log scale.
  auto names = prior.hyper_names();
  for (int i = 0; i < d; ++i) {
    MarginalSummary s;
    s.name = i < static_cast<int>(names.size()) ? names[i] : "theta" + std::to_string(i);
    const double mu = ctx.best_theta[i], sdev = sd[i];
    s.q50 = std::exp(mu);
    if (std::isfinite(sdev)) {
      s.mean = std::exp(mu + 0.5 * sdev * sdev);
      s.sd = s.mean * std::sqrt(std::expm1(sdev * sdev));
      s.q025 = std::exp(mu - 1.959964 * sdev);
      s.q975 = std::exp(mu + 1.959964 * sdev);
    } else {
      s.mean = s.q025 = s.q975 = s.q50;
      s.sd = std::numeric_limits<double>::quiet_NaN();
    }
    result.hyper_summary.push_back(s);
  }
  result.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

Eigen::MatrixXd sample_posterior(const FitResult& fit, int n, std::uint64_t seed, int threads) {
  if (n < 1) throw ConfigError("n_samples must be >= 1");
  if (fit.latent.empty()) throw NumericalError("sample_posterior: empty fit");
  const int dim = static_cast<int>(fit.latent.front().mode.size());
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& p : fit.hyper.grid) cumulative.push_back(acc += p.weight);
  Eigen::MatrixXd out(n, dim);
  parallel_for(n, threads, [&](int i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::size_t pick = 0;
    if (fit.latent.size() > 1) {
      const double u = rng.uniform() * acc;
      while (pick + 1 < cumulative.size() && cumulative[pick] < u) ++pick;
    }
    const LatentGaussian& lg = fit.latent[pick];
    Eigen::VectorXd z(dim);
    for (auto& v : z) v = rng.normal();
    Eigen::VectorXd x = lg.mode + lg.factor->sample_offset(z);
    lg.correct(x);
    out.row(i) = x.transpose();
  });
  return out;
}

double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

std::vector<MarginalSummary> summarize(const Eigen::MatrixXd& samples, const std::vector<std::string>& names) {
  std::vector<MarginalSummary> out;
  const auto n = samples.rows();
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    MarginalSummary s;
    s.name = j < static_cast<Eigen::Index>(names.size()) ? names[j] : "x" + std::to_string(j);
    const Eigen::VectorXd col = samples.col(j);
    s.mean = col.mean();
    s.sd = n > 1 ? std::sqrt((col.array() - s.mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
    std::vector<double> v(col.data(), col.data() + n);
    std::sort(v.begin(), v.end());
    s.q025 = quantile_sorted(v, 0.025);
    s.q50 = quantile_sorted(v, 0.5);
    s.q975 = quantile_sorted(v, 0.975);
    out.push_back(s);
  }
  return out;
}

}  // namespace lgcp
