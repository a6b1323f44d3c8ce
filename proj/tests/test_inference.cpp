#include <cmath>
#include <memory>
#include <numbers>

#include "doctest.h"
#include "lgcp/error.hpp"
#include "lgcp/inference.hpp"
#include "lgcp/rng.hpp"

using namespace lgcp;

namespace {

const double kLog2Pi = std::log(2 * std::numbers::pi);

// y = B x + noise with noise precision diag(r), normalizing constant
// included so the Laplace evidence is the exact marginal likelihood.
class GaussianLik final : public LatentLikelihood {
 public:
  GaussianLik(Eigen::MatrixXd b, Eigen::VectorXd y, Eigen::VectorXd r)
      : b_(std::move(b)), bs_(b_.sparseView()), y_(std::move(y)), r_(std::move(r)) {}
  int latent_dim() const override { return static_cast<int>(b_.cols()); }
  double loglik(const Eigen::VectorXd& x) const override {
    const Eigen::VectorXd res = y_ - b_ * x;
    return -0.5 * y_.size() * kLog2Pi + 0.5 * r_.array().log().sum() - 0.5 * res.dot(r_.asDiagonal() * res);
  }
  void grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SpMat& neg_hess) const override {
    grad = b_.transpose() * (r_.asDiagonal() * (y_ - b_ * x));
    neg_hess = SpMat(bs_.transpose() * (r_.asDiagonal() * bs_));
  }
  const Eigen::MatrixXd& b() const { return b_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& r() const { return r_; }

 private:
  Eigen::MatrixXd b_;
  SpMat bs_;
  Eigen::VectorXd y_, r_;
};

// Prior precision exp(theta) * Q0, or Q0 when there is no hyperparameter.
// The hyperparameter prior is N(0, 1) on theta.
class ScaledPrior final : public LatentPrior {
 public:
  ScaledPrior(Eigen::MatrixXd q0, bool scaled, Eigen::MatrixXd a = {})
      : q0_(std::move(q0)), scaled_(scaled), a_(std::move(a)) {}
  int latent_dim() const override { return static_cast<int>(q0_.rows()); }
  int num_hyper() const override { return scaled_ ? 1 : 0; }
  double scale(std::span<const double> theta) const { return scaled_ ? std::exp(theta[0]) : 1.0; }
  SpMat precision(std::span<const double> theta) const override { return (scale(theta) * q0_).sparseView(); }
  double log_det_proper(std::span<const double> theta) const override {
    return q0_.rows() * std::log(scale(theta)) + std::log(q0_.determinant());
  }
  int num_flat() const override { return 0; }
  double log_hyper_prior(std::span<const double> theta) const override {
    return scaled_ ? -0.5 * kLog2Pi - 0.5 * theta[0] * theta[0] : 0.0;
  }
  std::vector<double> initial_theta() const override { return scaled_ ? std::vector<double>{0.3} : std::vector<double>{}; }
  SpMat constraint_matrix() const override {
    return a_.size() ? SpMat(a_.sparseView()) : SpMat(0, latent_dim());
  }
  Eigen::VectorXd constraint_rhs() const override { return Eigen::VectorXd::Zero(a_.rows()); }
  std::vector<std::string> hyper_names() const override { return {"scale"}; }
  const Eigen::MatrixXd& q0() const { return q0_; }

 private:
  Eigen::MatrixXd q0_;
  bool scaled_;
  Eigen::MatrixXd a_;
};

Eigen::MatrixXd random_spd(Rng& rng, int n) {
  Eigen::MatrixXd m(n, n);
  for (auto& v : m.reshaped()) v = rng.normal();
  return m * m.transpose() / n + Eigen::MatrixXd::Identity(n, n);
}

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (auto& v : m.reshaped()) v = rng.normal();
  return m;
}

Eigen::VectorXd random_vector(Rng& rng, int n, double lo = -1, double hi = 1) {
  Eigen::VectorXd v(n);
  for (auto& t : v) t = rng.uniform(lo, hi);
  return v;
}

// log N(y; 0, cov)
double gaussian_logpdf(const Eigen::VectorXd& y, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::MatrixXd l = llt.matrixL();
  return -0.5 * y.size() * kLog2Pi - l.diagonal().array().log().sum() - 0.5 * y.dot(llt.solve(y));
}

struct Conjugate {
  std::unique_ptr<GaussianLik> lik;
  std::unique_ptr<ScaledPrior> prior;
};

Conjugate conjugate_problem(std::uint64_t seed, int n, int m, bool scaled, int constraints = 0) {
  Rng rng(seed);
  Conjugate c;
  c.lik = std::make_unique<GaussianLik>(random_matrix(rng, m, n), random_vector(rng, m, -2, 2),
                                        random_vector(rng, m, 0.5, 3.0));
  Eigen::MatrixXd a;
  if (constraints > 0) a = random_matrix(rng, constraints, n);
  c.prior = std::make_unique<ScaledPrior>(random_spd(rng, n), scaled, a);
  return c;
}

// Exact log p(y | theta) for the conjugate problem, constrained to A x = 0
// when A is non-empty.
double exact_evidence(const Conjugate& c, double scale, const Eigen::MatrixXd& a = {}) {
  Eigen::MatrixXd sigma = (scale * c.prior->q0()).inverse();
  if (a.size()) sigma -= sigma * a.transpose() * (a * sigma * a.transpose()).inverse() * a * sigma;
  const Eigen::MatrixXd cov =
      Eigen::MatrixXd(c.lik->r().cwiseInverse().asDiagonal()) + c.lik->b() * sigma * c.lik->b().transpose();
  return gaussian_logpdf(c.lik->y(), cov);
}

}  // namespace

TEST_CASE("Newton mode equals the generalized least squares solution") {
  const Conjugate c = conjugate_problem(1, 12, 20, false);
  const SpMat q = c.prior->precision({});
  const LatentGaussian lg = inner_newton(*c.lik, q, SpMat(0, 12), Eigen::VectorXd(0));
  const Eigen::MatrixXd r = c.lik->r().asDiagonal();
  const Eigen::MatrixXd post = c.prior->q0() + c.lik->b().transpose() * r * c.lik->b();
  const Eigen::VectorXd gls = post.ldlt().solve(c.lik->b().transpose() * r * c.lik->y());
  CHECK((lg.mode - gls).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((Eigen::MatrixXd(lg.precision) - post).norm() <= 1e-8 * post.norm());
  CHECK(lg.iterations <= 2);
}

TEST_CASE("homogeneous intercept mode under a flat prior") {
  MeshParams p;
  p.cutoff = 0.2;
  p.max_edge = {1.0, 3.0};
  p.offset = {1.0, 3.0};
  const auto mesh = std::make_shared<const Mesh2d>(build_mesh_2d(make_rectangle(0, 0, 10, 10), p));
  Rng rng(5);
  std::vector<Point2> pts;
  for (int i = 0; i < 230; ++i) pts.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  ModelSpec m(mesh, {ComponentDef::intercept("a")}, {{"p", pts, make_rectangle(0, 0, 10, 10), {"a"}}});
  Eigen::VectorXd start = Eigen::VectorXd::Constant(1, -3.0);
  const LatentGaussian lg = inner_newton(m, m.precision(std::vector<double>{}), SpMat(0, 1), Eigen::VectorXd(0), &start);
  CHECK(std::abs(lg.mode[0] - std::log(2.3)) < 1e-6);
  REQUIRE(lg.history.size() >= 2);
  for (std::size_t i = 1; i < lg.history.size(); ++i) CHECK(lg.history[i] >= lg.history[i - 1]);
}

TEST_CASE("Newton objective never decreases on an LGCP model") {
  MeshParams p;
  p.cutoff = 0.3;
  p.max_edge = {1.5, 4.0};
  p.offset = {1.0, 4.0};
  const auto mesh = std::make_shared<const Mesh2d>(build_mesh_2d(make_rectangle(0, 0, 10, 10), p));
  PcPrior prior;
  prior.r0 = 5;
  prior.alpha_r = 0.5;
  prior.sigma0 = 1;
  prior.alpha_sigma = 0.01;
  const auto spde = std::make_shared<const SpdeModel>(spde_model(*mesh, prior));
  Rng rng(12);
  std::vector<Point2> pts;
  for (int i = 0; i < 150; ++i) pts.push_back({rng.uniform(0, 4), rng.uniform(0, 10)});
  ModelSpec m(mesh, {ComponentDef::intercept("a"), ComponentDef::field("s", spde)},
              {{"p", pts, make_rectangle(0, 0, 10, 10), {"a", "s"}}});
  const std::vector<double> theta = {std::log(3.0), std::log(1.0)};
  Eigen::VectorXd start = Eigen::VectorXd::Zero(m.latent_dim());
  start[0] = 3.0;
  const LatentGaussian lg = inner_newton(m, m.precision(theta), SpMat(0, m.latent_dim()), Eigen::VectorXd(0), &start);
  for (std::size_t i = 1; i < lg.history.size(); ++i) CHECK(lg.history[i] >= lg.history[i - 1]);
  CHECK(lg.iterations > 2);

  NewtonOptions tight;
  tight.max_iterations = 1;
  CHECK_THROWS_AS(inner_newton(m, m.precision(theta), SpMat(0, m.latent_dim()), Eigen::VectorXd(0), &start, tight),
                  NumericalError);
}

TEST_CASE("Laplace evidence is exact on the conjugate Gaussian model") {
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const Conjugate c = conjugate_problem(seed, 10, 15, true);
    for (double t : {-1.0, 0.0, 0.8}) {
      const std::vector<double> theta = {t};
      const LatentGaussian lg = inner_newton(*c.lik, c.prior->precision(theta), SpMat(0, 10), Eigen::VectorXd(0));
      const double laplace = laplace_log_evidence(*c.lik, *c.prior, theta, lg) - c.prior->log_hyper_prior(theta);
      CHECK(std::abs(laplace - exact_evidence(c, std::exp(t))) < 1e-8);
    }
  }
}

TEST_CASE("Laplace evidence is exact under linear constraints") {
  const Conjugate c = conjugate_problem(7, 9, 14, false, 2);
  const SpMat a = c.prior->constraint_matrix();
  const LatentGaussian lg = inner_newton(*c.lik, c.prior->precision({}), a, Eigen::VectorXd::Zero(2));
  CHECK((a * lg.mode).lpNorm<Eigen::Infinity>() < 1e-10);
  const double laplace = laplace_log_evidence(*c.lik, *c.prior, {}, lg);
  CHECK(std::abs(laplace - exact_evidence(c, 1.0, Eigen::MatrixXd(a))) < 1e-8);
}

TEST_CASE("evidence is invariant to reordering the latent vector") {
  const Conjugate c = conjugate_problem(8, 11, 16, false);
  Eigen::VectorXi perm(11);
  for (int i = 0; i < 11; ++i) perm[i] = (i * 4 + 3) % 11;
  const Eigen::PermutationMatrix<Eigen::Dynamic> p(perm);
  const GaussianLik lik2(c.lik->b() * p.transpose(), c.lik->y(), c.lik->r());
  const ScaledPrior prior2(p * c.prior->q0() * p.transpose(), false);
  const LatentGaussian lg1 = inner_newton(*c.lik, c.prior->precision({}), SpMat(0, 11), Eigen::VectorXd(0));
  const LatentGaussian lg2 = inner_newton(lik2, prior2.precision({}), SpMat(0, 11), Eigen::VectorXd(0));
  CHECK(std::abs(laplace_log_evidence(*c.lik, *c.prior, {}, lg1) - laplace_log_evidence(lik2, prior2, {}, lg2)) <
        1e-9);
  CHECK((p * lg1.mode - lg2.mode).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("an independent empty pattern adds its own one-dimensional Laplace term") {
  MeshParams mp;
  mp.cutoff = 0.3;
  mp.max_edge = {1.5, 4.0};
  mp.offset = {1.0, 3.0};
  const auto mesh = std::make_shared<const Mesh2d>(build_mesh_2d(make_rectangle(0, 0, 10, 10), mp));
  Rng rng(31);
  std::vector<Point2> pts;
  for (int i = 0; i < 80; ++i) pts.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  const Polygon d = make_rectangle(0, 0, 10, 10), d2 = make_rectangle(2, 2, 6, 6);
  Covariate one;
  one.fn = [](const Point2&) { return 1.0; };
  const double prec = 2.0, area = 16.0;

  ModelSpec base(mesh, {ComponentDef::intercept("a")}, {{"p", pts, d, {"a"}}});
  ModelSpec more(mesh, {ComponentDef::intercept("a"), ComponentDef::linear("b", one, prec)},
                 {{"p", pts, d, {"a"}}, {"empty", {}, d2, {"b"}}});
  auto evidence = [](const ModelSpec& m) {
    const LatentGaussian lg = inner_newton(m, m.precision(std::vector<double>{}), SpMat(0, m.latent_dim()),
                                           Eigen::VectorXd(0));
    return laplace_log_evidence(m, m, std::vector<double>{}, lg);
  };
  // Mode of -area e^b - prec b^2 / 2 by Newton in one variable.
  double b = 0.0;
  for (int i = 0; i < 100; ++i) b -= (-area * std::exp(b) - prec * b) / (-area * std::exp(b) - prec);
  const double term = -area * std::exp(b) - 0.5 * prec * b * b + 0.5 * std::log(prec) -
                      0.5 * std::log(prec + area * std::exp(b));
  CHECK(evidence(more) - evidence(base) == doctest::Approx(term).epsilon(1e-10));
}

TEST_CASE("sum-to-zero constraint: mode and draws") {
  const Conjugate c = conjugate_problem(10, 8, 12, false);
  const SpMat a = Eigen::MatrixXd::Ones(1, 8).sparseView();
  const LatentGaussian free = inner_newton(*c.lik, c.prior->precision({}), SpMat(0, 8), Eigen::VectorXd(0));
  const LatentGaussian lg = apply_constraints(free, a, Eigen::VectorXd::Zero(1));
  CHECK(std::abs(lg.mode.sum()) < 1e-10);

  // Already satisfied: nothing moves.
  LatentGaussian sat = free;
  sat.mode.array() -= sat.mode.mean();
  const LatentGaussian again = apply_constraints(sat, a, Eigen::VectorXd::Zero(1));
  CHECK((again.mode - sat.mode).lpNorm<Eigen::Infinity>() < 1e-12);

  FitResult fr;
  fr.latent.push_back(lg);
  fr.hyper.grid.push_back({{}, 0.0, 1.0});
  const Eigen::MatrixXd draws = sample_posterior(fr, 1000, 77);
  const Eigen::VectorXd sums = draws.rowwise().sum();
  CHECK(sums.lpNorm<Eigen::Infinity>() < 1e-8);
  const double var = (sums.array() - sums.mean()).square().sum() / 999.0;
  CHECK(var < 1e-16);

  CHECK_THROWS_AS(apply_constraints(free, Eigen::MatrixXd::Ones(2, 8).sparseView(), Eigen::VectorXd::Zero(2)),
                  NumericalError);
}

TEST_CASE("posterior draws: moments, determinism, quantiles") {
  const Conjugate c = conjugate_problem(12, 6, 10, false);
  const FitResult fr = fit(*c.lik, *c.prior);
  REQUIRE(fr.hyper.grid.size() == 1);
  CHECK(fr.hyper.grid[0].weight == 1.0);
  const int n = 10000;
  const Eigen::MatrixXd draws = sample_posterior(fr, n, 2024, 4);
  const Eigen::MatrixXd cov = Eigen::MatrixXd(fr.at_mode().precision).inverse();
  const Eigen::VectorXd mean = draws.colwise().mean();
  for (int j = 0; j < 6; ++j) {
    const double sd = std::sqrt(cov(j, j));
    CHECK(std::abs(mean[j] - fr.at_mode().mode[j]) < 3 * sd / std::sqrt(n));
  }
  // Same draws regardless of thread count, bit for bit.
  CHECK(draws == sample_posterior(fr, n, 2024, 1));
  CHECK(draws != sample_posterior(fr, n, 2025, 1));

  const auto s = summarize(draws);
  for (int j = 0; j < 6; ++j) {
    const double sd = std::sqrt(cov(j, j)), mu = fr.at_mode().mode[j];
    // Standard error of a 2.5% tail quantile from 10000 draws is about
    // 0.027 sd; allow four of them.
    CHECK(std::abs(s[j].q975 - (mu + 1.959964 * sd)) < 0.11 * sd);
    CHECK(std::abs(s[j].q50 - s[j].mean) < 0.05 * sd);
    CHECK(s[j].q025 <= s[j].q50);
    CHECK(s[j].q50 <= s[j].q975);
    CHECK(std::abs(s[j].sd - sd) < 0.03 * sd);
  }
  CHECK_THROWS_AS(sample_posterior(fr, 0, 1), ConfigError);
}

TEST_CASE("normal quantile oracle") {
  // One-dimensional N(mu, s^2) posterior: prior precision 1, one datum with
  // noise precision 3.
  GaussianLik lik(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 3.0));
  ScaledPrior prior(Eigen::MatrixXd::Identity(1, 1), false);
  const FitResult fr = fit(lik, prior);
  const double mu = 1.5, s = 0.5;
  CHECK(fr.at_mode().mode[0] == doctest::Approx(mu).epsilon(1e-12));
  const auto summary = summarize(sample_posterior(fr, 10000, 99));
  CHECK(std::abs(summary[0].q975 - (mu + 1.959964 * s)) < 0.02 * s);
  CHECK(std::abs(summary[0].q025 - (mu - 1.959964 * s)) < 0.11 * s);

  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({5}, 0.9) == 5);
  CHECK(quantile({3, 1, 2}, 0.0) == 1);
  CHECK(quantile({3, 1, 2}, 1.0) == 3);
}

TEST_CASE("hyperparameter optimization on the conjugate model") {
  const Conjugate c = conjugate_problem(14, 8, 30, true);
  FitOptions opts;
  opts.threads = 2;
  const FitResult fr = fit(*c.lik, *c.prior, opts);
  REQUIRE(fr.hyper.mode.size() == 1);
  const double best = fr.hyper.grid[0].log_density;
  for (const auto& p : fr.hyper.trace) CHECK(p.log_density <= best);

  // Brute-force oracle on the exact log posterior of theta.
  auto logpost = [&](double t) { return exact_evidence(c, std::exp(t)) - 0.5 * kLog2Pi - 0.5 * t * t; };
  double lo = -6, hi = 6;
  for (int i = 0; i < 200; ++i) {
    const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    (logpost(m1) < logpost(m2) ? lo : hi) = (logpost(m1) < logpost(m2) ? m1 : m2);
  }
  const double t_star = 0.5 * (lo + hi);
  CHECK(std::abs(fr.hyper.mode[0] - t_star) < 2e-3);
  CHECK(best == doctest::Approx(logpost(fr.hyper.mode[0])).epsilon(1e-10));
  const double h = 1e-3;
  const double curv = -(logpost(t_star + h) - 2 * logpost(t_star) + logpost(t_star - h)) / (h * h);
  CHECK(fr.hyper.hessian(0, 0) == doctest::Approx(curv).epsilon(0.02));
  REQUIRE(fr.hyper_summary.size() == 1);
  CHECK(fr.hyper_summary[0].name == "scale");
  CHECK(fr.hyper_summary[0].q50 == doctest::Approx(std::exp(fr.hyper.mode[0])));
  CHECK(fr.hyper_summary[0].q025 < fr.hyper_summary[0].q50);
  CHECK(fr.hyper_summary[0].q50 < fr.hyper_summary[0].q975);

  opts.strategy = Strategy::Grid;
  const FitResult grid = fit(*c.lik, *c.prior, opts);
  CHECK(grid.hyper.grid.size() == 5);
  CHECK(grid.latent.size() == 5);
  double total = 0.0;
  for (const auto& p : grid.hyper.grid) {
    CHECK(p.weight >= 0.0);
    total += p.weight;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(grid.hyper.grid[0].weight > grid.hyper.grid[1].weight);
}

TEST_CASE("sparse factor residual on random SPD systems") {
  Rng rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 40 + 10 * trial;
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, 4.0 + rng.uniform());
    for (int k = 0; k < 2 * n; ++k) {
      const int i = static_cast<int>(rng.uniform() * n), j = static_cast<int>(rng.uniform() * n);
      if (i == j) continue;
      const double v = rng.uniform(-0.5, 0.5);
      t.emplace_back(i, j, v);
      t.emplace_back(j, i, v);
      t.emplace_back(i, i, std::abs(v));
      t.emplace_back(j, j, std::abs(v));
    }
    SpMat q(n, n);
    q.setFromTriplets(t.begin(), t.end());
    const SparseCholesky f(q);
    const Eigen::VectorXd b = random_vector(rng, n);
    const Eigen::VectorXd x = f.solve(b);
    CHECK((q * x - b).lpNorm<Eigen::Infinity>() < 1e-8 * b.lpNorm<Eigen::Infinity>());
  }
}
