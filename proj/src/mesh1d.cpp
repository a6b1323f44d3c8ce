#include <algorithm>
#include <array>
#include <cmath>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"
#include "lgcp/mesh.hpp"

namespace lgcp {

namespace {

// Clamped knot vector: end knots repeated degree + 1 times.
std::vector<double> knot_vector(const Mesh1d& mesh) {
  std::vector<double> u;
  const int p = mesh.degree;
  for (int i = 0; i < p; ++i) u.push_back(mesh.knots.front());
  u.insert(u.end(), mesh.knots.begin(), mesh.knots.end());
  for (int i = 0; i < p; ++i) u.push_back(mesh.knots.back());
  return u;
}

// All B-splines of degree q on knot vector u at x (Cox-de Boor table).
std::vector<double> bspline_all(const std::vector<double>& u, int q, double x) {
  const int nk = static_cast<int>(u.size());
  std::vector<double> n(nk - 1, 0.0);
  // Degree 0: the half-open span containing x, or the last non-empty span at
  // the right end.
  int span = -1;
  for (int i = 0; i + 1 < nk; ++i) {
    if (u[i] < u[i + 1] && x >= u[i] && x < u[i + 1]) span = i;
  }
  if (span < 0) {
    for (int i = nk - 2; i >= 0; --i)
      if (u[i] < u[i + 1]) {
        span = i;
        break;
      }
  }
  n[span] = 1.0;
  for (int d = 1; d <= q; ++d) {
    std::vector<double> next(nk - 1 - d, 0.0);
    for (int i = 0; i < nk - 1 - d; ++i) {
      double v = 0.0;
      const double l = u[i + d] - u[i];
      const double r = u[i + d + 1] - u[i + 1];
      if (l > 0.0) v += (x - u[i]) / l * n[i];
      if (r > 0.0) v += (u[i + d + 1] - x) / r * n[i + 1];
      next[i] = v;
    }
    n = std::move(next);
  }
  return n;
}

std::vector<double> bspline_derivative(const std::vector<double>& u, int p, double x) {
  const std::vector<double> lower = bspline_all(u, p - 1, x);
  const int nb = static_cast<int>(u.size()) - p - 1;
  std::vector<double> d(nb, 0.0);
  for (int i = 0; i < nb; ++i) {
    const double l = u[i + p] - u[i];
    const double r = u[i + p + 1] - u[i + 1];
    if (l > 0.0) d[i] += p / l * lower[i];
    if (r > 0.0) d[i] -= p / r * lower[i + 1];
  }
  return d;
}

}  // namespace

Mesh1d build_mesh_1d(double from, double to, int n_knots, int degree) {
  if (!(to > from) || !std::isfinite(from) || !std::isfinite(to)) throw ConfigError("1D mesh: invalid range");
  if (n_knots < 2) throw ConfigError("1D mesh: need at least 2 knots");
  if (degree != 1 && degree != 2) throw ConfigError("1D mesh: degree must be 1 or 2");
  Mesh1d mesh;
  mesh.degree = degree;
  mesh.knots.resize(n_knots);
  for (int i = 0; i < n_knots; ++i) mesh.knots[i] = from + (to - from) * i / (n_knots - 1);
  mesh.knots.back() = to;
  return mesh;
}

Eigen::VectorXd bspline_row(const Mesh1d& mesh, double value) {
  const double x = std::clamp(value, mesh.lower(), mesh.upper());
  const auto v = bspline_all(knot_vector(mesh), mesh.degree, x);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Basis1d basis_eval_1d(const Mesh1d& mesh, std::span<const double> values) {
  const auto u = knot_vector(mesh);
  Basis1d out;
  std::vector<Triplet> trip;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double x = values[i];
    if (x < mesh.lower() || x > mesh.upper()) {
      out.clamped.push_back(static_cast<int>(i));
      x = std::clamp(x, mesh.lower(), mesh.upper());
    }
    const auto row = bspline_all(u, mesh.degree, x);
    for (std::size_t j = 0; j < row.size(); ++j)
      if (row[j] != 0.0) trip.emplace_back(static_cast<int>(i), static_cast<int>(j), row[j]);
  }
  if (!out.clamped.empty())
    logger()->warn("1D basis: {} value(s) outside [{}, {}] were clamped", out.clamped.size(), mesh.lower(),
                   mesh.upper());
  out.a.resize(static_cast<Eigen::Index>(values.size()), mesh.num_basis());
  out.a.setFromTriplets(trip.begin(), trip.end());
  return out;
}

FemMatrices fem_1d(const Mesh1d& mesh) {
  const auto u = knot_vector(mesh);
  const int p = mesh.degree;
  const int nb = mesh.num_basis();
  Eigen::VectorXd c(nb);
  for (int j = 0; j < nb; ++j) c[j] = (u[j + p + 1] - u[j]) / (p + 1);

  // Three-point Gauss-Legendre per knot interval integrates the products of
  // derivatives exactly for degree <= 2.
  const std::array<double, 3> gx = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  const std::array<double, 3> gw = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nb, nb);
  for (std::size_t k = 0; k + 1 < mesh.knots.size(); ++k) {
    const double a = mesh.knots[k], b = mesh.knots[k + 1];
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int q = 0; q < 3; ++q) {
      const auto d = bspline_derivative(u, p, mid + half * gx[q]);
      for (int i = 0; i < nb; ++i) {
        if (d[i] == 0.0) continue;
        for (int j = 0; j < nb; ++j) g(i, j) += half * gw[q] * d[i] * d[j];
      }
    }
  }
  FemMatrices fem;
  fem.c_diag = c;
  std::vector<Triplet> ct;
  for (int i = 0; i < nb; ++i) ct.emplace_back(i, i, c[i]);
  fem.c.resize(nb, nb);
  fem.c.setFromTriplets(ct.begin(), ct.end());
  fem.g = g.sparseView(1e-300, 1.0);
  fem.g = 0.5 * (SpMat(fem.g.transpose()) + fem.g);
  const SpMat cinv_g = c.cwiseInverse().asDiagonal() * fem.g;
  fem.g2 = fem.g * cinv_g;
  fem.g2 = 0.5 * (SpMat(fem.g2.transpose()) + fem.g2);
  return fem;
}

}  // namespace lgcp
