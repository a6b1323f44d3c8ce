#include "lgcp/model.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "lgcp/error.hpp"
#include "lgcp/log.hpp"

namespace lgcp {

std::vector<double> Covariate::evaluate(std::span<const Point2> pts) const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> out(pts.size(), nan);
  if (fn) {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = fn(pts[i]);
    return out;
  }
  if (!raster) throw ConfigError("covariate has neither a raster nor a function");
  const BBox ext = raster->extent();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!ext.contains(pts[i])) continue;
    try {
      const double v = raster_lookup(*raster, std::span<const Point2>(&pts[i], 1), mode)[0];
      if (!raster->is_nodata(v)) out[i] = v;
    } catch (const OutOfExtentError&) {
    }
  }
  return out;
}

double LatentPrior::log_det_constraint_cov(std::span<const double> theta) const {
  const SpMat a = constraint_matrix();
  if (a.rows() == 0) return 0.0;
  SpMat q = precision(theta);
  const Eigen::VectorXd diag = q.diagonal();
  std::vector<Triplet> unit;
  for (Eigen::Index i = 0; i < diag.size(); ++i)
    if (diag[i] == 0.0) unit.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  SpMat fill(q.rows(), q.cols());
  fill.setFromTriplets(unit.begin(), unit.end());
  q += fill;
  const SparseCholesky factor(q);
  const Eigen::MatrixXd w = factor.solve(Eigen::MatrixXd(a.transpose()));
  const Eigen::MatrixXd s = a * w;
  return Eigen::LDLT<Eigen::MatrixXd>(s).vectorD().array().log().sum();
}

ComponentDef ComponentDef::intercept(std::string name) {
  ComponentDef c;
  c.name = std::move(name);
  c.kind = ComponentKind::Intercept;
  return c;
}

ComponentDef ComponentDef::field(std::string name, std::shared_ptr<const SpdeModel> spde) {
  ComponentDef c;
  c.name = std::move(name);
  c.kind = ComponentKind::Field;
  c.spde = std::move(spde);
  return c;
}

ComponentDef ComponentDef::linear(std::string name, Covariate cov, double precision) {
  ComponentDef c;
  c.name = std::move(name);
  c.kind = ComponentKind::Linear;
  c.covariate = std::move(cov);
  c.prior_precision = precision;
  return c;
}

ComponentDef ComponentDef::smooth(std::string name, std::shared_ptr<const Mesh1d> mesh1d,
                                  std::shared_ptr<const SpdeModel> spde, Covariate cov) {
  ComponentDef c;
  c.name = std::move(name);
  c.kind = ComponentKind::Smooth;
  c.mesh1d = std::move(mesh1d);
  c.spde = std::move(spde);
  c.covariate = std::move(cov);
  return c;
}

IntegrationScheme build_integration(const Mesh2d& mesh, const Polygon& sampler) {
  const BBox sb = bbox(sampler);
  std::vector<double> w(mesh.num_vertices(), 0.0);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Point2 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    BBox tb;
    tb.expand(a);
    tb.expand(b);
    tb.expand(c);
    if (!tb.intersects(sb)) continue;
    const Point2 g = (a + b + c) * (1.0 / 3.0);
    const std::array<Point2, 3> p = {a, b, c};
    for (int k = 0; k < 3; ++k) {
      // Dual cell piece of vertex k: vertex, next-edge midpoint, centroid,
      // previous-edge midpoint (counter-clockwise, convex).
      const Point2& v = p[k];
      const Point2 m1 = (v + p[(k + 1) % 3]) * 0.5;
      const Point2 m2 = (v + p[(k + 2) % 3]) * 0.5;
      const Ring quad = {v, m1, g, m2};
      w[tri[k]] += intersection_area_convex(quad, sampler);
    }
  }
  IntegrationScheme s;
  double total = 0.0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (w[v] <= 0.0) continue;
    s.nodes.push_back(mesh.vertices[v]);
    s.weights.push_back(w[v]);
    s.vertex.push_back(v);
    total += w[v];
  }
  const double area = polygon_area(sampler);
  if (std::abs(total - area) > 1e-6 * area)
    throw CoverageError("sampler is not covered by the mesh (covered " + std::to_string(total) + " of " +
                        std::to_string(area) + " km^2)");
  return s;
}

ModelSpec::ModelSpec(std::shared_ptr<const Mesh2d> mesh, std::vector<ComponentDef> components,
                     std::vector<LikelihoodDef> likelihoods)
    : mesh_(std::move(mesh)), components_(std::move(components)), likelihoods_(std::move(likelihoods)) {
  if (!mesh_) throw ConfigError("model: mesh is required");
  if (likelihoods_.empty()) throw ConfigError("model: at least one likelihood is required");
  locator_ = std::make_unique<TriangleLocator>(*mesh_);

  std::set<std::string> names;
  for (const auto& c : components_) {
    if (!names.insert(c.name).second) throw ConfigError("model: duplicate component name '" + c.name + "'");
    int size = 1, nh = 0;
    switch (c.kind) {
      case ComponentKind::Intercept:
        break;
      case ComponentKind::Linear:
        if (!(c.prior_precision > 0.0)) throw ConfigError("model: " + c.name + ".prior_precision must be > 0");
        break;
      case ComponentKind::Field:
        if (!c.spde || c.spde->dim() != 2) throw ConfigError("model: " + c.name + " needs a 2D SPDE model");
        if (c.spde->size() != mesh_->num_vertices())
          throw ConfigError("model: " + c.name + " SPDE model does not match the mesh");
        size = c.spde->size();
        nh = c.spde->num_hyper();
        break;
      case ComponentKind::Smooth:
        if (!c.spde || !c.mesh1d || c.spde->dim() != 1)
          throw ConfigError("model: " + c.name + " needs a 1D mesh and SPDE model");
        if (c.spde->size() != c.mesh1d->num_basis())
          throw ConfigError("model: " + c.name + " SPDE model does not match its 1D mesh");
        size = c.spde->size();
        nh = c.spde->num_hyper();
        break;
    }
    offsets_.push_back(dim_);
    sizes_.push_back(size);
    hyper_offsets_.push_back(num_hyper_);
    dim_ += size;
    num_hyper_ += nh;
  }

  std::set<std::string> patterns;
  for (const auto& l : likelihoods_) {
    if (!patterns.insert(l.pattern).second) throw ConfigError("model: duplicate pattern '" + l.pattern + "'");
    if (l.formula.empty()) throw ConfigError("model: pattern '" + l.pattern + "' has an empty formula");
    std::vector<int> idx;
    for (const auto& n : l.formula) idx.push_back(component_index(n));
    formula_idx_.push_back(std::move(idx));
  }

  for (std::size_t li = 0; li < likelihoods_.size(); ++li) {
    const auto& l = likelihoods_[li];
    for (std::size_t i = 0; i < l.events.size(); ++i)
      if (!point_in_polygon(l.events[i], l.sampler))
        logger()->warn("pattern '{}': event {} lies outside its sampler", l.pattern, i);
    Compiled comp;
    comp.scheme = build_integration(*mesh_, l.sampler);
    // Integration nodes with missing covariates get zero weight.
    std::vector<char> drop(comp.scheme.nodes.size(), 0);
    for (int c : formula_idx_[li]) {
      if (components_[c].kind != ComponentKind::Linear && components_[c].kind != ComponentKind::Smooth) continue;
      const auto v = covariate_values(c, comp.scheme.nodes);
      for (std::size_t k = 0; k < v.size(); ++k)
        if (std::isnan(v[k])) drop[k] = 1;
    }
    const auto ndrop = std::count(drop.begin(), drop.end(), 1);
    if (ndrop > 0) {
      logger()->warn("pattern '{}': {} integration node(s) without covariate values get zero weight", l.pattern,
                     ndrop);
      IntegrationScheme kept;
      for (std::size_t k = 0; k < drop.size(); ++k) {
        if (drop[k]) continue;
        kept.nodes.push_back(comp.scheme.nodes[k]);
        kept.weights.push_back(comp.scheme.weights[k]);
        kept.vertex.push_back(comp.scheme.vertex[k]);
      }
      comp.scheme = std::move(kept);
    }
    comp.a_ev = design(static_cast<int>(li), l.events);
    comp.a_ip = design(static_cast<int>(li), comp.scheme.nodes);
    comp.ev_colsum = comp.a_ev.transpose() * Eigen::VectorXd::Ones(comp.a_ev.rows());
    schemes_.push_back(std::move(comp));
  }
}

int ModelSpec::component_index(const std::string& name) const {
  for (std::size_t i = 0; i < components_.size(); ++i)
    if (components_[i].name == name) return static_cast<int>(i);
  throw ConfigError("model: unknown component '" + name + "'");
}

int ModelSpec::likelihood_index(const std::string& pattern) const {
  for (std::size_t i = 0; i < likelihoods_.size(); ++i)
    if (likelihoods_[i].pattern == pattern) return static_cast<int>(i);
  throw ConfigError("model: unknown pattern '" + pattern + "'");
}

std::vector<double> ModelSpec::covariate_values(int c, std::span<const Point2> pts) const {
  return components_[c].covariate.evaluate(pts);
}

void ModelSpec::append_component(int c, std::span<const Point2> pts, std::span<const double> cov,
                                 std::vector<Triplet>& trip, const TriangleLocator& loc) const {
  const auto& comp = components_[c];
  const int off = offsets_[c];
  switch (comp.kind) {
    case ComponentKind::Intercept:
      for (std::size_t i = 0; i < pts.size(); ++i) trip.emplace_back(static_cast<int>(i), off, 1.0);
      break;
    case ComponentKind::Linear:
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (std::isnan(cov[i]))
          throw DataError("component '" + comp.name + "': no covariate value at point " + std::to_string(i));
        trip.emplace_back(static_cast<int>(i), off, cov[i]);
      }
      break;
    case ComponentKind::Field: {
      const SpMat a = basis_eval(loc, pts);
      for (int k = 0; k < a.outerSize(); ++k)
        for (SpMat::InnerIterator it(a, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()), off + static_cast<int>(it.col()), it.value());
      break;
    }
    case ComponentKind::Smooth: {
      for (std::size_t i = 0; i < pts.size(); ++i)
        if (std::isnan(cov[i]))
          throw DataError("component '" + comp.name + "': no covariate value at point " + std::to_string(i));
      const Basis1d b = basis_eval_1d(*comp.mesh1d, cov);
      for (int k = 0; k < b.a.outerSize(); ++k)
        for (SpMat::InnerIterator it(b.a, k); it; ++it)
          trip.emplace_back(static_cast<int>(it.row()), off + static_cast<int>(it.col()), it.value());
      break;
    }
  }
}

SpMat ModelSpec::design(int likelihood, std::span<const Point2> pts) const {
  std::vector<Triplet> trip;
  for (int c : formula_idx_.at(likelihood)) {
    std::vector<double> cov;
    if (components_[c].kind == ComponentKind::Linear || components_[c].kind == ComponentKind::Smooth)
      cov = covariate_values(c, pts);
    append_component(c, pts, cov, trip, *locator_);
  }
  SpMat a(static_cast<Eigen::Index>(pts.size()), dim_);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

SpMat ModelSpec::component_design(int component, std::span<const Point2> pts) const {
  std::vector<Triplet> trip;
  std::vector<double> cov;
  const auto kind = components_.at(component).kind;
  if (kind == ComponentKind::Linear || kind == ComponentKind::Smooth) cov = covariate_values(component, pts);
  append_component(component, pts, cov, trip, *locator_);
  SpMat a(static_cast<Eigen::Index>(pts.size()), dim_);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

Eigen::VectorXd ModelSpec::log_intensity(const Eigen::VectorXd& x, const std::string& pattern,
                                         std::span<const Point2> pts) const {
  if (x.size() != dim_) throw NumericalError("log_intensity: latent dimension mismatch");
  return design(likelihood_index(pattern), pts) * x;
}

double ModelSpec::loglik(const Eigen::VectorXd& x) const {
  double out = 0.0;
  for (const auto& c : schemes_) {
    out += c.ev_colsum.dot(x);
    const Eigen::VectorXd eta = c.a_ip * x;
    for (Eigen::Index k = 0; k < eta.size(); ++k) out -= c.scheme.weights[k] * std::exp(std::min(eta[k], kEtaClip));
  }
  return out;
}

int ModelSpec::clipped_count(const Eigen::VectorXd& x) const {
  int n = 0;
  for (const auto& c : schemes_) {
    const Eigen::VectorXd eta = c.a_ip * x;
    n += static_cast<int>((eta.array() > kEtaClip).count());
  }
  return n;
}

void ModelSpec::grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SpMat& neg_hess) const {
  grad = Eigen::VectorXd::Zero(dim_);
  neg_hess = SpMat(dim_, dim_);
  for (const auto& c : schemes_) {
    const Eigen::VectorXd eta = c.a_ip * x;
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
      // Past the clip the intensity is constant, so its derivatives vanish.
      mu[k] = eta[k] > kEtaClip ? 0.0 : c.scheme.weights[k] * std::exp(eta[k]);
    }
    grad += c.ev_colsum - c.a_ip.transpose() * mu;
    const SpMat weighted = mu.asDiagonal() * c.a_ip;
    neg_hess += SpMat(c.a_ip.transpose() * weighted);
  }
}

Eigen::VectorXd ModelSpec::initial_latent() const {
  // Intercepts at the log of the homogeneous rate of the first pattern using
  // them; everything else at zero.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
  std::vector<char> set(components_.size(), 0);
  for (std::size_t li = 0; li < likelihoods_.size(); ++li) {
    const auto& l = likelihoods_[li];
    double area = 0.0;
    for (double w : schemes_[li].scheme.weights) area += w;
    const double rate = std::log(std::max<double>(static_cast<double>(l.events.size()), 0.5) / area);
    double assigned = 0.0;
    int free_idx = -1;
    for (int c : formula_idx_[li]) {
      if (components_[c].kind != ComponentKind::Intercept) continue;
      if (set[c])
        assigned += x[offsets_[c]];
      else if (free_idx < 0)
        free_idx = c;
    }
    if (free_idx >= 0) {
      x[offsets_[free_idx]] = rate - assigned;
      set[free_idx] = 1;
    }
  }
  return x;
}

SpMat ModelSpec::precision(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != num_hyper_) throw NumericalError("precision: wrong hyperparameter count");
  std::vector<Triplet> trip;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& comp = components_[c];
    const int off = offsets_[c];
    if (comp.kind == ComponentKind::Linear) {
      trip.emplace_back(off, off, comp.prior_precision);
    } else if (comp.kind == ComponentKind::Field || comp.kind == ComponentKind::Smooth) {
      const SpMat q = comp.spde->precision(theta.subspan(hyper_offsets_[c], comp.spde->num_hyper()));
      for (int k = 0; k < q.outerSize(); ++k)
        for (SpMat::InnerIterator it(q, k); it; ++it)
          trip.emplace_back(off + static_cast<int>(it.row()), off + static_cast<int>(it.col()), it.value());
    }
  }
  SpMat q(dim_, dim_);
  q.setFromTriplets(trip.begin(), trip.end());
  return q;
}

double ModelSpec::log_det_proper(std::span<const double> theta) const {
  double out = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& comp = components_[c];
    if (comp.kind == ComponentKind::Linear)
      out += std::log(comp.prior_precision);
    else if (comp.kind == ComponentKind::Field || comp.kind == ComponentKind::Smooth)
      out += comp.spde->log_det_precision(theta.subspan(hyper_offsets_[c], comp.spde->num_hyper()));
  }
  return out;
}

int ModelSpec::num_flat() const {
  int n = 0;
  for (const auto& c : components_) n += c.kind == ComponentKind::Intercept;
  return n;
}

double ModelSpec::log_hyper_prior(std::span<const double> theta) const {
  double out = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& comp = components_[c];
    if (comp.kind == ComponentKind::Field || comp.kind == ComponentKind::Smooth)
      out += comp.spde->log_prior(theta.subspan(hyper_offsets_[c], comp.spde->num_hyper()));
  }
  return out;
}

std::vector<double> ModelSpec::initial_theta() const {
  std::vector<double> out;
  for (const auto& comp : components_)
    if (comp.kind == ComponentKind::Field || comp.kind == ComponentKind::Smooth) {
      const auto t = comp.spde->initial_theta();
      out.insert(out.end(), t.begin(), t.end());
    }
  return out;
}

SpMat ModelSpec::constraint_matrix() const {
  std::vector<Triplet> trip;
  int row = 0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& comp = components_[c];
    if (!comp.spde || !comp.spde->constrained()) continue;
    const Eigen::VectorXd w = comp.spde->constraint_weights();
    for (int k = 0; k < sizes_[c]; ++k) trip.emplace_back(row, offsets_[c] + k, w[k]);
    ++row;
  }
  SpMat a(row, dim_);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

double ModelSpec::log_det_constraint_cov(std::span<const double> theta) const {
  // Constraints are one weighted-sum row per block and the prior is block
  // diagonal, so A Q^-1 A' is diagonal with entries w' Q_c^-1 w.
  double out = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const auto& comp = components_[c];
    if (!comp.spde || !comp.spde->constrained()) continue;
    const SparseCholesky factor(comp.spde->precision(theta.subspan(hyper_offsets_[c], comp.spde->num_hyper())));
    const Eigen::VectorXd w = comp.spde->constraint_weights();
    out += std::log(w.dot(factor.solve(w)));
  }
  return out;
}

Eigen::VectorXd ModelSpec::constraint_rhs() const { return Eigen::VectorXd::Zero(constraint_matrix().rows()); }

std::vector<std::string> ModelSpec::hyper_names() const {
  std::vector<std::string> out;
  for (const auto& comp : components_) {
    if (comp.kind != ComponentKind::Field && comp.kind != ComponentKind::Smooth) continue;
    if (!comp.spde->prior().fixed_range) out.push_back(comp.name + ".range");
    out.push_back(comp.name + ".sigma");
  }
  return out;
}

}  // namespace lgcp
