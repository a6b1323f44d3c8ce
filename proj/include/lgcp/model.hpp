#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lgcp/geometry.hpp"
#include "lgcp/mesh.hpp"
#include "lgcp/spde.hpp"

namespace lgcp {

// Log-likelihood of the data given the latent vector x. Implementations are
// immutable and safe to call concurrently.
class LatentLikelihood {
 public:
  virtual ~LatentLikelihood() = default;
  virtual int latent_dim() const = 0;
  virtual double loglik(const Eigen::VectorXd& x) const = 0;
  // Gradient and negative Hessian (positive semidefinite) at x.
  virtual void grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SpMat& neg_hess) const = 0;
  // A reasonable starting point for the mode search.
  virtual Eigen::VectorXd initial_latent() const { return Eigen::VectorXd::Zero(latent_dim()); }
};

// Gaussian prior of the latent vector given hyperparameters theta, plus the
// prior of theta. Flat (improper) directions carry zero precision and are
// excluded from the normalizing constant.
class LatentPrior {
 public:
  virtual ~LatentPrior() = default;
  virtual int latent_dim() const = 0;
  virtual int num_hyper() const = 0;
  virtual SpMat precision(std::span<const double> theta) const = 0;
  // log det of the precision restricted to its proper (non-flat) part.
  virtual double log_det_proper(std::span<const double> theta) const = 0;
  virtual int num_flat() const = 0;
  virtual double log_hyper_prior(std::span<const double> theta) const = 0;
  virtual std::vector<double> initial_theta() const = 0;
  // Linear constraints A x = e, empty when unconstrained.
  virtual SpMat constraint_matrix() const { return SpMat(0, latent_dim()); }
  virtual Eigen::VectorXd constraint_rhs() const { return Eigen::VectorXd::Zero(0); }
  // log det(A Q^-1 A'). The default factorizes Q with unit diagonal on flat
  // directions; constraints must not involve those.
  virtual double log_det_constraint_cov(std::span<const double> theta) const;
  virtual std::vector<std::string> hyper_names() const { return {}; }
};

// Scalar covariate at a location: a raster lookup or a plain function.
struct Covariate {
  std::shared_ptr<const Raster> raster;
  Interpolation mode = Interpolation::Nearest;
  std::function<double(const Point2&)> fn;

  // NaN where the raster has NODATA or the point lies outside it.
  std::vector<double> evaluate(std::span<const Point2> pts) const;
};

enum class ComponentKind { Intercept, Field, Linear, Smooth };

struct ComponentDef {
  std::string name;
  ComponentKind kind = ComponentKind::Intercept;
  // Field: 2D SPDE model on the model mesh. Smooth: 1D SPDE model on mesh1d.
  std::shared_ptr<const SpdeModel> spde;
  std::shared_ptr<const Mesh1d> mesh1d;
  // Linear and Smooth.
  Covariate covariate;
  // Linear: Gaussian prior precision of the coefficient.
  double prior_precision = 1000.0;

  static ComponentDef intercept(std::string name);
  static ComponentDef field(std::string name, std::shared_ptr<const SpdeModel> spde);
  static ComponentDef linear(std::string name, Covariate cov, double precision = 1000.0);
  static ComponentDef smooth(std::string name, std::shared_ptr<const Mesh1d> mesh1d,
                             std::shared_ptr<const SpdeModel> spde, Covariate cov);
};

struct LikelihoodDef {
  std::string pattern;
  std::vector<Point2> events;
  Polygon sampler;
  std::vector<std::string> formula;  // component names summed into eta
};

struct IntegrationScheme {
  std::vector<Point2> nodes;
  std::vector<double> weights;  // km^2
  std::vector<int> vertex;      // mesh vertex of each node
};

// Node k is mesh vertex k, weighted by the area of its barycentric dual cell
// inside the sampler. Vertices with zero weight are dropped.
IntegrationScheme build_integration(const Mesh2d& mesh, const Polygon& sampler);

// Log-intensity values above this are clipped before exponentiation.
inline constexpr double kEtaClip = 40.0;

// Components and point-pattern likelihoods over one mesh. The latent vector
// is the concatenation of component blocks in declaration order.
class ModelSpec final : public LatentLikelihood, public LatentPrior {
 public:
  ModelSpec(std::shared_ptr<const Mesh2d> mesh, std::vector<ComponentDef> components,
            std::vector<LikelihoodDef> likelihoods);

  const Mesh2d& mesh() const { return *mesh_; }
  const std::vector<ComponentDef>& components() const { return components_; }
  const std::vector<LikelihoodDef>& likelihoods() const { return likelihoods_; }
  int component_index(const std::string& name) const;  // throws ConfigError
  int likelihood_index(const std::string& pattern) const;
  int block_offset(int component) const { return offsets_[component]; }
  int block_size(int component) const { return sizes_[component]; }
  // Offset of the component's hyperparameters in theta, and their count.
  int hyper_offset(int component) const { return hyper_offsets_[component]; }
  const IntegrationScheme& integration(int likelihood) const { return schemes_[likelihood].scheme; }

  // Design matrix mapping the latent vector to eta at the points, for the
  // given pattern's formula or for a single component.
  SpMat design(int likelihood, std::span<const Point2> pts) const;
  SpMat component_design(int component, std::span<const Point2> pts) const;
  Eigen::VectorXd log_intensity(const Eigen::VectorXd& x, const std::string& pattern,
                                std::span<const Point2> pts) const;

  // LatentLikelihood
  int latent_dim() const override { return dim_; }
  double loglik(const Eigen::VectorXd& x) const override;
  void grad_hess(const Eigen::VectorXd& x, Eigen::VectorXd& grad, SpMat& neg_hess) const override;
  Eigen::VectorXd initial_latent() const override;
  // Number of integration-node eta values above kEtaClip at x.
  int clipped_count(const Eigen::VectorXd& x) const;

  // LatentPrior
  int num_hyper() const override { return num_hyper_; }
  SpMat precision(std::span<const double> theta) const override;
  double log_det_proper(std::span<const double> theta) const override;
  int num_flat() const override;
  double log_hyper_prior(std::span<const double> theta) const override;
  std::vector<double> initial_theta() const override;
  SpMat constraint_matrix() const override;
  Eigen::VectorXd constraint_rhs() const override;
  double log_det_constraint_cov(std::span<const double> theta) const override;
  std::vector<std::string> hyper_names() const override;

 private:
  struct Compiled {
    IntegrationScheme scheme;
    SpMat a_ev;   // events x latent
    SpMat a_ip;   // nodes x latent
    Eigen::VectorXd ev_colsum;  // A_ev^T 1
  };
  // Rows of the design for component c at points, with values of the
  // covariate already looked up (NaN entries throw DataError).
  void append_component(int c, std::span<const Point2> pts, std::span<const double> cov,
                        std::vector<Triplet>& trip, const TriangleLocator& loc) const;
  std::vector<double> covariate_values(int c, std::span<const Point2> pts) const;

  std::shared_ptr<const Mesh2d> mesh_;
  std::unique_ptr<TriangleLocator> locator_;
  std::vector<ComponentDef> components_;
  std::vector<LikelihoodDef> likelihoods_;
  std::vector<int> offsets_, sizes_, hyper_offsets_;
  std::vector<std::vector<int>> formula_idx_;
  std::vector<Compiled> schemes_;
  int dim_ = 0;
  int num_hyper_ = 0;
};

}  // namespace lgcp
