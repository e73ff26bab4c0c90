#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbsae/design.hpp"
#include "pbsae/popgen.hpp"

namespace pbsae {

enum class Parameterization { hierarchical, fixed_intercepts };

// Penalized complexity prior for a Gaussian standard deviation: an exponential
// density on sigma with rate lambda chosen so that P(sigma > upper) = alpha.
struct PcPrior {
  double upper = 3.0;
  double alpha = 0.05;

  void validate() const;
  double rate() const;  // -log(alpha) / upper
  double log_density(double sigma) const;
  // Density of log(sigma), including the Jacobian sigma.
  double log_density_log_sigma(double log_sigma) const;
};

// Fixed effects carry a flat (improper) prior and contribute nothing.
struct PriorSpec {
  PcPrior sd_u;
  PcPrior sd_eps;
};

struct ModelSpec {
  Family family = Family::gaussian;
  Parameterization parameterization = Parameterization::hierarchical;
  PriorSpec prior;
  std::vector<std::string> covariate_columns{"x1"};
};

// Parameter vector layouts. Variance components are stored as log standard
// deviations.
//   hierarchical:     [beta0, beta_1..beta_p, u_1..u_m, log sigma_u, (log sigma_eps)]
//   fixed-intercepts: [beta0_1..beta0_m, beta_1..beta_p, (log sigma_eps)]
// log sigma_eps is present only for the gaussian family.
class ParamLayout {
 public:
  ParamLayout(Family family, Parameterization param, int m, int p);

  Family family() const noexcept { return family_; }
  Parameterization parameterization() const noexcept { return param_; }
  int num_areas() const noexcept { return m_; }
  int num_covariates() const noexcept { return p_; }
  int size() const noexcept;

  bool has_sigma_eps() const noexcept { return family_ == Family::gaussian; }
  bool hierarchical() const noexcept { return param_ == Parameterization::hierarchical; }

  // Coordinates of the linear predictor block: hierarchical (beta0, beta, u),
  // fixed (beta0_i, beta).
  int num_latent() const noexcept;

  int beta0() const;            // hierarchical only
  int intercept(int area) const;  // fixed only
  int slope(int k) const;
  int u(int area) const;        // hierarchical only
  int log_sigma_u() const;      // hierarchical only
  int log_sigma_eps() const;    // gaussian only

  bool operator==(const ParamLayout&) const = default;

 private:
  Family family_;
  Parameterization param_;
  int m_;
  int p_;
};

ParamLayout layout_for(const ModelSpec& spec, int m, int p);

// Sum over sampled units of w_j log p(y_j | eta_j). Throws for non-finite
// covariates or a layout/sample mismatch.
double log_pseudo_likelihood(const Eigen::VectorXd& theta, const ParamLayout& layout,
                             const DrawnSample& sample, std::span<const double> weights);
double log_pseudo_likelihood(const Eigen::VectorXd& theta, const ParamLayout& layout,
                             const DrawnSample& sample);

// Unnormalized log pseudo-posterior for the hierarchical layout in the stored
// (log sd) coordinates: likelihood + Gaussian u prior + PC priors with their
// log-scale Jacobians. Throws for a fixed-intercepts layout.
double log_pseudo_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec,
                            const ParamLayout& layout, const DrawnSample& sample,
                            std::span<const double> weights);
double log_pseudo_posterior(const Eigen::VectorXd& theta, const ModelSpec& spec,
                            const ParamLayout& layout, const DrawnSample& sample);

// Per-unit (unweighted) score rows, n x layout.size(). Only likelihood terms.
Eigen::MatrixXd unit_scores(const Eigen::VectorXd& theta, const ParamLayout& layout,
                            const DrawnSample& sample);

// Gradient and Hessian of log_pseudo_likelihood.
Eigen::VectorXd weighted_score(const Eigen::VectorXd& theta, const ParamLayout& layout,
                               const DrawnSample& sample, std::span<const double> weights);
Eigen::VectorXd weighted_score(const Eigen::VectorXd& theta, const ParamLayout& layout,
                               const DrawnSample& sample);
Eigen::MatrixXd weighted_hessian(const Eigen::VectorXd& theta, const ParamLayout& layout,
                                 const DrawnSample& sample, std::span<const double> weights);
Eigen::MatrixXd weighted_hessian(const Eigen::VectorXd& theta, const ParamLayout& layout,
                                 const DrawnSample& sample);

inline double expit(double eta) noexcept {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace pbsae
