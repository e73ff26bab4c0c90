#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pbsae/design.hpp"
#include "pbsae/model.hpp"
#include "pbsae/random.hpp"

namespace pbsae {

struct FitOptions {
  double outer_tolerance = 1e-6;   // infinity norm of the hyperparameter gradient
  int max_outer_iterations = 200;
  double inner_tolerance = 1e-10;  // infinity norm of the latent gradient
  int max_inner_iterations = 100;
  // Hold a hyperparameter at a known value instead of estimating it.
  std::optional<double> fixed_log_sigma_u;
  std::optional<double> fixed_log_sigma_eps;
  // Hyperparameter integration grid: points per axis and half width in
  // approximate posterior standard deviations.
  int grid_points = 5;
  double grid_half_width = 2.5;
};

struct FitResult {
  ParamLayout layout;
  Eigen::VectorXd mode{};
  // (log sigma_u, log sigma_eps) for hierarchical fits; log sigma_eps is NaN for
  // the logit family. Empty for fixed-intercepts fits.
  Eigen::VectorXd hyper_mode{};
  // Negative Hessian of the Laplace log marginal over the free hyperparameters.
  Eigen::MatrixXd hyper_curvature{};
  // Negative Hessian at the mode: latent block (beta0, beta, u) for
  // hierarchical fits, the full parameter vector for fixed-intercepts fits.
  Eigen::MatrixXd curvature{};
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;         // outer (hierarchical) or full (fixed)
  double latent_gradient_norm = 0.0;  // inner gradient at the returned mode
  // Fixed-intercepts fits: areas whose intercept was not estimated (no sampled
  // units, or perfect separation for the logit family) and was held at the
  // supplied fallback value.
  std::vector<int> flagged_areas{};
};

// Conditional mode of the latent block given hyperparameters, with the Laplace
// approximation to the log marginal pseudo-posterior of the hyperparameters.
struct ConditionalMode {
  Eigen::VectorXd latent;      // (beta0, beta, u)
  Eigen::MatrixXd precision;   // negative Hessian of the log joint in the latent block
  double log_joint = 0.0;
  double log_marginal = 0.0;   // Laplace approximation, up to a constant
  int iterations = 0;
  double gradient_norm = 0.0;
};

ConditionalMode conditional_mode(const DrawnSample& sample, std::span<const double> weights,
                                 const ModelSpec& spec, double log_sigma_u, double log_sigma_eps,
                                 const FitOptions& opts = {},
                                 const Eigen::VectorXd* start = nullptr);

// Pseudo-posterior mode of the hierarchical model: Newton iterations for the
// latent block nested in a BFGS search over the log-sd hyperparameters of the
// Laplace-approximated marginal. Non-convergence is reported through
// FitResult::converged.
FitResult fit_pseudo_map(const DrawnSample& sample, std::span<const double> weights,
                         const ModelSpec& spec, const FitOptions& opts = {});

// Maximizer of the weighted log-likelihood of the fixed-intercepts model.
// `fallback_intercepts`, when given, supplies values for areas whose intercept
// cannot be estimated; without it such areas raise InvalidArgument.
FitResult fit_pseudo_mle_fixed(const DrawnSample& sample, std::span<const double> weights,
                               const ModelSpec& spec,
                               std::span<const double> fallback_intercepts = {},
                               const FitOptions& opts = {});

enum class Provenance { unweighted, weighted, weighted_rescaled };

struct PseudoPosteriorDraws {
  ParamLayout layout;
  Eigen::MatrixXd draws;  // K x layout.size(), one draw per row
  Provenance provenance = Provenance::weighted;

  int count() const noexcept { return static_cast<int>(draws.rows()); }
};

// K joint draws: hyperparameters from the grid weighted by the Laplace
// marginal, then the latent block from the Gaussian approximation at the
// conditional mode for that grid point.
PseudoPosteriorDraws draw_pseudo_posterior(const DrawnSample& sample,
                                           std::span<const double> weights,
                                           const ModelSpec& spec, const FitResult& fit, int K,
                                           RandomStream& rng, Provenance provenance,
                                           const FitOptions& opts = {});

}  // namespace pbsae
