#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pbsae/inference.hpp"

namespace pbsae {

// Maps hierarchical draws (beta0, beta, u, log sigma_u, log sigma_eps) to the
// fixed-intercepts layout (beta0 + u_i, beta, log sigma_eps).
PseudoPosteriorDraws to_fixed_parameterization(const PseudoPosteriorDraws& draws);

struct HessianCheck {
  double max_abs_difference = 0.0;   // analytic vs finite-difference score Jacobian
  double max_relative_difference = 0.0;
};

// Observed information: minus the weighted Hessian at the pseudo-MLE, on the
// total (summed) scale, symmetrized. The analytic matrix is compared with
// central differences of the weighted score; `check` receives the discrepancy.
Eigen::MatrixXd estimate_H(const FitResult& mle, const DrawnSample& sample,
                           std::span<const double> weights, HessianCheck* check = nullptr);

// Covariance of the total weighted score under stratified half-sampling of
// PSUs (rescaled bootstrap). Throws InvalidArgument naming a stratum that has
// fewer than two PSUs.
Eigen::MatrixXd estimate_J(const FitResult& mle, const DrawnSample& sample,
                           std::span<const double> weights, int B, RandomStream& rng);

struct DesignEffectMatrices {
  Eigen::MatrixXd H;
  Eigen::MatrixXd J;
  Eigen::MatrixXd R1;          // upper triangular, R1' R1 = H^-1 J H^-1
  Eigen::MatrixXd R2;          // upper triangular, R2' R2 = H^-1
  Eigen::MatrixXd adjustment;  // R2^-1 R1, embedded in the identity for excluded coordinates
  std::vector<int> excluded;   // coordinates left unadjusted
  bool h_positive_definite = true;
  double j_jitter = 0.0;       // ridge added to make H^-1 J H^-1 factorizable, 0 if none

  int dim() const noexcept { return static_cast<int>(adjustment.rows()); }
};

// Builds the Cholesky factors. Coordinates in `excluded` are dropped from H and
// J before factorizing and get identity rows/columns in the adjustment. When H
// (restricted) is not positive definite the adjustment is the identity and
// h_positive_definite is false.
DesignEffectMatrices design_effect_matrices(const Eigen::MatrixXd& H, const Eigen::MatrixXd& J,
                                            std::span<const int> excluded = {});

enum class RescaleCenter { draw_mean, pseudo_mle };

// theta' = (theta - center) R2^-1 R1 + center for each draw (row vectors).
PseudoPosteriorDraws rescale_draws(const PseudoPosteriorDraws& draws,
                                   const DesignEffectMatrices& mats,
                                   RescaleCenter center = RescaleCenter::draw_mean,
                                   const Eigen::VectorXd* pseudo_mle = nullptr);

// Writes H, J and the adjustment matrix as long-format CSV
// (matrix, row, col, value).
void write_design_effect_csv(const DesignEffectMatrices& mats, std::ostream& out);

}  // namespace pbsae
