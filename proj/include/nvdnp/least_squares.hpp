#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

namespace nvdnp::fit {

/// Fills `residuals` (pre-sized to the observation count) for `params`.
using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals)>;

/// Fills `jacobian` (observations x parameters). When absent, central
/// differences are used.
using JacobianFn = std::function<void(const Eigen::VectorXd& params, Eigen::MatrixXd& jacobian)>;

struct LmOptions {
  int max_iterations = 2000;
  double initial_damping = 1e-3;
  double cost_tolerance = 1e-12;   ///< relative cost reduction
  double step_tolerance = 1e-14;   ///< relative parameter change
  double gradient_tolerance = 1e-30;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;          ///< at the optimum
  double cost = 0.0;                 ///< 0.5 * sum of squared residuals
  std::vector<double> cost_history;  ///< cost after each accepted step
  int iterations = 0;
  bool converged = false;

  /// Residual variance estimate 2 cost / (m - p).
  double residual_variance() const;
  /// s^2 (J^T J)^{-1}.
  Eigen::MatrixXd covariance() const;
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. Only steps that
/// reduce the cost are accepted, so `cost_history` is non-increasing.
/// Throws NumericalFailure when no convergence criterion is met within
/// `max_iterations`.
LmResult levenberg_marquardt(const ResidualFn& residual, Eigen::Index observations,
                             Eigen::VectorXd initial, const JacobianFn& jacobian = {},
                             const LmOptions& options = {});

/// Two-sided Student-t quantile for the given confidence and degrees of freedom.
double student_t_quantile(double confidence, double dof);

}  // namespace nvdnp::fit
