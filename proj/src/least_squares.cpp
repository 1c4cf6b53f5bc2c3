#include "nvdnp/least_squares.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "nvdnp/errors.hpp"

namespace nvdnp::fit {

namespace {

void numeric_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x,
                      Eigen::Index observations, Eigen::MatrixXd& jac) {
  Eigen::VectorXd plus(observations), minus(observations);
  Eigen::VectorXd probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(std::abs(x(j)), 1e-6);
    probe(j) = x(j) + h;
    residual(probe, plus);
    probe(j) = x(j) - h;
    residual(probe, minus);
    probe(j) = x(j);
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
}

}  // namespace

double LmResult::residual_variance() const {
  const auto dof = residuals.size() - params.size();
  return dof > 0 ? 2.0 * cost / static_cast<double>(dof) : 0.0;
}

Eigen::MatrixXd LmResult::covariance() const {
  const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
  return residual_variance() * jtj.completeOrthogonalDecomposition().pseudoInverse();
}

LmResult levenberg_marquardt(const ResidualFn& residual, Eigen::Index observations,
                             Eigen::VectorXd initial, const JacobianFn& jacobian,
                             const LmOptions& options) {
  const Eigen::Index p = initial.size();
  if (observations < p) throw InvalidArgument("fewer observations than parameters");

  auto eval_jacobian = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& jac) {
    if (jacobian) {
      jacobian(x, jac);
    } else {
      numeric_jacobian(residual, x, observations, jac);
    }
  };

  LmResult out;
  out.params = std::move(initial);
  out.residuals.resize(observations);
  out.jacobian.resize(observations, p);
  residual(out.params, out.residuals);
  if (!out.residuals.allFinite()) throw NumericalFailure("non-finite residual at initial guess");
  out.cost = 0.5 * out.residuals.squaredNorm();
  out.cost_history.push_back(out.cost);

  double damping = options.initial_damping;
  double growth = 2.0;
  Eigen::VectorXd trial_res(observations);
  eval_jacobian(out.params, out.jacobian);

  for (int it = 0; it < options.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd jtj = out.jacobian.transpose() * out.jacobian;
    const Eigen::VectorXd grad = out.jacobian.transpose() * out.residuals;
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance || out.cost == 0.0) {
      out.converged = true;
      break;
    }

    // Damping follows the gain ratio between actual and predicted decrease.
    bool accepted = false;
    while (damping < 1e20) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += damping * jtj.diagonal().cwiseMax(1e-300);
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd trial = out.params + step;
      residual(trial, trial_res);
      const double trial_cost = 0.5 * trial_res.squaredNorm();
      const double predicted = -grad.dot(step) - 0.5 * step.dot(jtj * step);
      if (trial_res.allFinite() && trial_cost < out.cost && predicted > 0.0) {
        const double rho = (out.cost - trial_cost) / predicted;
        const double reduction = (out.cost - trial_cost) / out.cost;
        const double step_rel = step.norm() / (out.params.norm() + options.step_tolerance);
        out.params = trial;
        out.residuals = trial_res;
        out.cost = trial_cost;
        out.cost_history.push_back(trial_cost);
        damping = std::max(damping * std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3)), 1e-15);
        growth = 2.0;
        accepted = true;
        eval_jacobian(out.params, out.jacobian);
        if (reduction < options.cost_tolerance || step_rel < options.step_tolerance) {
          out.converged = true;
        }
        break;
      }
      damping *= growth;
      growth *= 2.0;
    }
    if (!accepted) {
      // No descent direction left at machine precision: a stationary point.
      out.converged = true;
    }
    if (out.converged) break;
  }

  if (!out.converged) {
    std::ostringstream msg;
    msg << "Levenberg-Marquardt did not converge in " << options.max_iterations
        << " iterations; residual sum of squares " << 2.0 * out.cost;
    throw NumericalFailure(msg.str());
  }
  return out;
}

double student_t_quantile(double confidence, double dof) {
  if (!(dof > 0.0)) throw InvalidArgument("Student-t quantile needs positive degrees of freedom");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw InvalidArgument("confidence level must lie in (0, 1)");
  }
  const boost::math::students_t dist(dof);
  return boost::math::quantile(dist, 0.5 + 0.5 * confidence);
}

}  // namespace nvdnp::fit
