#pragma once

#include <functional>

#include "vfmpc/qp.hpp"

namespace vfmpc {

/// Nonlinear least-squares program with equality/inequality constraints:
///   min 1/2 ||residual(z)||^2
///   s.t. c_eq(z) = 0, in_lb <= c_in(z) <= in_ub, z_lb <= z <= z_ub.
/// Jacobian callbacks are optional; forward differences fill the gaps.
struct NlpProblem {
  int n = 0;
  std::function<VectorXd(const VectorXd&)> residual;
  std::function<MatrixXd(const VectorXd&)> residual_jac;
  std::function<VectorXd(const VectorXd&)> c_eq;
  std::function<MatrixXd(const VectorXd&)> c_eq_jac;
  std::function<VectorXd(const VectorXd&)> c_in;
  std::function<MatrixXd(const VectorXd&)> c_in_jac;
  VectorXd in_lb, in_ub;
  VectorXd z_lb, z_ub;
};

struct SqpOptions {
  int max_iter = 50;
  double step_tol = 1e-8;      // terminate when ||alpha*d||_inf below this
  int max_line_search = 20;
  double gn_reg = 1e-8;        // Gauss-Newton Hessian regularization
  double fd_step = 1e-7;
  QpSettings qp;
};

struct SqpResult {
  VectorXd z;
  double cost = 0.0;
  double constraint_violation = 0.0;  // inf-norm over eq + ineq violations
  int iterations = 0;
  int qp_count = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<double> step_norms;
};

/// Sequential convexification driver: Gauss-Newton Hessian, l1-merit line
/// search, elastic relaxation when a subproblem is infeasible. Returns the
/// best iterate by merit.
SqpResult solve_sqp(const NlpProblem& nlp, const VectorXd& z0, const SqpOptions& options = {});

MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& z,
                     double step = 1e-7);

}  // namespace vfmpc
