#pragma once

#include <optional>

#include "vfmpc/core.hpp"

namespace vfmpc {

/// Dense convex QP:
///   min 1/2 z'Pz + g'z
///   s.t. A_eq z = b_eq,  in_lb <= A_in z <= in_ub,  z_lb <= z <= z_ub.
struct QuadraticProgram {
  MatrixXd P;
  VectorXd g;
  MatrixXd A_eq;
  VectorXd b_eq;
  MatrixXd A_in;
  VectorXd in_lb, in_ub;
  VectorXd z_lb, z_ub;  // empty = unbounded

  int n() const { return static_cast<int>(g.size()); }
  void validate() const;
};

enum class QpStatus { Solved, MaxIter, Infeasible };

struct QpSolution {
  VectorXd z;
  VectorXd y;  // multipliers for the stacked [A_eq; A_in; I_box] rows
  double objective = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::MaxIter;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct QpWarmStart {
  VectorXd z;
  VectorXd y;
};

struct QpSettings {
  double eps_abs = 1e-7;
  double eps_rel = 1e-7;
  double kkt_tol = 1e-6;  // contract tolerance on the polished solution
  int max_iter = 10000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int check_interval = 25;
  bool polish = true;
};

/// Operator-splitting (ADMM) solver with Ruiz equilibration and an
/// active-set polish step. One instance per thread; the instance owns the
/// workspace and warm-start memory.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  QpSolution solve(const QuadraticProgram& qp, const std::optional<QpWarmStart>& warm = std::nullopt);

  const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

 private:
  QpSettings settings_;
};

QpSolution solve_qp(const QuadraticProgram& qp, const std::optional<QpWarmStart>& warm = std::nullopt,
                    const QpSettings& settings = {});

/// Worst-case scaled KKT residuals of a candidate solution (used by tests
/// and the solver's own exit check).
void kkt_residuals(const QuadraticProgram& qp, const VectorXd& z, const VectorXd& y, double* primal,
                   double* dual);

/// Plain-text dump (matrix-market style) for offline inspection.
std::string dump_qp(const QuadraticProgram& qp);

}  // namespace vfmpc
