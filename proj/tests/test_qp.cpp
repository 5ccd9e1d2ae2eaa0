#include <doctest.h>

#include <Eigen/Dense>

#include "vfmpc/core.hpp"
#include "vfmpc/qp.hpp"

using namespace vfmpc;

namespace {

// Brute-force oracle: enumerate every active subset of the inequality rows,
// solve the equality-constrained KKT system, keep candidates that are
// primal feasible with correctly signed multipliers, return the best
// objective. Exponential in the row count; used only on small problems.
struct OracleResult {
  bool ok = false;
  VectorXd z;
  double objective = 0.0;
};

OracleResult active_set_oracle(const MatrixXd& P, const VectorXd& g, const MatrixXd& A,
                               const VectorXd& lb, const VectorXd& ub) {
  const int n = static_cast<int>(g.size());
  const int m = static_cast<int>(A.rows());
  OracleResult best;
  double best_obj = 1e300;
  // Each row can be inactive (0), at lower (1) or at upper (2).
  std::vector<int> state(m, 0);
  const long total = static_cast<long>(std::pow(3.0, m));
  for (long code = 0; code < total; ++code) {
    long c = code;
    int n_act = 0;
    for (int i = 0; i < m; ++i) {
      state[i] = c % 3;
      c /= 3;
      if (state[i]) ++n_act;
    }
    if (n_act > n) continue;
    MatrixXd K(n + n_act, n + n_act);
    K.setZero();
    K.topLeftCorner(n, n) = P;
    VectorXd rhs(n + n_act);
    rhs.head(n) = -g;
    int r = 0;
    for (int i = 0; i < m; ++i) {
      if (!state[i]) continue;
      K.block(0, n + r, n, 1) = A.row(i).transpose();
      K.block(n + r, 0, 1, n) = A.row(i);
      rhs[n + r] = state[i] == 1 ? lb[i] : ub[i];
      ++r;
    }
    Eigen::FullPivLU<MatrixXd> lu(K);
    if (lu.rank() < n + n_act) continue;
    const VectorXd sol = lu.solve(rhs);
    const VectorXd z = sol.head(n);
    // Feasibility of inactive rows and multiplier signs of active rows.
    bool ok = true;
    r = 0;
    for (int i = 0; i < m && ok; ++i) {
      const double az = A.row(i).dot(z);
      if (!state[i]) {
        if (az < lb[i] - 1e-9 || az > ub[i] + 1e-9) ok = false;
      } else {
        const double mult = sol[n + r];
        // Stationarity: Pz + g + A' y = 0 with y the multiplier. At lower
        // bound y <= 0, at upper y >= 0 for this sign convention.
        if (state[i] == 1 && mult > 1e-9) ok = false;
        if (state[i] == 2 && mult < -1e-9) ok = false;
        ++r;
      }
    }
    if (!ok) continue;
    const double obj = 0.5 * z.dot(P * z) + g.dot(z);
    if (obj < best_obj - 1e-12) {
      best_obj = obj;
      best.ok = true;
      best.z = z;
      best.objective = obj;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("scalar textbook case: min ||z||^2 s.t. z >= 1") {
  QuadraticProgram qp;
  qp.P = MatrixXd::Identity(1, 1) * 2.0;
  qp.g = VectorXd::Zero(1);
  qp.z_lb = VectorXd::Constant(1, 1.0);
  qp.z_ub = VectorXd::Constant(1, 1e30);
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::Solved);
  CHECK(sol.z[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("equality-only QP matches the direct KKT solve") {
  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    const int n = 6, me = 2;
    MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
    QuadraticProgram qp;
    qp.P = B.transpose() * B + 0.1 * MatrixXd::Identity(n, n);
    qp.g = rng.normal_vec(n);
    qp.A_eq = MatrixXd(me, n);
    for (int i = 0; i < me; ++i) qp.A_eq.row(i) = rng.normal_vec(n).transpose();
    qp.b_eq = rng.normal_vec(me);
    const QpSolution sol = solve_qp(qp);
    CHECK(sol.status == QpStatus::Solved);
    MatrixXd K(n + me, n + me);
    K.setZero();
    K.topLeftCorner(n, n) = qp.P;
    K.topRightCorner(n, me) = qp.A_eq.transpose();
    K.bottomLeftCorner(me, n) = qp.A_eq;
    VectorXd rhs(n + me);
    rhs.head(n) = -qp.g;
    rhs.tail(me) = qp.b_eq;
    const VectorXd direct = K.lu().solve(rhs).head(n);
    CHECK((sol.z - direct).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("random strictly feasible QPs match the enumeration oracle") {
  Rng rng(42);
  int solved = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = rng.uniform_int(2, 6);
    const int m = rng.uniform_int(2, 7);
    MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
    QuadraticProgram qp;
    qp.P = B.transpose() * B + 0.05 * MatrixXd::Identity(n, n);
    qp.g = rng.normal_vec(n);
    qp.A_in = MatrixXd(m, n);
    for (int i = 0; i < m; ++i) qp.A_in.row(i) = rng.normal_vec(n).transpose();
    // Strictly feasible by construction around z0.
    const VectorXd z0 = rng.normal_vec(n);
    const VectorXd az0 = qp.A_in * z0;
    qp.in_lb = az0 - VectorXd::Constant(m, 0.3).cwiseProduct(VectorXd::Ones(m)) -
               rng.normal_vec(m).cwiseAbs();
    qp.in_ub = az0 + VectorXd::Constant(m, 0.3) + rng.normal_vec(m).cwiseAbs();
    const QpSolution sol = solve_qp(qp);
    const OracleResult oracle = active_set_oracle(qp.P, qp.g, qp.A_in, qp.in_lb, qp.in_ub);
    REQUIRE(oracle.ok);
    CHECK(sol.status == QpStatus::Solved);
    CHECK(sol.objective == doctest::Approx(oracle.objective).epsilon(1e-6));
    ++solved;
  }
  CHECK(solved == 100);
}

TEST_CASE("KKT residual contract on solved problems") {
  Rng rng(43);
  for (int t = 0; t < 25; ++t) {
    const int n = rng.uniform_int(5, 20);
    MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
    QuadraticProgram qp;
    qp.P = B.transpose() * B + 0.01 * MatrixXd::Identity(n, n);
    qp.g = rng.normal_vec(n);
    qp.z_lb = VectorXd::Constant(n, -2.0);
    qp.z_ub = VectorXd::Constant(n, 2.0);
    const QpSolution sol = solve_qp(qp);
    CHECK(sol.status == QpStatus::Solved);
    CHECK(sol.primal_residual <= 1e-6);
    CHECK(sol.dual_residual <= 1e-6);
  }
}

TEST_CASE("warm start changes iterations, not the answer") {
  Rng rng(44);
  const int n = 12;
  MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
  QuadraticProgram qp;
  qp.P = B.transpose() * B + 0.1 * MatrixXd::Identity(n, n);
  qp.g = rng.normal_vec(n);
  qp.A_in = MatrixXd::Identity(n, n);
  qp.in_lb = VectorXd::Constant(n, -0.5);
  qp.in_ub = VectorXd::Constant(n, 0.5);
  const QpSolution cold = solve_qp(qp);
  QpWarmStart ws{cold.z, cold.y};
  const QpSolution hot = solve_qp(qp, ws);
  CHECK(cold.status == QpStatus::Solved);
  CHECK(hot.status == QpStatus::Solved);
  CHECK((cold.z - hot.z).lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(hot.iterations <= cold.iterations);
}

TEST_CASE("infeasible problem is reported, not solved") {
  QuadraticProgram qp;
  qp.P = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Zero(2);
  qp.A_in = MatrixXd(2, 2);
  qp.A_in << 1, 0, 1, 0;
  qp.in_lb = VectorXd(2);
  qp.in_ub = VectorXd(2);
  qp.in_lb << 1.0, -1e30;
  qp.in_ub << 1e30, -1.0;  // x >= 1 and x <= -1
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::Infeasible);
}

TEST_CASE("badly scaled problems still meet the tolerance") {
  // Force-scale (1e2) and position-scale (1e-2) columns, as in the MPC.
  Rng rng(45);
  const int n = 8;
  VectorXd scale(n);
  for (int i = 0; i < n; ++i) scale[i] = (i % 2 == 0) ? 1e2 : 1e-2;
  MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
  QuadraticProgram qp;
  qp.P = scale.asDiagonal() * (B.transpose() * B + 0.1 * MatrixXd::Identity(n, n)) * scale.asDiagonal();
  qp.g = scale.asDiagonal() * rng.normal_vec(n);
  qp.A_in = MatrixXd::Identity(n, n);
  qp.in_lb = VectorXd::Constant(n, -10.0);
  qp.in_ub = VectorXd::Constant(n, 10.0);
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::Solved);
  CHECK(sol.primal_residual <= 1e-6);
  CHECK(sol.dual_residual <= 1e-6);
}

TEST_CASE("determinism: identical input, identical output") {
  Rng rng(46);
  const int n = 10;
  MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = rng.normal();
  QuadraticProgram qp;
  qp.P = B.transpose() * B;
  qp.g = rng.normal_vec(n);
  qp.z_lb = VectorXd::Constant(n, -1.0);
  qp.z_ub = VectorXd::Constant(n, 1.0);
  const QpSolution a = solve_qp(qp);
  const QpSolution b = solve_qp(qp);
  CHECK((a.z - b.z).norm() == 0.0);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("qp dump is parseable text") {
  QuadraticProgram qp;
  qp.P = MatrixXd::Identity(2, 2);
  qp.g = VectorXd::Ones(2);
  const std::string s = dump_qp(qp);
  CHECK(s.find("P 2 2") != std::string::npos);
  CHECK(s.find("g 2") != std::string::npos);
}
