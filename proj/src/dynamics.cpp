#include "vfmpc/dynamics.hpp"

#include <Eigen/Dense>

#include "tree_core.hpp"

namespace vfmpc {

namespace {

MatrixXd reduce_mat(const RobotModel& model, const MatrixXd& full) {
  const auto idx = model.active_dofs();
  MatrixXd out(idx.size(), idx.size());
  for (size_t r = 0; r < idx.size(); ++r)
    for (size_t c = 0; c < idx.size(); ++c) out(r, c) = full(idx[r], idx[c]);
  return out;
}

MatrixXd reduce_cols(const RobotModel& model, const MatrixXd& full) {
  const auto idx = model.active_dofs();
  MatrixXd out(full.rows(), idx.size());
  for (size_t c = 0; c < idx.size(); ++c) out.col(c) = full.col(idx[c]);
  return out;
}

// Contact rows used for constraints: x/z for planar point feet, x/y/z
// otherwise.
std::vector<int> contact_rows(const RobotModel& model) {
  return model.planar ? std::vector<int>{0, 2} : std::vector<int>{0, 1, 2};
}

}  // namespace

VectorXd reduce_vec(const RobotModel& model, const VectorXd& full) {
  const auto idx = model.active_dofs();
  VectorXd out(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) out[i] = full[idx[i]];
  return out;
}

VectorXd lift_vec(const RobotModel& model, const VectorXd& reduced) {
  const auto idx = model.active_dofs();
  VectorXd out = VectorXd::Zero(model.n_q());
  for (size_t i = 0; i < idx.size(); ++i) out[idx[i]] = reduced[i];
  return out;
}

DynamicsTerms dynamics_terms(const RobotModel& model, const VectorXd& q, const VectorXd& qd) {
  DynamicsTerms dt;
  dt.M = reduce_mat(model, mass_matrix_spatial(model, q));
  dt.C = reduce_vec(model, inverse_dynamics_spatial(model, q, qd, VectorXd::Zero(model.n_q())));
  const auto idx = model.active_dofs();
  dt.S = MatrixXd::Zero(idx.size(), model.n_j());
  for (size_t r = 0; r < idx.size(); ++r)
    if (idx[r] >= 6) dt.S(r, idx[r] - 6) = 1.0;
  return dt;
}

ContactSolution constrained_forward_dynamics(const RobotModel& model, const VectorXd& q,
                                             const VectorXd& qd, const VectorXd& tau_j,
                                             const std::vector<int>& active_contacts) {
  const DynamicsTerms terms = dynamics_terms(model, q, qd);
  const int na = terms.M.rows();
  const auto rows = contact_rows(model);
  const int nc = static_cast<int>(active_contacts.size()) * static_cast<int>(rows.size());

  // Stack reduced contact Jacobian rows and their drift Jdot*qd (finite
  // difference of J along the flow).
  MatrixXd Jc(nc, na);
  VectorXd drift(nc);
  const double eps = 1e-6;
  int r0 = 0;
  for (int cid : active_contacts) {
    const MatrixXd J = reduce_cols(model, contact_jacobian(model, q, cid));
    const MatrixXd Jp = reduce_cols(model, contact_jacobian(model, q + eps * qd, cid));
    const MatrixXd Jm = reduce_cols(model, contact_jacobian(model, q - eps * qd, cid));
    const MatrixXd Jdot = (Jp - Jm) / (2.0 * eps);
    const VectorXd qd_red = reduce_vec(model, qd);
    for (size_t k = 0; k < rows.size(); ++k) {
      Jc.row(r0 + static_cast<int>(k)) = J.row(rows[k]);
      drift[r0 + static_cast<int>(k)] = Jdot.row(rows[k]).dot(qd_red);
    }
    r0 += static_cast<int>(rows.size());
  }

  MatrixXd K = MatrixXd::Zero(na + nc, na + nc);
  K.topLeftCorner(na, na) = terms.M;
  K.topRightCorner(na, nc) = -Jc.transpose();
  K.bottomLeftCorner(nc, na) = Jc;
  VectorXd rhs(na + nc);
  rhs.head(na) = terms.S * tau_j - terms.C;
  rhs.tail(nc) = -drift;

  Eigen::FullPivLU<MatrixXd> lu(K);
  VFMPC_CHECK(lu.rank() == na + nc, "constrained_forward_dynamics: singular KKT (rank-deficient contact set)");
  const VectorXd sol = lu.solve(rhs);

  ContactSolution cs;
  cs.qdd = lift_vec(model, sol.head(na));
  r0 = 0;
  for (size_t i = 0; i < active_contacts.size(); ++i) {
    Vector3d f = Vector3d::Zero();
    for (size_t k = 0; k < rows.size(); ++k) f[rows[k]] = sol[na + r0 + static_cast<int>(k)];
    cs.forces.push_back(f);
    r0 += static_cast<int>(rows.size());
  }
  return cs;
}

PlantState make_plant_state(const RobotModel& model, const VectorXd& q, const VectorXd& qd) {
  PlantState ps;
  ps.gen.q = q;
  ps.gen.qd = qd;
  ps.contact.assign(model.n_contacts(), false);
  ps.contact_force.assign(model.n_contacts(), Vector3d::Zero());
  ps.time = 0.0;
  return ps;
}

Vector3d contact_force_law(const PlantParams& params, double pen, double vx, double vz) {
  if (pen <= 0.0) return Vector3d::Zero();
  double fz = params.k_normal * pen - params.d_normal * vz;
  if (fz < 0.0) fz = 0.0;
  const double fx = -params.mu * fz * clamp(vx / params.v_slip, -1.0, 1.0);
  return Vector3d(fx, 0.0, fz);
}

PlantState simulate_step(const RobotModel& model, const PlantState& plant, const VectorXd& tau_j,
                         const Terrain& terrain, const PlantParams& params, const Vector3d& f_ext) {
  VFMPC_CHECK(tau_j.size() == model.n_j(), "simulate_step: torque dimension mismatch");

  VectorXd tau_sat = tau_j;
  for (int j = 0; j < model.n_j(); ++j)
    tau_sat[j] = clamp(tau_sat[j], -model.joints[j].tau_max, model.joints[j].tau_max);

  const auto idx = model.active_dofs();
  const int na = static_cast<int>(idx.size());
  const int nsub = std::max(1, params.substeps);
  const double h = params.dt / nsub;

  PlantState next = plant;
  for (int sub = 0; sub < nsub; ++sub) {
    const VectorXd& q = next.gen.q;
    const VectorXd& qd = next.gen.qd;

    DynamicsTerms terms = dynamics_terms(model, q, qd);
    VectorXd gen_force = terms.S * tau_sat - terms.C;

    // Payload rides on the base: translational inertia and gravity load.
    if (params.payload > 0.0) {
      for (int r = 0; r < na; ++r)
        if (idx[r] < 3) terms.M(r, r) += params.payload;
      for (int r = 0; r < na; ++r)
        if (idx[r] == 2) gen_force[r] -= params.payload * kGravity;
    }

    const FrameSet fs = forward_kinematics(model, q);
    const VectorXd qd_red = reduce_vec(model, qd);
    for (int c = 0; c < model.n_contacts(); ++c) {
      const Vector3d p = fs.contact[c];
      const double pen = terrain.height_at(p.x()) - p.z();
      next.contact[c] = false;
      next.contact_force[c].setZero();
      if (pen <= 0.0) continue;
      const MatrixXd J = reduce_cols(model, contact_jacobian(model, q, c));
      const Vector3d v = J.topRows(3) * qd_red;
      const Vector3d f = contact_force_law(params, pen, v.x(), v.z());
      gen_force += J.topRows(3).transpose() * f;
      next.contact[c] = true;
      next.contact_force[c] = f;
    }

    if (f_ext.squaredNorm() > 0.0) {
      for (int r = 0; r < na; ++r)
        if (idx[r] < 3) gen_force[r] += f_ext[idx[r]];
    }

    const VectorXd qdd = lift_vec(model, VectorXd(terms.M.ldlt().solve(gen_force)));
    next.gen.qd = qd + h * qdd;
    next.gen.q = q + h * next.gen.qd;
  }
  next.time = plant.time + params.dt;

  VFMPC_CHECK(next.gen.q.allFinite() && next.gen.qd.allFinite(),
              "simulate_step: state diverged (NaN/Inf) at t=" + std::to_string(next.time));
  VFMPC_CHECK(next.gen.qd.lpNorm<Eigen::Infinity>() < 1e4,
              "simulate_step: state diverged (velocity blow-up) at t=" + std::to_string(next.time));
  return next;
}

}  // namespace vfmpc
