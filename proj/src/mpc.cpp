#include <dlo/mpc.hpp>
#include <dlo/qp.hpp>

#include <Eigen/Dense>

namespace dlo {

namespace {

constexpr double kInf = 1e20;

VecX diagOrOnes(const VecX& w, int n) {
    if (w.size() == 0) return VecX::Ones(n);
    if (w.size() != n) throw ConfigError("weight diagonal has the wrong dimension");
    return w;
}

// block-diagonal twist map: [v_l; w_l; v_r; w_r] = J_arm(q) * qdot
MatX armJacobian(const DualArm& robot, const VecX& q) {
    MatX j = MatX::Zero(12, robot.dof());
    j.block(0, 0, 6, robot.left.dof()) = robot.left.geometricJacobian(robot.leftJoints(q));
    j.block(6, robot.left.dof(), 6, robot.right.dof()) = robot.right.geometricJacobian(robot.rightJoints(q));
    return j;
}

}  // namespace

void MpcProblem::validate(int m, int dof) const {
    if (horizon < 1) throw ConfigError("mpc horizon must be >= 1");
    if (!(dt > 0) || !(u_max > 0)) throw ConfigError("mpc dt and u_max must be positive");
    if (static_cast<int>(x_ref.size()) != horizon || static_cast<int>(q_ref.size()) != horizon)
        throw ConfigError("mpc reference windows must have horizon entries");
    if (x0.size() != 3 * m || q0.size() != dof) throw ConfigError("mpc state dimensions mismatch");
    if (weights.beta_x < 0 || weights.beta_q < 0 || weights.beta_u < 0 || weights.beta_a < 0)
        throw ConfigError("mpc weights must be nonnegative");
}

MpcController::MpcController(const DualArm& robot, const SdfGrid& grid, const CollisionMargins& margins,
                             const MpcSettings& settings)
    : robot_(robot), grid_(grid), margins_(margins), settings_(settings) {}

ControlOutput MpcController::solve(const MpcProblem& problem, const DloJacobian& jacobian) {
    const int nu = robot_.dof();
    const int nx = static_cast<int>(jacobian.J.rows());
    const int m = nx / 3;
    const int T = problem.horizon;
    const int nv = nu * T;
    problem.validate(m, nu);

    const double dt = problem.dt;
    const VecX wx = problem.weights.w_x.size() ? problem.weights.w_x : VecX::Ones(nx);
    const VecX wq = diagOrOnes(problem.weights.w_q, nu);
    const VecX wu = diagOrOnes(problem.weights.w_u, nu);
    const VecX wa = diagOrOnes(problem.weights.w_a, nu);
    const VecX wx_full = diagOrOnes(wx, nx);
    const VecX u_prev = problem.u_prev.size() == nu ? problem.u_prev : VecX::Zero(nu);

    VecX U = warm_u_.size() == nv ? warm_u_ : VecX::Zero(nv);
    for (int i = 0; i < nv; ++i) U[i] = std::clamp(U[i], -problem.u_max, problem.u_max);

    const auto radii = robot_.sphereRadii();
    const auto links = robot_.sphereLinks();
    const int n_spheres = static_cast<int>(radii.size());
    const int m_e = 3 * (m - 1) + 1;
    const int rows = nv + T * (n_spheres + m_e + 1);

    // interpolation selector rows for the DLO collision points
    std::vector<std::pair<int, double>> interp(m_e);  // (left feature, weight of right)
    {
        int idx = 0;
        for (int k = 0; k < m - 1; ++k)
            for (int t = 0; t < 3; ++t) interp[idx++] = {k, t / 3.0};
        interp[idx] = {m - 2, 1.0};
    }

    struct Rollout {
        std::vector<VecX> q;      // T+1 entries
        std::vector<VecX> x;      // T+1 entries
        std::vector<MatX> B;      // T entries, nx x nu
    };
    auto rollout = [&](const VecX& u_seq) {
        Rollout r;
        r.q.resize(T + 1);
        r.x.resize(T + 1);
        r.B.resize(T);
        r.q[0] = problem.q0;
        r.x[0] = problem.x0;
        for (int i = 0; i < T; ++i) {
            r.B[i] = jacobian.J * armJacobian(robot_, r.q[i]) * dt;
            r.q[i + 1] = r.q[i] + u_seq.segment(i * nu, nu) * dt;
            r.x[i + 1] = r.x[i] + r.B[i] * u_seq.segment(i * nu, nu);
        }
        return r;
    };

    auto trueCost = [&](const VecX& u_seq, const Rollout& r) {
        double j = 0.0;
        for (int i = 1; i <= T; ++i) {
            const VecX ex = r.x[i] - problem.x_ref[i - 1];
            const VecX eq = r.q[i] - problem.q_ref[i - 1];
            j += 0.5 * problem.weights.beta_x * ex.dot(wx_full.cwiseProduct(ex));
            j += 0.5 * problem.weights.beta_q * eq.dot(wq.cwiseProduct(eq));
        }
        for (int i = 0; i < T; ++i) {
            const VecX ui = u_seq.segment(i * nu, nu);
            const VecX um = i == 0 ? u_prev : VecX(u_seq.segment((i - 1) * nu, nu));
            const VecX ai = (ui - um) / dt;
            j += 0.5 * problem.weights.beta_u * ui.dot(wu.cwiseProduct(ui));
            j += 0.5 * problem.weights.beta_a * ai.dot(wa.cwiseProduct(ai));
        }
        return j;
    };

    ControlOutput out;
    out.status = MpcStatus::Degraded;
    double trust = settings_.trust_region;
    double prev_cost = std::numeric_limits<double>::infinity();
    QpResult qp;
    bool qp_ever_feasible = false;

    MatX A = MatX::Zero(rows, nv);
    VecX lo(rows), hi(rows);
    MatX H(nv, nv);
    VecX g(nv);

    for (int outer = 0; outer < settings_.max_outer; ++outer) {
        ++out.outer_iterations;
        const Rollout roll = rollout(U);
        const double cost_here = trueCost(U, roll);
        if (cost_here > prev_cost + 1e-12) trust *= 0.5;  // damp oscillating linearizations
        prev_cost = cost_here;

        H.setZero();
        g.setZero();

        // accumulated state sensitivities: x[i] depends on blocks j < i
        // through B[j], q[i] through dt * I
        for (int i = 1; i <= T; ++i) {
            const VecX ex = roll.x[i] - problem.x_ref[i - 1];
            const VecX eq = roll.q[i] - problem.q_ref[i - 1];
            for (int j = 0; j < i; ++j) {
                const MatX bw = problem.weights.beta_x * roll.B[j].transpose() * wx_full.asDiagonal();
                g.segment(j * nu, nu) += bw * ex;
                g.segment(j * nu, nu) += problem.weights.beta_q * dt * wq.cwiseProduct(eq);
                for (int j2 = 0; j2 < i; ++j2) {
                    H.block(j * nu, j2 * nu, nu, nu) += bw * roll.B[j2];
                    H.block(j * nu, j2 * nu, nu, nu) +=
                        problem.weights.beta_q * dt * dt * MatX(wq.asDiagonal());
                }
            }
        }
        for (int i = 0; i < T; ++i) {
            const VecX ui = U.segment(i * nu, nu);
            H.block(i * nu, i * nu, nu, nu) += problem.weights.beta_u * MatX(wu.asDiagonal());
            g.segment(i * nu, nu) += problem.weights.beta_u * wu.cwiseProduct(ui);

            const VecX um = i == 0 ? u_prev : VecX(U.segment((i - 1) * nu, nu));
            const VecX ai = (ui - um) / dt;
            const double s = problem.weights.beta_a / (dt * dt);
            H.block(i * nu, i * nu, nu, nu) += s * MatX(wa.asDiagonal());
            g.segment(i * nu, nu) += s * wa.cwiseProduct(ui - um);
            if (i > 0) {
                H.block(i * nu, (i - 1) * nu, nu, nu) -= s * MatX(wa.asDiagonal());
                H.block((i - 1) * nu, i * nu, nu, nu) -= s * MatX(wa.asDiagonal());
                H.block((i - 1) * nu, (i - 1) * nu, nu, nu) += s * MatX(wa.asDiagonal());
                g.segment((i - 1) * nu, nu) -= s * wa.cwiseProduct(ui - um);
            }
            (void)ai;
        }

        A.setZero();
        int row = 0;
        // velocity bounds and trust region around the incumbent
        for (int i = 0; i < nv; ++i, ++row) {
            A(row, i) = 1.0;
            lo[row] = std::max(-problem.u_max - U[i], -trust);
            hi[row] = std::min(problem.u_max - U[i], trust);
        }

        for (int i = 1; i <= T; ++i) {
            // robot sphere clearances
            const VecX ql = robot_.leftJoints(roll.q[i]);
            const VecX qr = robot_.rightJoints(roll.q[i]);
            const auto fk_l = robot_.left.forwardKinematics(ql);
            const auto fk_r = robot_.right.forwardKinematics(qr);
            for (int sph = 0; sph < n_spheres; ++sph, ++row) {
                const bool left_arm = links[sph] < 100;
                const int local = left_arm ? sph : sph - robot_.left.sphereCount();
                const Vec3 center =
                    left_arm ? fk_l.sphere_centers[local] : fk_r.sphere_centers[local];
                const Vec3 grad = grid_.gradient(center);
                const double d0 = grid_.query(center);
                Eigen::Matrix<double, 1, Eigen::Dynamic> jrow(1, nu);
                jrow.setZero();
                if (left_arm) {
                    const auto jp = robot_.left.pointJacobian(ql, robot_.left.spheres()[local].link, center);
                    jrow.leftCols(robot_.left.dof()) = grad.transpose() * jp;
                } else {
                    const auto jp = robot_.right.pointJacobian(qr, robot_.right.spheres()[local].link, center);
                    jrow.rightCols(robot_.right.dof()) = grad.transpose() * jp;
                }
                for (int j = 0; j < i; ++j) A.block(row, j * nu, 1, nu) = dt * jrow;
                lo[row] = (radii[sph] + problem.eps_d) - d0;
                hi[row] = kInf;
            }
            // DLO sphere clearances through the transition model
            for (int k = 0; k < m_e; ++k, ++row) {
                const auto [fa, wgt] = interp[k];
                const Vec3 pa = roll.x[i].segment<3>(3 * fa);
                const Vec3 pb = roll.x[i].segment<3>(3 * (fa + 1));
                const Vec3 center = (1.0 - wgt) * pa + wgt * pb;
                const Vec3 grad = grid_.gradient(center);
                const double d0 = grid_.query(center);
                Eigen::Matrix<double, 1, Eigen::Dynamic> gsel(1, nx);
                gsel.setZero();
                gsel.segment<3>(3 * fa) = (1.0 - wgt) * grad;
                gsel.segment<3>(3 * (fa + 1)) = wgt * grad;
                for (int j = 0; j < i; ++j) A.block(row, j * nu, 1, nu) = gsel * roll.B[j];
                lo[row] = (margins_.dlo_radius + problem.eps_d) - d0;
                hi[row] = kInf;
            }
            // overstretch: ||x_m - x_1|| <= L - eps, linearized along the chord
            {
                const Vec3 v = roll.x[i].tail<3>() - roll.x[i].head<3>();
                const Vec3 n = v.norm() > 1e-9 ? Vec3(v.normalized()) : Vec3::UnitX();
                Eigen::Matrix<double, 1, Eigen::Dynamic> gsel(1, nx);
                gsel.setZero();
                gsel.segment<3>(0) = -n;
                gsel.segment<3>(nx - 3) = n;
                for (int j = 0; j < i; ++j) A.block(row, j * nu, 1, nu) = gsel * roll.B[j];
                lo[row] = -kInf;
                hi[row] = (problem.dlo_length - problem.eps_stretch) - n.dot(v);
                ++row;
            }
        }

        QpSettings qps;
        qps.eps_primal = settings_.solver_tolerance * 1e-2;
        qps.eps_dual = settings_.solver_tolerance * 1e-2;
        qp = solveQp(H, g, A, lo, hi, qps);
        if (qp.status == QpStatus::PrimalInfeasible) {
            if (!qp_ever_feasible && outer == 0) {
                out.status = MpcStatus::Infeasible;
                out.u0 = VecX::Zero(nu);
                return out;
            }
            trust *= 0.5;
            continue;
        }
        qp_ever_feasible = true;

        U += qp.x;
        for (int i = 0; i < nv; ++i) U[i] = std::clamp(U[i], -problem.u_max, problem.u_max);
        const double step = qp.x.cwiseAbs().maxCoeff();
        if (step <= settings_.step_tolerance && outer + 1 >= settings_.min_outer) {
            out.status = MpcStatus::Optimal;
            break;
        }
    }
    if (out.status == MpcStatus::Degraded && qp_ever_feasible) {
        // budget exhausted with a usable iterate
    } else if (!qp_ever_feasible) {
        out.status = MpcStatus::Infeasible;
        out.u0 = VecX::Zero(nu);
        return out;
    }

    // margins audited on the final prediction
    const Rollout final_roll = rollout(U);
    out.min_robot_clearance = std::numeric_limits<double>::infinity();
    out.min_dlo_clearance = std::numeric_limits<double>::infinity();
    out.stretch_margin = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= T; ++i) {
        const auto centers = robot_.sphereCenters(final_roll.q[i]);
        for (int sph = 0; sph < n_spheres; ++sph)
            out.min_robot_clearance =
                std::min(out.min_robot_clearance, grid_.query(centers[sph]) - radii[sph] - problem.eps_d);
        for (int k = 0; k < m_e; ++k) {
            const auto [fa, wgt] = interp[k];
            const Vec3 center = (1.0 - wgt) * final_roll.x[i].segment<3>(3 * fa) +
                                wgt * final_roll.x[i].segment<3>(3 * (fa + 1));
            out.min_dlo_clearance =
                std::min(out.min_dlo_clearance, grid_.query(center) - margins_.dlo_radius - problem.eps_d);
        }
        const Vec3 v = final_roll.x[i].tail<3>() - final_roll.x[i].head<3>();
        out.stretch_margin =
            std::min(out.stretch_margin, (problem.dlo_length - problem.eps_stretch) - v.norm());
    }

    out.u0 = U.head(nu);
    for (int i = 0; i < nu; ++i) out.u0[i] = std::clamp(out.u0[i], -problem.u_max, problem.u_max);

    // shift the solution one step for the next warm start
    warm_u_.resize(nv);
    warm_u_.head(nv - nu) = U.tail(nv - nu);
    warm_u_.tail(nu) = U.tail(nu);
    return out;
}

void StuckDetector::push(const VecX& u, double tracking_error) {
    history_.emplace_back(u.cwiseAbs().maxCoeff(), tracking_error);
    while (history_.size() > capacity_) history_.pop_front();
}

bool StuckDetector::stuck() const {
    if (history_.size() < capacity_) return false;
    for (const auto& [u_inf, err] : history_) {
        if (u_inf >= u_eps_ || err <= err_thresh_) return false;
    }
    return true;
}

bool detectRapidChange(const std::vector<Vec3>& feature_velocities, double commanded_end_speed, double kappa,
                       double floor) {
    double max_speed = 0.0;
    for (const auto& v : feature_velocities) max_speed = std::max(max_speed, v.norm());
    return max_speed > kappa * commanded_end_speed + floor;
}

}  // namespace dlo
