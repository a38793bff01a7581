#pragma once

#include <dlo/collision.hpp>
#include <dlo/dlo_jacobian.hpp>
#include <dlo/kinematics.hpp>
#include <dlo/sdf.hpp>

#include <deque>
#include <vector>

namespace dlo {

struct MpcWeights {
    double beta_x = 10.0;  // DLO tracking
    double beta_q = 1.0;   // robot tracking
    double beta_u = 0.1;   // actuation effort
    double beta_a = 0.1;   // actuation change
    VecX w_x, w_q, w_u, w_a;  // optional diagonals; empty = identity
};

// One receding-horizon tracking problem: reference windows of length T for
// the DLO centerline and joints, the measured state, and the bounds.
struct MpcProblem {
    int horizon = 3;
    double dt = 0.2;
    MpcWeights weights;
    double u_max = 0.5;         // rad/s per joint
    double eps_d = 0.01;        // obstacle clearance margin, m
    double eps_stretch = 0.01;  // overstretch margin, m
    double dlo_length = 0.5;

    std::vector<VecX> x_ref;  // T entries of 3m stacked feature points
    std::vector<VecX> q_ref;  // T entries of joint vectors
    VecX x0;                  // measured feature points
    VecX q0;                  // measured joints
    VecX u_prev;              // executed input at the last step

    void validate(int m, int dof) const;
};

enum class MpcStatus { Optimal, Degraded, Infeasible };

struct ControlOutput {
    VecX u0;
    MpcStatus status = MpcStatus::Infeasible;
    double min_robot_clearance = 0.0;  // min over the predicted horizon of d_o - s_a - eps_d
    double min_dlo_clearance = 0.0;    // same for the interpolated DLO spheres
    double stretch_margin = 0.0;       // min of (L - eps_stretch) - end separation
    int outer_iterations = 0;
};

struct MpcSettings {
    int max_outer = 8;
    int min_outer = 3;
    double step_tolerance = 1e-5;  // outer convergence on |dU|_inf
    double trust_region = 0.3;     // rad/s box around the incumbent iterate
    double solver_tolerance = 1e-4;
};

// Sequential linearization around the warm-started input sequence: the DLO
// transition uses the current Jacobian estimate held fixed over the horizon,
// obstacle terms are linearized through the SDF gradient at the predicted
// sphere centers, and each subproblem is a box- and inequality-constrained QP.
class MpcController {
  public:
    MpcController(const DualArm& robot, const SdfGrid& grid, const CollisionMargins& margins,
                  const MpcSettings& settings = {});

    ControlOutput solve(const MpcProblem& problem, const DloJacobian& jacobian);

    void reset() { warm_u_.resize(0); }

  private:
    const DualArm& robot_;
    const SdfGrid& grid_;
    CollisionMargins margins_;
    MpcSettings settings_;
    VecX warm_u_;  // previous solution, shifted one step
};

// Replanning triggers of the manipulation loop.
class StuckDetector {
  public:
    StuckDetector(double window_s, double dt, double u_eps = 0.01, double err_thresh = 0.02)
        : capacity_(std::max<size_t>(1, static_cast<size_t>(std::lround(window_s / dt)))), u_eps_(u_eps),
          err_thresh_(err_thresh) {}

    void push(const VecX& u, double tracking_error);
    bool stuck() const;
    void clear() { history_.clear(); }

  private:
    size_t capacity_;
    double u_eps_, err_thresh_;
    std::deque<std::pair<double, double>> history_;  // (|u|_inf, error)
};

// True when the rod moves much faster than the commanded end speed, i.e. a
// quasi-static violation (snap-through).
bool detectRapidChange(const std::vector<Vec3>& feature_velocities, double commanded_end_speed, double kappa = 5.0,
                       double floor = 0.05);

}  // namespace dlo
