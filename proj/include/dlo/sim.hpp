#pragma once

#include <dlo/collision.hpp>
#include <dlo/der.hpp>
#include <dlo/kinematics.hpp>

#include <optional>

namespace dlo {

// Quasi-static ground-truth environment: joint commands integrate exactly,
// the rod always re-settles to a stable shape under the simulator's own
// ("true") parameters, which deliberately differ from the planner's model.
struct SimEvents {
    bool collision = false;
    bool overstretch = false;
    bool snap = false;
};

struct SimState {
    VecX q;
    DloConfig dlo;
    double t = 0.0;
};

struct SimFault : std::runtime_error {
    explicit SimFault(const std::string& what) : std::runtime_error(what) {}
};

struct PerturbSpec {
    double twist_lo = 0.8, twist_hi = 1.25;    // log-uniform factor on lambda_t
    double density_lo = 0.8, density_hi = 1.25;  // log-uniform factor on rho
    double bend_seg_lo = 0.9, bend_seg_hi = 1.1;  // per-vertex bend multipliers
    bool identity() const {
        return twist_lo == 1 && twist_hi == 1 && density_lo == 1 && density_hi == 1 && bend_seg_lo == 1 &&
               bend_seg_hi == 1;
    }
};

DloParams perturbParams(const DloParams& params, const PerturbSpec& spec, Rng& rng);

class QuasistaticSim {
  public:
    // Collisions are flagged at touch (eps_d = 0), independent of the
    // planner's clearance margin.
    QuasistaticSim(const DualArm& robot, const SdfGrid& grid, const CollisionMargins& margins,
                   DloParams true_params, SimState initial, double u_max = 0.5);

    // q' = q + u dt, end poses from FK, rod re-settled under the true
    // parameters. Throws SimFault if the projection fails.
    SimEvents step(const VecX& u, double dt);

    const SimState& state() const { return state_; }
    const DloParams& trueParams() const { return true_params_; }
    double uMax() const { return u_max_; }

  private:
    const DualArm& robot_;
    CollisionChecker checker_;
    DloParams true_params_;
    SimState state_;
    double u_max_;
    double penalty_hint_ = 0.0;
};

}  // namespace dlo
