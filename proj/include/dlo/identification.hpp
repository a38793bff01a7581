#pragma once

#include <dlo/der.hpp>
#include <dlo/kinematics.hpp>

#include <vector>

namespace dlo {

struct IdObservation {
    std::vector<DloConfig> snapshots;
    std::vector<double> times;
};

struct IdResult {
    double log_twist = 0.0;    // log lambda_t at fixed lambda_b
    double log_density = 0.0;  // log rho
    double cost = 0.0;
    int iterations = 0;
    std::vector<double> residuals;  // per-snapshot dist at the optimum
};

struct PsoSettings {
    double inertia = 0.72;
    double cognitive = 1.49;
    double social = 1.49;
    int particles = 24;
    int iterations = 40;
    std::uint64_t seed = 0;
    // search box for [log(lambda_t / lambda_b), log(rho / lambda_b)]
    double twist_lo = -6.0, twist_hi = 3.0;
    double density_lo = -6.0, density_hi = 6.0;
};

struct TrajectoryError : std::runtime_error {
    explicit TrajectoryError(const std::string& what) : std::runtime_error(what) {}
};

// Scripted excitation: lift, twist the right end past pi/2 relative rotation,
// slacken, lower, and partially untwist, so gravity and twist both shape the
// observed configurations. Joint velocities are emitted at the control rate;
// snapshot times mark the settling points (at least 5).
struct IdTrajectory {
    std::vector<VecX> commands;         // joint velocities per step
    std::vector<double> snapshot_times;  // seconds from the start
    double dt = 0.2;
};

IdTrajectory designedTrajectory(const DualArm& robot, const VecX& start_q, const DloConfig& dlo_start,
                                double total_length, double dt = 0.2, double u_max = 0.5);

// Particle swarm over the log-parameter plane minimizing the sum of
// projection mismatches of the observed configurations. The per-iteration
// global best is non-increasing; cost is invariant to a common scaling of
// (lambda_b, lambda_t, rho).
double identificationCost(const IdObservation& obs, const DloParams& base, double log_twist, double log_density,
                          std::vector<double>* residuals = nullptr);

IdResult psoIdentify(const IdObservation& obs, const DloParams& base, const PsoSettings& settings = {},
                     std::vector<double>* best_cost_trace = nullptr);

}  // namespace dlo
