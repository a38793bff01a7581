#pragma once

#include <dlo/collision.hpp>
#include <dlo/der.hpp>
#include <dlo/kinematics.hpp>
#include <dlo/scene.hpp>
#include <dlo/sdf.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace dlo {

// Search state of the bi-directional RRT: a stable DLO configuration paired
// with a closed-chain joint vector. Sphere centers are cached for the
// workspace distance metric.
struct PlanNode {
    DloConfig dlo;
    VecX q;
    std::vector<Vec3> sphere_centers;
    int parent = -1;
    double penalty_hint = 0.0;  // projection continuation weight carried along a branch
};

// Guidance-only sample; the robot part is optional (task-space exploration
// samples the DLO alone).
struct SampleNode {
    DloConfig dlo;
    std::optional<VecX> q;
    std::vector<Vec3> sphere_centers;  // cached FK when q is present
};

struct StepLimits {
    double translation = 0.05;  // m
    double rotation = 0.2;      // rad
    double joint = 0.2;         // rad
};

struct PlannerParams {
    StepLimits eta_step;
    double p_ts = 0.5;    // probability of task-space guided exploration
    double p_sg = 0.1;    // probability of sampling a fresh goal root per iteration
    int n_sg = 50;        // goal-root IK samples before the iterations start
    double eps_ar = 0.1;  // duplicate-IK rejection radius (node dist)
    long max_iter = 50000;
    std::uint64_t seed = 0;
    int shortcut_attempts = 200;  // deterministic smoothing budget
    double connect_tol = 1e-3;    // node-equality tolerance for tree connection
    bool full_actuated_steering = false;  // ablation: seed the projection with the interpolant
    int sample_ik_attempts = 8;
    int sample_retries = 200;
    bool collect_timing = false;
};

struct PlannerStats {
    long iterations = 0;
    long steer_calls = 0;
    long projection_calls = 0;
    long chain_projection_calls = 0;
    long collision_checks = 0;
    long nodes_start_tree = 0;
    long nodes_goal_tree = 0;
    long goal_roots = 0;
    double feasible_path_length = 0.0;
    double smoothed_path_length = 0.0;
    // populated only when collect_timing is on
    double wall_time_s = 0.0;
    double projection_time_s = 0.0;
    double chain_projection_time_s = 0.0;
    double collision_time_s = 0.0;
    double smoothing_time_s = 0.0;
    double time_to_feasible_s = 0.0;
};

struct PlannedPath {
    std::vector<PlanNode> nodes;  // start first, goal last
};

struct TimedWaypoint {
    DloConfig dlo;
    VecX q;
    double t = 0.0;
};

struct TimedPlan {
    std::vector<TimedWaypoint> waypoints;
    double dt = 0.2;
};

struct PlannerError : std::runtime_error {
    explicit PlannerError(const std::string& what) : std::runtime_error(what) {}
};

// L-inf style distance metrics over configurations.
double distPositions(const DloConfig& a, const DloConfig& b);             // max feature displacement
double distOrientations(const DloConfig& a, const DloConfig& b);          // max frame angle
double distJoints(const VecX& qa, const VecX& qb);                        // max joint difference
double distSpheres(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

double pathLength(const PlannedPath& path);  // mean feature-point travel

class Planner {
  public:
    Planner(const DualArm& robot, const Scene& scene, const SdfGrid& grid, const DloParams& dlo_params,
            const PlannerParams& params, const CollisionMargins& margins);

    // max(DLO position distance, workspace sphere distance); the task-space
    // variant drops the robot term
    double nodeDist(const PlanNode& a, const SampleNode& b, bool task_space) const;
    double nodeDist(const PlanNode& a, const PlanNode& b) const;
    Vec3 distVector(const PlanNode& a, const SampleNode& b) const;  // [pos; orient; joints]

    // Validates the node invariants (stability residual, chain error,
    // collision, joint limits); none if any fails.
    std::optional<PlanNode> makeNode(const DloConfig& dlo, const VecX& q) const;

    SampleNode randomSampleTask(Rng& rng) const;
    SampleNode randomSampleFull(Rng& rng) const;

    std::optional<PlanNode> constrainedSteer(const PlanNode& from, const SampleNode& to, bool task_space) const;

    std::optional<PlannedPath> plan(const PlanNode& start, const DloConfig& goal_dlo,
                                    const std::optional<VecX>& goal_q, PlannerStats* stats = nullptr);

    PlannedPath shortenPath(const PlannedPath& path, Rng& rng) const;
    TimedPlan timeParametrize(const PlannedPath& path, double dt, double u_max) const;

    const DloParams& dloParams() const { return dlo_params_; }
    const PlannerParams& params() const { return params_; }
    const CollisionChecker& collision() const { return checker_; }
    const DualArm& robot() const { return robot_; }

    // expose one extend step for tests: grows `tree` from tree[from] toward
    // `to`, returns the index of the reached node and whether `to` itself was
    // reached (exact merge)
    struct ExtendResult {
        int reached = -1;
        bool connected = false;
    };
    ExtendResult extend(std::vector<PlanNode>& tree, int from, const SampleNode& to, bool task_space,
                        bool exact_target) const;

    void addRoot(std::vector<PlanNode>& tree, const DloConfig& goal_dlo, int n_sample, Rng& rng) const;

    mutable PlannerStats scratch_stats;  // accumulation target during a query

  private:
    int nearest(const std::vector<PlanNode>& tree, const SampleNode& target, bool task_space) const;
    std::optional<DloConfig> predictDlo(const PlanNode& from, const DloConfig& erp, double* hint) const;

    const DualArm& robot_;
    const Scene& scene_;
    const SdfGrid& grid_;
    DloParams dlo_params_;
    PlannerParams params_;
    CollisionChecker checker_;
    IkSettings ik_;
    double stationarity_tol_;
};

}  // namespace dlo
