#pragma once

#include <dlo/collision.hpp>
#include <dlo/identification.hpp>
#include <dlo/mpc.hpp>
#include <dlo/planner.hpp>
#include <dlo/sim.hpp>

#include <iosfwd>
#include <optional>
#include <string>

namespace dlo {

// A manipulation task: scene and robot references, the planner's DLO model,
// start and goal states, seeds, and mode switches (including the ablation
// toggles exposed on the command line).
struct TaskSpec {
    std::string scene_path;
    std::string robot_path;
    DloParams dlo;
    CollisionMargins margins;
    PlannerParams planner;
    MpcWeights mpc_weights;
    int mpc_horizon = 3;
    double dt = 0.2;
    double u_max = 0.5;
    double sdf_cell = 0.01;
    std::string mode = "closed-loop";  // or "open-loop"
    bool perturb_enabled = false;
    PerturbSpec perturb;
    std::uint64_t seed = 0;

    DloConfig start_dlo, goal_dlo;
    VecX start_q;
    std::optional<VecX> goal_q;

    // resolved at load time
    Scene scene;
    DualArm robot;
};

TaskSpec loadTask(const std::string& path);
void saveTask(const std::string& path, const TaskSpec& task);

struct EpisodeMetrics {
    bool success = false;
    double final_error = 0.0;     // m, stacked feature L2
    double collision_time = 0.0;  // s
    double execution_time = 0.0;  // s
    int replanning_count = 0;
    double planning_time = 0.0;  // s, wall (zero unless timing was enabled)
    double path_length_feasible = 0.0;
    double path_length_smoothed = 0.0;
    std::string failure_cause = "";  // empty on success
};

void saveMetrics(const std::string& path, const EpisodeMetrics& m);
EpisodeMetrics loadMetrics(const std::string& path);

void savePlannerStats(const std::string& path, const PlannerStats& s);
PlannerStats loadPlannerStats(const std::string& path);

void saveTimedPlan(const std::string& path, const TimedPlan& plan, double total_length);
TimedPlan loadTimedPlan(const std::string& path);

void saveObservations(const std::string& path, const IdObservation& obs, double total_length);
IdObservation loadObservations(const std::string& path);

void saveIdResult(const std::string& path, const IdResult& r, const DloParams& base);

// Success window and thresholds of the evaluation protocol.
inline constexpr double kSuccessErrorThreshold = 0.05;  // m
inline constexpr double kMaxManipulationTime = 180.0;   // s
inline constexpr int kMaxReplans = 3;

struct EpisodeOptions {
    std::string mode = "closed-loop";
    bool collect_timing = false;
    std::string log_path;  // empty = no step log
};

// Shared runtime for one task: scene, SDF (built or loaded from a sibling
// cache), robot, planner construction.
class TaskRuntime {
  public:
    explicit TaskRuntime(TaskSpec task, bool collect_timing = false, bool use_sdf_cache = true);

    const TaskSpec& task() const { return task_; }
    const SdfGrid& grid() const { return grid_; }
    const DualArm& robot() const { return task_.robot; }
    Planner makePlanner(std::uint64_t seed_override) const;

    std::optional<PlanNode> startNode() const;

    // plan + time parametrization; throws on invalid input, nullopt on
    // planning failure
    std::optional<TimedPlan> planOnce(PlannerStats* stats, std::uint64_t seed) const;

    EpisodeMetrics runEpisode(const TimedPlan& plan, const EpisodeOptions& options) const;

    IdObservation collectIdentificationData(int max_snapshots, std::ostream* log = nullptr) const;

  private:
    TaskSpec task_;
    SdfGrid grid_;
    bool collect_timing_ = false;
};

// Aggregation used by the report verb: population mean and standard deviation.
struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};
Aggregate aggregate(const std::vector<double>& values);

}  // namespace dlo
