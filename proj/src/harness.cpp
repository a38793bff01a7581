#include <dlo/formats.hpp>
#include <dlo/harness.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace dlo {

namespace fs = std::filesystem;

namespace {

std::string resolveRelative(const std::string& base_file, const std::string& ref) {
    const fs::path p(ref);
    if (p.is_absolute()) return ref;
    return (fs::path(base_file).parent_path() / p).string();
}

VecX readJointLine(const LineReader& r, int n) { return r.asVecX(1, n); }

}  // namespace

TaskSpec loadTask(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open task file: " + path);
    LineReader r(f, path);
    readHeader(r, "task");

    TaskSpec t;
    bool have_scene = false, have_robot = false, have_start_q = false, have_start = false, have_goal = false;
    bool ended = false;
    while (r.next()) {
        const std::string& key = r.key();
        if (key == "scene") {
            t.scene_path = resolveRelative(path, r.asString(1));
            have_scene = true;
        } else if (key == "robot") {
            t.robot_path = resolveRelative(path, r.asString(1));
            have_robot = true;
        } else if (key == "params") {
            if (r.asString(1) != "lambda_b" || r.asString(3) != "lambda_t" || r.asString(5) != "rho" ||
                r.asString(7) != "gravity" || r.asString(9) != "m" || r.asString(11) != "length")
                r.fail("malformed params line");
            t.dlo.bend_stiffness = r.asDouble(2);
            t.dlo.twist_stiffness = r.asDouble(4);
            t.dlo.linear_density = r.asDouble(6);
            t.dlo.gravity = r.asDouble(8);
            t.dlo.segment_count = r.asInt(10);
            t.dlo.total_length = r.asDouble(12);
        } else if (key == "margins") {
            t.margins.eps_d = r.asDouble(2);
            t.margins.dlo_radius = r.asDouble(4);
        } else if (key == "seed") {
            t.seed = static_cast<std::uint64_t>(r.asDouble(1));
        } else if (key == "mode") {
            t.mode = r.asString(1);
            if (t.mode != "closed-loop" && t.mode != "open-loop") r.fail("mode must be closed-loop or open-loop");
        } else if (key == "dt") {
            t.dt = r.asDouble(1);
        } else if (key == "u_max") {
            t.u_max = r.asDouble(1);
        } else if (key == "horizon") {
            t.mpc_horizon = r.asInt(1);
        } else if (key == "sdf_cell") {
            t.sdf_cell = r.asDouble(1);
        } else if (key == "beta") {
            t.mpc_weights.beta_x = r.asDouble(1);
            t.mpc_weights.beta_q = r.asDouble(2);
            t.mpc_weights.beta_u = r.asDouble(3);
            t.mpc_weights.beta_a = r.asDouble(4);
        } else if (key == "p_ts") {
            t.planner.p_ts = r.asDouble(1);
        } else if (key == "p_sg") {
            t.planner.p_sg = r.asDouble(1);
        } else if (key == "n_sg") {
            t.planner.n_sg = r.asInt(1);
        } else if (key == "eps_ar") {
            t.planner.eps_ar = r.asDouble(1);
        } else if (key == "max_iter") {
            t.planner.max_iter = r.asInt(1);
        } else if (key == "shortcut_attempts") {
            t.planner.shortcut_attempts = r.asInt(1);
        } else if (key == "eta_step") {
            t.planner.eta_step.translation = r.asDouble(1);
            t.planner.eta_step.rotation = r.asDouble(2);
            t.planner.eta_step.joint = r.asDouble(3);
        } else if (key == "full_actuated_steering") {
            t.planner.full_actuated_steering = r.asInt(1) != 0;
        } else if (key == "perturb") {
            t.perturb_enabled = r.asInt(1) != 0;
            if (t.perturb_enabled && r.tokens().size() > 2) {
                if (r.asString(2) != "twist" || r.asString(5) != "density" || r.asString(8) != "bend")
                    r.fail("malformed perturb line");
                t.perturb.twist_lo = r.asDouble(3);
                t.perturb.twist_hi = r.asDouble(4);
                t.perturb.density_lo = r.asDouble(6);
                t.perturb.density_hi = r.asDouble(7);
                t.perturb.bend_seg_lo = r.asDouble(9);
                t.perturb.bend_seg_hi = r.asDouble(10);
            }
        } else if (key == "start_q") {
            t.start_q = readJointLine(r, static_cast<int>(r.tokens().size()) - 1);
            have_start_q = true;
        } else if (key == "goal_q") {
            t.goal_q = readJointLine(r, static_cast<int>(r.tokens().size()) - 1);
        } else if (key == "begin") {
            const std::string which = r.asString(1);
            LineReader* rp = &r;
            if (which == "start_dlo") {
                t.start_dlo = readDloBlock(*rp);
                have_start = true;
            } else if (which == "goal_dlo") {
                t.goal_dlo = readDloBlock(*rp);
                have_goal = true;
            } else {
                r.fail("unknown block '" + which + "'");
            }
            r.expectKey("end_dlo");
        } else if (key == "end") {
            ended = true;
            break;
        } else {
            r.fail("unknown task entry '" + key + "'");
        }
    }
    if (!ended) throw ParseError(path + ": task file missing 'end'");
    if (!have_scene || !have_robot || !have_start_q || !have_start || !have_goal)
        throw ParseError(path + ": task file is missing required entries");

    t.dlo.validate();
    t.scene = loadScene(t.scene_path);
    t.robot = loadRobot(t.robot_path);
    if (t.start_q.size() != t.robot.dof()) throw ParseError(path + ": start_q dimension mismatch");
    if (t.goal_q && t.goal_q->size() != t.robot.dof()) throw ParseError(path + ": goal_q dimension mismatch");

    // start and goal must already satisfy the stability projection
    const double tol = 1e-8 * t.dlo.bend_stiffness / t.dlo.total_length;
    if (stationarityResidual(t.start_dlo, t.dlo) > tol)
        throw ConfigError(path + ": start DLO configuration is not stable under the task parameters");
    if (stationarityResidual(t.goal_dlo, t.dlo) > tol)
        throw ConfigError(path + ": goal DLO configuration is not stable under the task parameters");
    return t;
}

void saveTask(const std::string& path, const TaskSpec& t) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write task file: " + path);
    writeHeader(f, "task");
    LineWriter w(f);
    w.tok("scene").tok(fs::path(t.scene_path).filename().string()).end();
    w.tok("robot").tok(fs::path(t.robot_path).filename().string()).end();
    w.tok("params").tok("lambda_b").num(t.dlo.bend_stiffness).tok("lambda_t").num(t.dlo.twist_stiffness);
    w.tok("rho").num(t.dlo.linear_density).tok("gravity").num(t.dlo.gravity);
    w.tok("m").num(t.dlo.segment_count).tok("length").num(t.dlo.total_length).end();
    w.tok("margins").tok("eps_d").num(t.margins.eps_d).tok("dlo_radius").num(t.margins.dlo_radius).end();
    w.tok("seed").num(static_cast<int>(t.seed)).end();
    w.tok("mode").tok(t.mode).end();
    w.tok("dt").num(t.dt).end();
    w.tok("u_max").num(t.u_max).end();
    w.tok("horizon").num(t.mpc_horizon).end();
    w.tok("sdf_cell").num(t.sdf_cell).end();
    w.tok("beta").num(t.mpc_weights.beta_x).num(t.mpc_weights.beta_q).num(t.mpc_weights.beta_u)
        .num(t.mpc_weights.beta_a).end();
    w.tok("p_ts").num(t.planner.p_ts).end();
    w.tok("p_sg").num(t.planner.p_sg).end();
    w.tok("n_sg").num(t.planner.n_sg).end();
    w.tok("eps_ar").num(t.planner.eps_ar).end();
    w.tok("max_iter").num(static_cast<int>(t.planner.max_iter)).end();
    w.tok("shortcut_attempts").num(t.planner.shortcut_attempts).end();
    w.tok("eta_step").num(t.planner.eta_step.translation).num(t.planner.eta_step.rotation)
        .num(t.planner.eta_step.joint).end();
    w.tok("full_actuated_steering").num(t.planner.full_actuated_steering ? 1 : 0).end();
    if (t.perturb_enabled) {
        w.tok("perturb").num(1).tok("twist").num(t.perturb.twist_lo).num(t.perturb.twist_hi);
        w.tok("density").num(t.perturb.density_lo).num(t.perturb.density_hi);
        w.tok("bend").num(t.perturb.bend_seg_lo).num(t.perturb.bend_seg_hi).end();
    } else {
        w.tok("perturb").num(0).end();
    }
    w.tok("start_q").vec(t.start_q).end();
    if (t.goal_q) w.tok("goal_q").vec(*t.goal_q).end();
    w.tok("begin").tok("start_dlo").end();
    writeDloBlock(f, t.start_dlo, t.dlo.total_length);
    w.tok("end_dlo").end();
    w.tok("begin").tok("goal_dlo").end();
    writeDloBlock(f, t.goal_dlo, t.dlo.total_length);
    w.tok("end_dlo").end();
    w.tok("end").end();
}

void saveMetrics(const std::string& path, const EpisodeMetrics& m) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write metrics file: " + path);
    writeHeader(f, "metrics");
    LineWriter w(f);
    w.tok("success").num(m.success ? 1 : 0).end();
    w.tok("final_error_m").num(m.final_error).end();
    w.tok("collision_time_s").num(m.collision_time).end();
    w.tok("execution_time_s").num(m.execution_time).end();
    w.tok("replanning_count").num(m.replanning_count).end();
    w.tok("planning_time_s").num(m.planning_time).end();
    w.tok("path_length_feasible_m").num(m.path_length_feasible).end();
    w.tok("path_length_smoothed_m").num(m.path_length_smoothed).end();
    w.tok("failure_cause").tok(m.failure_cause.empty() ? "-" : m.failure_cause).end();
    w.tok("end").end();
}

EpisodeMetrics loadMetrics(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open metrics file: " + path);
    LineReader r(f, path);
    readHeader(r, "metrics");
    EpisodeMetrics m;
    while (r.next() && r.key() != "end") {
        if (r.key() == "success") m.success = r.asInt(1) != 0;
        else if (r.key() == "final_error_m") m.final_error = r.asDouble(1);
        else if (r.key() == "collision_time_s") m.collision_time = r.asDouble(1);
        else if (r.key() == "execution_time_s") m.execution_time = r.asDouble(1);
        else if (r.key() == "replanning_count") m.replanning_count = r.asInt(1);
        else if (r.key() == "planning_time_s") m.planning_time = r.asDouble(1);
        else if (r.key() == "path_length_feasible_m") m.path_length_feasible = r.asDouble(1);
        else if (r.key() == "path_length_smoothed_m") m.path_length_smoothed = r.asDouble(1);
        else if (r.key() == "failure_cause") m.failure_cause = r.asString(1) == "-" ? "" : r.asString(1);
    }
    return m;
}

void savePlannerStats(const std::string& path, const PlannerStats& s) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write stats file: " + path);
    writeHeader(f, "planstats");
    LineWriter w(f);
    w.tok("iterations").num(static_cast<int>(s.iterations)).end();
    w.tok("steer_calls").num(static_cast<int>(s.steer_calls)).end();
    w.tok("projection_calls").num(static_cast<int>(s.projection_calls)).end();
    w.tok("chain_projection_calls").num(static_cast<int>(s.chain_projection_calls)).end();
    w.tok("collision_checks").num(static_cast<int>(s.collision_checks)).end();
    w.tok("nodes_start_tree").num(static_cast<int>(s.nodes_start_tree)).end();
    w.tok("nodes_goal_tree").num(static_cast<int>(s.nodes_goal_tree)).end();
    w.tok("goal_roots").num(static_cast<int>(s.goal_roots)).end();
    w.tok("feasible_path_length_m").num(s.feasible_path_length).end();
    w.tok("smoothed_path_length_m").num(s.smoothed_path_length).end();
    w.tok("wall_time_s").num(s.wall_time_s).end();
    w.tok("time_to_feasible_s").num(s.time_to_feasible_s).end();
    w.tok("projection_time_s").num(s.projection_time_s).end();
    w.tok("chain_projection_time_s").num(s.chain_projection_time_s).end();
    w.tok("collision_time_s").num(s.collision_time_s).end();
    w.tok("smoothing_time_s").num(s.smoothing_time_s).end();
    const double denom = s.wall_time_s > 0 ? s.wall_time_s : 1.0;
    w.tok("projection_time_fraction").num(s.wall_time_s > 0 ? s.projection_time_s / denom : 0.0).end();
    w.tok("end").end();
}

PlannerStats loadPlannerStats(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open stats file: " + path);
    LineReader r(f, path);
    readHeader(r, "planstats");
    PlannerStats s;
    while (r.next() && r.key() != "end") {
        if (r.key() == "iterations") s.iterations = r.asInt(1);
        else if (r.key() == "steer_calls") s.steer_calls = r.asInt(1);
        else if (r.key() == "projection_calls") s.projection_calls = r.asInt(1);
        else if (r.key() == "chain_projection_calls") s.chain_projection_calls = r.asInt(1);
        else if (r.key() == "collision_checks") s.collision_checks = r.asInt(1);
        else if (r.key() == "nodes_start_tree") s.nodes_start_tree = r.asInt(1);
        else if (r.key() == "nodes_goal_tree") s.nodes_goal_tree = r.asInt(1);
        else if (r.key() == "goal_roots") s.goal_roots = r.asInt(1);
        else if (r.key() == "feasible_path_length_m") s.feasible_path_length = r.asDouble(1);
        else if (r.key() == "smoothed_path_length_m") s.smoothed_path_length = r.asDouble(1);
        else if (r.key() == "wall_time_s") s.wall_time_s = r.asDouble(1);
        else if (r.key() == "time_to_feasible_s") s.time_to_feasible_s = r.asDouble(1);
        else if (r.key() == "projection_time_s") s.projection_time_s = r.asDouble(1);
        else if (r.key() == "chain_projection_time_s") s.chain_projection_time_s = r.asDouble(1);
        else if (r.key() == "collision_time_s") s.collision_time_s = r.asDouble(1);
        else if (r.key() == "smoothing_time_s") s.smoothing_time_s = r.asDouble(1);
    }
    return s;
}

void saveTimedPlan(const std::string& path, const TimedPlan& plan, double total_length) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write path file: " + path);
    writeHeader(f, "path");
    LineWriter w(f);
    const int dof = plan.waypoints.empty() ? 0 : static_cast<int>(plan.waypoints[0].q.size());
    w.tok("n").num(static_cast<int>(plan.waypoints.size())).tok("dof").num(dof).tok("dt").num(plan.dt).end();
    for (const auto& wp : plan.waypoints) {
        w.tok("waypoint").tok("t").num(wp.t).end();
        w.tok("q").vec(wp.q).end();
        writeDloBlock(f, wp.dlo, total_length);
    }
    w.tok("end").end();
}

TimedPlan loadTimedPlan(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open path file: " + path);
    LineReader r(f, path);
    readHeader(r, "path");
    r.expectKey("n");
    const int n = r.asInt(1);
    if (r.asString(2) != "dof" || r.asString(4) != "dt") r.fail("malformed path header");
    const int dof = r.asInt(3);
    TimedPlan plan;
    plan.dt = r.asDouble(5);
    plan.waypoints.resize(n);
    for (int i = 0; i < n; ++i) {
        r.expectKey("waypoint");
        plan.waypoints[i].t = r.asDouble(2);
        r.expectKey("q");
        plan.waypoints[i].q = r.asVecX(1, dof);
        plan.waypoints[i].dlo = readDloBlock(r);
    }
    r.expectKey("end");
    return plan;
}

void saveObservations(const std::string& path, const IdObservation& obs, double total_length) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write observation file: " + path);
    writeHeader(f, "observations");
    LineWriter w(f);
    w.tok("n").num(static_cast<int>(obs.snapshots.size())).end();
    for (size_t i = 0; i < obs.snapshots.size(); ++i) {
        w.tok("snapshot").tok("t").num(obs.times[i]).end();
        writeDloBlock(f, obs.snapshots[i], total_length);
    }
    w.tok("end").end();
}

IdObservation loadObservations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open observation file: " + path);
    LineReader r(f, path);
    readHeader(r, "observations");
    r.expectKey("n");
    const int n = r.asInt(1);
    IdObservation obs;
    for (int i = 0; i < n; ++i) {
        r.expectKey("snapshot");
        obs.times.push_back(r.asDouble(2));
        obs.snapshots.push_back(readDloBlock(r));
    }
    r.expectKey("end");
    return obs;
}

void saveIdResult(const std::string& path, const IdResult& res, const DloParams& base) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write identification result: " + path);
    writeHeader(f, "identresult");
    LineWriter w(f);
    w.tok("lambda_b").num(base.bend_stiffness).end();
    w.tok("lambda_t").num(std::exp(res.log_twist)).end();
    w.tok("rho").num(std::exp(res.log_density)).end();
    w.tok("relative_twist").num(std::exp(res.log_twist) / base.bend_stiffness).end();
    w.tok("relative_density").num(std::exp(res.log_density) / base.bend_stiffness).end();
    w.tok("cost").num(res.cost).end();
    w.tok("iterations").num(res.iterations).end();
    for (size_t i = 0; i < res.residuals.size(); ++i)
        w.tok("residual").num(static_cast<int>(i)).num(res.residuals[i]).end();
    w.tok("end").end();
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    a.count = static_cast<int>(values.size());
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / a.count;
    double var = 0.0;
    for (double v : values) var += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(var / a.count);  // population convention
    return a;
}

TaskRuntime::TaskRuntime(TaskSpec task, bool collect_timing, bool use_sdf_cache)
    : task_(std::move(task)), collect_timing_(collect_timing) {
    const auto hash = sceneHash(task_.scene, task_.sdf_cell);
    const std::string cache = task_.scene_path + ".sdfcache";
    if (use_sdf_cache) {
        if (auto cached = loadSdfCache(cache, hash)) {
            grid_ = std::move(*cached);
            return;
        }
    }
    grid_ = buildSdf(task_.scene, task_.sdf_cell);
    if (use_sdf_cache) {
        try {
            saveSdfCache(cache, grid_, hash);
        } catch (const ConfigError&) {
            // cache directory not writable; build each time
        }
    }
}

Planner TaskRuntime::makePlanner(std::uint64_t seed_override) const {
    PlannerParams pp = task_.planner;
    pp.seed = seed_override;
    pp.collect_timing = collect_timing_;
    return Planner(task_.robot, task_.scene, grid_, task_.dlo, pp, task_.margins);
}

std::optional<PlanNode> TaskRuntime::startNode() const {
    Planner planner = makePlanner(task_.seed);
    return planner.makeNode(task_.start_dlo, task_.start_q);
}

std::optional<TimedPlan> TaskRuntime::planOnce(PlannerStats* stats, std::uint64_t seed) const {
    Planner planner = makePlanner(seed);
    auto start = planner.makeNode(task_.start_dlo, task_.start_q);
    if (!start) throw ConfigError("task start state violates the planner invariants");
    auto path = planner.plan(*start, task_.goal_dlo, task_.goal_q, stats);
    if (!path) return std::nullopt;
    return planner.timeParametrize(*path, task_.dt, task_.u_max);
}

namespace {

struct EpisodeLogger {
    std::ofstream f;
    bool enabled = false;
    double total_length = 0.0;

    EpisodeLogger(const std::string& path, int m, int dof, double dt, double total_len) {
        if (path.empty()) return;
        f.open(path);
        if (!f) throw ConfigError("cannot write episode log: " + path);
        enabled = true;
        total_length = total_len;
        writeHeader(f, "episodelog");
        LineWriter w(f);
        w.tok("m").num(m).tok("dof").num(dof).tok("dt").num(dt).end();
    }

    void step(double t, const VecX& q, const VecX& u, const SimEvents& ev, double err_track, double err_goal,
              const DloConfig& dlo) {
        if (!enabled) return;
        LineWriter w(f);
        w.tok("step").tok("t").num(t).end();
        w.tok("q").vec(q).end();
        w.tok("u").vec(u).end();
        w.tok("flags").num(ev.collision ? 1 : 0).num(ev.overstretch ? 1 : 0).num(ev.snap ? 1 : 0).end();
        w.tok("err").num(err_track).num(err_goal).end();
        writeDloBlock(f, dlo, total_length);
    }

    void finish() {
        if (!enabled) return;
        LineWriter w(f);
        w.tok("end").end();
    }
};

double stackedError(const DloConfig& a, const DloConfig& b) {
    double e2 = 0.0;
    for (int k = 1; k <= a.m(); ++k) e2 += (a.vertices[k] - b.vertices[k]).squaredNorm();
    return std::sqrt(e2);
}

double maxFeatureError(const DloConfig& a, const VecX& x_ref) {
    double d2 = 0.0;
    for (int k = 1; k <= a.m(); ++k)
        d2 = std::max(d2, (a.vertices[k] - Vec3(x_ref.segment<3>(3 * (k - 1)))).squaredNorm());
    return std::sqrt(d2);
}

}  // namespace

EpisodeMetrics TaskRuntime::runEpisode(const TimedPlan& plan, const EpisodeOptions& options) const {
    EpisodeMetrics metrics;
    if (plan.waypoints.empty()) {
        metrics.failure_cause = "empty-plan";
        return metrics;
    }
    const int m = task_.dlo.segment_count;
    const int dof = task_.robot.dof();
    const double dt = plan.dt;

    // true parameters: the planner's model, optionally perturbed
    Rng perturb_rng(task_.seed + 0x9e3779b97f4a7c15ull);
    DloParams true_params = task_.dlo;
    if (task_.perturb_enabled) true_params = perturbParams(task_.dlo, task_.perturb, perturb_rng);

    SimState initial;
    initial.q = task_.start_q;
    initial.dlo = task_.start_dlo;
    QuasistaticSim sim(task_.robot, grid_, task_.margins, true_params, initial, task_.u_max);

    EpisodeLogger logger(options.log_path, m, dof, dt, task_.dlo.total_length);
    CollisionChecker planner_checker(task_.robot, grid_, task_.margins);

    const bool closed_loop = options.mode == "closed-loop";
    TimedPlan current = plan;
    MpcController mpc(task_.robot, grid_, task_.margins);
    StuckDetector stuck(2.0, dt);

    // model-derived Jacobian around the (planner-projected) observed state
    DloJacobian jac;
    auto estimateAtCurrent = [&]() -> bool {
        auto settled = projectStable(sim.state().dlo, task_.dlo);
        if (!settled) return false;
        try {
            jac = estimateJacobian(*settled, task_.dlo);
        } catch (const JacobianEstimationError&) {
            return false;
        }
        return true;
    };
    if (closed_loop && !estimateAtCurrent()) {
        metrics.failure_cause = "jacobian-estimation";
        return metrics;
    }

    auto replanFromCurrent = [&]() -> bool {
        if (metrics.replanning_count >= kMaxReplans) return false;
        ++metrics.replanning_count;
        auto settled = projectStable(sim.state().dlo, task_.dlo);
        if (!settled) return false;
        Planner planner = makePlanner(task_.seed + 7919 * static_cast<std::uint64_t>(metrics.replanning_count));
        auto start = planner.makeNode(*settled, sim.state().q);
        if (!start) return false;
        auto path = planner.plan(*start, task_.goal_dlo, task_.goal_q);
        if (!path) return false;
        current = planner.timeParametrize(*path, dt, task_.u_max);
        mpc.reset();
        stuck.clear();
        if (closed_loop && !estimateAtCurrent()) return false;
        return true;
    };

    size_t step_idx = 0;
    int settle_steps = 0;
    bool overstretched = false;
    bool faulted = false;
    std::string fault_cause;
    VecX last_u = VecX::Zero(dof);

    const int max_steps = static_cast<int>(std::lround(kMaxManipulationTime / dt));
    for (int step = 0; step < max_steps; ++step) {
        const size_t n_wp = current.waypoints.size();
        const size_t target_idx = std::min(step_idx + 1, n_wp - 1);
        VecX u = VecX::Zero(dof);

        if (closed_loop) {
            MpcProblem problem;
            problem.horizon = task_.mpc_horizon;
            problem.dt = dt;
            problem.weights = task_.mpc_weights;
            problem.u_max = task_.u_max;
            problem.eps_d = task_.margins.eps_d;
            problem.eps_stretch = 0.01;
            problem.dlo_length = task_.dlo.total_length;
            problem.x0 = sim.state().dlo.featurePoints();
            problem.q0 = sim.state().q;
            problem.u_prev = last_u;
            for (int i = 1; i <= task_.mpc_horizon; ++i) {
                const size_t idx = std::min(step_idx + i, n_wp - 1);
                problem.x_ref.push_back(current.waypoints[idx].dlo.featurePoints());
                problem.q_ref.push_back(current.waypoints[idx].q);
            }
            const ControlOutput out = mpc.solve(problem, jac);
            if (out.status == MpcStatus::Infeasible) {
                if (!replanFromCurrent()) {
                    faulted = true;
                    fault_cause = "mpc-infeasible";
                    break;
                }
                step_idx = 0;
                continue;
            }
            u = out.u0;
        } else {
            // open loop: replay the planned joint path
            const VecX& q_here = current.waypoints[std::min(step_idx, n_wp - 1)].q;
            const VecX& q_next = current.waypoints[target_idx].q;
            u = (q_next - q_here) / dt;
            const double peak = u.cwiseAbs().maxCoeff();
            if (peak > task_.u_max) u *= task_.u_max / peak;
        }

        const DloConfig dlo_before = sim.state().dlo;
        SimEvents events;
        try {
            events = sim.step(u, dt);
        } catch (const SimFault&) {
            faulted = true;
            fault_cause = "simulation-fault";
            break;
        }
        last_u = u;

        if (events.collision) metrics.collision_time += dt;
        if (events.overstretch) {
            overstretched = true;
            if (!closed_loop) break;  // open loop cannot recover
        }

        const double err_track = maxFeatureError(sim.state().dlo, current.waypoints[target_idx].dlo.featurePoints());
        const double err_goal = stackedError(sim.state().dlo, task_.goal_dlo);
        logger.step(sim.state().t, sim.state().q, u, events, err_track, err_goal, sim.state().dlo);

        if (closed_loop) {
            // online Jacobian correction from the observed motion
            VecX twists(12);
            twists.head<6>() =
                task_.robot.left.geometricJacobian(task_.robot.leftJoints(sim.state().q)) * task_.robot.leftJoints(u);
            twists.tail<6>() = task_.robot.right.geometricJacobian(task_.robot.rightJoints(sim.state().q)) *
                               task_.robot.rightJoints(u);
            VecX dx(3 * m);
            std::vector<Vec3> feature_vel(m);
            for (int k = 1; k <= m; ++k) {
                const Vec3 d = sim.state().dlo.vertices[k] - dlo_before.vertices[k];
                dx.segment<3>(3 * (k - 1)) = d;
                feature_vel[k - 1] = d / dt;
            }
            jac = adaptJacobian(jac, twists, dx, dt);

            const double end_speed =
                std::max(twists.head<3>().norm(), twists.segment<3>(6).norm());
            if (detectRapidChange(feature_vel, end_speed)) {
                if (!replanFromCurrent()) {
                    faulted = true;
                    fault_cause = "rapid-change";
                    break;
                }
                step_idx = 0;
                continue;
            }
            stuck.push(u, err_track);
            if (stuck.stuck()) {
                if (!replanFromCurrent()) {
                    faulted = true;
                    fault_cause = "stuck";
                    break;
                }
                step_idx = 0;
                continue;
            }
        }

        if (step_idx + 1 < n_wp) {
            ++step_idx;
        } else {
            // at the last waypoint: run down until converged or give up
            ++settle_steps;
            const bool converged = closed_loop ? (u.cwiseAbs().maxCoeff() < 1e-3) : settle_steps >= 2;
            if (converged || settle_steps > static_cast<int>(10.0 / dt)) break;
        }
    }

    logger.finish();
    metrics.execution_time = sim.state().t;
    metrics.final_error = stackedError(sim.state().dlo, task_.goal_dlo);
    const bool in_time = metrics.execution_time <= kMaxManipulationTime + 1e-9;
    metrics.success = !faulted && !overstretched && in_time && metrics.final_error < kSuccessErrorThreshold;
    if (!metrics.success) {
        if (!fault_cause.empty()) metrics.failure_cause = fault_cause;
        else if (overstretched) metrics.failure_cause = "overstretch";
        else if (!in_time) metrics.failure_cause = "timeout";
        else metrics.failure_cause = "final-error";
    }
    return metrics;
}

IdObservation TaskRuntime::collectIdentificationData(int max_snapshots, std::ostream* log) const {
    Rng perturb_rng(task_.seed + 0x9e3779b97f4a7c15ull);
    DloParams true_params = task_.dlo;
    if (task_.perturb_enabled) true_params = perturbParams(task_.dlo, task_.perturb, perturb_rng);

    SimState initial;
    initial.q = task_.start_q;
    initial.dlo = task_.start_dlo;
    QuasistaticSim sim(task_.robot, grid_, task_.margins, true_params, initial, task_.u_max);

    const IdTrajectory traj =
        designedTrajectory(task_.robot, task_.start_q, sim.state().dlo, task_.dlo.total_length, task_.dt, task_.u_max);

    IdObservation obs;
    size_t snap = 0;
    double t = 0.0;
    for (const auto& u : traj.commands) {
        sim.step(u, traj.dt);
        t += traj.dt;
        while (snap < traj.snapshot_times.size() && t + 1e-9 >= traj.snapshot_times[snap]) {
            obs.snapshots.push_back(sim.state().dlo);
            obs.times.push_back(t);
            ++snap;
            if (max_snapshots > 0 && static_cast<int>(obs.snapshots.size()) >= max_snapshots) return obs;
        }
    }
    if (log) *log << "collected " << obs.snapshots.size() << " snapshots over " << t << " s\n";
    return obs;
}

}  // namespace dlo
