#include <dlo/planner.hpp>

#include <chrono>

namespace dlo {

namespace {

using Clock = std::chrono::steady_clock;

struct ScopedTimer {
    ScopedTimer(bool enabled, double* sink) : enabled_(enabled), sink_(sink) {
        if (enabled_) t0_ = Clock::now();
    }
    ~ScopedTimer() {
        if (enabled_ && sink_) *sink_ += std::chrono::duration<double>(Clock::now() - t0_).count();
    }
    bool enabled_;
    double* sink_;
    Clock::time_point t0_;
};

MaterialFrame verticalFrame(const Vec3& tangent) {
    // end frames of sampled configurations carry a vertically upward m2
    Vec3 t = tangent;
    t.z() = 0.0;
    if (t.norm() < 1e-12) t = Vec3::UnitX();
    t.normalize();
    const Vec3 m2 = Vec3::UnitZ();
    const Vec3 m1 = m2.cross(t);
    return {t, m1, m2};
}

}  // namespace

double distPositions(const DloConfig& a, const DloConfig& b) {
    const int m = a.m();
    double d2 = 0.0;
    for (int k = 1; k <= m; ++k) d2 = std::max(d2, (a.vertices[k] - b.vertices[k]).squaredNorm());
    return std::sqrt(d2);
}

double distOrientations(const DloConfig& a, const DloConfig& b) {
    double d = 0.0;
    for (size_t k = 0; k < a.frames.size(); ++k) d = std::max(d, frameAngle(a.frames[k], b.frames[k]));
    return d;
}

double distJoints(const VecX& qa, const VecX& qb) { return (qa - qb).cwiseAbs().maxCoeff(); }

double distSpheres(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double d2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d2 = std::max(d2, (a[i] - b[i]).squaredNorm());
    return std::sqrt(d2);
}

double pathLength(const PlannedPath& path) {
    if (path.nodes.size() < 2) return 0.0;
    const int m = path.nodes.front().dlo.m();
    double total = 0.0;
    for (size_t w = 0; w + 1 < path.nodes.size(); ++w) {
        for (int k = 1; k <= m; ++k)
            total += (path.nodes[w + 1].dlo.vertices[k] - path.nodes[w].dlo.vertices[k]).norm();
    }
    return total / m;
}

Planner::Planner(const DualArm& robot, const Scene& scene, const SdfGrid& grid, const DloParams& dlo_params,
                 const PlannerParams& params, const CollisionMargins& margins)
    : robot_(robot), scene_(scene), grid_(grid), dlo_params_(dlo_params), params_(params),
      checker_(robot, grid, margins) {
    dlo_params_.validate();
    stationarity_tol_ = 1e-8 * dlo_params_.bend_stiffness / dlo_params_.total_length;
}

double Planner::nodeDist(const PlanNode& a, const SampleNode& b, bool task_space) const {
    const double dp = distPositions(a.dlo, b.dlo);
    if (task_space || !b.q) return dp;
    return std::max(dp, distSpheres(a.sphere_centers, b.sphere_centers));
}

double Planner::nodeDist(const PlanNode& a, const PlanNode& b) const {
    return std::max(distPositions(a.dlo, b.dlo), distSpheres(a.sphere_centers, b.sphere_centers));
}

Vec3 Planner::distVector(const PlanNode& a, const SampleNode& b) const {
    return Vec3(distPositions(a.dlo, b.dlo), distOrientations(a.dlo, b.dlo),
                b.q ? distJoints(a.q, *b.q) : 0.0);
}

std::optional<PlanNode> Planner::makeNode(const DloConfig& dlo, const VecX& q) const {
    if (q.size() != robot_.dof()) return std::nullopt;
    if (!robot_.withinLimits(q)) return std::nullopt;
    if (stationarityResidual(dlo, dlo_params_) > stationarity_tol_) return std::nullopt;
    const Iso3 lt = gripPoseToIso(dlo.leftEndPose());
    const Iso3 rt = gripPoseToIso(dlo.rightEndPose());
    const auto el = poseError(lt, robot_.left.eePose(robot_.leftJoints(q)));
    const auto er = poseError(rt, robot_.right.eePose(robot_.rightJoints(q)));
    if (el.head<3>().norm() > ik_.pos_tolerance || el.tail<3>().norm() > ik_.ori_tolerance) return std::nullopt;
    if (er.head<3>().norm() > ik_.pos_tolerance || er.tail<3>().norm() > ik_.ori_tolerance) return std::nullopt;
    PlanNode node{dlo, q, robot_.sphereCenters(q), -1, 0.0};
    if (!checker_.nodeCollisionFree(dlo, q, node.sphere_centers)) return std::nullopt;
    return node;
}

SampleNode Planner::randomSampleTask(Rng& rng) const {
    const int m = dlo_params_.segment_count;
    const double step = dlo_params_.edgeLength();
    const Aabb& ws = scene_.workspace;
    const Vec3 margin = 0.05 * (ws.hi - ws.lo);
    std::uniform_real_distribution<double> ux(ws.lo.x() + margin.x(), ws.hi.x() - margin.x());
    std::uniform_real_distribution<double> uy(ws.lo.y() + margin.y(), ws.hi.y() - margin.y());
    std::uniform_real_distribution<double> uz(ws.lo.z() + margin.z(), ws.hi.z() - margin.z());
    std::uniform_real_distribution<double> uang(0.0, 2.0 * M_PI);
    std::uniform_real_distribution<double> uu(-1.0, 1.0);

    // 3-segment broken line of total length L: pick the two corner indices,
    // horizontal end directions, a free middle direction
    for (int attempt = 0; attempt < 64; ++attempt) {
        const int edges = m - 1;
        std::uniform_int_distribution<int> cut1(2, edges - 4);
        const int n1 = cut1(rng);
        std::uniform_int_distribution<int> cut2(2, edges - n1 - 2);
        const int n2 = cut2(rng);

        const double a1 = uang(rng), a3 = uang(rng);
        const Vec3 d1(std::cos(a1), std::sin(a1), 0.0);
        const Vec3 d3(std::cos(a3), std::sin(a3), 0.0);
        Vec3 d2(uu(rng), uu(rng), uu(rng));
        if (d2.norm() < 1e-6) continue;
        d2.normalize();
        // keep corner turns away from the antiparallel singularity
        if (d1.dot(d2) < -0.9 || d2.dot(d3) < -0.9) continue;

        const Vec3 p0(ux(rng), uy(rng), uz(rng));
        std::vector<Vec3> pts(m);
        Vec3 cur = p0;
        pts[0] = cur;
        for (int k = 1; k < m; ++k) {
            const Vec3& dir = k <= n1 ? d1 : (k <= n1 + n2 ? d2 : d3);
            cur += step * dir;
            pts[k] = cur;
        }
        bool inside = true;
        for (const auto& p : pts)
            if (!ws.contains(p)) inside = false;
        if (!inside) continue;

        PerceptibleConfig pc;
        pc.centerline = pts;
        pc.left_frame = verticalFrame(d1);
        pc.right_frame = verticalFrame(d3);
        SampleNode sample;
        sample.dlo = configFromPerceptible(pc, uniformRestLengths(m, dlo_params_.total_length), 0.0);
        return sample;
    }
    throw PlannerError("task-space sampling starved (workspace too small for the rod?)");
}

SampleNode Planner::randomSampleFull(Rng& rng) const {
    for (int attempt = 0; attempt < params_.sample_retries; ++attempt) {
        SampleNode sample = randomSampleTask(rng);
        const Iso3 lt = gripPoseToIso(sample.dlo.leftEndPose());
        const Iso3 rt = gripPoseToIso(sample.dlo.rightEndPose());
        auto ql = robot_.left.ikRandom(lt, params_.sample_ik_attempts, rng, ik_);
        if (!ql) continue;
        auto qr = robot_.right.ikRandom(rt, params_.sample_ik_attempts, rng, ik_);
        if (!qr) continue;
        VecX q(robot_.dof());
        q << *ql, *qr;
        sample.q = q;
        sample.sphere_centers = robot_.sphereCenters(q);
        return sample;
    }
    throw PlannerError("full-space sampling starved: no IK solutions for sampled end poses");
}

std::optional<DloConfig> Planner::predictDlo(const PlanNode& from, const DloConfig& erp, double* hint) const {
    ProjectionSettings settings;
    settings.initial_penalty_weight = from.penalty_hint;
    ProjectionStats pstats;
    std::optional<DloConfig> out;
    {
        ScopedTimer t(params_.collect_timing, &scratch_stats.projection_time_s);
        if (params_.full_actuated_steering) {
            out = projectStable(erp, dlo_params_, settings, &pstats, boundaryTwist(from.dlo));
        } else {
            out = forwardPred(from.dlo, erp.leftEndPose(), erp.rightEndPose(), dlo_params_, settings, &pstats);
        }
    }
    ++scratch_stats.projection_calls;
    if (hint) *hint = pstats.final_penalty_weight;
    return out;
}

std::optional<PlanNode> Planner::constrainedSteer(const PlanNode& from, const SampleNode& to,
                                                  bool task_space) const {
    ++scratch_stats.steer_calls;
    const Vec3 d = distVector(from, to);
    if (d.maxCoeff() < 1e-9) {
        PlanNode copy = from;
        copy.parent = -1;
        return copy;
    }
    double ratio = 1.0;
    const StepLimits& eta = params_.eta_step;
    if (d[0] > 1e-12) ratio = std::min(ratio, eta.translation / d[0]);
    if (d[1] > 1e-12) ratio = std::min(ratio, eta.rotation / d[1]);
    if (d[2] > 1e-12) ratio = std::min(ratio, eta.joint / d[2]);

    const DloConfig erp = dloErp(from.dlo, to.dlo, ratio);
    const VecX q_seed = (!task_space && to.q) ? VecX(from.q + ratio * (*to.q - from.q)) : from.q;

    std::optional<VecX> q_steer;
    {
        ScopedTimer t(params_.collect_timing, &scratch_stats.chain_projection_time_s);
        q_steer = robot_.projectClosedChain(q_seed, gripPoseToIso(erp.leftEndPose()),
                                            gripPoseToIso(erp.rightEndPose()), ik_);
    }
    ++scratch_stats.chain_projection_calls;
    if (!q_steer) return std::nullopt;

    double hint = from.penalty_hint;
    auto dlo_steer = predictDlo(from, erp, &hint);
    if (!dlo_steer) return std::nullopt;

    PlanNode node{std::move(*dlo_steer), *q_steer, robot_.sphereCenters(*q_steer), -1, hint};
    bool free = false;
    {
        ScopedTimer t(params_.collect_timing, &scratch_stats.collision_time_s);
        free = checker_.nodeCollisionFree(node.dlo, node.q, node.sphere_centers);
    }
    ++scratch_stats.collision_checks;
    if (!free) return std::nullopt;
    return node;
}

Planner::ExtendResult Planner::extend(std::vector<PlanNode>& tree, int from, const SampleNode& to,
                                      bool task_space, bool exact_target) const {
    int last = from;
    const StepLimits& eta = params_.eta_step;
    // progress must be measurable, or under-actuated steering can creep
    // asymptotically toward an unreachable fixed point
    const double min_progress = 1e-6;
    const int max_steps = 2000;
    for (int step = 0; step < max_steps; ++step) {
        const double d_last = nodeDist(tree[last], to, task_space);
        if (exact_target && d_last <= params_.connect_tol) {
            if (d_last == 0.0) return {last, true};
            // exact node merge: one full-ratio steer onto the target, then
            // snap to the target's content so the trees share the node
            auto stepped = constrainedSteer(tree[last], to, task_space);
            if (!stepped || nodeDist(*stepped, to, false) > params_.connect_tol) return {last, false};
            const Vec3 motion = distVector(tree[last], to);
            if (!(motion[0] <= 2 * eta.translation && motion[1] <= 2 * eta.rotation &&
                  motion[2] <= 2 * eta.joint))
                return {last, false};
            PlanNode merged{to.dlo, *to.q, to.sphere_centers, last, stepped->penalty_hint};
            tree.push_back(std::move(merged));
            return {static_cast<int>(tree.size()) - 1, true};
        }

        auto stepped = constrainedSteer(tree[last], to, task_space);
        if (!stepped) return {last, false};

        const Vec3 motion = distVector(tree[last], SampleNode{stepped->dlo, stepped->q, stepped->sphere_centers});
        if (!(motion[0] <= 2 * eta.translation && motion[1] <= 2 * eta.rotation && motion[2] <= 2 * eta.joint))
            return {last, false};
        const double d_new = nodeDist(*stepped, to, task_space);
        if (d_new >= d_last - min_progress) return {last, false};

        stepped->parent = last;
        tree.push_back(std::move(*stepped));
        last = static_cast<int>(tree.size()) - 1;
    }
    return {last, false};
}

void Planner::addRoot(std::vector<PlanNode>& tree, const DloConfig& goal_dlo, int n_sample, Rng& rng) const {
    const Iso3 lt = gripPoseToIso(goal_dlo.leftEndPose());
    const Iso3 rt = gripPoseToIso(goal_dlo.rightEndPose());
    for (int i = 0; i < n_sample; ++i) {
        auto ql = robot_.left.ikRandom(lt, 1, rng, ik_);
        if (!ql) continue;
        auto qr = robot_.right.ikRandom(rt, 1, rng, ik_);
        if (!qr) continue;
        VecX q(robot_.dof());
        q << *ql, *qr;
        auto node = makeNode(goal_dlo, q);
        if (!node) continue;
        // discard previously sampled IKs
        double nearest_d = std::numeric_limits<double>::infinity();
        for (const auto& existing : tree) nearest_d = std::min(nearest_d, nodeDist(existing, *node));
        if (nearest_d <= params_.eps_ar) continue;
        node->parent = -1;
        tree.push_back(std::move(*node));
        ++scratch_stats.goal_roots;
    }
}

int Planner::nearest(const std::vector<PlanNode>& tree, const SampleNode& target, bool task_space) const {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < tree.size(); ++i) {
        const double d = nodeDist(tree[i], target, task_space);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

std::optional<PlannedPath> Planner::plan(const PlanNode& start, const DloConfig& goal_dlo,
                                         const std::optional<VecX>& goal_q, PlannerStats* stats) {
    scratch_stats = {};
    ScopedTimer total_timer(params_.collect_timing, &scratch_stats.wall_time_s);

    auto start_node = makeNode(start.dlo, start.q);
    if (!start_node) throw ConfigError("start node violates the planner invariants");
    if (stationarityResidual(goal_dlo, dlo_params_) > stationarity_tol_)
        throw ConfigError("goal DLO configuration is not a stable fixed point");

    Rng rng(params_.seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::vector<PlanNode> ta, tb;
    ta.reserve(1024);
    tb.reserve(1024);
    ta.push_back(*start_node);
    bool a_holds_start = true;

    if (goal_q) {
        auto goal_node = makeNode(goal_dlo, *goal_q);
        if (!goal_node) throw ConfigError("goal joint configuration violates the planner invariants");
        tb.push_back(*goal_node);
    } else {
        addRoot(tb, goal_dlo, params_.n_sg, rng);
    }

    std::optional<PlannedPath> result;
    for (long i = 0; i < params_.max_iter && !result; ++i) {
        scratch_stats.iterations = i + 1;

        auto& goal_tree = a_holds_start ? tb : ta;
        if (!goal_q && (goal_tree.empty() || coin(rng) < params_.p_sg)) addRoot(goal_tree, goal_dlo, 1, rng);
        if (ta.empty() || tb.empty()) continue;  // still waiting for a goal root

        const bool task_space = coin(rng) < params_.p_ts;
        const SampleNode rand_node = task_space ? randomSampleTask(rng) : randomSampleFull(rng);

        const int near_a = nearest(ta, rand_node, task_space);
        const auto reach_a = extend(ta, near_a, rand_node, task_space, false);

        SampleNode bridge{ta[reach_a.reached].dlo, ta[reach_a.reached].q,
                          ta[reach_a.reached].sphere_centers};
        const int near_b = nearest(tb, bridge, false);
        const auto reach_b = extend(tb, near_b, bridge, false, true);

        if (reach_b.connected) {
            PlannedPath path;
            auto chainDown = [](const std::vector<PlanNode>& tree, int idx) {
                std::vector<PlanNode> out;
                for (int k = idx; k >= 0; k = tree[k].parent) out.push_back(tree[k]);
                std::reverse(out.begin(), out.end());
                return out;  // root .. idx
            };
            auto chainUp = [](const std::vector<PlanNode>& tree, int idx) {
                std::vector<PlanNode> out;
                for (int k = idx; k >= 0; k = tree[k].parent) out.push_back(tree[k]);
                return out;  // idx .. root
            };
            if (a_holds_start) {
                path.nodes = chainDown(ta, reach_a.reached);
                const int after = tb[reach_b.reached].parent;
                if (after >= 0) {
                    auto rest = chainUp(tb, after);
                    path.nodes.insert(path.nodes.end(), rest.begin(), rest.end());
                }
            } else {
                path.nodes = chainDown(tb, reach_b.reached);
                const int after = ta[reach_a.reached].parent;
                if (after >= 0) {
                    auto rest = chainUp(ta, after);
                    path.nodes.insert(path.nodes.end(), rest.begin(), rest.end());
                }
            }
            result = std::move(path);
            break;
        }

        // encourage the smaller tree to explore
        if (ta.size() > tb.size()) {
            std::swap(ta, tb);
            a_holds_start = !a_holds_start;
        }
    }

    scratch_stats.nodes_start_tree = static_cast<long>((a_holds_start ? ta : tb).size());
    scratch_stats.nodes_goal_tree = static_cast<long>((a_holds_start ? tb : ta).size());

    if (result) {
        scratch_stats.feasible_path_length = pathLength(*result);
        if (params_.collect_timing) scratch_stats.time_to_feasible_s = scratch_stats.wall_time_s;
        {
            ScopedTimer t(params_.collect_timing, &scratch_stats.smoothing_time_s);
            *result = shortenPath(*result, rng);
        }
        scratch_stats.smoothed_path_length = pathLength(*result);
    }
    if (stats) {
        // the total timer is still running; close it out by scope exit order
        PlannerStats snapshot = scratch_stats;
        if (params_.collect_timing)
            snapshot.wall_time_s = std::chrono::duration<double>(Clock::now() - total_timer.t0_).count();
        *stats = snapshot;
    }
    return result;
}

PlannedPath Planner::shortenPath(const PlannedPath& path, Rng& rng) const {
    PlannedPath best = path;
    if (best.nodes.size() < 3) return best;
    double best_len = pathLength(best);

    for (int attempt = 0; attempt < params_.shortcut_attempts; ++attempt) {
        if (best.nodes.size() < 3) break;
        std::uniform_int_distribution<size_t> pick_i(0, best.nodes.size() - 3);
        const size_t i = pick_i(rng);
        std::uniform_int_distribution<size_t> pick_j(i + 2, best.nodes.size() - 1);
        const size_t j = pick_j(rng);

        // steer a scratch chain from node i directly toward node j
        std::vector<PlanNode> scratch;
        scratch.push_back(best.nodes[i]);
        scratch[0].parent = -1;
        SampleNode target{best.nodes[j].dlo, best.nodes[j].q, best.nodes[j].sphere_centers};
        const auto res = extend(scratch, 0, target, false, true);
        if (!res.connected) continue;

        PlannedPath candidate;
        candidate.nodes.assign(best.nodes.begin(), best.nodes.begin() + i);
        candidate.nodes.insert(candidate.nodes.end(), scratch.begin(), scratch.end());
        candidate.nodes.insert(candidate.nodes.end(), best.nodes.begin() + j + 1, best.nodes.end());

        const double len = pathLength(candidate);
        if (len < best_len - 1e-9) {
            best = std::move(candidate);
            best_len = len;
        }
    }
    return best;
}

TimedPlan Planner::timeParametrize(const PlannedPath& path, double dt, double u_max) const {
    TimedPlan plan;
    plan.dt = dt;
    if (path.nodes.empty()) return plan;

    struct Sample {
        double eta;
        DloConfig dlo;
        VecX q;
    };

    plan.waypoints.push_back({path.nodes[0].dlo, path.nodes[0].q, 0.0});
    const double cap = u_max * dt;
    const double u_max_cap_ = cap;

    for (size_t w = 0; w + 1 < path.nodes.size(); ++w) {
        const PlanNode& a = path.nodes[w];
        const PlanNode& b = path.nodes[w + 1];
        double hint = boundaryTwist(a.dlo);
        double penalty_hint = a.penalty_hint;

        auto makeSample = [&](double eta, const VecX& q_seed) {
            Sample s;
            s.eta = eta;
            DloConfig erp = dloErp(a.dlo, b.dlo, eta);
            ProjectionSettings settings;
            settings.initial_penalty_weight = penalty_hint;
            ProjectionStats pstats;
            auto stable = projectStable(erp, dlo_params_, settings, &pstats, hint);
            if (stable) {
                penalty_hint = pstats.final_penalty_weight;
                auto q_proj = robot_.projectClosedChain(q_seed, gripPoseToIso(stable->leftEndPose()),
                                                        gripPoseToIso(stable->rightEndPose()), ik_);
                // a projection that leaps from the seed is flipping between
                // chain branches; keep the joint-space bisection value there
                // (its end poses stay within millimeters) so hops keep halving
                s.q = (q_proj && distJoints(*q_proj, q_seed) <= 0.5 * u_max_cap_) ? *q_proj : q_seed;
                s.dlo = std::move(*stable);
            } else {
                // reference-only fallback; steering between valid nodes makes this rare
                s.dlo = std::move(erp);
                s.q = q_seed;
            }
            return s;
        };

        std::vector<Sample> samples;
        samples.push_back({0.0, a.dlo, a.q});
        samples.push_back({1.0, b.dlo, b.q});
        // bisect until every hop respects the joint-velocity cap; seeding the
        // chain projection with the neighbor average keeps the branch continuous
        for (int round = 0; round < 12 && samples.size() < 96; ++round) {
            bool refined = false;
            for (size_t i = 0; i + 1 < samples.size(); ++i) {
                if (distJoints(samples[i].q, samples[i + 1].q) <= cap) continue;
                const double eta_mid = 0.5 * (samples[i].eta + samples[i + 1].eta);
                const VecX q_seed = 0.5 * (samples[i].q + samples[i + 1].q);
                samples.insert(samples.begin() + i + 1, makeSample(eta_mid, q_seed));
                refined = true;
                ++i;
            }
            if (!refined) break;
        }
        for (size_t i = 1; i < samples.size(); ++i) {
            plan.waypoints.push_back(
                {std::move(samples[i].dlo), std::move(samples[i].q), dt * static_cast<double>(plan.waypoints.size())});
        }
    }
    return plan;
}

}  // namespace dlo
