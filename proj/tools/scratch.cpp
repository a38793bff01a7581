// Development scratch: inspect the stubborn time-parametrization hop.
#include <dlo/planner.hpp>
#include <cstdio>

using namespace dlo;

// appended: manual refinement trace of edge 6
static void traceEdge(const DualArm& robot, const Planner& planner, const DloParams& params,
                      const PlanNode& a, const PlanNode& b) {
    std::printf("--- trace edge: dq=%.4f\n", distJoints(a.q, b.q));
    struct S { double eta; VecX q; };
    std::vector<S> samples{{0.0, a.q}, {1.0, b.q}};
    double hint = boundaryTwist(a.dlo);
    for (int round = 0; round < 6; ++round) {
        bool refined = false;
        for (size_t i = 0; i + 1 < samples.size(); ++i) {
            double hop = distJoints(samples[i].q, samples[i + 1].q);
            if (hop <= 0.1) continue;
            double eta_mid = 0.5 * (samples[i].eta + samples[i + 1].eta);
            VecX seed = 0.5 * (samples[i].q + samples[i + 1].q);
            DloConfig erp = dloErp(a.dlo, b.dlo, eta_mid);
            auto stable = projectStable(erp, params, {}, nullptr, hint);
            if (!stable) { std::printf("  eta=%.3f projection FAILED\n", eta_mid); continue; }
            const Iso3 lt = gripPoseToIso(stable->leftEndPose());
            const Iso3 rt = gripPoseToIso(stable->rightEndPose());
            std::printf("  eta=%.3f seed_fk_err=%.2e", eta_mid, robot.chainError(seed, lt, rt));
            auto q_proj = robot.projectClosedChain(seed, lt, rt);
            if (!q_proj) { std::printf(" chain FAILED\n"); continue; }
            std::printf(" moved=%.4f hops %.4f/%.4f\n", distJoints(seed, *q_proj),
                        distJoints(samples[i].q, *q_proj), distJoints(*q_proj, samples[i + 1].q));
            samples.insert(samples.begin() + i + 1, {eta_mid, *q_proj});
            refined = true;
            ++i;
        }
        if (!refined) break;
    }
    (void)planner;
}

int main() {
    DualArm robot = makeDefaultRobot();
    DloParams params;
    params.twist_stiffness = 0.7;
    params.linear_density = 0.12;
    Scene scene;
    scene.workspace.lo = Vec3(-0.55, -0.55, 0.0);
    scene.workspace.hi = Vec3(0.55, 0.55, 0.9);
    SdfGrid grid = buildSdf(scene, 0.02);
    PlannerParams pp;
    pp.seed = 77;
    CollisionMargins margins;
    Planner planner(robot, scene, grid, params, pp, margins);

    Rng rng(41);
    auto arcNode = [&](const Vec3& center) -> std::optional<PlanNode> {
        DloConfig arc = makeArcConfig(params, center, Vec3(1, 0, 0), Vec3(0, 1, 0), M_PI);
        auto stable = projectStable(arc, params);
        if (!stable) return std::nullopt;
        for (int attempt = 0; attempt < 30; ++attempt) {
            auto ql = robot.left.ikRandom(gripPoseToIso(stable->leftEndPose()), 5, rng);
            auto qr = robot.right.ikRandom(gripPoseToIso(stable->rightEndPose()), 5, rng);
            if (!ql || !qr) continue;
            VecX q(12);
            q << *ql, *qr;
            auto node = planner.makeNode(*stable, q);
            if (node) return node;
        }
        return std::nullopt;
    };
    auto start = arcNode(Vec3(-0.2, 0, 0.45));
    auto goal = arcNode(Vec3(0.15, 0, 0.5));
    auto path = planner.plan(*start, goal->dlo, goal->q);
    std::printf("path nodes: %zu\n", path->nodes.size());
    for (size_t i = 0; i + 1 < path->nodes.size(); ++i) {
        std::printf("edge %zu: dq=%.3f dx=%.3f\n", i, distJoints(path->nodes[i].q, path->nodes[i + 1].q),
                    distPositions(path->nodes[i].dlo, path->nodes[i + 1].dlo));
    }
    traceEdge(robot, planner, params, path->nodes[6], path->nodes[7]);
    auto plan = planner.timeParametrize(*path, 0.2, 0.5);
    for (size_t i = 0; i + 1 < plan.waypoints.size(); ++i) {
        double dq = distJoints(plan.waypoints[i].q, plan.waypoints[i + 1].q);
        if (dq > 0.1) {
            std::printf("hop %zu: dq=%.4f  q_i=[", i, dq);
            for (int j = 0; j < 12; ++j) std::printf("%.3f ", plan.waypoints[i].q[j]);
            std::printf("]\n          q_i1=[");
            for (int j = 0; j < 12; ++j) std::printf("%.3f ", plan.waypoints[i + 1].q[j]);
            std::printf("]\n");
        }
    }
    return 0;
}
