#include <dlo/identification.hpp>

namespace dlo {

namespace {

Iso3 rotateAboutTangent(const Iso3& pose, double angle) {
    const Vec3 axis = pose.rotation().col(0);  // frame tangent
    Iso3 out = pose;
    out.linear() = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * pose.rotation();
    return out;
}

double poseGap(const Iso3& a, const Iso3& b) {
    return std::max((a.translation() - b.translation()).norm(), 0.25 * rotationAngle(a.rotation(), b.rotation()));
}

Iso3 interpPose(const Iso3& a, const Iso3& b, double s) {
    Iso3 out = Iso3::Identity();
    out.translation() = (1 - s) * a.translation() + s * b.translation();
    Quat qa(a.rotation()), qb(b.rotation());
    out.linear() = qa.slerp(s, qb).toRotationMatrix();
    return out;
}

}  // namespace

IdTrajectory designedTrajectory(const DualArm& robot, const VecX& start_q, const DloConfig& dlo_start,
                                double total_length, double dt, double u_max) {
    const double L = total_length;
    const Iso3 l0 = gripPoseToIso(dlo_start.leftEndPose());
    const Iso3 r0 = gripPoseToIso(dlo_start.rightEndPose());
    const Vec3 mid = 0.5 * (l0.translation() + r0.translation());

    auto shifted = [](const Iso3& p, const Vec3& d) {
        Iso3 out = p;
        out.translation() += d;
        return out;
    };
    auto towardMid = [&](const Iso3& p, double dist) {
        const Vec3 dir = (mid - p.translation()).normalized();
        return shifted(p, dist * dir);
    };

    // keyframes: lift, twist past pi/2, slacken, lower, partially untwist
    std::vector<std::pair<Iso3, Iso3>> keys;
    keys.emplace_back(l0, r0);
    keys.emplace_back(shifted(l0, Vec3(0, 0, 0.16 * L)), shifted(r0, Vec3(0, 0, 0.16 * L)));
    keys.emplace_back(keys[1].first, rotateAboutTangent(keys[1].second, 0.6 * M_PI));
    keys.emplace_back(towardMid(keys[2].first, 0.1 * L), towardMid(rotateAboutTangent(keys[1].second, 0.6 * M_PI), 0.1 * L));
    keys.emplace_back(shifted(keys[3].first, Vec3(0, 0, -0.12 * L)), shifted(keys[3].second, Vec3(0, 0, -0.12 * L)));
    keys.emplace_back(keys[4].first, rotateAboutTangent(keys[4].second, -0.25 * M_PI));

    IdTrajectory traj;
    traj.dt = dt;
    const double end_speed = 0.04;  // m/s pose interpolation rate

    VecX q = start_q;
    double t = 0.0;
    for (size_t k = 0; k + 1 < keys.size(); ++k) {
        const Iso3& la = keys[k].first;
        const Iso3& lb = keys[k + 1].first;
        const Iso3& ra = keys[k].second;
        const Iso3& rb = keys[k + 1].second;
        const double gap = std::max(poseGap(la, lb), poseGap(ra, rb));
        const int steps = std::max(2, static_cast<int>(std::ceil(gap / (end_speed * dt))));
        for (int sidx = 1; sidx <= steps; ++sidx) {
            const double s = static_cast<double>(sidx) / steps;
            const Iso3 lt = interpPose(la, lb, s);
            const Iso3 rt = interpPose(ra, rb, s);
            auto q_next = robot.projectClosedChain(q, lt, rt);
            if (!q_next) throw TrajectoryError("identification trajectory left the reachable workspace");
            VecX u = (*q_next - q) / dt;
            const double peak = u.cwiseAbs().maxCoeff();
            if (peak > u_max) u *= u_max / peak;
            q += u * dt;
            t += dt;
            traj.commands.push_back(u);
        }
        traj.snapshot_times.push_back(t);
    }
    traj.snapshot_times.push_back(t);  // final settle doubles as the last snapshot
    return traj;
}

double identificationCost(const IdObservation& obs, const DloParams& base, double log_twist, double log_density,
                          std::vector<double>* residuals) {
    if (obs.snapshots.empty()) throw ConfigError("identification needs at least one observation");
    DloParams candidate = base;
    candidate.twist_stiffness = std::exp(log_twist);
    candidate.linear_density = std::exp(log_density);
    candidate.bend_multipliers.resize(0);

    if (residuals) residuals->clear();
    double cost = 0.0;
    for (const auto& snap : obs.snapshots) {
        auto projected = projectStable(snap, candidate);
        double r = 1e3;  // failed projection: heavily penalized but finite
        if (projected) {
            double d2 = 0.0;
            for (int k = 1; k <= snap.m(); ++k)
                d2 = std::max(d2, (snap.vertices[k] - projected->vertices[k]).squaredNorm());
            r = std::sqrt(d2);
        }
        cost += r;
        if (residuals) residuals->push_back(r);
    }
    return cost;
}

IdResult psoIdentify(const IdObservation& obs, const DloParams& base, const PsoSettings& s,
                     std::vector<double>* best_cost_trace) {
    if (obs.snapshots.empty()) throw ConfigError("identification needs at least one observation");
    const double ref = std::log(base.bend_stiffness);
    const Eigen::Vector2d lo(ref + s.twist_lo, ref + s.density_lo);
    const Eigen::Vector2d hi(ref + s.twist_hi, ref + s.density_hi);

    Rng rng(s.seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    struct Particle {
        Eigen::Vector2d x, v, best_x;
        double best_cost;
    };
    std::vector<Particle> swarm(s.particles);
    Eigen::Vector2d gbest = Eigen::Vector2d::Zero();
    double gbest_cost = std::numeric_limits<double>::infinity();

    auto evaluate = [&](const Eigen::Vector2d& theta) {
        return identificationCost(obs, base, theta[0], theta[1]);
    };

    for (auto& p : swarm) {
        for (int d = 0; d < 2; ++d) {
            p.x[d] = lo[d] + u01(rng) * (hi[d] - lo[d]);
            p.v[d] = 0.25 * (hi[d] - lo[d]) * (2.0 * u01(rng) - 1.0);
        }
        p.best_x = p.x;
        p.best_cost = evaluate(p.x);
        if (p.best_cost < gbest_cost) {
            gbest_cost = p.best_cost;
            gbest = p.x;
        }
    }
    if (best_cost_trace) best_cost_trace->push_back(gbest_cost);

    for (int it = 0; it < s.iterations; ++it) {
        for (auto& p : swarm) {
            for (int d = 0; d < 2; ++d) {
                const double r1 = u01(rng), r2 = u01(rng);
                p.v[d] = s.inertia * p.v[d] + s.cognitive * r1 * (p.best_x[d] - p.x[d]) +
                         s.social * r2 * (gbest[d] - p.x[d]);
                p.x[d] = std::clamp(p.x[d] + p.v[d], lo[d], hi[d]);
            }
            const double c = evaluate(p.x);
            if (c < p.best_cost) {
                p.best_cost = c;
                p.best_x = p.x;
            }
            if (c < gbest_cost) {
                gbest_cost = c;
                gbest = p.x;
            }
        }
        if (best_cost_trace) best_cost_trace->push_back(gbest_cost);
    }

    IdResult out;
    out.log_twist = gbest[0];
    out.log_density = gbest[1];
    out.cost = gbest_cost;
    out.iterations = s.iterations;
    identificationCost(obs, base, gbest[0], gbest[1], &out.residuals);
    return out;
}

}  // namespace dlo
