#include <dlo/sim.hpp>

namespace dlo {

DloParams perturbParams(const DloParams& params, const PerturbSpec& spec, Rng& rng) {
    DloParams out = params;
    auto logUniform = [&rng](double lo, double hi) {
        if (lo == hi) return lo;
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
        return std::exp(u(rng));
    };
    out.twist_stiffness = params.twist_stiffness * logUniform(spec.twist_lo, spec.twist_hi);
    out.linear_density = params.linear_density * logUniform(spec.density_lo, spec.density_hi);
    if (!(spec.bend_seg_lo == 1.0 && spec.bend_seg_hi == 1.0)) {
        out.bend_multipliers.resize(params.segment_count);
        for (int k = 0; k < params.segment_count; ++k)
            out.bend_multipliers[k] = logUniform(spec.bend_seg_lo, spec.bend_seg_hi);
    }
    return out;
}

QuasistaticSim::QuasistaticSim(const DualArm& robot, const SdfGrid& grid, const CollisionMargins& margins,
                               DloParams true_params, SimState initial, double u_max)
    : robot_(robot), checker_(robot, grid, CollisionMargins{0.0, margins.dlo_radius}),
      true_params_(std::move(true_params)), state_(std::move(initial)), u_max_(u_max) {
    true_params_.validate();
    // ensure the initial rod state is an equilibrium of the true model
    ProjectionStats stats;
    auto settled = projectStable(state_.dlo, true_params_, {}, &stats);
    if (!settled) throw SimFault("initial DLO state cannot be settled under the true parameters");
    state_.dlo = std::move(*settled);
    penalty_hint_ = stats.final_penalty_weight;
}

SimEvents QuasistaticSim::step(const VecX& u, double dt) {
    if (u.size() != robot_.dof()) throw ConfigError("control dimension mismatch");
    if (u.cwiseAbs().maxCoeff() > u_max_ + 1e-12) throw ConfigError("control exceeds the joint velocity bound");

    state_.q += u * dt;
    state_.t += dt;

    const Iso3 lt = robot_.left.eePose(robot_.leftJoints(state_.q));
    const Iso3 rt = robot_.right.eePose(robot_.rightJoints(state_.q));
    GripPose left{lt.translation(), MaterialFrame::fromMatrix(lt.rotation())};
    GripPose right{rt.translation(), MaterialFrame::fromMatrix(rt.rotation())};

    SimEvents events;
    const double internal_length = state_.dlo.rest_lengths.segment(1, state_.dlo.m() - 1).sum();
    if ((left.p - right.p).norm() > internal_length) {
        events.overstretch = true;
        // the grippers separated beyond the rod length; keep the previous
        // shape but pin the ends, the episode is already failed
        return events;
    }

    ProjectionSettings settings;
    settings.initial_penalty_weight = penalty_hint_;
    ProjectionStats stats;
    auto next = forwardPred(state_.dlo, left, right, true_params_, settings, &stats);
    if (!next) throw SimFault("quasi-static settling failed during a simulation step");
    penalty_hint_ = stats.final_penalty_weight;

    // snap-through heuristic: internal points jumping much farther than the ends moved
    double end_move = std::max((next->vertices[1] - state_.dlo.vertices[1]).norm(),
                               (next->vertices[next->m()] - state_.dlo.vertices[next->m()]).norm());
    double max_move = 0.0;
    for (int k = 1; k <= next->m(); ++k)
        max_move = std::max(max_move, (next->vertices[k] - state_.dlo.vertices[k]).norm());
    if (max_move > 5.0 * std::max(end_move, 1e-6)) events.snap = true;

    state_.dlo = std::move(*next);
    events.collision = !checker_.nodeCollisionFree(state_.dlo, state_.q, /*pairwise=*/true);
    return events;
}

}  // namespace dlo
