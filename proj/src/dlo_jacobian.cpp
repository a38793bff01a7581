#include <dlo/dlo_jacobian.hpp>

namespace dlo {

namespace {

GripPose perturbPose(const GripPose& pose, int axis, double delta) {
    GripPose out = pose;
    if (axis < 3) {
        out.p[axis] += delta;
    } else {
        const Mat3 rot = Eigen::AngleAxisd(delta, Vec3::Unit(axis - 3)).toRotationMatrix();
        out.frame = MaterialFrame::fromMatrix(rot * pose.frame.matrix());
    }
    return out;
}

}  // namespace

DloJacobian estimateJacobian(const DloConfig& cfg, const DloParams& params, double probe) {
    const int m = cfg.m();
    DloJacobian out;
    out.J.resize(3 * m, 12);
    out.source = DloJacobian::Source::ModelDerived;

    const GripPose left = cfg.leftEndPose();
    const GripPose right = cfg.rightEndPose();
    ProjectionSettings settings;
    ProjectionStats stats;

    for (int col = 0; col < 12; ++col) {
        const bool is_left = col < 6;
        const int axis = col % 6;
        const GripPose lp = is_left ? perturbPose(left, axis, probe) : left;
        const GripPose rp = is_left ? right : perturbPose(right, axis, probe);
        auto plus = forwardPred(cfg, lp, rp, params, settings, &stats);
        settings.initial_penalty_weight = stats.final_penalty_weight;
        const GripPose lm = is_left ? perturbPose(left, axis, -probe) : left;
        const GripPose rm = is_left ? right : perturbPose(right, axis, -probe);
        auto minus = forwardPred(cfg, lm, rm, params, settings, &stats);
        if (!plus || !minus) throw JacobianEstimationError("forward prediction failed while probing the model");
        out.J.col(col) = (plus->featurePoints() - minus->featurePoints()) / (2.0 * probe);
    }
    return out;
}

DloJacobian adaptJacobian(const DloJacobian& jac, const VecX& end_twists, const VecX& observed_dx, double dt,
                          double lambda, double dead_band) {
    if (end_twists.norm() <= dead_band) return jac;
    DloJacobian out = jac;
    const VecX residual = observed_dx / dt - jac.J * end_twists;
    out.J += lambda * (residual * end_twists.transpose()) / end_twists.squaredNorm();
    out.source = DloJacobian::Source::Adapted;
    return out;
}

}  // namespace dlo
