#pragma once

#include <dlo/der.hpp>

namespace dlo {

// Linear motion model of the feature points: xdot = J * [v_l; w_l; v_r; w_r].
// J is derived from the rod model by central differences of the quasi-static
// forward prediction, then corrected online from observed motions.
struct DloJacobian {
    MatX J;  // 3m x 12
    enum class Source { ModelDerived, Adapted } source = Source::ModelDerived;

    VecX predict(const VecX& end_twists) const { return J * end_twists; }
};

struct JacobianEstimationError : std::runtime_error {
    explicit JacobianEstimationError(const std::string& what) : std::runtime_error(what) {}
};

// Central-difference probe of forwardPred around a stable configuration.
// Columns follow [v_l; w_l; v_r; w_r]; rotational probes tilt the end frame
// about the world axes.
DloJacobian estimateJacobian(const DloConfig& cfg, const DloParams& params, double probe = 1e-4);

// Broyden-style rank-one correction toward the observed secant. A dead-band
// on the commanded twist rejects noise-only updates; lambda = 1 makes the
// update satisfy the secant exactly.
DloJacobian adaptJacobian(const DloJacobian& jac, const VecX& end_twists, const VecX& observed_dx, double dt,
                          double lambda = 0.5, double dead_band = 1e-4);

}  // namespace dlo
