#pragma once

#include <dlo/types.hpp>

#include <optional>
#include <span>
#include <vector>

namespace dlo {

// Scalar parameters of the discrete elastic rod energy. bend_multipliers is
// an optional per-vertex anisotropy used only by the simulator's ground-truth
// model; the planner always leaves it empty (isotropic).
struct DloParams {
    double bend_stiffness = 1.0;   // lambda_b
    double twist_stiffness = 1.0;  // lambda_t
    double linear_density = 0.1;   // rho, kg/m
    double gravity = 9.81;         // m/s^2
    int segment_count = 10;        // m feature points
    double total_length = 0.5;     // L, meters
    VecX bend_multipliers;         // empty, or one factor per internal vertex (size m)

    void validate() const;
    double edgeLength() const { return total_length / (segment_count - 1); }
};

// Full rod state: m+2 vertices (x_0 and x_{m+1} are virtual), m+1 material
// frames, per-edge rest lengths. x_1..x_m are the perceptible feature points;
// the boundary poses live in (x_1, M^0) and (x_m, M^m).
struct DloConfig {
    std::vector<Vec3> vertices;
    std::vector<MaterialFrame> frames;
    VecX rest_lengths;

    int m() const { return static_cast<int>(vertices.size()) - 2; }

    GripPose leftEndPose() const { return {vertices[1], frames.front()}; }
    GripPose rightEndPose() const { return {vertices[m()], frames.back()}; }

    VecX featurePoints() const;             // stacked x_1..x_m, size 3m
    Vec3 featurePoint(int k) const { return vertices[k]; }  // k in 1..m
    double endSeparation() const { return (vertices[m()] - vertices[1]).norm(); }

    // Largest violation of the structural invariants (used by tests and loaders).
    double maxFrameOrthonormalityError() const;
    double maxTangentAlignmentError() const;  // radians
    double maxEdgeLengthViolation() const;    // meters
};

// Centerline positions plus the two boundary frames; what perception provides.
struct PerceptibleConfig {
    std::vector<Vec3> centerline;  // x_1..x_m
    MaterialFrame left_frame;      // M^0
    MaterialFrame right_frame;     // M^m
};

struct EnergyBreakdown {
    double bend = 0.0;
    double twist = 0.0;
    double gravity = 0.0;
    double total = 0.0;
};

// Edges closer than this to antiparallel are rejected as singular (the
// curvature binormal denominator vanishes at phi = pi).
inline constexpr double kMaxBendAngle = M_PI - 0.05;

// Parallel transport of seed_frame along the centerline: one Bishop frame per
// edge, zero twist by construction.
std::vector<MaterialFrame> parallelTransport(std::span<const Vec3> centerline, const MaterialFrame& seed_frame);

// Rotation taking tangent a to tangent b about a x b (identity when equal).
Mat3 transportRotation(const Vec3& a_unit, const Vec3& b_unit);

EnergyBreakdown potentialEnergy(const DloConfig& cfg, const DloParams& params);

// Gradient of the potential energy with respect to the free internal vertices
// x_2..x_{m-1}, at fixed boundary (x_1, x_m, M^0, M^m, virtual vertices).
// Twist enters through the Bishop holonomy of the centerline; the material
// twist is the uniform-twist resultant theta^m - theta^0.
VecX energyGradient(const DloConfig& cfg, const DloParams& params);

struct ProjectionSettings {
    double penalty_scale = 1e4;        // penalty weight = scale * lambda_b / L^2
    double stationarity_scale = 1e-8;  // tolerance = scale * lambda_b / L
    int max_iterations = 500;
    double edge_violation_frac = 1e-4;  // allowed violation = frac * L
    int max_continuations = 8;          // penalty doublings until the violation gate is met
    double initial_penalty_weight = 0;  // 0 = penalty_scale * lambda_b / L^2; callers may
                                        // thread stats.final_penalty_weight through a
                                        // sequence of projections of the same rod
};

struct ProjectionStats {
    int iterations = 0;
    int evaluations = 0;
    int continuations = 0;
    double projected_gradient_norm = 0.0;
    double max_edge_violation = 0.0;
    double energy = 0.0;
    double final_penalty_weight = 0.0;
};

// Projects init onto a neighboring stable configuration: minimizes the rod
// energy over the internal vertices with the end poses and virtual vertices
// held fixed and the internal edge lengths penalized to their rest values.
// Internal frames are rebuilt from the Bishop frames with uniform twist.
// theta_m_hint selects the 2*pi branch of the boundary twist; pass the
// previous configuration's twist when stepping along a path.
std::optional<DloConfig> projectStable(const DloConfig& init, const DloParams& params,
                                       const ProjectionSettings& settings = {}, ProjectionStats* stats = nullptr,
                                       std::optional<double> theta_m_hint = std::nullopt);

// Quasi-static forward prediction: the stable configuration reached when the
// end poses move to (left, right) while the internal vertices relax from
// their current positions.
std::optional<DloConfig> forwardPred(const DloConfig& from, const GripPose& left, const GripPose& right,
                                     const DloParams& params, const ProjectionSettings& settings = {},
                                     ProjectionStats* stats = nullptr);

// Length-preserving interpolation between two configurations with identical
// rest lengths: lerp the centroid, slerp the material frames, rebuild the
// centerline from the interpolated tangents and the rest lengths.
DloConfig dloErp(const DloConfig& from, const DloConfig& to, double eta);

// Boundary twist theta^m: angle from the transported Bishop frame to M^m
// about the last tangent, unwrapped to the branch nearest hint.
double boundaryTwist(const DloConfig& cfg);

// Rebuilds a full configuration from a centerline and boundary frames:
// virtual vertices from the boundary poses, Bishop transport seeded with M^0,
// internal frames with uniform twist.
DloConfig configFromPerceptible(const PerceptibleConfig& p, const VecX& rest_lengths, double theta_m_hint = 0.0);
PerceptibleConfig toPerceptible(const DloConfig& cfg);

// Uniform rest lengths L/(m-1) for all m+1 edges (virtual edges included).
VecX uniformRestLengths(int m, double total_length);

// Straight rod along `direction` with x_1 at start; m1 chosen orthogonal.
DloConfig makeStraightConfig(const DloParams& params, const Vec3& start, const Vec3& direction);

// Planar arc of the full rod length; used to construct start/goal shapes.
DloConfig makeArcConfig(const DloParams& params, const Vec3& center, const Vec3& plane_x, const Vec3& plane_y,
                        double arc_angle);

double maxTwistRateDeviation(const DloConfig& cfg);  // vs uniform twist, rad/m

// Norm of the energy gradient projected onto the inextensibility-constraint
// tangent space; the stable-configuration residual a PlanNode must satisfy.
double stationarityResidual(const DloConfig& cfg, const DloParams& params);

}  // namespace dlo
