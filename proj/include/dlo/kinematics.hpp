#pragma once

#include <dlo/types.hpp>

#include <optional>
#include <string>
#include <vector>

namespace dlo {

// One revolute joint: fixed transform from the parent link frame to the joint
// frame, rotation axis in the joint frame, position limits.
struct JointDesc {
    Iso3 fixed = Iso3::Identity();
    Vec3 axis = Vec3::UnitZ();
    double lower = -M_PI;
    double upper = M_PI;
};

// Collision sphere rigidly attached to a link (0-based link index, offset in
// that link's frame).
struct SphereDesc {
    int link = 0;
    Vec3 offset = Vec3::Zero();
    double radius = 0.05;
};

struct FkResult {
    std::vector<Iso3> link_frames;  // frame after each joint's rotation
    Iso3 ee = Iso3::Identity();
    std::vector<Vec3> sphere_centers;
};

struct IkSettings {
    int max_iterations = 100;
    double pos_tolerance = 1e-4;   // m
    double ori_tolerance = 1e-3;   // rad
    double damping = 1e-6;         // added to J J^T
    double max_step = 0.2;         // rad per joint per iteration
};

class ArmChain {
  public:
    ArmChain() = default;
    ArmChain(Iso3 base, std::vector<JointDesc> joints, Iso3 ee_offset, std::vector<SphereDesc> spheres);

    int dof() const { return static_cast<int>(joints_.size()); }
    int sphereCount() const { return static_cast<int>(spheres_.size()); }
    const std::vector<JointDesc>& joints() const { return joints_; }
    const std::vector<SphereDesc>& spheres() const { return spheres_; }
    const Iso3& base() const { return base_; }
    const Iso3& eeOffset() const { return ee_offset_; }

    FkResult forwardKinematics(const VecX& q) const;
    Iso3 eePose(const VecX& q) const;

    // Geometric Jacobian at the end effector: column i = [z_i x (p_e - p_i); z_i].
    Eigen::Matrix<double, 6, Eigen::Dynamic> geometricJacobian(const VecX& q) const;

    // Position Jacobian of a world-space point rigidly attached to `link`.
    Eigen::Matrix<double, 3, Eigen::Dynamic> pointJacobian(const VecX& q, int link, const Vec3& point_world) const;

    VecX clampToLimits(VecX q) const;
    bool withinLimits(const VecX& q, double slack = 1e-9) const;
    VecX randomJoints(Rng& rng) const;

    // Damped-least-squares iteration from `seed` toward the target pose.
    std::optional<VecX> ikFromSeed(const Iso3& target, const VecX& seed, const IkSettings& settings = {}) const;
    std::optional<VecX> ikRandom(const Iso3& target, int attempts, Rng& rng, const IkSettings& settings = {}) const;

  private:
    Iso3 base_ = Iso3::Identity();
    std::vector<JointDesc> joints_;
    Iso3 ee_offset_ = Iso3::Identity();
    std::vector<SphereDesc> spheres_;
};

// 6-vector pose error [p_t - p; axis-angle(R_t R^T)].
Eigen::Matrix<double, 6, 1> poseError(const Iso3& target, const Iso3& current);

struct DualArm {
    ArmChain left, right;

    int dof() const { return left.dof() + right.dof(); }
    int sphereCount() const { return left.sphereCount() + right.sphereCount(); }
    VecX leftJoints(const VecX& q) const { return q.head(left.dof()); }
    VecX rightJoints(const VecX& q) const { return q.tail(right.dof()); }

    // World centers of all collision spheres, left arm first.
    std::vector<Vec3> sphereCenters(const VecX& q) const;
    // Sphere radii in the same order (fixed per robot).
    std::vector<double> sphereRadii() const;
    // Link index per sphere, offset by 100 for the right arm; used by the
    // self-collision pair filter.
    std::vector<int> sphereLinks() const;

    bool withinLimits(const VecX& q) const {
        return left.withinLimits(leftJoints(q)) && right.withinLimits(rightJoints(q));
    }

    // Alg.-3-style closed-chain projection: iterate both arms toward the two
    // DLO end poses with the damped pseudo-inverse, clamping steps and joint
    // limits; none on non-convergence.
    std::optional<VecX> projectClosedChain(const VecX& q, const Iso3& left_target, const Iso3& right_target,
                                           const IkSettings& settings = {}) const;

    double chainError(const VecX& q, const Iso3& left_target, const Iso3& right_target) const;  // max pos error, m
};

Iso3 gripPoseToIso(const GripPose& gp);

// Robot description file ("robot v1"): base poses, joints, spheres.
DualArm loadRobot(const std::string& path);
void saveRobot(const std::string& path, const DualArm& robot);
DualArm parseRobot(std::istream& is, const std::string& source_name);

// Bundled dual 6-DoF robot: UR5-like link lengths, bases facing each other
// 0.8 m apart.
DualArm makeDefaultRobot();

}  // namespace dlo
