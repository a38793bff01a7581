#pragma once

#include <dlo/der.hpp>
#include <dlo/kinematics.hpp>
#include <dlo/sdf.hpp>

#include <vector>

namespace dlo {

struct CollisionMargins {
    double eps_d = 0.01;        // minimum allowed obstacle clearance, m
    double dlo_radius = 0.006;  // DLO collision sphere radius s_d (half diameter + 2 mm)
};

// m_e = 3(m-1)+1 sphere centers linearly interpolated between the feature points.
std::vector<Vec3> dloCollisionPoints(const DloConfig& cfg);

// Whole-body collision test for a planner node: SDF clearance of every robot
// sphere and interpolated DLO sphere, plus pairwise robot self-collision and
// robot-DLO tests (the pairwise checks are planner-side only; the MPC keeps
// just the SDF terms). DLO spheres near a grasped end are exempted against
// that arm's wrist links.
class CollisionChecker {
  public:
    CollisionChecker(const DualArm& robot, const SdfGrid& grid, CollisionMargins margins);

    bool nodeCollisionFree(const DloConfig& dlo, const VecX& q, bool pairwise = true) const;
    bool nodeCollisionFree(const DloConfig& dlo, const VecX& q, const std::vector<Vec3>& sphere_centers,
                           bool pairwise = true) const;

    // smallest d_o - radius over the robot / DLO spheres (clearance before eps_d)
    double minRobotClearance(const VecX& q) const;
    double minDloClearance(const DloConfig& dlo) const;

    const CollisionMargins& margins() const { return margins_; }
    const SdfGrid& grid() const { return grid_; }
    const DualArm& robot() const { return robot_; }

  private:
    const DualArm& robot_;
    const SdfGrid& grid_;
    CollisionMargins margins_;
    std::vector<double> radii_;
    std::vector<int> links_;
    std::vector<std::pair<int, int>> self_pairs_;
};

}  // namespace dlo
