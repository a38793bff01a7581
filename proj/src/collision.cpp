#include <dlo/collision.hpp>

namespace dlo {

std::vector<Vec3> dloCollisionPoints(const DloConfig& cfg) {
    const int m = cfg.m();
    std::vector<Vec3> pts;
    pts.reserve(3 * (m - 1) + 1);
    for (int k = 1; k < m; ++k) {
        const Vec3& a = cfg.vertices[k];
        const Vec3& b = cfg.vertices[k + 1];
        pts.push_back(a);
        pts.push_back(a + (b - a) / 3.0);
        pts.push_back(a + 2.0 * (b - a) / 3.0);
    }
    pts.push_back(cfg.vertices[m]);
    return pts;
}

CollisionChecker::CollisionChecker(const DualArm& robot, const SdfGrid& grid, CollisionMargins margins)
    : robot_(robot), grid_(grid), margins_(margins), radii_(robot.sphereRadii()), links_(robot.sphereLinks()) {
    // self-collision pairs: cross-arm always, same-arm only when the links
    // are non-adjacent
    const int n = static_cast<int>(radii_.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool same_arm = (links_[i] < 100) == (links_[j] < 100);
            if (same_arm && std::abs(links_[i] - links_[j]) <= 1) continue;
            self_pairs_.emplace_back(i, j);
        }
    }
}

bool CollisionChecker::nodeCollisionFree(const DloConfig& dlo, const VecX& q, bool pairwise) const {
    return nodeCollisionFree(dlo, q, robot_.sphereCenters(q), pairwise);
}

bool CollisionChecker::nodeCollisionFree(const DloConfig& dlo, const VecX& q,
                                         const std::vector<Vec3>& sphere_centers, bool pairwise) const {
    (void)q;
    for (size_t i = 0; i < sphere_centers.size(); ++i) {
        if (grid_.query(sphere_centers[i]) - radii_[i] < margins_.eps_d) return false;
    }
    const auto dlo_pts = dloCollisionPoints(dlo);
    for (const auto& p : dlo_pts) {
        if (grid_.query(p) - margins_.dlo_radius < margins_.eps_d) return false;
    }
    if (!pairwise) return true;

    for (const auto& [i, j] : self_pairs_) {
        const double min_d = radii_[i] + radii_[j] + margins_.eps_d;
        if ((sphere_centers[i] - sphere_centers[j]).squaredNorm() < min_d * min_d) return false;
    }

    // robot vs DLO; spheres near a grasped end are exempt against that arm's
    // wrist so the grasp itself does not read as a collision
    const int n_dlo = static_cast<int>(dlo_pts.size());
    const int grasp_zone = 6;  // two feature intervals of interpolated points
    for (int d = 0; d < n_dlo; ++d) {
        const bool near_left = d < grasp_zone;
        const bool near_right = d >= n_dlo - grasp_zone;
        for (size_t i = 0; i < sphere_centers.size(); ++i) {
            const bool left_arm = links_[i] < 100;
            const int link = left_arm ? links_[i] : links_[i] - 100;
            if (near_left && left_arm && link >= 3) continue;
            if (near_right && !left_arm && link >= 3) continue;
            const double min_d = radii_[i] + margins_.dlo_radius + margins_.eps_d;
            if ((sphere_centers[i] - dlo_pts[d]).squaredNorm() < min_d * min_d) return false;
        }
    }
    return true;
}

double CollisionChecker::minRobotClearance(const VecX& q) const {
    const auto centers = robot_.sphereCenters(q);
    double worst = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < centers.size(); ++i) worst = std::min(worst, grid_.query(centers[i]) - radii_[i]);
    return worst;
}

double CollisionChecker::minDloClearance(const DloConfig& dlo) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& p : dloCollisionPoints(dlo)) worst = std::min(worst, grid_.query(p) - margins_.dlo_radius);
    return worst;
}

}  // namespace dlo
