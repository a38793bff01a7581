#pragma once

#include <dlo/types.hpp>

#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace dlo {

// Obstacle primitives. Boxes may be posed; spheres and capsules are given in
// world coordinates. Distances to each are exact, the scene distance is
// their minimum.
struct BoxPrimitive {
    Vec3 center = Vec3::Zero();
    Vec3 half_extents = Vec3::Ones();
    Quat rotation = Quat::Identity();
};

struct SpherePrimitive {
    Vec3 center = Vec3::Zero();
    double radius = 0.1;
};

struct CapsulePrimitive {
    Vec3 p0 = Vec3::Zero();
    Vec3 p1 = Vec3::UnitZ();
    double radius = 0.05;
};

using Primitive = std::variant<BoxPrimitive, SpherePrimitive, CapsulePrimitive>;

struct Aabb {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Ones();
    bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
};

double signedDistance(const Primitive& prim, const Vec3& p);

struct Scene {
    std::vector<Primitive> primitives;
    Aabb workspace;

    double signedDistance(const Vec3& p) const;  // min over primitives; +inf sentinel when empty
    void validate() const;
};

// Large positive distance reported for empty scenes.
inline constexpr double kEmptySceneDistance = 1e6;

// Scene file ("scene v1"): workspace bounds plus one primitive per line.
Scene loadScene(const std::string& path);
void saveScene(const std::string& path, const Scene& scene);
Scene parseScene(std::istream& is, const std::string& source_name);

}  // namespace dlo
