#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <random>
#include <stdexcept>
#include <string>

namespace dlo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Iso3 = Eigen::Isometry3d;
using Quat = Eigen::Quaterniond;

using Rng = std::mt19937_64;

// Orthonormal right-handed frame attached to a rod edge. t is the edge
// tangent; m1, m2 span the cross section.
struct MaterialFrame {
    Vec3 t, m1, m2;

    Mat3 matrix() const {
        Mat3 r;
        r.col(0) = t;
        r.col(1) = m1;
        r.col(2) = m2;
        return r;
    }
    Quat quaternion() const { return Quat(matrix()); }

    static MaterialFrame fromMatrix(const Mat3& r) { return {r.col(0), r.col(1), r.col(2)}; }
    static MaterialFrame fromQuaternion(const Quat& q) { return fromMatrix(q.normalized().toRotationMatrix()); }

    // Rebuilds an exactly orthonormal frame from a possibly drifted one.
    MaterialFrame normalized() const {
        MaterialFrame f;
        f.t = t.normalized();
        f.m1 = (m1 - m1.dot(f.t) * f.t).normalized();
        f.m2 = f.t.cross(f.m1);
        return f;
    }

    double maxOrthonormalityError() const {
        Mat3 r = matrix();
        return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    }
};

// Pose of a grasped rod end: position of the end vertex plus the material
// frame of the boundary edge.
struct GripPose {
    Vec3 p;
    MaterialFrame frame;
};

inline double rotationAngle(const Mat3& a, const Mat3& b) {
    // angle of a^T b; the atan2 form keeps precision for tiny angles where
    // acos of the trace loses half the significant digits
    const Mat3 r = a.transpose() * b;
    const Vec3 axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double s = 0.5 * axis.norm();
    const double c = (r.trace() - 1.0) / 2.0;
    return std::atan2(s, c);
}

inline double frameAngle(const MaterialFrame& a, const MaterialFrame& b) {
    return rotationAngle(a.matrix(), b.matrix());
}

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Degenerate rod geometry: coincident vertices or antiparallel edges.
struct SingularityError : std::runtime_error {
    explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dlo
