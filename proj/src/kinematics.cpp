#include <dlo/formats.hpp>
#include <dlo/kinematics.hpp>

#include <Eigen/Dense>

#include <fstream>

namespace dlo {

ArmChain::ArmChain(Iso3 base, std::vector<JointDesc> joints, Iso3 ee_offset, std::vector<SphereDesc> spheres)
    : base_(std::move(base)), joints_(std::move(joints)), ee_offset_(std::move(ee_offset)),
      spheres_(std::move(spheres)) {
    for (const auto& j : joints_) {
        if (!(j.lower < j.upper)) throw ConfigError("joint limits must satisfy lower < upper");
    }
    for (const auto& s : spheres_) {
        if (!(s.radius > 0)) throw ConfigError("sphere radii must be positive");
        if (s.link < 0 || s.link >= dof()) throw ConfigError("sphere link index out of range");
    }
}

FkResult ArmChain::forwardKinematics(const VecX& q) const {
    FkResult out;
    out.link_frames.resize(dof());
    Iso3 t = base_;
    for (int j = 0; j < dof(); ++j) {
        t = t * joints_[j].fixed;
        t = t * Eigen::AngleAxisd(q[j], joints_[j].axis);
        out.link_frames[j] = t;
    }
    out.ee = t * ee_offset_;
    out.sphere_centers.reserve(spheres_.size());
    for (const auto& s : spheres_) out.sphere_centers.push_back(out.link_frames[s.link] * s.offset);
    return out;
}

Iso3 ArmChain::eePose(const VecX& q) const {
    Iso3 t = base_;
    for (int j = 0; j < dof(); ++j) t = t * joints_[j].fixed * Eigen::AngleAxisd(q[j], joints_[j].axis);
    return t * ee_offset_;
}

Eigen::Matrix<double, 6, Eigen::Dynamic> ArmChain::geometricJacobian(const VecX& q) const {
    Eigen::Matrix<double, 6, Eigen::Dynamic> jac(6, dof());
    std::vector<Vec3> axes(dof()), origins(dof());
    Iso3 t = base_;
    for (int j = 0; j < dof(); ++j) {
        t = t * joints_[j].fixed;
        axes[j] = t.rotation() * joints_[j].axis;
        origins[j] = t.translation();
        t = t * Eigen::AngleAxisd(q[j], joints_[j].axis);
    }
    const Vec3 p_e = (t * ee_offset_).translation();
    for (int j = 0; j < dof(); ++j) {
        jac.block<3, 1>(0, j) = axes[j].cross(p_e - origins[j]);
        jac.block<3, 1>(3, j) = axes[j];
    }
    return jac;
}

Eigen::Matrix<double, 3, Eigen::Dynamic> ArmChain::pointJacobian(const VecX& q, int link,
                                                                 const Vec3& point_world) const {
    Eigen::Matrix<double, 3, Eigen::Dynamic> jac = Eigen::Matrix<double, 3, Eigen::Dynamic>::Zero(3, dof());
    Iso3 t = base_;
    for (int j = 0; j <= link; ++j) {
        t = t * joints_[j].fixed;
        const Vec3 axis = t.rotation() * joints_[j].axis;
        const Vec3 origin = t.translation();
        jac.col(j) = axis.cross(point_world - origin);
        t = t * Eigen::AngleAxisd(q[j], joints_[j].axis);
    }
    return jac;
}

VecX ArmChain::clampToLimits(VecX q) const {
    for (int j = 0; j < dof(); ++j) q[j] = std::clamp(q[j], joints_[j].lower, joints_[j].upper);
    return q;
}

bool ArmChain::withinLimits(const VecX& q, double slack) const {
    for (int j = 0; j < dof(); ++j)
        if (q[j] < joints_[j].lower - slack || q[j] > joints_[j].upper + slack) return false;
    return true;
}

VecX ArmChain::randomJoints(Rng& rng) const {
    VecX q(dof());
    for (int j = 0; j < dof(); ++j) {
        std::uniform_real_distribution<double> u(joints_[j].lower, joints_[j].upper);
        q[j] = u(rng);
    }
    return q;
}

Eigen::Matrix<double, 6, 1> poseError(const Iso3& target, const Iso3& current) {
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = target.translation() - current.translation();
    const Eigen::AngleAxisd aa(target.rotation() * current.rotation().transpose());
    e.tail<3>() = aa.angle() * aa.axis();
    return e;
}

namespace {

bool poseReached(const Eigen::Matrix<double, 6, 1>& e, const IkSettings& s) {
    return e.head<3>().norm() <= s.pos_tolerance && e.tail<3>().norm() <= s.ori_tolerance;
}

// One damped pseudo-inverse step toward the target, step- and limit-clamped.
VecX dlsStep(const ArmChain& chain, const VecX& q, const Eigen::Matrix<double, 6, 1>& e, const IkSettings& s) {
    const auto jac = chain.geometricJacobian(q);
    Eigen::Matrix<double, 6, 6> jjt = jac * jac.transpose();
    jjt.diagonal().array() += s.damping;
    VecX dq = jac.transpose() * jjt.ldlt().solve(e);
    const double step = dq.cwiseAbs().maxCoeff();
    if (step > s.max_step) dq *= s.max_step / step;
    return chain.clampToLimits(q + dq);
}

}  // namespace

std::optional<VecX> ArmChain::ikFromSeed(const Iso3& target, const VecX& seed, const IkSettings& settings) const {
    VecX q = clampToLimits(seed);
    for (int it = 0; it < settings.max_iterations; ++it) {
        const auto e = poseError(target, eePose(q));
        if (poseReached(e, settings)) return q;
        q = dlsStep(*this, q, e, settings);
    }
    return poseReached(poseError(target, eePose(q)), settings) ? std::optional<VecX>(q) : std::nullopt;
}

std::optional<VecX> ArmChain::ikRandom(const Iso3& target, int attempts, Rng& rng, const IkSettings& settings) const {
    if (!target.translation().allFinite()) throw ConfigError("ik target must be finite");
    for (int a = 0; a < attempts; ++a) {
        auto sol = ikFromSeed(target, randomJoints(rng), settings);
        if (sol) return sol;
    }
    return std::nullopt;
}

std::vector<Vec3> DualArm::sphereCenters(const VecX& q) const {
    auto l = left.forwardKinematics(leftJoints(q));
    auto r = right.forwardKinematics(rightJoints(q));
    std::vector<Vec3> out = std::move(l.sphere_centers);
    out.insert(out.end(), r.sphere_centers.begin(), r.sphere_centers.end());
    return out;
}

std::vector<double> DualArm::sphereRadii() const {
    std::vector<double> out;
    out.reserve(sphereCount());
    for (const auto& s : left.spheres()) out.push_back(s.radius);
    for (const auto& s : right.spheres()) out.push_back(s.radius);
    return out;
}

std::vector<int> DualArm::sphereLinks() const {
    std::vector<int> out;
    out.reserve(sphereCount());
    for (const auto& s : left.spheres()) out.push_back(s.link);
    for (const auto& s : right.spheres()) out.push_back(100 + s.link);
    return out;
}

std::optional<VecX> DualArm::projectClosedChain(const VecX& q, const Iso3& left_target, const Iso3& right_target,
                                                const IkSettings& settings) const {
    VecX ql = leftJoints(q), qr = rightJoints(q);
    for (int it = 0; it < settings.max_iterations; ++it) {
        const auto el = poseError(left_target, left.eePose(ql));
        const auto er = poseError(right_target, right.eePose(qr));
        const bool l_ok = poseReached(el, settings);
        const bool r_ok = poseReached(er, settings);
        if (l_ok && r_ok) {
            VecX out(dof());
            out << ql, qr;
            return out;
        }
        if (!l_ok) ql = dlsStep(left, ql, el, settings);
        if (!r_ok) qr = dlsStep(right, qr, er, settings);
    }
    return std::nullopt;
}

double DualArm::chainError(const VecX& q, const Iso3& left_target, const Iso3& right_target) const {
    const auto el = poseError(left_target, left.eePose(leftJoints(q)));
    const auto er = poseError(right_target, right.eePose(rightJoints(q)));
    return std::max(el.head<3>().norm(), er.head<3>().norm());
}

Iso3 gripPoseToIso(const GripPose& gp) {
    Iso3 t = Iso3::Identity();
    t.linear() = gp.frame.matrix();
    t.translation() = gp.p;
    return t;
}

namespace {

void writePose(LineWriter& w, const Iso3& t) {
    const Quat q(t.rotation());
    w.vec(Vec3(t.translation())).num(q.w()).num(q.x()).num(q.y()).num(q.z());
}

Iso3 readPose(const LineReader& r, size_t idx) {
    Iso3 t = Iso3::Identity();
    t.translation() = r.asVec3(idx);
    Quat q(r.asDouble(idx + 3), r.asDouble(idx + 4), r.asDouble(idx + 5), r.asDouble(idx + 6));
    if (std::abs(q.norm() - 1.0) > 1e-6) r.fail("pose quaternion is not unit length");
    t.linear() = q.normalized().toRotationMatrix();
    return t;
}

void writeArm(std::ostream& os, const ArmChain& arm, const std::string& name) {
    LineWriter w(os);
    w.tok("arm").tok(name).end();
    w.tok("base");
    writePose(w, arm.base());
    w.end();
    for (const auto& j : arm.joints()) {
        w.tok("joint").tok("axis").vec(j.axis).tok("pose");
        writePose(w, j.fixed);
        w.tok("limits").num(j.lower).num(j.upper);
        w.end();
    }
    w.tok("ee");
    writePose(w, arm.eeOffset());
    w.end();
    for (const auto& s : arm.spheres()) {
        w.tok("sphere").tok("link").num(s.link).tok("offset").vec(s.offset).tok("radius").num(s.radius).end();
    }
    w.tok("endarm").end();
}

ArmChain readArm(LineReader& r) {
    r.expectKey("base");
    const Iso3 base = readPose(r, 1);
    std::vector<JointDesc> joints;
    std::vector<SphereDesc> spheres;
    Iso3 ee = Iso3::Identity();
    bool have_ee = false;
    while (r.next()) {
        if (r.key() == "joint") {
            JointDesc j;
            if (r.asString(1) != "axis" || r.asString(5) != "pose" || r.asString(13) != "limits")
                r.fail("malformed joint line");
            j.axis = r.asVec3(2).normalized();
            j.fixed = readPose(r, 6);
            j.lower = r.asDouble(14);
            j.upper = r.asDouble(15);
            joints.push_back(j);
        } else if (r.key() == "ee") {
            ee = readPose(r, 1);
            have_ee = true;
        } else if (r.key() == "sphere") {
            SphereDesc s;
            if (r.asString(1) != "link" || r.asString(3) != "offset" || r.asString(7) != "radius")
                r.fail("malformed sphere line");
            s.link = r.asInt(2);
            s.offset = r.asVec3(4);
            s.radius = r.asDouble(8);
            spheres.push_back(s);
        } else if (r.key() == "endarm") {
            if (joints.empty()) r.fail("arm has no joints");
            if (!have_ee) r.fail("arm has no end-effector offset");
            return ArmChain(base, std::move(joints), ee, std::move(spheres));
        } else {
            r.fail("unexpected key in arm block: '" + r.key() + "'");
        }
    }
    r.fail("unterminated arm block");
}

}  // namespace

DualArm parseRobot(std::istream& is, const std::string& source_name) {
    LineReader r(is, source_name);
    readHeader(r, "robot");
    DualArm robot;
    r.expectKey("arm");
    if (r.asString(1) != "left") r.fail("first arm must be 'left'");
    robot.left = readArm(r);
    r.expectKey("arm");
    if (r.asString(1) != "right") r.fail("second arm must be 'right'");
    robot.right = readArm(r);
    return robot;
}

DualArm loadRobot(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open robot file: " + path);
    return parseRobot(f, path);
}

void saveRobot(const std::string& path, const DualArm& robot) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write robot file: " + path);
    writeHeader(f, "robot");
    writeArm(f, robot.left, "left");
    writeArm(f, robot.right, "right");
}

DualArm makeDefaultRobot() {
    auto trans = [](double x, double y, double z) {
        Iso3 t = Iso3::Identity();
        t.translation() = Vec3(x, y, z);
        return t;
    };

    // 6-DoF chain with UR5-like link lengths: shoulder pan / lift, elbow,
    // three wrist joints
    std::vector<JointDesc> joints(6);
    joints[0] = {trans(0, 0, 0.0892), Vec3::UnitZ(), -3.1, 3.1};
    joints[1] = {Iso3::Identity(), Vec3::UnitY(), -3.1, 3.1};
    joints[2] = {trans(0, 0, 0.425), Vec3::UnitY(), -3.0, 3.0};
    joints[3] = {trans(0, 0, 0.3922), Vec3::UnitY(), -3.1, 3.1};
    joints[4] = {trans(0, 0.1093, 0), Vec3::UnitZ(), -3.1, 3.1};
    joints[5] = {trans(0, 0, 0.0946), Vec3::UnitY(), -3.1, 3.1};
    const Iso3 ee = trans(0, 0.0823, 0);

    std::vector<SphereDesc> spheres = {
        {0, Vec3(0, 0, 0.0), 0.060},      // shoulder
        {1, Vec3(0, 0, 0.12), 0.055},     // upper arm
        {1, Vec3(0, 0, 0.24), 0.055},     //
        {1, Vec3(0, 0, 0.36), 0.055},     //
        {2, Vec3(0, 0, 0.10), 0.048},     // forearm
        {2, Vec3(0, 0, 0.22), 0.048},     //
        {2, Vec3(0, 0, 0.34), 0.048},     //
        {3, Vec3(0, 0.05, 0), 0.045},     // wrist 1
        {4, Vec3(0, 0, 0.05), 0.042},     // wrist 2
        {5, Vec3(0, 0.045, 0), 0.040},    // gripper
    };

    // bases face each other across y, 0.8 m apart
    Iso3 left_base = trans(0, -0.4, 0);
    Iso3 right_base = trans(0, 0.4, 0);
    right_base.linear() = Eigen::AngleAxisd(M_PI, Vec3::UnitZ()).toRotationMatrix();

    DualArm robot;
    robot.left = ArmChain(left_base, joints, ee, spheres);
    robot.right = ArmChain(right_base, joints, ee, spheres);
    return robot;
}

}  // namespace dlo
