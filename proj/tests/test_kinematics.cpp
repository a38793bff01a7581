#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <dlo/kinematics.hpp>

#include <sstream>

using namespace dlo;

namespace {

// independent oracle: compose the description's fixed transforms at q = 0
Iso3 composeHome(const ArmChain& arm) {
    Iso3 t = arm.base();
    for (const auto& j : arm.joints()) t = t * j.fixed;  // zero rotations
    return t * arm.eeOffset();
}

ArmChain singleJointChain(double link_len) {
    Iso3 ee = Iso3::Identity();
    ee.translation() = Vec3(link_len, 0, 0);
    return ArmChain(Iso3::Identity(), {JointDesc{Iso3::Identity(), Vec3::UnitZ(), -3.1, 3.1}}, ee, {});
}

}  // namespace

TEST_CASE("forward kinematics: zero joints reproduce the composed home pose") {
    const DualArm robot = makeDefaultRobot();
    for (const ArmChain* arm : {&robot.left, &robot.right}) {
        const Iso3 expected = composeHome(*arm);
        const Iso3 got = arm->eePose(VecX::Zero(arm->dof()));
        CHECK((got.translation() - expected.translation()).norm() < 1e-14);
        CHECK(rotationAngle(got.rotation(), expected.rotation()) < 1e-14);
        CHECK((got.rotation() * got.rotation().transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("forward kinematics: sphere centers at zero joints match composed offsets") {
    const DualArm robot = makeDefaultRobot();
    const ArmChain& arm = robot.left;
    const auto fk = arm.forwardKinematics(VecX::Zero(arm.dof()));

    Iso3 t = arm.base();
    std::vector<Iso3> link_frames;
    for (const auto& j : arm.joints()) {
        t = t * j.fixed;
        link_frames.push_back(t);
    }
    REQUIRE(fk.sphere_centers.size() == arm.spheres().size());
    for (size_t i = 0; i < arm.spheres().size(); ++i) {
        const auto& s = arm.spheres()[i];
        CHECK((fk.sphere_centers[i] - link_frames[s.link] * s.offset).norm() < 1e-14);
    }
}

TEST_CASE("forward kinematics: moving only the last joint keeps the end on a circle about its axis") {
    const DualArm robot = makeDefaultRobot();
    const ArmChain& arm = robot.left;
    VecX q(arm.dof());
    q << 0.3, -0.5, 0.9, -0.4, 0.7, 0.1;

    // axis point and direction of the last joint
    Iso3 t = arm.base();
    for (int j = 0; j < arm.dof(); ++j) {
        t = t * arm.joints()[j].fixed;
        if (j == arm.dof() - 1) break;
        t = t * Eigen::AngleAxisd(q[j], arm.joints()[j].axis);
    }
    const Vec3 axis = t.rotation() * arm.joints().back().axis;
    const Vec3 origin = t.translation();

    const Vec3 p0 = arm.eePose(q).translation();
    const double r0 = (p0 - origin - (p0 - origin).dot(axis) * axis).norm();
    const double h0 = (p0 - origin).dot(axis);
    for (double dq : {0.2, 0.5, 1.1, 2.0}) {
        VecX q2 = q;
        q2[arm.dof() - 1] += dq;
        const Vec3 p = arm.eePose(q2).translation();
        const double r = (p - origin - (p - origin).dot(axis) * axis).norm();
        CHECK(std::abs(r - r0) < 1e-12);
        CHECK(std::abs((p - origin).dot(axis) - h0) < 1e-12);
    }
}

TEST_CASE("jacobian: single revolute joint reduces to the planar lever rule") {
    const double L = 0.73;
    const ArmChain chain = singleJointChain(L);
    VecX q(1);
    q << 0.4;
    const auto jac = chain.geometricJacobian(q);
    CHECK(jac.block<3, 1>(0, 0).norm() == doctest::Approx(L).epsilon(1e-12));
    CHECK((jac.block<3, 1>(3, 0) - Vec3::UnitZ()).norm() < 1e-14);
}

TEST_CASE("jacobian: matches finite differences of forward kinematics") {
    const DualArm robot = makeDefaultRobot();
    const ArmChain& arm = robot.right;
    Rng rng(5);
    const double h = 1e-7;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const VecX q = arm.randomJoints(rng);
        const auto jac = arm.geometricJacobian(q);
        for (int j = 0; j < arm.dof(); ++j) {
            VecX qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const Iso3 tp = arm.eePose(qp), tm = arm.eePose(qm);
            const Vec3 v_fd = (tp.translation() - tm.translation()) / (2 * h);
            const Eigen::AngleAxisd aa(tp.rotation() * tm.rotation().transpose());
            const Vec3 w_fd = aa.angle() * aa.axis() / (2 * h);
            worst = std::max(worst, (v_fd - jac.block<3, 1>(0, j)).norm() / std::max(1.0, v_fd.norm()));
            worst = std::max(worst, (w_fd - jac.block<3, 1>(3, j)).norm() / std::max(1.0, w_fd.norm()));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("jacobian: a joint axis passing through the end point gives a zero linear column") {
    // joint 5 (wrist 2, z axis) with the gripper offset along that axis
    auto trans = [](double x, double y, double z) {
        Iso3 t = Iso3::Identity();
        t.translation() = Vec3(x, y, z);
        return t;
    };
    std::vector<JointDesc> joints = {
        {trans(0, 0, 0.1), Vec3::UnitY(), -3, 3},
        {trans(0.3, 0, 0), Vec3::UnitZ(), -3, 3},
    };
    const ArmChain chain(Iso3::Identity(), joints, trans(0, 0, 0.2), {});
    VecX q(2);
    q << 0.0, 0.7;  // with q0 = 0, joint 1's z axis passes through the ee point
    const auto jac = chain.geometricJacobian(q);
    CHECK(jac.block<3, 1>(0, 1).norm() < 1e-14);
}

TEST_CASE("ik_random: a forward-kinematics target is reachable") {
    const DualArm robot = makeDefaultRobot();
    const ArmChain& arm = robot.left;
    Rng rng(9);
    VecX q0(arm.dof());
    q0 << 0.4, -1.1, 1.3, -0.9, 0.5, 0.3;
    const Iso3 target = arm.eePose(q0);
    auto sol = arm.ikRandom(target, 50, rng);
    REQUIRE(sol.has_value());
    const auto e = poseError(target, arm.eePose(*sol));
    CHECK(e.head<3>().norm() <= 1e-4);
    CHECK(e.tail<3>().norm() <= 1e-3);
    CHECK(arm.withinLimits(*sol));
}

TEST_CASE("ik_random: a target beyond the reach sphere fails cleanly") {
    const DualArm robot = makeDefaultRobot();
    Iso3 target = Iso3::Identity();
    target.translation() = Vec3(3.0, 0, 0.5);
    Rng rng(13);
    CHECK(!robot.left.ikRandom(target, 20, rng).has_value());
}

TEST_CASE("ik_random: different seeds reach distinct solutions") {
    const DualArm robot = makeDefaultRobot();
    const ArmChain& arm = robot.left;
    VecX q0(arm.dof());
    q0 << 0.2, -0.9, 1.5, -0.6, 0.4, 0.0;
    const Iso3 target = arm.eePose(q0);

    std::vector<VecX> sols;
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        auto sol = arm.ikRandom(target, 5, rng);
        if (sol) sols.push_back(*sol);
    }
    REQUIRE(sols.size() >= 2);
    double max_pairwise = 0.0;
    for (size_t i = 0; i < sols.size(); ++i)
        for (size_t j = i + 1; j < sols.size(); ++j)
            max_pairwise = std::max(max_pairwise, (sols[i] - sols[j]).cwiseAbs().maxCoeff());
    CHECK(max_pairwise > 0.1);
}

TEST_CASE("closed-chain projection: satisfied input returns unchanged") {
    const DualArm robot = makeDefaultRobot();
    VecX q(12);
    q << 0.4, -1.1, 1.3, -0.9, 0.5, 0.3, -0.2, -1.0, 1.2, -0.7, 0.6, 0.1;
    const Iso3 lt = robot.left.eePose(robot.leftJoints(q));
    const Iso3 rt = robot.right.eePose(robot.rightJoints(q));
    auto out = robot.projectClosedChain(q, lt, rt);
    REQUIRE(out.has_value());
    CHECK((*out - q).cwiseAbs().maxCoeff() == 0.0);  // early return before any step
}

TEST_CASE("closed-chain projection: recovers from a 5 mm end-pose perturbation and is idempotent") {
    const DualArm robot = makeDefaultRobot();
    VecX q(12);
    q << 0.4, -1.1, 1.3, -0.9, 0.5, 0.3, -0.2, -1.0, 1.2, -0.7, 0.6, 0.1;
    Iso3 lt = robot.left.eePose(robot.leftJoints(q));
    Iso3 rt = robot.right.eePose(robot.rightJoints(q));
    lt.translation() += Vec3(0.003, -0.003, 0.002);
    rt.translation() += Vec3(-0.002, 0.004, -0.001);

    auto out = robot.projectClosedChain(q, lt, rt);
    REQUIRE(out.has_value());
    CHECK(robot.chainError(*out, lt, rt) <= 1e-4);
    CHECK(robot.withinLimits(*out));

    auto again = robot.projectClosedChain(*out, lt, rt);
    REQUIRE(again.has_value());
    CHECK((*again - *out).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("closed-chain projection: unreachable end poses fail after max_iter") {
    const DualArm robot = makeDefaultRobot();
    VecX q = VecX::Zero(12);
    Iso3 lt = Iso3::Identity();
    lt.translation() = Vec3(0, -5.0, 0.5);
    Iso3 rt = Iso3::Identity();
    rt.translation() = Vec3(0, 5.0, 0.5);
    CHECK(!robot.projectClosedChain(q, lt, rt).has_value());
}

TEST_CASE("robot description file roundtrip") {
    const DualArm robot = makeDefaultRobot();
    const std::string path = "/tmp/dlo_robot_roundtrip.txt";
    saveRobot(path, robot);
    const DualArm loaded = loadRobot(path);

    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const VecX ql = robot.left.randomJoints(rng);
        const VecX qr = robot.right.randomJoints(rng);
        CHECK((robot.left.eePose(ql).translation() - loaded.left.eePose(ql).translation()).norm() < 1e-12);
        CHECK((robot.right.eePose(qr).translation() - loaded.right.eePose(qr).translation()).norm() < 1e-12);
    }
    CHECK(loaded.sphereCount() == robot.sphereCount());
}

TEST_CASE("robot description file: malformed input is a parse error") {
    std::istringstream bad("robot v1\narm left\nbase 0 0 0 1 0 0 0\njoint oops\n");
    CHECK_THROWS_AS(parseRobot(bad, "<test>"), ParseError);
    std::istringstream wrong_kind("scene v1\n");
    CHECK_THROWS_AS(parseRobot(wrong_kind, "<test>"), ParseError);
}
