#include <dlo/formats.hpp>
#include <dlo/scene.hpp>

#include <fstream>

namespace dlo {

double signedDistance(const Primitive& prim, const Vec3& p) {
    if (const auto* s = std::get_if<SpherePrimitive>(&prim)) {
        return (p - s->center).norm() - s->radius;
    }
    if (const auto* c = std::get_if<CapsulePrimitive>(&prim)) {
        const Vec3 u = c->p1 - c->p0;
        const double uu = u.squaredNorm();
        const double t = uu > 0.0 ? std::clamp((p - c->p0).dot(u) / uu, 0.0, 1.0) : 0.0;
        return (p - c->p0 - t * u).norm() - c->radius;
    }
    const auto& b = std::get<BoxPrimitive>(prim);
    const Vec3 local = b.rotation.conjugate() * (p - b.center);
    const Vec3 q = local.cwiseAbs() - b.half_extents;
    const double outside = q.cwiseMax(0.0).norm();
    const double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
}

double Scene::signedDistance(const Vec3& p) const {
    if (primitives.empty()) return kEmptySceneDistance;
    double d = std::numeric_limits<double>::infinity();
    for (const auto& prim : primitives) d = std::min(d, dlo::signedDistance(prim, p));
    return d;
}

void Scene::validate() const {
    if (!((workspace.hi - workspace.lo).array() > 0).all()) throw ConfigError("workspace bounds are empty");
    for (const auto& prim : primitives) {
        if (const auto* b = std::get_if<BoxPrimitive>(&prim)) {
            if (!b->center.allFinite() || !(b->half_extents.array() > 0).all())
                throw ConfigError("invalid box primitive");
        } else if (const auto* s = std::get_if<SpherePrimitive>(&prim)) {
            if (!s->center.allFinite() || !(s->radius > 0)) throw ConfigError("invalid sphere primitive");
        } else if (const auto* c = std::get_if<CapsulePrimitive>(&prim)) {
            if (!c->p0.allFinite() || !c->p1.allFinite() || !(c->radius > 0))
                throw ConfigError("invalid capsule primitive");
        }
    }
}

Scene parseScene(std::istream& is, const std::string& source_name) {
    LineReader r(is, source_name);
    readHeader(r, "scene");
    Scene scene;
    bool have_bounds = false, ended = false;
    while (r.next()) {
        if (r.key() == "bounds") {
            scene.workspace.lo = r.asVec3(1);
            scene.workspace.hi = r.asVec3(4);
            have_bounds = true;
        } else if (r.key() == "box") {
            BoxPrimitive b;
            b.center = r.asVec3(1);
            b.half_extents = r.asVec3(4);
            b.rotation = Quat(r.asDouble(7), r.asDouble(8), r.asDouble(9), r.asDouble(10)).normalized();
            scene.primitives.push_back(b);
        } else if (r.key() == "sphere") {
            SpherePrimitive s;
            s.center = r.asVec3(1);
            s.radius = r.asDouble(4);
            scene.primitives.push_back(s);
        } else if (r.key() == "capsule") {
            CapsulePrimitive c;
            c.p0 = r.asVec3(1);
            c.p1 = r.asVec3(4);
            c.radius = r.asDouble(7);
            scene.primitives.push_back(c);
        } else if (r.key() == "end") {
            ended = true;
            break;
        } else {
            r.fail("unknown scene entry '" + r.key() + "'");
        }
    }
    if (!have_bounds) throw ParseError(source_name + ": scene has no workspace bounds");
    if (!ended) throw ParseError(source_name + ": scene file missing 'end'");
    scene.validate();
    return scene;
}

Scene loadScene(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open scene file: " + path);
    return parseScene(f, path);
}

void saveScene(const std::string& path, const Scene& scene) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write scene file: " + path);
    writeHeader(f, "scene");
    LineWriter w(f);
    w.tok("bounds").vec(scene.workspace.lo).vec(scene.workspace.hi).end();
    for (const auto& prim : scene.primitives) {
        if (const auto* b = std::get_if<BoxPrimitive>(&prim)) {
            w.tok("box").vec(b->center).vec(b->half_extents);
            w.num(b->rotation.w()).num(b->rotation.x()).num(b->rotation.y()).num(b->rotation.z()).end();
        } else if (const auto* s = std::get_if<SpherePrimitive>(&prim)) {
            w.tok("sphere").vec(s->center).num(s->radius).end();
        } else if (const auto* c = std::get_if<CapsulePrimitive>(&prim)) {
            w.tok("capsule").vec(c->p0).vec(c->p1).num(c->radius).end();
        }
    }
    w.tok("end").end();
}

}  // namespace dlo
