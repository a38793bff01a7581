#include <dlo/formats.hpp>
#include <dlo/sdf.hpp>
#include <dlo/sdf_kernels.hpp>

#include <cstring>
#include <fstream>

namespace dlo {

double SdfGrid::query(const Vec3& p, bool* clamped) const {
    Vec3 local = (p - origin) / h;
    bool clip = false;
    const double max_x = nx - 1, max_y = ny - 1, max_z = nz - 1;
    auto clampAxis = [&clip](double v, double hi) {
        if (v < 0.0) {
            clip = true;
            return 0.0;
        }
        if (v > hi) {
            clip = true;
            return hi;
        }
        return v;
    };
    local.x() = clampAxis(local.x(), max_x);
    local.y() = clampAxis(local.y(), max_y);
    local.z() = clampAxis(local.z(), max_z);
    if (clamped) *clamped = clip;

    const int ix = std::min(static_cast<int>(local.x()), nx - 2 >= 0 ? nx - 2 : 0);
    const int iy = std::min(static_cast<int>(local.y()), ny - 2 >= 0 ? ny - 2 : 0);
    const int iz = std::min(static_cast<int>(local.z()), nz - 2 >= 0 ? nz - 2 : 0);
    const double fx = local.x() - ix;
    const double fy = local.y() - iy;
    const double fz = local.z() - iz;

    auto v = [&](int dx, int dy, int dz) { return at(ix + dx, iy + dy, iz + dz); };
    const double c00 = v(0, 0, 0) * (1 - fx) + v(1, 0, 0) * fx;
    const double c10 = v(0, 1, 0) * (1 - fx) + v(1, 1, 0) * fx;
    const double c01 = v(0, 0, 1) * (1 - fx) + v(1, 0, 1) * fx;
    const double c11 = v(0, 1, 1) * (1 - fx) + v(1, 1, 1) * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

Vec3 SdfGrid::gradient(const Vec3& p) const {
    const double step = h / 2.0;
    Vec3 g;
    for (int d = 0; d < 3; ++d) {
        Vec3 pp = p, pm = p;
        pp[d] += step;
        pm[d] -= step;
        g[d] = (query(pp) - query(pm)) / (2.0 * step);
    }
    return g;
}

SdfGrid buildSdf(const Scene& scene, double cell_size, std::size_t memory_cap_bytes) {
    if (!(cell_size > 0)) throw ConfigError("sdf cell size must be positive");
    scene.validate();

    SdfGrid grid;
    grid.origin = scene.workspace.lo;
    grid.h = cell_size;
    const Vec3 span = scene.workspace.hi - scene.workspace.lo;
    grid.nx = static_cast<int>(std::ceil(span.x() / cell_size)) + 1;
    grid.ny = static_cast<int>(std::ceil(span.y() / cell_size)) + 1;
    grid.nz = static_cast<int>(std::ceil(span.z() / cell_size)) + 1;
    const std::size_t total = static_cast<std::size_t>(grid.nx) * grid.ny * grid.nz;
    if (total * sizeof(double) > memory_cap_bytes)
        throw ConfigError("sdf grid would exceed the memory cap; increase the cell size");

    grid.values.assign(total, kEmptySceneDistance);
    if (scene.primitives.empty()) return grid;

    const auto& k = kernels::activeKernels();

    // fill one xy slab at a time through the batch kernels
    const std::size_t slab = static_cast<std::size_t>(grid.nx) * grid.ny;
    std::vector<double> px(slab), py(slab), pz(slab);
    for (int iz = 0; iz < grid.nz; ++iz) {
        std::size_t i = 0;
        const double z = grid.origin.z() + grid.h * iz;
        for (int iy = 0; iy < grid.ny; ++iy) {
            const double y = grid.origin.y() + grid.h * iy;
            for (int ix = 0; ix < grid.nx; ++ix, ++i) {
                px[i] = grid.origin.x() + grid.h * ix;
                py[i] = y;
                pz[i] = z;
            }
        }
        double* out = grid.values.data() + slab * iz;
        for (const auto& prim : scene.primitives) {
            if (const auto* s = std::get_if<SpherePrimitive>(&prim)) {
                k.sphere_min(px.data(), py.data(), pz.data(), slab, s->center.x(), s->center.y(), s->center.z(),
                             s->radius, out);
            } else if (const auto* b = std::get_if<BoxPrimitive>(&prim)) {
                const Mat3 inv = b->rotation.conjugate().toRotationMatrix();
                double inv_rm[9];
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) inv_rm[3 * r + c] = inv(r, c);
                k.box_min(px.data(), py.data(), pz.data(), slab, inv_rm, b->center.x(), b->center.y(),
                          b->center.z(), b->half_extents.x(), b->half_extents.y(), b->half_extents.z(), out);
            } else if (const auto* c = std::get_if<CapsulePrimitive>(&prim)) {
                k.capsule_min(px.data(), py.data(), pz.data(), slab, c->p0.x(), c->p0.y(), c->p0.z(), c->p1.x(),
                              c->p1.y(), c->p1.z(), c->radius, out);
            }
        }
    }
    return grid;
}

std::uint64_t sceneHash(const Scene& scene, double cell_size) {
    // FNV-1a over the canonical text serialization plus the cell size
    std::uint64_t hash = 1469598103934665603ull;
    auto mix = [&hash](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= bytes[i];
            hash *= 1099511628211ull;
        }
    };
    auto mixd = [&](double v) { mix(&v, sizeof(v)); };
    mixd(cell_size);
    mixd(scene.workspace.lo.x());
    mixd(scene.workspace.lo.y());
    mixd(scene.workspace.lo.z());
    mixd(scene.workspace.hi.x());
    mixd(scene.workspace.hi.y());
    mixd(scene.workspace.hi.z());
    for (const auto& prim : scene.primitives) {
        if (const auto* b = std::get_if<BoxPrimitive>(&prim)) {
            mix("box", 3);
            for (int i = 0; i < 3; ++i) mixd(b->center[i]);
            for (int i = 0; i < 3; ++i) mixd(b->half_extents[i]);
            mixd(b->rotation.w());
            mixd(b->rotation.x());
            mixd(b->rotation.y());
            mixd(b->rotation.z());
        } else if (const auto* s = std::get_if<SpherePrimitive>(&prim)) {
            mix("sph", 3);
            for (int i = 0; i < 3; ++i) mixd(s->center[i]);
            mixd(s->radius);
        } else if (const auto* c = std::get_if<CapsulePrimitive>(&prim)) {
            mix("cap", 3);
            for (int i = 0; i < 3; ++i) mixd(c->p0[i]);
            for (int i = 0; i < 3; ++i) mixd(c->p1[i]);
            mixd(c->radius);
        }
    }
    return hash;
}

namespace {
constexpr char kCacheMagic[8] = {'D', 'L', 'O', 'S', 'D', 'F', '1', '\n'};
}

void saveSdfCache(const std::string& path, const SdfGrid& grid, std::uint64_t scene_hash) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write sdf cache: " + path);
    f.write(kCacheMagic, sizeof(kCacheMagic));
    f.write(reinterpret_cast<const char*>(&scene_hash), sizeof(scene_hash));
    const double origin[3] = {grid.origin.x(), grid.origin.y(), grid.origin.z()};
    f.write(reinterpret_cast<const char*>(origin), sizeof(origin));
    f.write(reinterpret_cast<const char*>(&grid.h), sizeof(grid.h));
    const std::int32_t dims[3] = {grid.nx, grid.ny, grid.nz};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
}

std::optional<SdfGrid> loadSdfCache(const std::string& path, std::uint64_t expected_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return std::nullopt;
    char magic[8];
    if (!f.read(magic, sizeof(magic)) || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) return std::nullopt;
    std::uint64_t hash;
    if (!f.read(reinterpret_cast<char*>(&hash), sizeof(hash)) || hash != expected_hash) return std::nullopt;
    SdfGrid grid;
    double origin[3];
    std::int32_t dims[3];
    if (!f.read(reinterpret_cast<char*>(origin), sizeof(origin))) return std::nullopt;
    if (!f.read(reinterpret_cast<char*>(&grid.h), sizeof(grid.h))) return std::nullopt;
    if (!f.read(reinterpret_cast<char*>(dims), sizeof(dims))) return std::nullopt;
    grid.origin = Vec3(origin[0], origin[1], origin[2]);
    grid.nx = dims[0];
    grid.ny = dims[1];
    grid.nz = dims[2];
    if (grid.nx <= 1 || grid.ny <= 1 || grid.nz <= 1) return std::nullopt;
    const std::size_t total = static_cast<std::size_t>(grid.nx) * grid.ny * grid.nz;
    grid.values.resize(total);
    if (!f.read(reinterpret_cast<char*>(grid.values.data()), static_cast<std::streamsize>(total * sizeof(double))))
        return std::nullopt;
    return grid;
}

}  // namespace dlo
