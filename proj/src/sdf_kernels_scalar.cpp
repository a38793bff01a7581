#include <dlo/sdf_kernels.hpp>

#include <algorithm>
#include <cmath>

namespace dlo::kernels {

namespace {

void sphereMinScalar(const double* px, const double* py, const double* pz, std::size_t n, double cx, double cy,
                     double cz, double radius, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = px[i] - cx;
        const double dy = py[i] - cy;
        const double dz = pz[i] - cz;
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz) - radius;
        out[i] = std::min(out[i], d);
    }
}

void boxMinScalar(const double* px, const double* py, const double* pz, std::size_t n, const double* inv_rot,
                  double cx, double cy, double cz, double hx, double hy, double hz, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = px[i] - cx;
        const double dy = py[i] - cy;
        const double dz = pz[i] - cz;
        const double lx = inv_rot[0] * dx + inv_rot[1] * dy + inv_rot[2] * dz;
        const double ly = inv_rot[3] * dx + inv_rot[4] * dy + inv_rot[5] * dz;
        const double lz = inv_rot[6] * dx + inv_rot[7] * dy + inv_rot[8] * dz;
        const double qx = std::abs(lx) - hx;
        const double qy = std::abs(ly) - hy;
        const double qz = std::abs(lz) - hz;
        const double ox = std::max(qx, 0.0);
        const double oy = std::max(qy, 0.0);
        const double oz = std::max(qz, 0.0);
        const double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
        const double inside = std::min(std::max(qx, std::max(qy, qz)), 0.0);
        out[i] = std::min(out[i], outside + inside);
    }
}

void capsuleMinScalar(const double* px, const double* py, const double* pz, std::size_t n, double ax, double ay,
                      double az, double bx, double by, double bz, double radius, double* out) {
    const double ux = bx - ax, uy = by - ay, uz = bz - az;
    const double uu = ux * ux + uy * uy + uz * uz;
    const double inv_uu = uu > 0.0 ? 1.0 / uu : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wx = px[i] - ax;
        const double wy = py[i] - ay;
        const double wz = pz[i] - az;
        const double t = std::clamp((wx * ux + wy * uy + wz * uz) * inv_uu, 0.0, 1.0);
        const double dx = wx - t * ux;
        const double dy = wy - t * uy;
        const double dz = wz - t * uz;
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz) - radius;
        out[i] = std::min(out[i], d);
    }
}

}  // namespace

const Kernels& scalarKernels() {
    static const Kernels k{sphereMinScalar, boxMinScalar, capsuleMinScalar, "scalar"};
    return k;
}

#ifndef DLO_HAVE_AVX2_TU
const Kernels* avx2KernelsOrNull() { return nullptr; }
#endif

bool avx2Available() { return avx2KernelsOrNull() != nullptr; }

const Kernels& activeKernels() {
    const Kernels* avx2 = avx2KernelsOrNull();
    return avx2 ? *avx2 : scalarKernels();
}

}  // namespace dlo::kernels
