// AVX2 variants of the voxel-fill kernels. Compiled with -mavx2 in its own
// translation unit; selected at runtime via __builtin_cpu_supports so the
// binary still runs on older cores. Each lane performs the same operation
// sequence as the scalar kernel, so results are bit-identical.
#include <dlo/sdf_kernels.hpp>

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace dlo::kernels {

namespace {

inline __m256d absPd(__m256d v) {
    const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    return _mm256_and_pd(v, mask);
}

void sphereMinAvx2(const double* px, const double* py, const double* pz, std::size_t n, double cx, double cy,
                   double cz, double radius, double* out) {
    const __m256d vcx = _mm256_set1_pd(cx), vcy = _mm256_set1_pd(cy), vcz = _mm256_set1_pd(cz);
    const __m256d vr = _mm256_set1_pd(radius);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(px + i), vcx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(py + i), vcy);
        const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(pz + i), vcz);
        const __m256d d2 = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                         _mm256_mul_pd(dz, dz));
        const __m256d d = _mm256_sub_pd(_mm256_sqrt_pd(d2), vr);
        _mm256_storeu_pd(out + i, _mm256_min_pd(_mm256_loadu_pd(out + i), d));
    }
    for (; i < n; ++i) {
        const double dx = px[i] - cx, dy = py[i] - cy, dz = pz[i] - cz;
        out[i] = std::min(out[i], std::sqrt(dx * dx + dy * dy + dz * dz) - radius);
    }
}

void boxMinAvx2(const double* px, const double* py, const double* pz, std::size_t n, const double* inv_rot,
                double cx, double cy, double cz, double hx, double hy, double hz, double* out) {
    const __m256d vcx = _mm256_set1_pd(cx), vcy = _mm256_set1_pd(cy), vcz = _mm256_set1_pd(cz);
    const __m256d vhx = _mm256_set1_pd(hx), vhy = _mm256_set1_pd(hy), vhz = _mm256_set1_pd(hz);
    __m256d r[9];
    for (int k = 0; k < 9; ++k) r[k] = _mm256_set1_pd(inv_rot[k]);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(px + i), vcx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(py + i), vcy);
        const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(pz + i), vcz);
        const __m256d lx =
            _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r[0], dx), _mm256_mul_pd(r[1], dy)), _mm256_mul_pd(r[2], dz));
        const __m256d ly =
            _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r[3], dx), _mm256_mul_pd(r[4], dy)), _mm256_mul_pd(r[5], dz));
        const __m256d lz =
            _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r[6], dx), _mm256_mul_pd(r[7], dy)), _mm256_mul_pd(r[8], dz));
        const __m256d qx = _mm256_sub_pd(absPd(lx), vhx);
        const __m256d qy = _mm256_sub_pd(absPd(ly), vhy);
        const __m256d qz = _mm256_sub_pd(absPd(lz), vhz);
        const __m256d ox = _mm256_max_pd(qx, zero);
        const __m256d oy = _mm256_max_pd(qy, zero);
        const __m256d oz = _mm256_max_pd(qz, zero);
        const __m256d o2 = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(ox, ox), _mm256_mul_pd(oy, oy)),
                                         _mm256_mul_pd(oz, oz));
        const __m256d outside = _mm256_sqrt_pd(o2);
        const __m256d inside = _mm256_min_pd(_mm256_max_pd(qx, _mm256_max_pd(qy, qz)), zero);
        const __m256d d = _mm256_add_pd(outside, inside);
        _mm256_storeu_pd(out + i, _mm256_min_pd(_mm256_loadu_pd(out + i), d));
    }
    for (; i < n; ++i) {
        const double dx = px[i] - cx, dy = py[i] - cy, dz = pz[i] - cz;
        const double lx = inv_rot[0] * dx + inv_rot[1] * dy + inv_rot[2] * dz;
        const double ly = inv_rot[3] * dx + inv_rot[4] * dy + inv_rot[5] * dz;
        const double lz = inv_rot[6] * dx + inv_rot[7] * dy + inv_rot[8] * dz;
        const double qx = std::abs(lx) - hx;
        const double qy = std::abs(ly) - hy;
        const double qz = std::abs(lz) - hz;
        const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
        const double outside = std::sqrt(ox * ox + oy * oy + oz * oz);
        const double inside = std::min(std::max(qx, std::max(qy, qz)), 0.0);
        out[i] = std::min(out[i], outside + inside);
    }
}

void capsuleMinAvx2(const double* px, const double* py, const double* pz, std::size_t n, double ax, double ay,
                    double az, double bx, double by, double bz, double radius, double* out) {
    const double ux = bx - ax, uy = by - ay, uz = bz - az;
    const double uu = ux * ux + uy * uy + uz * uz;
    const double inv_uu = uu > 0.0 ? 1.0 / uu : 0.0;
    const __m256d vax = _mm256_set1_pd(ax), vay = _mm256_set1_pd(ay), vaz = _mm256_set1_pd(az);
    const __m256d vux = _mm256_set1_pd(ux), vuy = _mm256_set1_pd(uy), vuz = _mm256_set1_pd(uz);
    const __m256d vinv = _mm256_set1_pd(inv_uu), vr = _mm256_set1_pd(radius);
    const __m256d zero = _mm256_setzero_pd(), one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d wx = _mm256_sub_pd(_mm256_loadu_pd(px + i), vax);
        const __m256d wy = _mm256_sub_pd(_mm256_loadu_pd(py + i), vay);
        const __m256d wz = _mm256_sub_pd(_mm256_loadu_pd(pz + i), vaz);
        const __m256d dot = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(wx, vux), _mm256_mul_pd(wy, vuy)),
                                          _mm256_mul_pd(wz, vuz));
        const __m256d t = _mm256_min_pd(_mm256_max_pd(_mm256_mul_pd(dot, vinv), zero), one);
        const __m256d dx = _mm256_sub_pd(wx, _mm256_mul_pd(t, vux));
        const __m256d dy = _mm256_sub_pd(wy, _mm256_mul_pd(t, vuy));
        const __m256d dz = _mm256_sub_pd(wz, _mm256_mul_pd(t, vuz));
        const __m256d d2 = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                         _mm256_mul_pd(dz, dz));
        const __m256d d = _mm256_sub_pd(_mm256_sqrt_pd(d2), vr);
        _mm256_storeu_pd(out + i, _mm256_min_pd(_mm256_loadu_pd(out + i), d));
    }
    for (; i < n; ++i) {
        const double wx = px[i] - ax, wy = py[i] - ay, wz = pz[i] - az;
        const double t = std::clamp((wx * ux + wy * uy + wz * uz) * inv_uu, 0.0, 1.0);
        const double dx = wx - t * ux, dy = wy - t * uy, dz = wz - t * uz;
        out[i] = std::min(out[i], std::sqrt(dx * dx + dy * dy + dz * dz) - radius);
    }
}

}  // namespace

const Kernels* avx2KernelsOrNull() {
    static const Kernels k{sphereMinAvx2, boxMinAvx2, capsuleMinAvx2, "avx2"};
    if (__builtin_cpu_supports("avx2")) return &k;
    return nullptr;
}

}  // namespace dlo::kernels
