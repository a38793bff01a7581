#pragma once

#include <cstddef>

namespace dlo::kernels {

// Batch point-to-primitive signed distances over structure-of-arrays point
// buffers; the voxel-fill inner loop of the SDF build. Scalar reference
// kernels are always available; AVX2 variants are selected once at load time
// when the CPU supports them and compute bit-identical results (same
// operation order per point, no FMA contraction on either side).

struct Kernels {
    // out[i] = min(out[i], distance(point[i]))
    void (*sphere_min)(const double* px, const double* py, const double* pz, std::size_t n, double cx, double cy,
                       double cz, double radius, double* out);
    // box given by inverse rotation (row-major 3x3 taking world to box frame)
    void (*box_min)(const double* px, const double* py, const double* pz, std::size_t n, const double* inv_rot,
                    double cx, double cy, double cz, double hx, double hy, double hz, double* out);
    void (*capsule_min)(const double* px, const double* py, const double* pz, std::size_t n, double ax, double ay,
                        double az, double bx, double by, double bz, double radius, double* out);
    const char* name;
};

const Kernels& scalarKernels();
const Kernels& activeKernels();  // AVX2 when available, scalar otherwise
bool avx2Available();
const Kernels* avx2KernelsOrNull();

}  // namespace dlo::kernels
