#pragma once

#include <dlo/scene.hpp>
#include <dlo/types.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dlo {

// Voxel signed distance field sampled at lattice points origin + h * (i,j,k),
// i < nx etc.; queries interpolate trilinearly between the 8 surrounding
// samples, clamping out-of-range points to the boundary.
struct SdfGrid {
    Vec3 origin = Vec3::Zero();
    double h = 0.01;
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> values;  // x fastest: idx = (iz * ny + iy) * nx + ix

    double at(int ix, int iy, int iz) const { return values[(static_cast<size_t>(iz) * ny + iy) * nx + ix]; }

    double query(const Vec3& p, bool* clamped = nullptr) const;
    Vec3 gradient(const Vec3& p) const;  // central differences at h/2
    Vec3 upperCorner() const { return origin + h * Vec3(nx - 1, ny - 1, nz - 1); }
};

// Fills the grid over the scene's workspace bounds. Throws ConfigError when
// the voxel count would exceed memory_cap_bytes.
SdfGrid buildSdf(const Scene& scene, double cell_size, std::size_t memory_cap_bytes = 512u << 20);

// Content hash of (scene geometry, cell size) used to validate cache reuse.
std::uint64_t sceneHash(const Scene& scene, double cell_size);

// Binary grid cache (the one non-text artifact format).
void saveSdfCache(const std::string& path, const SdfGrid& grid, std::uint64_t scene_hash);
std::optional<SdfGrid> loadSdfCache(const std::string& path, std::uint64_t expected_hash);

}  // namespace dlo
