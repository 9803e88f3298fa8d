#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lnc {

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<int, 3>;

/// 3D CT grid with physical metadata. Voxels are Hounsfield-like signed
/// 16-bit values stored x-fastest, then y, then z. Axis-aligned only; no
/// direction-cosine support.
struct CtVolume {
    Dims3 dims{0, 0, 0};       // (nx, ny, nz)
    Vec3 origin{0, 0, 0};      // mm
    Vec3 spacing{1, 1, 1};     // mm per voxel, all > 0
    std::vector<int16_t> voxels;

    size_t index(int x, int y, int z) const {
        return static_cast<size_t>(z) * dims[0] * dims[1] +
               static_cast<size_t>(y) * dims[0] + static_cast<size_t>(x);
    }
    int16_t at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    int16_t& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    size_t voxel_count() const {
        return static_cast<size_t>(dims[0]) * dims[1] * dims[2];
    }
};

/// Same grid with intensities mapped into [0, 1].
struct NormalizedVolume {
    Dims3 dims{0, 0, 0};
    Vec3 origin{0, 0, 0};
    Vec3 spacing{1, 1, 1};
    std::vector<float> voxels;

    size_t index(int x, int y, int z) const {
        return static_cast<size_t>(z) * dims[0] * dims[1] +
               static_cast<size_t>(y) * dims[0] + static_cast<size_t>(x);
    }
};

/// Binary mask on the same grid as its paired volume.
struct MaskVolume {
    Dims3 dims{0, 0, 0};
    Vec3 origin{0, 0, 0};
    Vec3 spacing{1, 1, 1};
    std::vector<uint8_t> voxels;  // values in {0, 1}

    size_t index(int x, int y, int z) const {
        return static_cast<size_t>(z) * dims[0] * dims[1] +
               static_cast<size_t>(y) * dims[0] + static_cast<size_t>(x);
    }
    uint8_t at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    uint8_t& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
};

// Default display window used to map HU into [0, 1] ahead of the networks.
inline constexpr double kDefaultWindowLo = -1000.0;
inline constexpr double kDefaultWindowHi = 400.0;

/// Load a volume from a text header (DimSize / ElementSpacing / Offset /
/// ElementDataFile, optional ElementType) plus its raw companion file.
/// Throws on missing files, malformed keys, or a raw-size mismatch.
CtVolume load_volume(const std::filesystem::path& header_path);

MaskVolume load_mask(const std::filesystem::path& header_path);

/// Write header + raw pair. The raw path is the header path with the
/// extension replaced by ".raw"; the header references it by file name.
void save_volume(const CtVolume& vol, const std::filesystem::path& header_path);

void save_mask(const MaskVolume& mask, const std::filesystem::path& header_path);

/// Continuous voxel coordinate of a world-space point: (p - origin) / spacing.
/// Out-of-grid coordinates are returned unclamped.
Vec3 world_to_voxel(const CtVolume& vol, const Vec3& p);
Vec3 world_to_voxel(const MaskVolume& vol, const Vec3& p);

/// World-space position of a (possibly fractional) voxel coordinate.
Vec3 voxel_to_world(const CtVolume& vol, const Vec3& v);
Vec3 voxel_to_world(const MaskVolume& vol, const Vec3& v);

/// Window [lo, hi] HU onto [0, 1] with clamping. Requires lo < hi.
NormalizedVolume normalize_hu(const CtVolume& vol, double lo = kDefaultWindowLo,
                              double hi = kDefaultWindowHi);

}  // namespace lnc
