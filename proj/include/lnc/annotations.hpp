#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lnc/volume.hpp"

namespace lnc {

/// One finding from the annotation table: world-space center and diameter.
struct NoduleAnnotation {
    std::string series_uid;
    Vec3 center_world{0, 0, 0};  // mm
    double diameter_mm = 0;      // > 0
};

enum class CaseLabel { benign, malignant };

std::string to_string(CaseLabel label);
CaseLabel case_label_from_string(const std::string& s);

/// One 2D training record cut from a volume.
struct SliceSample {
    std::vector<float> image;           // h*w values in [0, 1], row-major
    std::optional<std::vector<uint8_t>> mask;  // same dims when present
    int width = 0;
    int height = 0;
    std::string series_uid;
    int slice_index = 0;
    std::optional<CaseLabel> case_label;
};

/// Parse `seriesuid,coordX,coordY,coordZ,diameter_mm`. One record per data
/// line, file order preserved. Throws on missing columns, non-numeric
/// coordinates, or non-positive diameters.
std::vector<NoduleAnnotation> parse_annotations(const std::filesystem::path& path);

struct RasterizeOptions {
    /// Per-slice disk variant: each z slice within the ball's z extent gets a
    /// full-diameter disk instead of the sphere cross-section.
    bool per_slice_disk = false;
    /// Findings below this diameter are skipped.
    double min_diameter_mm = 0.0;
};

/// Voxel v is set iff its world position lies within diameter/2 of some
/// finding center (closed ball, union over findings). Distances are taken
/// in world space, so anisotropic spacing is respected.
MaskVolume rasterize_mask(const CtVolume& vol, const std::vector<NoduleAnnotation>& findings,
                          const RasterizeOptions& opts = {});

/// Indices of slices to keep for training: the contiguous range covering all
/// nonzero mask slices extended by `pad` on each side, clamped to bounds.
/// Empty when the mask is empty.
std::vector<int> select_slices(const MaskVolume& mask, int pad = 5);

/// Cut one SliceSample per index. Padding slices carry all-zero masks.
/// Pixel values are copied bit-exactly; throws if an index is out of range.
std::vector<SliceSample> extract_slice_samples(const NormalizedVolume& norm,
                                               const MaskVolume& mask,
                                               const std::vector<int>& indices,
                                               std::optional<CaseLabel> label,
                                               const std::string& series_uid);

/// Every slice of the volume, without masks (unlabeled screening input).
std::vector<SliceSample> extract_all_slices(const NormalizedVolume& norm,
                                            std::optional<CaseLabel> label,
                                            const std::string& series_uid);

}  // namespace lnc
