#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lnc/annotations.hpp"
#include "lnc/volume.hpp"

namespace lnc {

/// Parameters of the synthetic CT-like dataset. Benign cases carry a smooth
/// ball nodule; malignant cases carry a larger ball whose radius is modulated
/// per direction (spiculation), which gives a small CNN a learnable shape cue.
struct PhantomSpec {
    Dims3 dims{64, 64, 32};
    Vec3 spacing{1.0, 1.0, 3.0};
    double background_mean_hu = -800.0;
    double background_noise_sd = 60.0;
    double benign_diameter_mm[2] = {4.0, 8.0};
    double malignant_diameter_mm[2] = {8.0, 16.0};
    double spiculation_amplitude = 0.3;  // fraction of radius, malignant only
    double nodule_intensity_mean_hu = -100.0;
    double nodule_intensity_sd = 30.0;
    int cases_per_class = 1;
    uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument on bad ranges
};

struct PhantomCase {
    CtVolume volume;
    MaskVolume mask;  // exact support of the generated nodule
    NoduleAnnotation annotation;
    CaseLabel label;
};

/// Generate case `case_index` of the dataset described by `spec`. Substreams
/// are derived from (spec.seed, case_index), so any subset regenerates
/// identically regardless of generation order. Cases [0, cases_per_class)
/// are benign, the rest malignant.
PhantomCase generate_phantom_volume(const PhantomSpec& spec, uint64_t case_index);

struct ManifestEntry {
    std::string path;  // relative to the dataset directory
    uint64_t bytes = 0;
    std::string sha256;
};

struct DatasetManifest {
    std::vector<ManifestEntry> files;
    int cases_per_class = 0;
    uint64_t seed = 0;

    std::string to_json() const;
};

/// Write the full dataset: volume+mask pairs per case, an annotation CSV, a
/// labels CSV (`seriesuid,label`), and `manifest.json`. Returns the manifest.
/// `workers` > 1 parallelizes per-case generation; output bytes are identical
/// for any worker count.
DatasetManifest generate_phantom_dataset(const PhantomSpec& spec,
                                         const std::filesystem::path& out_dir,
                                         int workers = 1);

/// Series uid of case `case_index`, e.g. "phantom-0007".
std::string phantom_series_uid(uint64_t case_index);

}  // namespace lnc
