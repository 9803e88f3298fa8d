#include "lnc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lnc/csv.hpp"
#include "lnc/digest.hpp"
#include "lnc/rng.hpp"

namespace lnc {

void PhantomSpec::validate() const {
    for (int d : dims)
        if (d < 1) throw std::invalid_argument("phantom: dims must be >= 1");
    for (double s : spacing)
        if (!(s > 0)) throw std::invalid_argument("phantom: spacing must be > 0");
    auto check_range = [](const double (&r)[2], const char* name) {
        if (!(r[0] > 0) || !(r[0] <= r[1]))
            throw std::invalid_argument(std::string("phantom: bad diameter range for ") + name);
    };
    check_range(benign_diameter_mm, "benign");
    check_range(malignant_diameter_mm, "malignant");
    if (spiculation_amplitude < 0 || spiculation_amplitude >= 1)
        throw std::invalid_argument("phantom: spiculation_amplitude must be in [0, 1)");
    if (cases_per_class < 1)
        throw std::invalid_argument("phantom: cases_per_class must be >= 1");
    if (!(background_noise_sd >= 0) || !(nodule_intensity_sd >= 0))
        throw std::invalid_argument("phantom: noise sd must be >= 0");

    // The largest possible nodule must leave room for a center at least one
    // diameter away from every grid border.
    double dmax = std::max(benign_diameter_mm[1], malignant_diameter_mm[1]);
    for (int ax = 0; ax < 3; ++ax) {
        double extent = (dims[ax] - 1) * spacing[ax];
        if (extent < 2 * dmax)
            throw std::invalid_argument(
                "phantom: dims too small to place the largest nodule (axis " +
                std::to_string(ax) + ")");
    }
}

std::string phantom_series_uid(uint64_t case_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phantom-%04llu",
                  static_cast<unsigned long long>(case_index));
    return buf;
}

namespace {

constexpr int kSpiculationLobes = 8;

struct SpiculationField {
    double axes[kSpiculationLobes][3];
    double weights[kSpiculationLobes];
    double norm = 1.0;

    // Smooth direction-dependent modulation in [-1, 1].
    double operator()(double ux, double uy, double uz) const {
        double s = 0;
        for (int k = 0; k < kSpiculationLobes; ++k) {
            double t = ux * axes[k][0] + uy * axes[k][1] + uz * axes[k][2];
            s += weights[k] * t * t * t;
        }
        return s / norm;
    }
};

SpiculationField sample_spiculation(std::mt19937_64& rng) {
    SpiculationField f;
    double wsum = 0;
    for (int k = 0; k < kSpiculationLobes; ++k) {
        double vx = normal01(rng), vy = normal01(rng), vz = normal01(rng);
        double n = std::sqrt(vx * vx + vy * vy + vz * vz);
        if (n < 1e-12) n = 1;
        f.axes[k][0] = vx / n;
        f.axes[k][1] = vy / n;
        f.axes[k][2] = vz / n;
        f.weights[k] = uniform_range(rng, -1.0, 1.0);
        wsum += std::abs(f.weights[k]);
    }
    f.norm = std::max(wsum, 1e-12);
    return f;
}

int16_t to_hu(double v) {
    double r = std::nearbyint(v);
    r = std::clamp(r, -32768.0, 32767.0);
    return static_cast<int16_t>(r);
}

}  // namespace

PhantomCase generate_phantom_volume(const PhantomSpec& spec, uint64_t case_index) {
    spec.validate();
    const uint64_t n_cases = 2ull * static_cast<uint64_t>(spec.cases_per_class);
    if (case_index >= n_cases)
        throw std::out_of_range("phantom: case index beyond dataset size");
    const CaseLabel label = case_index < static_cast<uint64_t>(spec.cases_per_class)
                                ? CaseLabel::benign
                                : CaseLabel::malignant;

    std::mt19937_64 rng = substream(spec.seed, case_index);

    const double* range = label == CaseLabel::benign ? spec.benign_diameter_mm
                                                     : spec.malignant_diameter_mm;
    const double diameter = uniform_range(rng, range[0], range[1]);
    const double radius = diameter / 2.0;

    // Center at least one diameter away from the voxel-center extent borders.
    Vec3 center;
    for (int ax = 0; ax < 3; ++ax) {
        double hi = (spec.dims[ax] - 1) * spec.spacing[ax] - diameter;
        center[ax] = uniform_range(rng, diameter, hi);
    }

    const double amp = label == CaseLabel::malignant ? spec.spiculation_amplitude : 0.0;
    SpiculationField spic = sample_spiculation(rng);  // drawn for both classes to
                                                      // keep stream layout uniform

    PhantomCase out;
    out.label = label;
    out.volume.dims = spec.dims;
    out.volume.spacing = spec.spacing;
    out.volume.origin = {0, 0, 0};
    out.volume.voxels.resize(out.volume.voxel_count());
    out.mask.dims = spec.dims;
    out.mask.spacing = spec.spacing;
    out.mask.origin = {0, 0, 0};
    out.mask.voxels.assign(out.volume.voxel_count(), 0);

    const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
    size_t i = 0;
    for (int z = 0; z < nz; ++z) {
        double wz = z * spec.spacing[2] - center[2];
        for (int y = 0; y < ny; ++y) {
            double wy = y * spec.spacing[1] - center[1];
            for (int x = 0; x < nx; ++x, ++i) {
                double wx = x * spec.spacing[0] - center[0];
                double d = std::sqrt(wx * wx + wy * wy + wz * wz);
                bool inside;
                if (d < 1e-12) {
                    inside = true;
                } else {
                    double r_dir =
                        radius * (1.0 + amp * spic(wx / d, wy / d, wz / d));
                    inside = d <= r_dir;
                }
                double hu = inside ? normal(rng, spec.nodule_intensity_mean_hu,
                                            spec.nodule_intensity_sd)
                                   : normal(rng, spec.background_mean_hu,
                                            spec.background_noise_sd);
                out.volume.voxels[i] = to_hu(hu);
                out.mask.voxels[i] = inside ? 1 : 0;
            }
        }
    }

    out.annotation.series_uid = phantom_series_uid(case_index);
    out.annotation.center_world = center;
    out.annotation.diameter_mm = diameter;
    return out;
}

std::string DatasetManifest::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["cases_per_class"] = cases_per_class;
    j["files"] = nlohmann::ordered_json::array();
    for (const auto& f : files) {
        j["files"].push_back({{"path", f.path}, {"bytes", f.bytes}, {"sha256", f.sha256}});
    }
    return j.dump(2) + "\n";
}

DatasetManifest generate_phantom_dataset(const PhantomSpec& spec,
                                         const std::filesystem::path& out_dir,
                                         int workers) {
    spec.validate();
    std::filesystem::create_directories(out_dir);

    const uint64_t n_cases = 2ull * static_cast<uint64_t>(spec.cases_per_class);
    std::vector<NoduleAnnotation> annotations(n_cases);
    std::vector<CaseLabel> labels(n_cases);

#pragma omp parallel for schedule(static) num_threads(std::max(1, workers)) \
    if (workers > 1)
    for (int64_t idx = 0; idx < static_cast<int64_t>(n_cases); ++idx) {
        PhantomCase c = generate_phantom_volume(spec, static_cast<uint64_t>(idx));
        std::string uid = c.annotation.series_uid;
        save_volume(c.volume, out_dir / (uid + ".mhd"));
        save_mask(c.mask, out_dir / (uid + "_truth.mhd"));
        annotations[idx] = c.annotation;
        labels[idx] = c.label;
    }

    {
        std::ofstream ann(out_dir / "annotations.csv");
        ann << "seriesuid,coordX,coordY,coordZ,diameter_mm\n";
        for (const auto& a : annotations) {
            ann << a.series_uid << ',' << format_double(a.center_world[0]) << ','
                << format_double(a.center_world[1]) << ',' << format_double(a.center_world[2])
                << ',' << format_double(a.diameter_mm) << '\n';
        }
    }
    {
        std::ofstream lab(out_dir / "labels.csv");
        lab << "seriesuid,label\n";
        for (uint64_t i = 0; i < n_cases; ++i)
            lab << phantom_series_uid(i) << ',' << to_string(labels[i]) << '\n';
    }

    DatasetManifest manifest;
    manifest.seed = spec.seed;
    manifest.cases_per_class = spec.cases_per_class;
    std::vector<std::string> names;
    for (uint64_t i = 0; i < n_cases; ++i) {
        std::string uid = phantom_series_uid(i);
        names.push_back(uid + ".mhd");
        names.push_back(uid + ".raw");
        names.push_back(uid + "_truth.mhd");
        names.push_back(uid + "_truth.raw");
    }
    names.push_back("annotations.csv");
    names.push_back("labels.csv");
    for (const auto& name : names) {
        ManifestEntry e;
        e.path = name;
        e.bytes = std::filesystem::file_size(out_dir / name);
        e.sha256 = sha256_file(out_dir / name);
        manifest.files.push_back(std::move(e));
    }

    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.to_json();
    if (!mf) throw std::runtime_error("phantom: failed to write manifest");
    return manifest;
}

}  // namespace lnc
