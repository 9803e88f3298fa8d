#include "lnc/annotations.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lnc/csv.hpp"

namespace lnc {

std::string to_string(CaseLabel label) {
    return label == CaseLabel::benign ? "benign" : "malignant";
}

CaseLabel case_label_from_string(const std::string& s) {
    if (s == "benign") return CaseLabel::benign;
    if (s == "malignant") return CaseLabel::malignant;
    throw std::runtime_error("unknown case label '" + s + "'");
}

std::vector<NoduleAnnotation> parse_annotations(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    size_t c_uid = t.col("seriesuid");
    size_t c_x = t.col("coordX");
    size_t c_y = t.col("coordY");
    size_t c_z = t.col("coordZ");
    size_t c_d = t.col("diameter_mm");

    std::vector<NoduleAnnotation> out;
    out.reserve(t.rows.size());
    for (size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        if (row.size() < t.header.size())
            throw std::runtime_error("annotations: line " + std::to_string(r + 2) +
                                     " has too few fields");
        NoduleAnnotation a;
        a.series_uid = row[c_uid];
        if (a.series_uid.empty())
            throw std::runtime_error("annotations: empty seriesuid on line " +
                                     std::to_string(r + 2));
        a.center_world = {parse_double(row[c_x]), parse_double(row[c_y]),
                          parse_double(row[c_z])};
        a.diameter_mm = parse_double(row[c_d]);
        if (!(a.diameter_mm > 0))
            throw std::runtime_error("annotations: non-positive diameter on line " +
                                     std::to_string(r + 2));
        out.push_back(std::move(a));
    }
    return out;
}

MaskVolume rasterize_mask(const CtVolume& vol, const std::vector<NoduleAnnotation>& findings,
                          const RasterizeOptions& opts) {
    MaskVolume mask;
    mask.dims = vol.dims;
    mask.origin = vol.origin;
    mask.spacing = vol.spacing;
    mask.voxels.assign(vol.voxel_count(), 0);

    for (const auto& f : findings) {
        if (f.diameter_mm < opts.min_diameter_mm) continue;
        const double r = f.diameter_mm / 2.0;
        // Bounding box in voxel space, clamped to the grid.
        int lo[3], hi[3];
        for (int ax = 0; ax < 3; ++ax) {
            double c = (f.center_world[ax] - vol.origin[ax]) / vol.spacing[ax];
            double extent = r / vol.spacing[ax];
            lo[ax] = std::max(0, static_cast<int>(std::floor(c - extent)));
            hi[ax] = std::min(vol.dims[ax] - 1, static_cast<int>(std::ceil(c + extent)));
        }
        const double r2 = r * r;
        for (int z = lo[2]; z <= hi[2]; ++z) {
            double wz = vol.origin[2] + z * vol.spacing[2];
            double dz = wz - f.center_world[2];
            if (opts.per_slice_disk) {
                if (std::abs(dz) > r) continue;
                dz = 0.0;  // full-diameter disk on every covered slice
            }
            for (int y = lo[1]; y <= hi[1]; ++y) {
                double wy = vol.origin[1] + y * vol.spacing[1];
                double dy = wy - f.center_world[1];
                for (int x = lo[0]; x <= hi[0]; ++x) {
                    double wx = vol.origin[0] + x * vol.spacing[0];
                    double dx = wx - f.center_world[0];
                    if (dx * dx + dy * dy + dz * dz <= r2)
                        mask.voxels[mask.index(x, y, z)] = 1;
                }
            }
        }
    }
    return mask;
}

std::vector<int> select_slices(const MaskVolume& mask, int pad) {
    if (pad < 0) throw std::invalid_argument("select_slices: pad must be >= 0");
    const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
    const size_t slice_sz = static_cast<size_t>(nx) * ny;
    int first = -1, last = -1;
    for (int z = 0; z < nz; ++z) {
        const uint8_t* s = mask.voxels.data() + static_cast<size_t>(z) * slice_sz;
        bool nonzero = std::any_of(s, s + slice_sz, [](uint8_t v) { return v != 0; });
        if (nonzero) {
            if (first < 0) first = z;
            last = z;
        }
    }
    if (first < 0) return {};
    int lo = std::max(0, first - pad);
    int hi = std::min(nz - 1, last + pad);
    std::vector<int> out;
    out.reserve(hi - lo + 1);
    for (int z = lo; z <= hi; ++z) out.push_back(z);
    return out;
}

std::vector<SliceSample> extract_slice_samples(const NormalizedVolume& norm,
                                               const MaskVolume& mask,
                                               const std::vector<int>& indices,
                                               std::optional<CaseLabel> label,
                                               const std::string& series_uid) {
    if (norm.dims != mask.dims)
        throw std::invalid_argument("extract_slice_samples: volume/mask dims differ");
    const int nx = norm.dims[0], ny = norm.dims[1], nz = norm.dims[2];
    const size_t slice_sz = static_cast<size_t>(nx) * ny;

    std::vector<SliceSample> out;
    out.reserve(indices.size());
    for (int z : indices) {
        if (z < 0 || z >= nz)
            throw std::out_of_range("extract_slice_samples: slice index " + std::to_string(z) +
                                    " outside [0, " + std::to_string(nz - 1) + "]");
        SliceSample s;
        s.width = nx;
        s.height = ny;
        s.series_uid = series_uid;
        s.slice_index = z;
        s.case_label = label;
        const float* img = norm.voxels.data() + static_cast<size_t>(z) * slice_sz;
        s.image.assign(img, img + slice_sz);
        const uint8_t* m = mask.voxels.data() + static_cast<size_t>(z) * slice_sz;
        s.mask = std::vector<uint8_t>(m, m + slice_sz);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<SliceSample> extract_all_slices(const NormalizedVolume& norm,
                                            std::optional<CaseLabel> label,
                                            const std::string& series_uid) {
    const int nx = norm.dims[0], ny = norm.dims[1], nz = norm.dims[2];
    const size_t slice_sz = static_cast<size_t>(nx) * ny;
    std::vector<SliceSample> out;
    out.reserve(nz);
    for (int z = 0; z < nz; ++z) {
        SliceSample s;
        s.width = nx;
        s.height = ny;
        s.series_uid = series_uid;
        s.slice_index = z;
        s.case_label = label;
        const float* img = norm.voxels.data() + static_cast<size_t>(z) * slice_sz;
        s.image.assign(img, img + slice_sz);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lnc
