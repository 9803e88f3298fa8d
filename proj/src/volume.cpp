#include "lnc/volume.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lnc/csv.hpp"

namespace lnc {

namespace {

static_assert(std::endian::native == std::endian::little,
              "raw volume I/O assumes a little-endian host");

struct Header {
    Dims3 dims{0, 0, 0};
    Vec3 spacing{0, 0, 0};
    Vec3 origin{0, 0, 0};
    std::string data_file;
    std::string element_type = "int16";
    bool has_dims = false, has_spacing = false, has_offset = false, has_data = false;
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <typename T, size_t N>
std::array<T, N> parse_triple(const std::string& value, const std::string& key) {
    std::array<T, N> out{};
    std::istringstream ss(value);
    for (size_t i = 0; i < N; ++i) {
        std::string tok;
        if (!(ss >> tok))
            throw std::runtime_error("volume header: " + key + " needs 3 values");
        try {
            if constexpr (std::is_integral_v<T>)
                out[i] = static_cast<T>(std::stoll(tok));
            else
                out[i] = parse_double(tok);
        } catch (const std::exception&) {
            throw std::runtime_error("volume header: bad " + key + " value '" + tok + "'");
        }
    }
    std::string rest;
    if (ss >> rest)
        throw std::runtime_error("volume header: " + key + " has trailing values");
    return out;
}

Header parse_header(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("volume header: cannot open " + path.string());
    Header h;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("volume header: malformed line '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "DimSize") {
            h.dims = parse_triple<int, 3>(value, key);
            h.has_dims = true;
        } else if (key == "ElementSpacing") {
            h.spacing = parse_triple<double, 3>(value, key);
            h.has_spacing = true;
        } else if (key == "Offset") {
            h.origin = parse_triple<double, 3>(value, key);
            h.has_offset = true;
        } else if (key == "ElementDataFile") {
            h.data_file = value;
            h.has_data = true;
        } else if (key == "ElementType") {
            h.element_type = value;
        } else {
            throw std::runtime_error("volume header: unknown key '" + key + "'");
        }
    }
    if (!h.has_dims || !h.has_spacing || !h.has_offset || !h.has_data)
        throw std::runtime_error("volume header: missing required key in " + path.string());
    for (int d : h.dims)
        if (d < 1) throw std::runtime_error("volume header: DimSize components must be >= 1");
    for (double s : h.spacing)
        if (!(s > 0)) throw std::runtime_error("volume header: ElementSpacing must be > 0");
    if (h.element_type != "int16" && h.element_type != "uint8")
        throw std::runtime_error("volume header: unsupported ElementType '" + h.element_type + "'");
    return h;
}

std::vector<char> read_raw(const std::filesystem::path& header_path, const Header& h,
                           size_t elem_size) {
    std::filesystem::path raw = header_path.parent_path() / h.data_file;
    std::ifstream in(raw, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("volume raw: cannot open " + raw.string());
    size_t expected =
        static_cast<size_t>(h.dims[0]) * h.dims[1] * h.dims[2] * elem_size;
    size_t actual = static_cast<size_t>(in.tellg());
    if (actual != expected)
        throw std::runtime_error("volume raw: size mismatch for " + raw.string() + " (got " +
                                 std::to_string(actual) + " bytes, expected " +
                                 std::to_string(expected) + ")");
    std::vector<char> buf(expected);
    in.seekg(0);
    in.read(buf.data(), static_cast<std::streamsize>(expected));
    if (!in) throw std::runtime_error("volume raw: short read from " + raw.string());
    return buf;
}

void write_header(const std::filesystem::path& path, const Dims3& dims, const Vec3& spacing,
                  const Vec3& origin, const std::string& data_file,
                  const std::string& element_type) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("volume header: cannot write " + path.string());
    out << "DimSize = " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n';
    out << "ElementSpacing = " << format_double(spacing[0]) << ' ' << format_double(spacing[1])
        << ' ' << format_double(spacing[2]) << '\n';
    out << "Offset = " << format_double(origin[0]) << ' ' << format_double(origin[1]) << ' '
        << format_double(origin[2]) << '\n';
    if (element_type != "int16") out << "ElementType = " << element_type << '\n';
    out << "ElementDataFile = " << data_file << '\n';
    if (!out) throw std::runtime_error("volume header: write failed for " + path.string());
}

void write_raw(const std::filesystem::path& raw_path, const void* data, size_t bytes) {
    std::ofstream out(raw_path, std::ios::binary);
    if (!out) throw std::runtime_error("volume raw: cannot write " + raw_path.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("volume raw: write failed for " + raw_path.string());
}

std::filesystem::path raw_sibling(const std::filesystem::path& header_path) {
    std::filesystem::path p = header_path;
    p.replace_extension(".raw");
    return p;
}

}  // namespace

CtVolume load_volume(const std::filesystem::path& header_path) {
    Header h = parse_header(header_path);
    if (h.element_type != "int16")
        throw std::runtime_error("load_volume: " + header_path.string() + " is not int16");
    std::vector<char> buf = read_raw(header_path, h, sizeof(int16_t));
    CtVolume vol;
    vol.dims = h.dims;
    vol.spacing = h.spacing;
    vol.origin = h.origin;
    vol.voxels.resize(buf.size() / sizeof(int16_t));
    std::memcpy(vol.voxels.data(), buf.data(), buf.size());
    return vol;
}

MaskVolume load_mask(const std::filesystem::path& header_path) {
    Header h = parse_header(header_path);
    if (h.element_type != "uint8")
        throw std::runtime_error("load_mask: " + header_path.string() + " is not uint8");
    std::vector<char> buf = read_raw(header_path, h, sizeof(uint8_t));
    MaskVolume mask;
    mask.dims = h.dims;
    mask.spacing = h.spacing;
    mask.origin = h.origin;
    mask.voxels.assign(buf.begin(), buf.end());
    for (uint8_t v : mask.voxels)
        if (v > 1) throw std::runtime_error("load_mask: non-binary voxel value");
    return mask;
}

void save_volume(const CtVolume& vol, const std::filesystem::path& header_path) {
    if (vol.voxels.size() != vol.voxel_count())
        throw std::runtime_error("save_volume: voxel count does not match dims");
    std::filesystem::path raw = raw_sibling(header_path);
    write_header(header_path, vol.dims, vol.spacing, vol.origin, raw.filename().string(),
                 "int16");
    write_raw(raw, vol.voxels.data(), vol.voxels.size() * sizeof(int16_t));
}

void save_mask(const MaskVolume& mask, const std::filesystem::path& header_path) {
    size_t n = static_cast<size_t>(mask.dims[0]) * mask.dims[1] * mask.dims[2];
    if (mask.voxels.size() != n)
        throw std::runtime_error("save_mask: voxel count does not match dims");
    std::filesystem::path raw = raw_sibling(header_path);
    write_header(header_path, mask.dims, mask.spacing, mask.origin, raw.filename().string(),
                 "uint8");
    write_raw(raw, mask.voxels.data(), mask.voxels.size());
}

namespace {
template <typename V>
Vec3 w2v(const V& vol, const Vec3& p) {
    return {(p[0] - vol.origin[0]) / vol.spacing[0], (p[1] - vol.origin[1]) / vol.spacing[1],
            (p[2] - vol.origin[2]) / vol.spacing[2]};
}
template <typename V>
Vec3 v2w(const V& vol, const Vec3& v) {
    return {vol.origin[0] + v[0] * vol.spacing[0], vol.origin[1] + v[1] * vol.spacing[1],
            vol.origin[2] + v[2] * vol.spacing[2]};
}
}  // namespace

Vec3 world_to_voxel(const CtVolume& vol, const Vec3& p) { return w2v(vol, p); }
Vec3 world_to_voxel(const MaskVolume& vol, const Vec3& p) { return w2v(vol, p); }
Vec3 voxel_to_world(const CtVolume& vol, const Vec3& v) { return v2w(vol, v); }
Vec3 voxel_to_world(const MaskVolume& vol, const Vec3& v) { return v2w(vol, v); }

NormalizedVolume normalize_hu(const CtVolume& vol, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("normalize_hu: requires lo < hi");
    NormalizedVolume out;
    out.dims = vol.dims;
    out.origin = vol.origin;
    out.spacing = vol.spacing;
    out.voxels.resize(vol.voxels.size());
    const double scale = 1.0 / (hi - lo);
    for (size_t i = 0; i < vol.voxels.size(); ++i) {
        double v = (static_cast<double>(vol.voxels[i]) - lo) * scale;
        out.voxels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

}  // namespace lnc
