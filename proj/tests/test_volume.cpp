#include <doctest.h>

#include <fstream>

#include "lnc/volume.hpp"
#include "support.hpp"

using namespace lnc;
using lnc::testing::TempDir;

namespace {

CtVolume make_volume(Dims3 dims, Vec3 origin, Vec3 spacing, int16_t fill = 0) {
    CtVolume v;
    v.dims = dims;
    v.origin = origin;
    v.spacing = spacing;
    v.voxels.assign(v.voxel_count(), fill);
    return v;
}

void write_text(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

}  // namespace

TEST_CASE("load_volume reads header metadata and voxel count") {
    TempDir dir("vol_load");
    write_text(dir.path / "v.mhd",
               "DimSize = 4 4 2\n"
               "ElementSpacing = 0.98 0.98 3.0\n"
               "Offset = -120.5 -90.25 42\n"
               "ElementDataFile = v.raw\n");
    std::vector<int16_t> raw(32);
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<int16_t>(i * 7 - 100);
    std::ofstream(dir.path / "v.raw", std::ios::binary)
        .write(reinterpret_cast<const char*>(raw.data()), 64);

    CtVolume v = load_volume(dir.path / "v.mhd");
    CHECK(v.voxels.size() == 32);
    CHECK(v.dims == Dims3{4, 4, 2});
    CHECK(v.spacing == Vec3{0.98, 0.98, 3.0});
    CHECK(v.origin == Vec3{-120.5, -90.25, 42.0});
    CHECK(v.at(1, 0, 0) == raw[1]);
    CHECK(v.at(0, 1, 0) == raw[4]);
    CHECK(v.at(0, 0, 1) == raw[16]);
}

TEST_CASE("load_volume rejects bad inputs") {
    TempDir dir("vol_bad");
    SUBCASE("missing file") {
        CHECK_THROWS(load_volume(dir.path / "nope.mhd"));
    }
    SUBCASE("raw one byte short") {
        write_text(dir.path / "v.mhd",
                   "DimSize = 4 4 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
                   "ElementDataFile = v.raw\n");
        std::vector<char> raw(63, 0);
        std::ofstream(dir.path / "v.raw", std::ios::binary).write(raw.data(), 63);
        CHECK_THROWS_WITH_AS(load_volume(dir.path / "v.mhd"),
                             doctest::Contains("size mismatch"), std::runtime_error);
    }
    SUBCASE("malformed header key") {
        write_text(dir.path / "v.mhd",
                   "DimSize = 4 4 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
                   "Bogus = 1\nElementDataFile = v.raw\n");
        CHECK_THROWS_WITH_AS(load_volume(dir.path / "v.mhd"), doctest::Contains("unknown key"),
                             std::runtime_error);
    }
    SUBCASE("non-positive spacing") {
        write_text(dir.path / "v.mhd",
                   "DimSize = 4 4 2\nElementSpacing = 0 1 1\nOffset = 0 0 0\n"
                   "ElementDataFile = v.raw\n");
        CHECK_THROWS(load_volume(dir.path / "v.mhd"));
    }
}

TEST_CASE("save/load round trip is bit exact and deterministic") {
    TempDir dir("vol_rt");
    CtVolume v = make_volume({5, 3, 4}, {-10, 2.5, 7}, {0.98, 0.98, 3.0});
    std::mt19937_64 rng(11);
    for (auto& x : v.voxels) x = static_cast<int16_t>(uniform_below(rng, 4000)) - 1000;

    save_volume(v, dir.path / "a.mhd");
    CtVolume a = load_volume(dir.path / "a.mhd");
    CHECK(a.voxels == v.voxels);
    CHECK(a.origin == v.origin);
    CHECK(a.spacing == v.spacing);

    save_volume(a, dir.path / "b.mhd");
    // Same bytes in, same bytes out.
    std::ifstream f1(dir.path / "a.raw", std::ios::binary);
    std::ifstream f2(dir.path / "b.raw", std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
}

TEST_CASE("mask save/load uses the uint8 element type") {
    TempDir dir("mask_rt");
    MaskVolume m;
    m.dims = {4, 4, 2};
    m.spacing = {1, 1, 2};
    m.voxels.assign(32, 0);
    m.voxels[5] = 1;
    save_mask(m, dir.path / "m.mhd");

    std::ifstream hdr(dir.path / "m.mhd");
    std::string text((std::istreambuf_iterator<char>(hdr)), {});
    CHECK(text.find("ElementType = uint8") != std::string::npos);

    MaskVolume back = load_mask(dir.path / "m.mhd");
    CHECK(back.voxels == m.voxels);
    CHECK_THROWS(load_volume(dir.path / "m.mhd"));  // int16 loader rejects uint8
}

TEST_CASE("world/voxel conversion") {
    CtVolume v = make_volume({512, 512, 100}, {0, 0, 0}, {0.98, 0.98, 3.0});

    SUBCASE("origin maps to the zero voxel") {
        Vec3 r = world_to_voxel(v, {0, 0, 0});
        CHECK(r == Vec3{0, 0, 0});
    }
    SUBCASE("exact division example") {
        Vec3 r = world_to_voxel(v, {9.8, 9.8, 30.0});
        CHECK(r[0] == doctest::Approx(10).epsilon(1e-12));
        CHECK(r[1] == doctest::Approx(10).epsilon(1e-12));
        CHECK(r[2] == doctest::Approx(10).epsilon(1e-12));
    }
    SUBCASE("voxel_to_world trivials") {
        CHECK(voxel_to_world(v, {0, 0, 0}) == Vec3{0, 0, 0});
        Vec3 w = voxel_to_world(v, {1, 1, 1});
        CHECK(w[0] == doctest::Approx(0.98));
        CHECK(w[2] == doctest::Approx(3.0));
    }
    SUBCASE("100 random points round-trip within 1e-9 relative") {
        CtVolume g = make_volume({64, 64, 32}, {-123.4, 55.7, -9.25}, {0.73, 1.21, 2.5});
        std::mt19937_64 rng(1234);
        for (int i = 0; i < 100; ++i) {
            Vec3 p = {uniform_range(rng, -500, 500), uniform_range(rng, -500, 500),
                      uniform_range(rng, -500, 500)};
            Vec3 back = voxel_to_world(g, world_to_voxel(g, p));
            for (int ax = 0; ax < 3; ++ax) {
                double scale = std::max(1.0, std::abs(p[ax]));
                CHECK(std::abs(back[ax] - p[ax]) / scale <= 1e-9);
            }
        }
    }
}

TEST_CASE("normalize_hu") {
    CtVolume v = make_volume({3, 1, 1}, {0, 0, 0}, {1, 1, 1});
    v.voxels = {-1000, -300, 400};

    SUBCASE("endpoints and midpoint") {
        NormalizedVolume n = normalize_hu(v, -1000, 400);
        CHECK(n.voxels[0] == 0.0f);
        CHECK(n.voxels[2] == 1.0f);
        CtVolume mid = make_volume({1, 1, 1}, {0, 0, 0}, {1, 1, 1});
        mid.voxels = {-300};  // (lo+hi)/2
        CHECK(normalize_hu(mid, -1000, 400).voxels[0] == doctest::Approx(0.5));
    }
    SUBCASE("clamping keeps the range in [0,1] on random volumes") {
        CtVolume r = make_volume({16, 16, 8}, {0, 0, 0}, {1, 1, 1});
        std::mt19937_64 rng(5);
        for (auto& x : r.voxels) x = static_cast<int16_t>(uniform_below(rng, 7000)) - 3500;
        NormalizedVolume n = normalize_hu(r, -1000, 400);
        for (float f : n.voxels) {
            CHECK(f >= 0.0f);
            CHECK(f <= 1.0f);
        }
    }
    SUBCASE("monotone non-decreasing in the input intensity") {
        CtVolume r = make_volume({2001, 1, 1}, {0, 0, 0}, {1, 1, 1});
        for (int i = 0; i <= 2000; ++i) r.voxels[i] = static_cast<int16_t>(i - 1500);
        NormalizedVolume n = normalize_hu(r);
        for (int i = 1; i <= 2000; ++i) CHECK(n.voxels[i] >= n.voxels[i - 1]);
    }
    SUBCASE("lo >= hi is rejected") {
        CHECK_THROWS_AS(normalize_hu(v, 10, 10), std::invalid_argument);
        CHECK_THROWS_AS(normalize_hu(v, 10, -10), std::invalid_argument);
    }
}
