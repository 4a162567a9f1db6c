#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lascar/phantom.hpp"
#include "lascar/rng.hpp"
#include "lascar/volume.hpp"
#include "lascar/volume_io.hpp"

using namespace lascar;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto d = fs::temp_directory_path() / "lascar_volume_test";
    fs::create_directories(d);
    return d;
}

// Independent 8-corner weighted sum, written directly from the definition.
double trilinear_oracle(const Volume3D& v, const Vec3& p) {
    const Vec3 u = v.voxel_from_world(p);
    const int i0 = static_cast<int>(std::floor(u.x));
    const int j0 = static_cast<int>(std::floor(u.y));
    const int k0 = static_cast<int>(std::floor(u.z));
    const double fx = u.x - i0, fy = u.y - j0, fz = u.z - k0;
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk)
        for (int dj = 0; dj < 2; ++dj)
            for (int di = 0; di < 2; ++di) {
                const double w = (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) * (dk ? fz : 1 - fz);
                acc += w * v.at(i0 + di, j0 + dj, k0 + dk);
            }
    return acc;
}

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(f),
                             std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("save/load round-trips a zero volume exactly") {
    auto v = Volume3D::create({3, 3, 3}, {0.7, 0.75, 2.0}, {-1.5, 0.25, 3.0});
    const auto path = temp_dir() / "zeros.mhd";
    save_volume(v, path);
    const auto loaded = load_volume_f32(path);
    CHECK(loaded.dims == v.dims);
    CHECK(loaded.spacing == v.spacing);
    CHECK(loaded.origin == v.origin);
    CHECK(loaded.data == v.data);
}

TEST_CASE("raw size mismatch is rejected") {
    const auto dir = temp_dir();
    {
        std::ofstream h(dir / "bad.mhd");
        h << "NDims = 3\nDimSize = 4 4 4\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
          << "ElementType = FLOAT32\nElementDataFile = bad.raw\n";
        std::ofstream r(dir / "bad.raw", std::ios::binary);
        std::vector<float> data(63, 0.0f);
        r.write(reinterpret_cast<const char*>(data.data()), 63 * sizeof(float));
    }
    CHECK_THROWS_WITH_AS(load_volume(dir / "bad.mhd"),
                         doctest::Contains("size mismatch"), std::runtime_error);
}

TEST_CASE("unknown element type and malformed headers are rejected") {
    const auto dir = temp_dir();
    {
        std::ofstream h(dir / "t.mhd");
        h << "NDims = 3\nDimSize = 2 2 2\nElementSpacing = 1 1 1\nOffset = 0 0 0\n"
          << "ElementType = INT64\nElementDataFile = t.raw\n";
        std::ofstream r(dir / "t.raw", std::ios::binary);
        std::vector<char> z(64, 0);
        r.write(z.data(), 64);
    }
    CHECK_THROWS_AS(load_volume(dir / "t.mhd"), std::runtime_error);
    {
        std::ofstream h(dir / "m.mhd");
        h << "this is not a header\n";
    }
    CHECK_THROWS_AS(load_volume(dir / "m.mhd"), std::runtime_error);
}

TEST_CASE("phantom write/reload/re-write is byte identical") {
    PhantomSpec spec;
    spec.dims = {16, 16, 16};
    spec.semi_axes_mm = {4, 4, 4};
    spec.wall_mm = 1.5;
    spec.scar_count = 1;
    spec.tube_count = 0;
    spec.seed = 42;
    const auto ph = generate_phantom(spec);

    const auto dir = temp_dir();
    save_volume(ph.intensity, dir / "a.mhd");
    auto reloaded = load_volume_f32(dir / "a.mhd");
    save_volume(reloaded, dir / "b.mhd");
    CHECK(file_bytes(dir / "a.raw") == file_bytes(dir / "b.raw"));

    save_volume(ph.cavity, dir / "la.mhd");
    auto relabel = load_label_volume(dir / "la.mhd");
    save_volume(relabel, dir / "lb.mhd");
    CHECK(file_bytes(dir / "la.raw") == file_bytes(dir / "lb.raw"));
}

TEST_CASE("trilinear sampling hits stored values at voxel centers") {
    auto v = Volume3D::create({5, 5, 5}, {1.0, 1.0, 1.0});
    Rng rng(3);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(-5, 5));
    CHECK(sample_trilinear(v, v.world_from_voxel(2, 3, 1)) ==
          doctest::Approx(v.at(2, 3, 1)).epsilon(1e-12));
}

TEST_CASE("trilinear sampling is linear along an axis") {
    auto v = Volume3D::create({4, 3, 3});
    v.at(1, 1, 1) = 0.0f;
    v.at(2, 1, 1) = 1.0f;
    CHECK(sample_trilinear(v, {1.5, 1.0, 1.0}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("trilinear matches the 8-corner oracle at random interior points") {
    auto v = Volume3D::create({7, 6, 5}, {0.7, 0.75, 2.0}, {3.0, -2.0, 1.0});
    Rng rng(11);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 100));
    for (int k = 0; k < 200; ++k) {
        const Vec3 p = v.world_from_voxel(rng.uniform(0, 6), rng.uniform(0, 5),
                                          rng.uniform(0, 4));
        CHECK(sample_trilinear(v, p) == doctest::Approx(trilinear_oracle(v, p)).epsilon(1e-6));
    }
}

TEST_CASE("points outside the grid sample the padding value") {
    auto v = Volume3D::create({4, 4, 4}, {1, 1, 1}, {0, 0, 0}, 9.0f);
    CHECK(sample_trilinear(v, {-0.6, 1.0, 1.0}) == 0.0);
    CHECK(sample_trilinear(v, {1.0, 1.0, 3.4}) == 0.0);
    CHECK(sample_trilinear(v, {50.0, 50.0, 50.0}) == 0.0);
}

TEST_CASE("linear interpolation property on random axis-aligned pairs") {
    auto v = Volume3D::create({6, 6, 6});
    Rng rng(5);
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(0, 10));
    for (int rep = 0; rep < 50; ++rep) {
        const int axis = static_cast<int>(rng.below(3));
        int idx[3] = {1 + static_cast<int>(rng.below(3)), 1 + static_cast<int>(rng.below(3)),
                      1 + static_cast<int>(rng.below(3))};
        idx[axis] = 1 + static_cast<int>(rng.below(2));
        Vec3 a = v.world_from_voxel(idx[0], idx[1], idx[2]);
        int idx2[3] = {idx[0], idx[1], idx[2]};
        idx2[axis] += 1;
        Vec3 b = v.world_from_voxel(idx2[0], idx2[1], idx2[2]);
        const double t = rng.uniform();
        const Vec3 p = a + (b - a) * t;
        const double want = (1 - t) * v.at(idx[0], idx[1], idx[2]) +
                            t * v.at(idx2[0], idx2[1], idx2[2]);
        CHECK(sample_trilinear(v, p) == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("world/voxel coordinate maps round-trip exactly on integers") {
    auto v = Volume3D::create({9, 9, 9}, {0.7, 0.75, 2.0}, {-4.0, 2.5, 11.0});
    for (int k : {0, 3, 8})
        for (int j : {0, 4, 8})
            for (int i : {0, 5, 8}) {
                const Vec3 u = v.voxel_from_world(v.world_from_voxel(i, j, k));
                CHECK(u.x == doctest::Approx(i).epsilon(1e-12));
                CHECK(u.y == doctest::Approx(j).epsilon(1e-12));
                CHECK(u.z == doctest::Approx(k).epsilon(1e-12));
            }
}
