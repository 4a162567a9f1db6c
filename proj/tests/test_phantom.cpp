#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <deque>

#include "lascar/distance.hpp"
#include "lascar/phantom.hpp"

using namespace lascar;

namespace {

PhantomSpec small_spec() {
    PhantomSpec spec;
    spec.dims = {40, 40, 40};
    spec.semi_axes_mm = {10, 9, 8};
    spec.wall_mm = 3.0;
    spec.scar_count = 2;
    spec.tube_count = 1;
    spec.seed = 7;
    return spec;
}

size_t count_label(const LabelVolume& v) {
    size_t n = 0;
    for (auto x : v.data) n += (x != 0);
    return n;
}

double volume_dice(const LabelVolume& a, const LabelVolume& b) {
    size_t na = 0, nb = 0, both = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        na += a.data[i] != 0;
        nb += b.data[i] != 0;
        both += a.data[i] && b.data[i];
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

// Flood-fill component count, independent of the library's internal check.
int component_count(const LabelVolume& m) {
    std::vector<uint8_t> seen(m.data.size(), 0);
    int comps = 0;
    for (size_t s = 0; s < m.data.size(); ++s) {
        if (!m.data[s] || seen[s]) continue;
        ++comps;
        std::deque<size_t> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            const size_t cur = q.front();
            q.pop_front();
            const int i = static_cast<int>(cur % m.dims[0]);
            const int j = static_cast<int>((cur / m.dims[0]) % m.dims[1]);
            const int k = static_cast<int>(cur / (static_cast<size_t>(m.dims[0]) * m.dims[1]));
            const int d[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                 {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (auto& o : d) {
                const int x = i + o[0], y = j + o[1], z = k + o[2];
                if (!m.contains(x, y, z)) continue;
                const size_t t = m.index(x, y, z);
                if (m.data[t] && !seen[t]) {
                    seen[t] = 1;
                    q.push_back(t);
                }
            }
        }
    }
    return comps;
}

}  // namespace

TEST_CASE("generation is a pure function of the spec") {
    const auto a = generate_phantom(small_spec());
    const auto b = generate_phantom(small_spec());
    CHECK(a.intensity.data == b.intensity.data);
    CHECK(a.cavity.data == b.cavity.data);
    CHECK(a.scar.data == b.scar.data);

    auto spec2 = small_spec();
    spec2.seed = 8;
    const auto c = generate_phantom(spec2);
    CHECK(a.intensity.data != c.intensity.data);
}

TEST_CASE("zero scar patches produce an empty scar volume") {
    auto spec = small_spec();
    spec.scar_count = 0;
    spec.noise_sd = 0.0;
    spec.tube_count = 0;
    const auto ph = generate_phantom(spec);
    CHECK(count_label(ph.scar) == 0);

    auto with_scar = small_spec();
    with_scar.noise_sd = 0.0;
    with_scar.tube_count = 0;
    const auto ph2 = generate_phantom(with_scar);
    REQUIRE(count_label(ph2.scar) > 0);

    // Wall mean below the scar-boosted mean.
    auto outer = lascar::detail::dilate(ph2.cavity, with_scar.wall_mm);
    double wall_sum = 0, scar_sum = 0;
    size_t wall_n = 0, scar_n = 0;
    for (size_t i = 0; i < ph2.intensity.data.size(); ++i) {
        const bool wall = outer.data[i] && !ph2.cavity.data[i];
        if (!wall) continue;
        if (ph2.scar.data[i]) {
            scar_sum += ph2.intensity.data[i];
            ++scar_n;
        } else {
            wall_sum += ph2.intensity.data[i];
            ++wall_n;
        }
    }
    CHECK(wall_sum / static_cast<double>(wall_n) < scar_sum / static_cast<double>(scar_n));
}

TEST_CASE("scar voxels stay within the wall shell") {
    const auto ph = generate_phantom(small_spec());
    auto outer = lascar::detail::dilate(ph.cavity, small_spec().wall_mm);
    for (size_t i = 0; i < ph.scar.data.size(); ++i)
        if (ph.scar.data[i]) {
            REQUIRE(outer.data[i] == 1);
            REQUIRE(ph.cavity.data[i] == 0);
        }
}

TEST_CASE("one equatorial patch covers the analytic cap fraction of the shell") {
    PhantomSpec spec;
    spec.dims = {44, 44, 44};
    spec.semi_axes_mm = {12, 12, 12};  // sphere so the cap fraction is exact
    spec.wall_mm = 3.0;
    spec.scar_count = 1;
    spec.scar_dirs = {{1, 0, 0}};
    spec.scar_angle_deg = 40.0;
    spec.tube_count = 0;
    spec.noise_sd = 0.0;
    const auto ph = generate_phantom(spec);

    auto outer = lascar::detail::dilate(ph.cavity, spec.wall_mm);
    size_t shell = 0, scar = 0;
    for (size_t i = 0; i < ph.scar.data.size(); ++i) {
        shell += outer.data[i] && !ph.cavity.data[i];
        scar += ph.scar.data[i] != 0;
    }
    const double measured = static_cast<double>(scar) / static_cast<double>(shell);
    const double analytic =
        (1.0 - std::cos(spec.scar_angle_deg * 3.14159265358979323846 / 180.0)) / 2.0;
    CHECK(measured / analytic > 0.8);
    CHECK(measured / analytic < 1.2);
}

TEST_CASE("empty wall shell is rejected") {
    auto spec = small_spec();
    spec.semi_axes_mm = {200, 200, 200};  // cavity floods the whole grid
    CHECK_THROWS_AS(generate_phantom(spec), std::runtime_error);
}

TEST_CASE("perturbation with magnitude zero is the identity") {
    const auto ph = generate_phantom(small_spec());
    const auto out = perturb_segmentation(ph.cavity, 0.0, 123);
    CHECK(out.data == ph.cavity.data);
}

TEST_CASE("perturbation is deterministic per seed") {
    const auto ph = generate_phantom(small_spec());
    const auto a = perturb_segmentation(ph.cavity, 3.0, 5);
    const auto b = perturb_segmentation(ph.cavity, 3.0, 5);
    const auto c = perturb_segmentation(ph.cavity, 3.0, 6);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
}

TEST_CASE("4 mm perturbation of a 30 mm sphere keeps Dice in (0.85, 1)") {
    PhantomSpec spec;
    spec.dims = {76, 76, 76};
    spec.semi_axes_mm = {30, 30, 30};
    spec.wall_mm = 3.0;
    spec.scar_count = 0;
    spec.tube_count = 0;
    spec.noise_sd = 0.0;
    const auto ph = generate_phantom(spec);
    for (uint64_t seed : {1, 2, 3}) {
        const auto pert = perturb_segmentation(ph.cavity, 4.0, seed);
        const double d = volume_dice(ph.cavity, pert);
        CHECK(d > 0.85);
        CHECK(d < 1.0);
    }
}

TEST_CASE("perturbed output stays a single connected component") {
    const auto ph = generate_phantom(small_spec());
    for (uint64_t seed : {11, 12, 13}) {
        const auto pert = perturb_segmentation(ph.cavity, 3.0, seed);
        CHECK(component_count(pert) == 1);
    }
}

TEST_CASE("symmetric-difference voxels lie within magnitude of the boundary") {
    const auto ph = generate_phantom(small_spec());
    const double magnitude = 3.0;
    const auto pert = perturb_segmentation(ph.cavity, magnitude, 21);
    const auto& mask = ph.cavity;

    // Boundary voxels of the original mask: either side of the interface.
    std::vector<Vec3> boundary;
    for (int k = 1; k + 1 < mask.dims[2]; ++k)
        for (int j = 1; j + 1 < mask.dims[1]; ++j)
            for (int i = 1; i + 1 < mask.dims[0]; ++i) {
                const uint8_t c = mask.at(i, j, k);
                const bool iface = mask.at(i + 1, j, k) != c || mask.at(i - 1, j, k) != c ||
                                   mask.at(i, j + 1, k) != c || mask.at(i, j - 1, k) != c ||
                                   mask.at(i, j, k + 1) != c || mask.at(i, j, k - 1) != c;
                if (iface) boundary.push_back(mask.world_from_voxel(i, j, k));
            }
    REQUIRE(!boundary.empty());

    // Brute-force nearest-boundary distance for every changed voxel.
    size_t checked = 0;
    for (int k = 0; k < mask.dims[2]; ++k)
        for (int j = 0; j < mask.dims[1]; ++j)
            for (int i = 0; i < mask.dims[0]; ++i) {
                if (mask.at(i, j, k) == pert.at(i, j, k)) continue;
                const Vec3 p = mask.world_from_voxel(i, j, k);
                double best = 1e30;
                for (const auto& b : boundary) best = std::min(best, distance(p, b));
                REQUIRE(best <= magnitude + 1e-9);
                ++checked;
            }
    CHECK(checked > 0);
}

TEST_CASE("distance transform matches brute force on a small anisotropic grid") {
    auto m = LabelVolume::create({9, 8, 7}, {0.7, 1.0, 2.0});
    Rng rng(2);
    for (auto& v : m.data) v = rng.uniform() < 0.1 ? 1 : 0;
    m.at(4, 4, 3) = 1;

    const auto d = distance_transform(m, [](uint8_t v) { return v != 0; });
    for (int k = 0; k < m.dims[2]; ++k)
        for (int j = 0; j < m.dims[1]; ++j)
            for (int i = 0; i < m.dims[0]; ++i) {
                double best = 1e30;
                const Vec3 p = m.world_from_voxel(i, j, k);
                for (int kk = 0; kk < m.dims[2]; ++kk)
                    for (int jj = 0; jj < m.dims[1]; ++jj)
                        for (int ii = 0; ii < m.dims[0]; ++ii)
                            if (m.at(ii, jj, kk))
                                best = std::min(
                                    best, distance(p, m.world_from_voxel(ii, jj, kk)));
                REQUIRE(d.at(i, j, k) == doctest::Approx(best).epsilon(1e-9));
            }
}
