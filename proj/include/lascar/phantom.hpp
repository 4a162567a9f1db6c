#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lascar/distance.hpp"
#include "lascar/rng.hpp"
#include "lascar/volume.hpp"

namespace lascar {

/// Synthetic LGE-like test object: an ellipsoidal blood cavity inside a thin
/// wall, bright scar patches on the wall shell, bright confounder tubes
/// floating just outside the wall, plus Gaussian noise.
struct PhantomSpec {
    std::array<int, 3> dims{64, 64, 64};
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::array<double, 3> semi_axes_mm{13.0, 11.0, 9.0};
    double wall_mm = 3.0;

    int scar_count = 3;
    double scar_angle_deg = 40.0;   // angular radius of one patch
    double scar_boost = 25.0;       // transmural intensity boost over the wall
    double scar_boost_jitter = 0.3; // relative per-patch variation
    // Explicit patch directions (unit-ish vectors); drawn from the seed if empty.
    std::vector<Vec3> scar_dirs;

    int tube_count = 2;
    double tube_radius_mm = 3.0;
    double tube_intensity = 65.0;   // enhanced, scar-like
    double tube_length_mm = 40.0;

    double background_level = 10.0;
    double blood_level = 30.0;
    double wall_level = 40.0;
    // Smooth multiplicative shading, |relative| <= bias_amp, emulating coil
    // inhomogeneity. Patch normalization makes the networks insensitive to
    // it; intensity-threshold baselines are not.
    double bias_amp = 0.0;
    double noise_sd = 5.0;

    uint64_t seed = 1;
};

struct Phantom {
    Volume3D intensity;
    LabelVolume cavity;  // 1 = blood cavity
    LabelVolume scar;    // 1 = scar, subset of the wall shell
};

namespace detail {

inline std::vector<std::array<int, 3>> ball_offsets(double radius_mm,
                                                    const std::array<double, 3>& sp) {
    std::vector<std::array<int, 3>> out;
    const int rx = static_cast<int>(std::floor(radius_mm / sp[0]));
    const int ry = static_cast<int>(std::floor(radius_mm / sp[1]));
    const int rz = static_cast<int>(std::floor(radius_mm / sp[2]));
    for (int k = -rz; k <= rz; ++k)
        for (int j = -ry; j <= ry; ++j)
            for (int i = -rx; i <= rx; ++i) {
                const double d2 = i * sp[0] * i * sp[0] + j * sp[1] * j * sp[1] +
                                  k * sp[2] * k * sp[2];
                if (d2 <= radius_mm * radius_mm) out.push_back({i, j, k});
            }
    return out;
}

inline LabelVolume dilate(const LabelVolume& mask, double radius_mm) {
    auto out = LabelVolume::create(mask.dims, mask.spacing, mask.origin, 0);
    const auto offs = ball_offsets(radius_mm, mask.spacing);
    for (int k = 0; k < mask.dims[2]; ++k)
        for (int j = 0; j < mask.dims[1]; ++j)
            for (int i = 0; i < mask.dims[0]; ++i) {
                if (!mask.at(i, j, k)) continue;
                for (const auto& o : offs) {
                    const int x = i + o[0], y = j + o[1], z = k + o[2];
                    if (mask.contains(x, y, z)) out.at(x, y, z) = 1;
                }
            }
    return out;
}

inline size_t count_nonzero(const LabelVolume& m) {
    size_t n = 0;
    for (auto v : m.data) n += (v != 0);
    return n;
}

/// Number of 6-connected components among nonzero voxels.
inline int connected_components(const LabelVolume& m) {
    std::vector<uint8_t> seen(m.size(), 0);
    int comps = 0;
    std::deque<size_t> queue;
    const int nx = m.dims[0], ny = m.dims[1], nz = m.dims[2];
    for (size_t s = 0; s < m.size(); ++s) {
        if (!m.data[s] || seen[s]) continue;
        ++comps;
        seen[s] = 1;
        queue.push_back(s);
        while (!queue.empty()) {
            const size_t cur = queue.front();
            queue.pop_front();
            const int i = static_cast<int>(cur % nx);
            const int j = static_cast<int>((cur / nx) % ny);
            const int k = static_cast<int>(cur / (static_cast<size_t>(nx) * ny));
            const int di[6] = {1, -1, 0, 0, 0, 0};
            const int dj[6] = {0, 0, 1, -1, 0, 0};
            const int dk[6] = {0, 0, 0, 0, 1, -1};
            for (int d = 0; d < 6; ++d) {
                const int x = i + di[d], y = j + dj[d], z = k + dk[d];
                if (!m.contains(x, y, z)) continue;
                const size_t t = m.index(x, y, z);
                if (m.data[t] && !seen[t]) {
                    seen[t] = 1;
                    queue.push_back(t);
                }
            }
        }
        if (comps > 1) return comps;  // caller only cares about ==1
    }
    return comps;
}

inline Vec3 random_unit(Rng& rng) {
    for (;;) {
        const Vec3 v{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const double n2 = v.norm2();
        if (n2 > 1e-4 && n2 <= 1.0) return v / std::sqrt(n2);
    }
}

}  // namespace detail

inline Phantom generate_phantom(const PhantomSpec& spec) {
    for (int a = 0; a < 3; ++a) {
        if (spec.wall_mm < spec.spacing_mm[a])
            throw std::invalid_argument("wall thickness below one voxel at this spacing");
    }

    auto cavity = LabelVolume::create(spec.dims, spec.spacing_mm);
    auto scar = LabelVolume::create(spec.dims, spec.spacing_mm);
    auto vol = Volume3D::create(spec.dims, spec.spacing_mm);

    const Vec3 center = cavity.world_from_voxel((spec.dims[0] - 1) / 2.0,
                                                (spec.dims[1] - 1) / 2.0,
                                                (spec.dims[2] - 1) / 2.0);
    const Vec3 ax{spec.semi_axes_mm[0], spec.semi_axes_mm[1], spec.semi_axes_mm[2]};

    for (int k = 0; k < spec.dims[2]; ++k)
        for (int j = 0; j < spec.dims[1]; ++j)
            for (int i = 0; i < spec.dims[0]; ++i) {
                const Vec3 p = cavity.world_from_voxel(i, j, k) - center;
                const double q = p.x * p.x / (ax.x * ax.x) + p.y * p.y / (ax.y * ax.y) +
                                 p.z * p.z / (ax.z * ax.z);
                if (q <= 1.0) cavity.at(i, j, k) = 1;
            }

    auto outer = detail::dilate(cavity, spec.wall_mm);
    auto wall = LabelVolume::create(spec.dims, spec.spacing_mm);
    size_t wall_count = 0;
    for (size_t s = 0; s < wall.size(); ++s) {
        wall.data[s] = outer.data[s] && !cavity.data[s];
        wall_count += wall.data[s];
    }
    if (wall_count == 0) throw std::runtime_error("phantom spec yields an empty wall shell");

    Rng rng(spec.seed);

    // Scar patches: angular caps on the wall shell, transmural by construction.
    std::vector<Vec3> dirs = spec.scar_dirs;
    std::vector<double> boosts;
    while (static_cast<int>(dirs.size()) < spec.scar_count)
        dirs.push_back(detail::random_unit(rng));
    dirs.resize(spec.scar_count);
    for (int s = 0; s < spec.scar_count; ++s)
        boosts.push_back(spec.scar_boost *
                         (1.0 + spec.scar_boost_jitter * rng.uniform(-1, 1)));

    const double cos_thr = std::cos(spec.scar_angle_deg * 3.14159265358979323846 / 180.0);
    auto scar_boost_at = Grid3<float>::create(spec.dims, spec.spacing_mm);
    for (int k = 0; k < spec.dims[2]; ++k)
        for (int j = 0; j < spec.dims[1]; ++j)
            for (int i = 0; i < spec.dims[0]; ++i) {
                if (!wall.at(i, j, k)) continue;
                const Vec3 p = wall.world_from_voxel(i, j, k) - center;
                // Direction normalized in ellipsoid coordinates so caps follow the shell.
                const Vec3 q{p.x / ax.x, p.y / ax.y, p.z / ax.z};
                const Vec3 qn = q.normalized();
                for (int s = 0; s < spec.scar_count; ++s) {
                    if (qn.dot(dirs[s].normalized()) >= cos_thr) {
                        scar.at(i, j, k) = 1;
                        scar_boost_at.at(i, j, k) =
                            std::max(scar_boost_at.at(i, j, k),
                                     static_cast<float>(boosts[s]));
                    }
                }
            }

    // Base intensities.
    for (size_t s = 0; s < vol.size(); ++s) {
        double v = spec.background_level;
        if (cavity.data[s])
            v = spec.blood_level;
        else if (wall.data[s])
            v = spec.wall_level + (scar.data[s] ? scar_boost_at.data[s] : 0.0);
        vol.data[s] = static_cast<float>(v);
    }

    // Confounder tubes: hollow cylinders with an enhanced wall around a
    // blood-like lumen, kept >= 2 mm clear of the atrial wall. Locally their
    // cross-section mimics the enhanced wall of a neighboring structure;
    // only the larger-scale context tells them apart.
    auto forbidden = detail::dilate(cavity, spec.wall_mm + 2.0);
    const double tube_wall = std::min(spec.wall_mm, spec.tube_radius_mm * 0.6);
    for (int t = 0; t < spec.tube_count; ++t) {
        const Vec3 dir = detail::random_unit(rng);
        const double gap = rng.uniform(2.0, 10.0);
        const double s_out =
            1.0 / std::sqrt(dir.x * dir.x / ((ax.x + spec.wall_mm) * (ax.x + spec.wall_mm)) +
                            dir.y * dir.y / ((ax.y + spec.wall_mm) * (ax.y + spec.wall_mm)) +
                            dir.z * dir.z / ((ax.z + spec.wall_mm) * (ax.z + spec.wall_mm)));
        const Vec3 tube_center = center + dir * (s_out + gap + spec.tube_radius_mm);
        const Vec3 axis = detail::random_unit(rng);
        const double half = spec.tube_length_mm / 2.0;

        for (int k = 0; k < spec.dims[2]; ++k)
            for (int j = 0; j < spec.dims[1]; ++j)
                for (int i = 0; i < spec.dims[0]; ++i) {
                    if (forbidden.at(i, j, k)) continue;
                    const Vec3 p = vol.world_from_voxel(i, j, k) - tube_center;
                    const double along = std::clamp(p.dot(axis), -half, half);
                    const double r2 = (p - axis * along).norm2();
                    if (r2 > spec.tube_radius_mm * spec.tube_radius_mm) continue;
                    const double inner = spec.tube_radius_mm - tube_wall;
                    vol.at(i, j, k) = static_cast<float>(
                        r2 <= inner * inner ? spec.blood_level : spec.tube_intensity);
                }
    }

    // Multiplicative shading: a few long plane waves, bounded by bias_amp.
    if (spec.bias_amp > 0.0) {
        constexpr int kWaves = 4;
        std::array<Vec3, kWaves> wavevec;
        std::array<double, kWaves> phase, amp;
        double amp_sum = 0.0;
        for (int w = 0; w < kWaves; ++w) {
            const double wavelength = rng.uniform(40.0, 90.0);
            wavevec[w] =
                detail::random_unit(rng) * (2.0 * 3.14159265358979323846 / wavelength);
            phase[w] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            amp[w] = rng.uniform(0.5, 1.0);
            amp_sum += amp[w];
        }
        for (int k = 0; k < spec.dims[2]; ++k)
            for (int j = 0; j < spec.dims[1]; ++j)
                for (int i = 0; i < spec.dims[0]; ++i) {
                    const Vec3 p = vol.world_from_voxel(i, j, k);
                    double f = 0.0;
                    for (int w = 0; w < kWaves; ++w)
                        f += amp[w] * std::cos(wavevec[w].dot(p) + phase[w]);
                    vol.at(i, j, k) *=
                        static_cast<float>(1.0 + spec.bias_amp * f / amp_sum);
                }
    }

    // Additive noise, fixed voxel order for determinism.
    if (spec.noise_sd > 0.0)
        for (auto& v : vol.data) v += static_cast<float>(rng.normal(0.0, spec.noise_sd));

    return Phantom{std::move(vol), std::move(cavity), std::move(scar)};
}

/// Applies a smooth random radial displacement of amplitude <= magnitude_mm to
/// the mask boundary, emulating the over/under-segmentation of an automatic
/// delineation. Retries with fresh draws if connectivity breaks.
inline LabelVolume perturb_segmentation(const LabelVolume& mask, double magnitude_mm,
                                        uint64_t seed) {
    if (magnitude_mm < 0.0) throw std::invalid_argument("magnitude must be >= 0");
    if (magnitude_mm == 0.0) return mask;

    const auto dist_to_mask = distance_transform(mask, [](uint8_t v) { return v != 0; });
    const auto dist_to_bg = distance_transform(mask, [](uint8_t v) { return v == 0; });

    // Voxels close enough to the interface to possibly change.
    struct BandVoxel {
        size_t idx;
        double sdf;
        double field;
    };
    std::vector<BandVoxel> band;
    for (size_t s = 0; s < mask.data.size(); ++s) {
        const double sdf = mask.data[s] ? -dist_to_bg.data[s] : dist_to_mask.data[s];
        if (std::abs(sdf) <= magnitude_mm) band.push_back({s, sdf, 0.0});
    }

    Rng rng(seed);
    for (int attempt = 0; attempt < 10; ++attempt) {
        // Smooth displacement field: a few random plane waves without a DC
        // term, so local dilation and erosion alternate across the surface.
        // Rescaled by its own band maximum, the peak displacement is exactly
        // the requested magnitude and never exceeds it.
        constexpr int kWaves = 6;
        std::array<Vec3, kWaves> wavevec;
        std::array<double, kWaves> phase, amp;
        for (int w = 0; w < kWaves; ++w) {
            const double wavelength = rng.uniform(15.0, 35.0);
            wavevec[w] = detail::random_unit(rng) * (2.0 * 3.14159265358979323846 / wavelength);
            phase[w] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            amp[w] = rng.uniform(0.5, 1.0);
        }
        double peak = 0.0;
        for (auto& bv : band) {
            const int i = static_cast<int>(bv.idx % mask.dims[0]);
            const int j = static_cast<int>((bv.idx / mask.dims[0]) % mask.dims[1]);
            const int k = static_cast<int>(bv.idx / (static_cast<size_t>(mask.dims[0]) *
                                                     mask.dims[1]));
            const Vec3 p = mask.world_from_voxel(i, j, k);
            double f = 0.0;
            for (int w = 0; w < kWaves; ++w)
                f += amp[w] * std::cos(wavevec[w].dot(p) + phase[w]);
            bv.field = f;
            peak = std::max(peak, std::abs(f));
        }
        if (peak < 1e-9) continue;

        auto out = mask;
        for (const auto& bv : band)
            out.data[bv.idx] = (bv.sdf <= magnitude_mm * bv.field / peak) ? 1 : 0;

        if (detail::count_nonzero(out) > 0 && detail::connected_components(out) == 1)
            return out;
    }
    throw std::runtime_error("perturbation broke mask connectivity after 10 attempts");
}

}  // namespace lascar
