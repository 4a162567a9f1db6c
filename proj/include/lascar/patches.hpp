#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lascar/mesh.hpp"
#include "lascar/rng.hpp"
#include "lascar/volume.hpp"

namespace lascar {

/// Geometry of the elongated multi-scale patches: (a, b, c) samples with c
/// along the surface normal, sampled at base_spacing * multiplier(s) mm for
/// scale s. Octave multipliers 1, 2, 4, ... unless overridden.
struct PatchGeometry {
    std::array<int, 3> size{13, 13, 17};
    double base_spacing_mm = 1.0;
    int n_scales = 3;
    std::vector<double> multipliers;  // filled with 2^s when empty

    std::vector<double> scale_spacings() const {
        std::vector<double> out;
        for (int s = 0; s < n_scales; ++s) {
            const double m =
                multipliers.empty() ? std::ldexp(1.0, s) : multipliers.at(s);
            out.push_back(base_spacing_mm * m);
        }
        return out;
    }

    int samples_per_patch() const { return size[0] * size[1] * size[2]; }

    void validate() const {
        for (int a = 0; a < 3; ++a)
            if (size[a] < 1 || size[a] % 2 == 0)
                throw std::invalid_argument("patch sizes must be odd and positive");
        if (n_scales < 1) throw std::invalid_argument("need at least one scale");
        if (base_spacing_mm <= 0) throw std::invalid_argument("spacing must be positive");
        if (!multipliers.empty()) {
            if (static_cast<int>(multipliers.size()) != n_scales)
                throw std::invalid_argument("multiplier count must equal scale count");
            for (size_t s = 1; s < multipliers.size(); ++s)
                if (multipliers[s] <= multipliers[s - 1])
                    throw std::invalid_argument("multipliers must be strictly increasing");
        }
    }

    bool operator==(const PatchGeometry& o) const {
        return size == o.size && base_spacing_mm == o.base_spacing_mm &&
               n_scales == o.n_scales && scale_spacings() == o.scale_spacings();
    }
};

/// One node profile: n_scales patches around a (possibly shifted) center.
struct MultiScalePatchSet {
    std::vector<std::vector<float>> patches;  // per scale, a*b*c samples
    Vec3 center;                              // effective center, mm
    Vec3 long_axis;                           // unit
    double shift_mm = 0.0;
};

struct TrainingSample {
    MultiScalePatchSet msp;
    int label = 0;
};

struct PairSample {
    MultiScalePatchSet a, b;
    double distance_mm = 0.0;
    int same_label = 0;
};

struct TrainingSets {
    std::vector<TrainingSample> nodes;
    std::vector<PairSample> pairs;
};

namespace detail {

// Long axis is the normal; the transverse plane keeps the two world axes the
// normal is most orthogonal to, Gram-Schmidt orthogonalized. Axis-drop ties
// prefer the (x,y) plane, then (x,z), then (y,z).
inline void transverse_axes(const Vec3& normal, Vec3& u, Vec3& v) {
    int drop = 0;
    double best = std::abs(normal[0]);
    for (int a = 1; a < 3; ++a) {
        const double m = std::abs(normal[a]);
        if (m >= best) {  // >= so later axes win ties
            best = m;
            drop = a;
        }
    }
    const int i = drop == 0 ? 1 : 0;
    const int j = drop == 2 ? 1 : 2;
    Vec3 ei{}, ej{};
    ei[i] = 1.0;
    ej[j] = 1.0;
    u = (ei - normal * ei.dot(normal)).normalized();
    v = (ej - normal * ej.dot(normal) - u * ej.dot(u)).normalized();
}

}  // namespace detail

/// Extracts the multi-scale patch set at center + shift_mm * normal. Negative
/// shifts move into the cavity, positive outward. Intensities are normalized
/// to zero mean / unit variance over the scale-0 samples, with the same
/// affine applied to every scale; constant patches come out all zero.
inline MultiScalePatchSet extract_msp(const Volume3D& vol, const Vec3& center,
                                      const Vec3& normal, const PatchGeometry& geom,
                                      double shift_mm = 0.0) {
    geom.validate();
    const double nlen = normal.norm();
    if (nlen < 1e-12) throw std::invalid_argument("zero normal");
    const Vec3 n = normal / nlen;

    MultiScalePatchSet out;
    out.center = center + n * shift_mm;
    out.long_axis = n;
    out.shift_mm = shift_mm;

    Vec3 u, v;
    detail::transverse_axes(n, u, v);

    const auto spacings = geom.scale_spacings();
    const int a = geom.size[0], b = geom.size[1], c = geom.size[2];
    const double ca = (a - 1) / 2.0, cb = (b - 1) / 2.0, cc = (c - 1) / 2.0;

    out.patches.resize(spacings.size());
    for (size_t s = 0; s < spacings.size(); ++s) {
        const double h = spacings[s];
        auto& patch = out.patches[s];
        patch.resize(static_cast<size_t>(a) * b * c);
        size_t idx = 0;
        for (int kk = 0; kk < c; ++kk)
            for (int jj = 0; jj < b; ++jj)
                for (int ii = 0; ii < a; ++ii) {
                    const Vec3 p = out.center + u * ((ii - ca) * h) + v * ((jj - cb) * h) +
                                   n * ((kk - cc) * h);
                    patch[idx++] = static_cast<float>(sample_trilinear(vol, p));
                }
    }

    // Shared affine normalization from scale-0 statistics.
    const auto& base = out.patches[0];
    double mean = 0.0;
    for (float x : base) mean += x;
    mean /= static_cast<double>(base.size());
    double var = 0.0;
    for (float x : base) var += (x - mean) * (x - mean);
    var /= static_cast<double>(base.size());

    if (var < 1e-8) {
        for (auto& patch : out.patches) std::fill(patch.begin(), patch.end(), 0.0f);
    } else {
        const double inv_sd = 1.0 / std::sqrt(var);
        for (auto& patch : out.patches)
            for (auto& x : patch) x = static_cast<float>((x - mean) * inv_sd);
    }
    return out;
}

/// Materializes class-balanced node and pair samples from a labeled mesh.
/// Every draw gets an independent shift gamma ~ U(-R, +R); pair samples come
/// from mesh edges with balanced label-similarity M. Deterministic per seed.
inline TrainingSets build_training_sets(const SurfaceMesh& mesh, const VertexLabels& gt,
                                        const Volume3D& vol, const PatchGeometry& geom,
                                        double shift_range_mm, int n_node_samples,
                                        int n_pair_samples, uint64_t seed) {
    if (shift_range_mm < 0) throw std::invalid_argument("shift range must be >= 0");
    if (gt.labels.size() != mesh.vertices.size())
        throw std::invalid_argument("label count must match vertex count");

    std::array<std::vector<int>, 2> by_class;
    for (size_t i = 0; i < gt.labels.size(); ++i)
        by_class[gt.labels[i] ? 1 : 0].push_back(static_cast<int>(i));
    if (n_node_samples > 0)
        for (int c = 0; c < 2; ++c)
            if (by_class[c].empty())
                throw std::runtime_error("class " + std::to_string(c) +
                                         " absent from ground truth");

    std::array<std::vector<int>, 2> edges_by_m;  // index into mesh.edges
    for (size_t e = 0; e < mesh.edges.size(); ++e) {
        const auto& ed = mesh.edges[e];
        const int m = gt.labels[ed.a] == gt.labels[ed.b] ? 1 : 0;
        edges_by_m[m].push_back(static_cast<int>(e));
    }
    if (n_pair_samples > 0)
        for (int m = 0; m < 2; ++m)
            if (edges_by_m[m].empty())
                throw std::runtime_error("pair class M=" + std::to_string(m) +
                                         " absent from ground truth edges");

    Rng rng(seed);
    auto draw_shift = [&]() {
        if (shift_range_mm == 0.0) return 0.0;
        double u;
        do {
            u = rng.uniform();
        } while (u == 0.0);  // keep |gamma| strictly below R
        return shift_range_mm * (2.0 * u - 1.0);
    };

    TrainingSets out;
    out.nodes.reserve(n_node_samples);
    for (int k = 0; k < n_node_samples; ++k) {
        const int cls = rng.coin() ? 1 : 0;
        const auto& pool = by_class[cls];
        const int v = pool[static_cast<size_t>(rng.below(pool.size()))];
        const double gamma = draw_shift();
        out.nodes.push_back(
            {extract_msp(vol, mesh.vertices[v], mesh.normals[v], geom, gamma), cls});
    }

    out.pairs.reserve(n_pair_samples);
    for (int k = 0; k < n_pair_samples; ++k) {
        const int m = rng.coin() ? 1 : 0;
        const auto& pool = edges_by_m[m];
        const auto& ed = mesh.edges[pool[static_cast<size_t>(rng.below(pool.size()))]];
        const double ga = draw_shift(), gb = draw_shift();
        PairSample ps;
        ps.a = extract_msp(vol, mesh.vertices[ed.a], mesh.normals[ed.a], geom, ga);
        ps.b = extract_msp(vol, mesh.vertices[ed.b], mesh.normals[ed.b], geom, gb);
        ps.distance_mm = ed.length;
        ps.same_label = m;
        out.pairs.push_back(std::move(ps));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary dataset dump. Layout (little-endian):
//   magic "LPDS", u32 version, u32 kind (0 node / 1 pair),
//   u32 a,b,c, u32 n_scales, f64 base_spacing, f64 multipliers[n_scales],
//   u64 count, then per record:
//     node: u8 label, f64 shift, f64 center[3], f64 axis[3], f32 samples[...]
//     pair: u8 same_label, f64 distance, then two node-style patch blocks
//           (shift, center, axis, samples) without labels.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

inline void put_patchset(std::ofstream& f, const MultiScalePatchSet& p) {
    put(f, p.shift_mm);
    put(f, p.center.x);
    put(f, p.center.y);
    put(f, p.center.z);
    put(f, p.long_axis.x);
    put(f, p.long_axis.y);
    put(f, p.long_axis.z);
    for (const auto& patch : p.patches)
        f.write(reinterpret_cast<const char*>(patch.data()),
                static_cast<std::streamsize>(patch.size() * sizeof(float)));
}

inline MultiScalePatchSet get_patchset(std::ifstream& f, const PatchGeometry& geom) {
    MultiScalePatchSet p;
    p.shift_mm = get<double>(f);
    p.center = {get<double>(f), get<double>(f), get<double>(f)};
    p.long_axis = {get<double>(f), get<double>(f), get<double>(f)};
    p.patches.resize(geom.n_scales);
    for (auto& patch : p.patches) {
        patch.resize(geom.samples_per_patch());
        f.read(reinterpret_cast<char*>(patch.data()),
               static_cast<std::streamsize>(patch.size() * sizeof(float)));
    }
    return p;
}

inline void put_geom_header(std::ofstream& f, const PatchGeometry& geom, uint32_t kind) {
    f.write("LPDS", 4);
    put<uint32_t>(f, 1);
    put<uint32_t>(f, kind);
    for (int a = 0; a < 3; ++a) put<uint32_t>(f, static_cast<uint32_t>(geom.size[a]));
    put<uint32_t>(f, static_cast<uint32_t>(geom.n_scales));
    put(f, geom.base_spacing_mm);
    for (double sp : geom.scale_spacings()) put(f, sp / geom.base_spacing_mm);
}

inline PatchGeometry get_geom_header(std::ifstream& f, uint32_t expect_kind) {
    char magic[4];
    f.read(magic, 4);
    if (std::string(magic, 4) != "LPDS") throw std::runtime_error("bad dataset magic");
    if (get<uint32_t>(f) != 1) throw std::runtime_error("unsupported dataset version");
    if (get<uint32_t>(f) != expect_kind) throw std::runtime_error("dataset kind mismatch");
    PatchGeometry geom;
    for (int a = 0; a < 3; ++a) geom.size[a] = static_cast<int>(get<uint32_t>(f));
    geom.n_scales = static_cast<int>(get<uint32_t>(f));
    geom.base_spacing_mm = get<double>(f);
    geom.multipliers.resize(geom.n_scales);
    for (auto& m : geom.multipliers) m = get<double>(f);
    return geom;
}

}  // namespace detail

inline void save_node_dataset(const std::vector<TrainingSample>& data,
                              const PatchGeometry& geom,
                              const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write dataset: " + path.string());
    detail::put_geom_header(f, geom, 0);
    detail::put<uint64_t>(f, data.size());
    for (const auto& s : data) {
        detail::put<uint8_t>(f, static_cast<uint8_t>(s.label));
        detail::put_patchset(f, s.msp);
    }
}

inline std::vector<TrainingSample> load_node_dataset(const std::filesystem::path& path,
                                                     PatchGeometry* geom_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset: " + path.string());
    const auto geom = detail::get_geom_header(f, 0);
    if (geom_out) *geom_out = geom;
    const auto n = detail::get<uint64_t>(f);
    std::vector<TrainingSample> out(n);
    for (auto& s : out) {
        s.label = detail::get<uint8_t>(f);
        s.msp = detail::get_patchset(f, geom);
    }
    if (!f) throw std::runtime_error("truncated dataset: " + path.string());
    return out;
}

inline void save_pair_dataset(const std::vector<PairSample>& data,
                              const PatchGeometry& geom,
                              const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write dataset: " + path.string());
    detail::put_geom_header(f, geom, 1);
    detail::put<uint64_t>(f, data.size());
    for (const auto& s : data) {
        detail::put<uint8_t>(f, static_cast<uint8_t>(s.same_label));
        detail::put(f, s.distance_mm);
        detail::put_patchset(f, s.a);
        detail::put_patchset(f, s.b);
    }
}

inline std::vector<PairSample> load_pair_dataset(const std::filesystem::path& path,
                                                 PatchGeometry* geom_out = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset: " + path.string());
    const auto geom = detail::get_geom_header(f, 1);
    if (geom_out) *geom_out = geom;
    const auto n = detail::get<uint64_t>(f);
    std::vector<PairSample> out(n);
    for (auto& s : out) {
        s.same_label = detail::get<uint8_t>(f);
        s.distance_mm = detail::get<double>(f);
        s.a = detail::get_patchset(f, geom);
        s.b = detail::get_patchset(f, geom);
    }
    if (!f) throw std::runtime_error("truncated dataset: " + path.string());
    return out;
}

}  // namespace lascar
