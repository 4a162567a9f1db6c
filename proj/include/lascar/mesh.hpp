#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lascar/geom.hpp"
#include "lascar/mc_tables.hpp"
#include "lascar/volume.hpp"

namespace lascar {

/// Triangulated cavity boundary. Vertices are world points in mm; triangles
/// are index triples with consistent outward winding; edges are the graph
/// neighbor structure used downstream.
struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> normals;                // unit, away from the cavity
    std::vector<std::vector<int>> adjacency;  // sorted neighbor lists
    struct Edge {
        int a, b;       // a < b
        double length;  // Euclidean mm
    };
    std::vector<Edge> edges;

    double mean_edge_length() const {
        if (edges.empty()) return 0.0;
        double s = 0.0;
        for (const auto& e : edges) s += e.length;
        return s / static_cast<double>(edges.size());
    }
};

enum class LabelSource { GroundTruthManual, GroundTruthAuto, Predicted };

struct VertexLabels {
    std::vector<uint8_t> labels;  // 0 normal wall, 1 scar
    LabelSource source = LabelSource::Predicted;
};

namespace detail {

// Upsampled {0,1} occupancy: the trilinear interpolant of the mask sampled on
// a grid refined `factor` times per axis.
inline Grid3<float> upsample_mask(const LabelVolume& mask, int factor) {
    std::array<int, 3> dims;
    std::array<double, 3> spacing;
    for (int a = 0; a < 3; ++a) {
        dims[a] = (mask.dims[a] - 1) * factor + 1;
        spacing[a] = mask.spacing[a] / factor;
    }
    auto out = Grid3<float>::create(dims, spacing, mask.origin);
    const double inv = 1.0 / factor;
    for (int k = 0; k < dims[2]; ++k) {
        const int k0 = k / factor, kr = k % factor;
        const double fz = kr * inv;
        const int k1 = (k0 + 1 < mask.dims[2]) ? k0 + 1 : k0;
        for (int j = 0; j < dims[1]; ++j) {
            const int j0 = j / factor, jr = j % factor;
            const double fy = jr * inv;
            const int j1 = (j0 + 1 < mask.dims[1]) ? j0 + 1 : j0;
            for (int i = 0; i < dims[0]; ++i) {
                const int i0 = i / factor, ir = i % factor;
                const double fx = ir * inv;
                const int i1 = (i0 + 1 < mask.dims[0]) ? i0 + 1 : i0;
                const double c000 = mask.at(i0, j0, k0), c100 = mask.at(i1, j0, k0);
                const double c010 = mask.at(i0, j1, k0), c110 = mask.at(i1, j1, k0);
                const double c001 = mask.at(i0, j0, k1), c101 = mask.at(i1, j0, k1);
                const double c011 = mask.at(i0, j1, k1), c111 = mask.at(i1, j1, k1);
                const double c00 = c000 + (c100 - c000) * fx;
                const double c10 = c010 + (c110 - c010) * fx;
                const double c01 = c001 + (c101 - c001) * fx;
                const double c11 = c011 + (c111 - c011) * fx;
                const double c0 = c00 + (c10 - c00) * fy;
                const double c1 = c01 + (c11 - c01) * fy;
                out.at(i, j, k) = static_cast<float>(c0 + (c1 - c0) * fz);
            }
        }
    }
    return out;
}

// Bourke cube corner offsets and the (corner, corner) pair behind each edge.
inline constexpr int kCubeCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                          {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
inline constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                            {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                            {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace detail

inline void build_connectivity(SurfaceMesh& mesh) {
    const int n = static_cast<int>(mesh.vertices.size());
    std::vector<std::vector<int>> adj(n);
    auto add = [&](int a, int b) {
        auto& lst = adj[a];
        if (std::find(lst.begin(), lst.end(), b) == lst.end()) lst.push_back(b);
    };
    for (const auto& t : mesh.triangles) {
        add(t[0], t[1]);
        add(t[1], t[0]);
        add(t[1], t[2]);
        add(t[2], t[1]);
        add(t[2], t[0]);
        add(t[0], t[2]);
    }
    for (auto& lst : adj) std::sort(lst.begin(), lst.end());
    mesh.adjacency = std::move(adj);

    mesh.edges.clear();
    for (int a = 0; a < n; ++a)
        for (int b : mesh.adjacency[a])
            if (a < b)
                mesh.edges.push_back(
                    {a, b, distance(mesh.vertices[a], mesh.vertices[b])});
}

/// Every edge of a closed surface must be shared by exactly two triangles.
inline bool is_watertight(const SurfaceMesh& mesh) {
    std::map<std::pair<int, int>, int> count;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            ++count[{a, b}];
        }
    for (const auto& [k, c] : count)
        if (c != 2) return false;
    return !mesh.triangles.empty();
}

/// Area-weighted per-vertex normals, globally oriented so that a 1 mm step
/// along the normal leaves the mask interior. The raw 1-ring normals of a
/// binary-mask isosurface carry the terracing of the voxel lattice (tens of
/// degrees), so they are regularized by neighbor-averaging iterations; vertex
/// positions and connectivity stay untouched.
inline std::vector<Vec3> vertex_normals(const SurfaceMesh& mesh, const LabelVolume& mask,
                                        int smooth_iters = 16) {
    const int n = static_cast<int>(mesh.vertices.size());
    std::vector<Vec3> acc(n);
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3 area2 = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
        acc[t[0]] += area2;
        acc[t[1]] += area2;
        acc[t[2]] += area2;
    }
    std::vector<Vec3> normals(n);
    for (int i = 0; i < n; ++i) {
        const double len = acc[i].norm();
        if (len < 1e-14)
            throw std::runtime_error("degenerate vertex with zero incident area: " +
                                     std::to_string(i));
        normals[i] = acc[i] / len;
    }
    std::vector<Vec3> next(n);
    for (int it = 0; it < smooth_iters; ++it) {
        for (int i = 0; i < n; ++i) {
            Vec3 s = normals[i];
            for (int j : mesh.adjacency[i]) s += normals[j];
            const double len = s.norm();
            next[i] = len > 1e-14 ? s / len : normals[i];
        }
        normals.swap(next);
    }
    // Majority vote on orientation; winding is consistent so one flip fixes all.
    int inside = 0, outside = 0;
    for (int i = 0; i < n; ++i) {
        const Vec3 probe = mesh.vertices[i] + normals[i];
        if (nearest_label(mask, probe))
            ++inside;
        else
            ++outside;
    }
    if (inside > outside)
        for (auto& nv : normals) nv = nv * -1.0;
    return normals;
}

/// Extracts the 0.5-isosurface of the trilinearly upsampled binary mask.
/// Vertices shared between cells are welded via canonical grid-edge keys, so
/// a solid mask away from the volume border yields a watertight mesh.
inline SurfaceMesh marching_cubes(const LabelVolume& mask, int upsample_factor = 2) {
    if (upsample_factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
    bool any = false;
    for (auto v : mask.data) any = any || (v != 0);
    if (!any) throw std::runtime_error("marching cubes on an empty mask");
    const int nx = mask.dims[0], ny = mask.dims[1], nz = mask.dims[2];
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const bool border = i == 0 || j == 0 || k == 0 || i == nx - 1 ||
                                    j == ny - 1 || k == nz - 1;
                if (border && mask.at(i, j, k))
                    throw std::runtime_error(
                        "mask touches the grid border; pad the volume before meshing");
            }

    const auto field = detail::upsample_mask(mask, upsample_factor);
    const double iso = 0.5;

    SurfaceMesh mesh;
    std::unordered_map<uint64_t, int> edge_vertex;
    const int mx = field.dims[0], my = field.dims[1], mz = field.dims[2];

    auto edge_key = [&](int i, int j, int k, int axis) {
        return ((static_cast<uint64_t>(k) * my + j) * mx + i) * 3 + axis;
    };

    auto vertex_on_edge = [&](int i0, int j0, int k0, int i1, int j1, int k1,
                              double f0, double f1, int axis) {
        const uint64_t key = edge_key(std::min(i0, i1), std::min(j0, j1),
                                      std::min(k0, k1), axis);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        double t = (iso - f0) / (f1 - f0);
        t = std::clamp(t, 1e-4, 1.0 - 1e-4);  // keep welded vertices off corners
        const Vec3 a = field.world_from_voxel(i0, j0, k0);
        const Vec3 b = field.world_from_voxel(i1, j1, k1);
        const int idx = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(a + (b - a) * t);
        edge_vertex.emplace(key, idx);
        return idx;
    };

    double corner[8];
    int cix[8], cjy[8], ckz[8];
    for (int k = 0; k + 1 < mz; ++k)
        for (int j = 0; j + 1 < my; ++j)
            for (int i = 0; i + 1 < mx; ++i) {
                int cube = 0;
                for (int c = 0; c < 8; ++c) {
                    cix[c] = i + detail::kCubeCorner[c][0];
                    cjy[c] = j + detail::kCubeCorner[c][1];
                    ckz[c] = k + detail::kCubeCorner[c][2];
                    corner[c] = field.at(cix[c], cjy[c], ckz[c]);
                    if (corner[c] < iso) cube |= 1 << c;  // >= iso counts as inside
                }
                if (detail::kMcEdgeTable[cube] == 0) continue;

                int ev[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(detail::kMcEdgeTable[cube] & (1 << e))) continue;
                    const int c0 = detail::kEdgeCorners[e][0];
                    const int c1 = detail::kEdgeCorners[e][1];
                    int axis = 0;
                    if (cjy[c0] != cjy[c1]) axis = 1;
                    if (ckz[c0] != ckz[c1]) axis = 2;
                    ev[e] = vertex_on_edge(cix[c0], cjy[c0], ckz[c0], cix[c1], cjy[c1],
                                           ckz[c1], corner[c0], corner[c1], axis);
                }
                const int* tri = detail::kMcTriTable[cube];
                for (int e = 0; tri[e] != -1; e += 3)
                    mesh.triangles.push_back({ev[tri[e]], ev[tri[e + 1]], ev[tri[e + 2]]});
            }

    build_connectivity(mesh);
    // Fixed physical smoothing radius: iterations scale with the refinement.
    mesh.normals = vertex_normals(mesh, mask, 16 * upsample_factor * upsample_factor);
    return mesh;
}

/// A vertex is scar iff any scar voxel sits within search_mm along the ray
/// vertex +- t*normal, t sampled every 0.5 mm, nearest-voxel lookup.
inline VertexLabels project_labels(const SurfaceMesh& mesh, const LabelVolume& scar,
                                   double search_mm,
                                   LabelSource source = LabelSource::GroundTruthManual) {
    if (search_mm <= 0.0) throw std::invalid_argument("search distance must be > 0");
    VertexLabels out;
    out.source = source;
    out.labels.assign(mesh.vertices.size(), 0);
    for (size_t v = 0; v < mesh.vertices.size(); ++v) {
        const Vec3& p = mesh.vertices[v];
        const Vec3& n = mesh.normals[v];
        bool hit = false;
        for (int step = 0; !hit && step * 0.5 <= search_mm + 1e-9; ++step) {
            const double t = step * 0.5;
            if (nearest_label(scar, p + n * t)) hit = true;
            if (t > 0.0 && nearest_label(scar, p - n * t)) hit = true;
        }
        out.labels[v] = hit ? 1 : 0;
    }
    return out;
}

/// Total triangle area in mm^2.
inline double surface_area(const SurfaceMesh& mesh) {
    double area = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        area += 0.5 * (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).norm();
    }
    return area;
}

inline double signed_volume(const SurfaceMesh& mesh) {
    double vol = 0.0;
    for (const auto& t : mesh.triangles)
        vol += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]])) / 6.0;
    return vol;
}

}  // namespace lascar
