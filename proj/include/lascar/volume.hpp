#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lascar/geom.hpp"

namespace lascar {

/// Regular 3-D grid of scalars. Data is stored x-fastest; the world position
/// of voxel (i,j,k) is origin + (i*sx, j*sy, k*sz).
template <typename T>
struct Grid3 {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<T> data;

    static Grid3 create(std::array<int, 3> dims,
                        std::array<double, 3> spacing = {1.0, 1.0, 1.0},
                        std::array<double, 3> origin = {0.0, 0.0, 0.0},
                        T fill = T{}) {
        if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
            throw std::invalid_argument("grid dims must be positive");
        if (spacing[0] <= 0.0 || spacing[1] <= 0.0 || spacing[2] <= 0.0)
            throw std::invalid_argument("grid spacing must be positive");
        Grid3 g;
        g.dims = dims;
        g.spacing = spacing;
        g.origin = origin;
        g.data.assign(static_cast<size_t>(dims[0]) * dims[1] * dims[2], fill);
        return g;
    }

    size_t size() const { return data.size(); }

    size_t index(int i, int j, int k) const {
        return (static_cast<size_t>(k) * dims[1] + j) * dims[0] + i;
    }

    T& at(int i, int j, int k) { return data[index(i, j, k)]; }
    T at(int i, int j, int k) const { return data[index(i, j, k)]; }

    bool contains(int i, int j, int k) const {
        return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
    }

    Vec3 world_from_voxel(double i, double j, double k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1],
                origin[2] + k * spacing[2]};
    }

    Vec3 voxel_from_world(const Vec3& p) const {
        return {(p.x - origin[0]) / spacing[0], (p.y - origin[1]) / spacing[1],
                (p.z - origin[2]) / spacing[2]};
    }

    bool same_grid(const Grid3& o) const {
        return dims == o.dims && spacing == o.spacing && origin == o.origin;
    }
};

using Volume3D = Grid3<float>;
using LabelVolume = Grid3<uint8_t>;

/// Trilinear interpolation at world point p. Points outside the hull of
/// voxel centers return the padding value 0.0. Total function, never throws.
inline double sample_trilinear(const Volume3D& v, const Vec3& p) {
    const Vec3 u = v.voxel_from_world(p);
    if (u.x < 0.0 || u.y < 0.0 || u.z < 0.0 || u.x > v.dims[0] - 1 ||
        u.y > v.dims[1] - 1 || u.z > v.dims[2] - 1)
        return 0.0;

    int i0 = static_cast<int>(u.x), j0 = static_cast<int>(u.y), k0 = static_cast<int>(u.z);
    if (i0 > v.dims[0] - 2) i0 = v.dims[0] - 2;
    if (j0 > v.dims[1] - 2) j0 = v.dims[1] - 2;
    if (k0 > v.dims[2] - 2) k0 = v.dims[2] - 2;
    if (i0 < 0) i0 = 0;
    if (j0 < 0) j0 = 0;
    if (k0 < 0) k0 = 0;
    // Single-slab axes collapse to i0 == i1 with weight on the low corner.
    const int i1 = v.dims[0] > 1 ? i0 + 1 : i0;
    const int j1 = v.dims[1] > 1 ? j0 + 1 : j0;
    const int k1 = v.dims[2] > 1 ? k0 + 1 : k0;

    const double fx = u.x - i0, fy = u.y - j0, fz = u.z - k0;
    const double c000 = v.at(i0, j0, k0), c100 = v.at(i1, j0, k0);
    const double c010 = v.at(i0, j1, k0), c110 = v.at(i1, j1, k0);
    const double c001 = v.at(i0, j0, k1), c101 = v.at(i1, j0, k1);
    const double c011 = v.at(i0, j1, k1), c111 = v.at(i1, j1, k1);

    const double c00 = c000 + (c100 - c000) * fx;
    const double c10 = c010 + (c110 - c010) * fx;
    const double c01 = c001 + (c101 - c001) * fx;
    const double c11 = c011 + (c111 - c011) * fx;
    const double c0 = c00 + (c10 - c00) * fy;
    const double c1 = c01 + (c11 - c01) * fy;
    return c0 + (c1 - c0) * fz;
}

/// Label at the voxel nearest to world point p; 0 outside the grid.
inline uint8_t nearest_label(const LabelVolume& v, const Vec3& p) {
    const Vec3 u = v.voxel_from_world(p);
    const int i = static_cast<int>(std::lround(u.x));
    const int j = static_cast<int>(std::lround(u.y));
    const int k = static_cast<int>(std::lround(u.z));
    if (!v.contains(i, j, k)) return 0;
    return v.at(i, j, k);
}

}  // namespace lascar
