#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "lascar/volume.hpp"

namespace lascar {

namespace detail {

constexpr double kEdtFar = 1e20;  // finite stand-in for "no seed on this line"

// Felzenszwalb-Huttenlocher 1-D squared distance transform under the lower
// envelope of parabolas. Samples sit at positions i*h.
inline void edt_1d(std::vector<double>& f, double h, std::vector<double>& scratch,
                   std::vector<int>& vx, std::vector<double>& zx) {
    const int n = static_cast<int>(f.size());
    const double inf = std::numeric_limits<double>::infinity();
    vx.assign(n, 0);
    zx.assign(n + 1, 0.0);
    scratch.resize(n);

    auto intersect = [&](int q, int p) {
        const double xp = p * h, xq = q * h;
        return ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
    };

    int k = 0;
    vx[0] = 0;
    zx[0] = -inf;
    zx[1] = inf;
    for (int q = 1; q < n; ++q) {
        double s = intersect(q, vx[k]);
        while (k > 0 && s <= zx[k]) {
            --k;
            s = intersect(q, vx[k]);
        }
        ++k;
        vx[k] = q;
        zx[k] = s;
        zx[k + 1] = inf;
    }

    int j = 0;
    for (int q = 0; q < n; ++q) {
        const double xq = q * h;
        while (zx[j + 1] < xq) ++j;
        const int p = vx[j];
        const double d = xq - p * h;
        scratch[q] = d * d + f[p];
    }
    f = scratch;
}

}  // namespace detail

/// Exact Euclidean distance (mm) from every voxel center to the nearest voxel
/// where pred(value) holds. Anisotropic spacing is handled per axis.
template <typename T, typename Pred>
Grid3<double> distance_transform(const Grid3<T>& v, Pred pred) {
    auto d2 = Grid3<double>::create(v.dims, v.spacing, v.origin, detail::kEdtFar);
    for (size_t i = 0; i < v.data.size(); ++i)
        if (pred(v.data[i])) d2.data[i] = 0.0;

    const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
    std::vector<double> line, scratch, zx;
    std::vector<int> vx;

    line.resize(nx);
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i) line[i] = d2.at(i, j, k);
            detail::edt_1d(line, v.spacing[0], scratch, vx, zx);
            for (int i = 0; i < nx; ++i) d2.at(i, j, k) = line[i];
        }
    line.resize(ny);
    for (int k = 0; k < nz; ++k)
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < ny; ++j) line[j] = d2.at(i, j, k);
            detail::edt_1d(line, v.spacing[1], scratch, vx, zx);
            for (int j = 0; j < ny; ++j) d2.at(i, j, k) = line[j];
        }
    line.resize(nz);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            for (int k = 0; k < nz; ++k) line[k] = d2.at(i, j, k);
            detail::edt_1d(line, v.spacing[2], scratch, vx, zx);
            for (int k = 0; k < nz; ++k) d2.at(i, j, k) = line[k];
        }

    for (auto& x : d2.data) x = std::sqrt(x);
    return d2;
}

}  // namespace lascar
