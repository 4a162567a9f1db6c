#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lascar/rng.hpp"

// Minimal dense/conv building blocks, templated on the scalar type: float in
// production, double when checking gradients against finite differences.

namespace lascar {

using Shape3 = std::array<int, 3>;

inline int shape_volume(const Shape3& s) { return s[0] * s[1] * s[2]; }

namespace detail {

template <typename T>
void axpy(T a, const T* x, T* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four independent accumulators keep the reduction vectorizable under strict
// IEEE semantics while the summation order stays fixed.
template <typename T>
T dot(const T* x, const T* y, int n) {
    T a0{}, a1{}, a2{}, a3{};
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += x[i] * y[i];
        a1 += x[i + 1] * y[i + 1];
        a2 += x[i + 2] * y[i + 2];
        a3 += x[i + 3] * y[i + 3];
    }
    for (; i < n; ++i) a0 += x[i] * y[i];
    return (a0 + a1) + (a2 + a3);
}

}  // namespace detail

// 3x3x3 kernels, zero padding, stride 1. Convolutions run over an im2col
// matrix so the hot loops are long contiguous rows.
template <typename T>
struct Conv3d {
    int in_ch = 0, out_ch = 0;
    std::vector<T> w, gw;  // [out][in][3][3][3]
    std::vector<T> b, gb;  // [out]

    void init(int in_channels, int out_channels, Rng& rng) {
        in_ch = in_channels;
        out_ch = out_channels;
        w.resize(static_cast<size_t>(out_ch) * in_ch * 27);
        b.assign(out_ch, T(0));
        gw.assign(w.size(), T(0));
        gb.assign(b.size(), T(0));
        const double limit = std::sqrt(6.0 / (in_ch * 27.0));
        for (auto& x : w) x = static_cast<T>(rng.uniform(-limit, limit));
    }

    // col row r = ic*27 + tap holds the input channel shifted by the tap
    // offset, zero outside. One row per kernel position, each of length n.
    void build_columns(const T* x, const Shape3& s) const {
        const int nx = s[0], ny = s[1], nz = s[2], n = shape_volume(s);
        col_.assign(static_cast<size_t>(in_ch) * 27 * n, T(0));
        for (int ic = 0; ic < in_ch; ++ic) {
            const T* xi = x + static_cast<size_t>(ic) * n;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int tap = (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
                        T* row_out = col_.data() +
                                     (static_cast<size_t>(ic) * 27 + tap) * n;
                        const int z0 = dz < 0 ? 1 : 0, z1 = nz - (dz > 0 ? 1 : 0);
                        const int y0 = dy < 0 ? 1 : 0, y1 = ny - (dy > 0 ? 1 : 0);
                        const int x0 = dx < 0 ? 1 : 0, x1 = nx - (dx > 0 ? 1 : 0);
                        const int off = (dz * ny + dy) * nx + dx;
                        for (int z = z0; z < z1; ++z)
                            for (int yy = y0; yy < y1; ++yy) {
                                const int row = (z * ny + yy) * nx;
                                const T* src = xi + row + off;
                                T* dst = row_out + row;
                                for (int xx = x0; xx < x1; ++xx) dst[xx] = src[xx];
                            }
                    }
        }
    }

    // x: [in_ch][n], y: [out_ch][n], n = shape volume.
    void forward(const T* x, const Shape3& s, T* y) const {
        const int n = shape_volume(s);
        const int k = in_ch * 27;
        build_columns(x, s);
        for (int oc = 0; oc < out_ch; ++oc) {
            T* yo = y + static_cast<size_t>(oc) * n;
            for (int p = 0; p < n; ++p) yo[p] = b[oc];
            const T* wo = w.data() + static_cast<size_t>(oc) * k;
            for (int r = 0; r < k; ++r)
                detail::axpy(wo[r], col_.data() + static_cast<size_t>(r) * n, yo, n);
        }
    }

    // Accumulates gw/gb; writes the input gradient into gx when non-null.
    // Rebuilds the columns from x, so no state from forward is required.
    void backward(const T* x, const T* gy, const Shape3& s, T* gx) {
        const int nx = s[0], ny = s[1], nz = s[2], n = shape_volume(s);
        const int k = in_ch * 27;
        build_columns(x, s);
        for (int oc = 0; oc < out_ch; ++oc) {
            const T* go = gy + static_cast<size_t>(oc) * n;
            T gbo{};
            for (int p = 0; p < n; ++p) gbo += go[p];
            gb[oc] += gbo;
            T* gwo = gw.data() + static_cast<size_t>(oc) * k;
            for (int r = 0; r < k; ++r)
                gwo[r] += detail::dot(go, col_.data() + static_cast<size_t>(r) * n, n);
        }
        if (!gx) return;

        // Gradient w.r.t. the columns, then scatter back (col2im).
        gcol_.assign(static_cast<size_t>(k) * n, T(0));
        for (int oc = 0; oc < out_ch; ++oc) {
            const T* go = gy + static_cast<size_t>(oc) * n;
            const T* wo = w.data() + static_cast<size_t>(oc) * k;
            for (int r = 0; r < k; ++r)
                detail::axpy(wo[r], go, gcol_.data() + static_cast<size_t>(r) * n, n);
        }
        for (int p = 0; p < in_ch * n; ++p) gx[p] = T(0);
        for (int ic = 0; ic < in_ch; ++ic) {
            T* gxi = gx + static_cast<size_t>(ic) * n;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int tap = (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
                        const T* row_in = gcol_.data() +
                                          (static_cast<size_t>(ic) * 27 + tap) * n;
                        const int z0 = dz < 0 ? 1 : 0, z1 = nz - (dz > 0 ? 1 : 0);
                        const int y0 = dy < 0 ? 1 : 0, y1 = ny - (dy > 0 ? 1 : 0);
                        const int x0 = dx < 0 ? 1 : 0, x1 = nx - (dx > 0 ? 1 : 0);
                        const int off = (dz * ny + dy) * nx + dx;
                        for (int z = z0; z < z1; ++z)
                            for (int yy = y0; yy < y1; ++yy) {
                                const int row = (z * ny + yy) * nx;
                                const T* src = row_in + row;
                                T* dst = gxi + row + off;
                                for (int xx = x0; xx < x1; ++xx) dst[xx] += src[xx];
                            }
                    }
        }
    }

private:
    mutable std::vector<T> col_, gcol_;  // scratch; instances are not shared
};

template <typename T>
struct Dense {
    int in_dim = 0, out_dim = 0;
    std::vector<T> w, gw;  // [out][in]
    std::vector<T> b, gb;

    // gain < 1 keeps saturating heads (softmax/sigmoid) in their responsive
    // range at initialization; fan-in-scaled uniform bounds otherwise.
    void init(int in, int out, Rng& rng, double gain = 1.0) {
        in_dim = in;
        out_dim = out;
        w.resize(static_cast<size_t>(in) * out);
        b.assign(out, T(0));
        gw.assign(w.size(), T(0));
        gb.assign(b.size(), T(0));
        const double limit = gain * std::sqrt(6.0 / in);
        for (auto& x : w) x = static_cast<T>(rng.uniform(-limit, limit));
    }

    void forward(const T* x, T* y) const {
        for (int o = 0; o < out_dim; ++o) {
            const T* wo = w.data() + static_cast<size_t>(o) * in_dim;
            T acc = b[o];
            for (int i = 0; i < in_dim; ++i) acc += wo[i] * x[i];
            y[o] = acc;
        }
    }

    void backward(const T* x, const T* gy, T* gx) {
        if (gx)
            for (int i = 0; i < in_dim; ++i) gx[i] = T(0);
        for (int o = 0; o < out_dim; ++o) {
            const T g = gy[o];
            gb[o] += g;
            T* gwo = gw.data() + static_cast<size_t>(o) * in_dim;
            const T* wo = w.data() + static_cast<size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) gwo[i] += g * x[i];
            if (gx)
                for (int i = 0; i < in_dim; ++i) gx[i] += wo[i] * g;
        }
    }
};

// 2x2x2 max pooling, stride 2, floor semantics (trailing odd slices dropped).
inline Shape3 pooled_shape(const Shape3& s) {
    return {s[0] / 2, s[1] / 2, s[2] / 2};
}

template <typename T>
void maxpool_forward(const T* x, const Shape3& s, int channels, T* y, int* argmax) {
    const Shape3 o = pooled_shape(s);
    const int n_in = shape_volume(s), n_out = shape_volume(o);
    for (int c = 0; c < channels; ++c) {
        const T* xc = x + static_cast<size_t>(c) * n_in;
        T* yc = y + static_cast<size_t>(c) * n_out;
        int* ac = argmax + static_cast<size_t>(c) * n_out;
        int idx = 0;
        for (int z = 0; z < o[2]; ++z)
            for (int yy = 0; yy < o[1]; ++yy)
                for (int xx = 0; xx < o[0]; ++xx, ++idx) {
                    T best{};
                    int besti = -1;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int p = ((2 * z + dz) * s[1] + 2 * yy + dy) * s[0] +
                                              2 * xx + dx;
                                if (besti < 0 || xc[p] > best) {
                                    best = xc[p];
                                    besti = p;
                                }
                            }
                    yc[idx] = best;
                    ac[idx] = besti;
                }
    }
}

template <typename T>
void maxpool_backward(const T* gy, const Shape3& s, int channels, const int* argmax,
                      T* gx) {
    const Shape3 o = pooled_shape(s);
    const int n_in = shape_volume(s), n_out = shape_volume(o);
    for (int p = 0; p < channels * n_in; ++p) gx[p] = T(0);
    for (int c = 0; c < channels; ++c) {
        const T* gc = gy + static_cast<size_t>(c) * n_out;
        const int* ac = argmax + static_cast<size_t>(c) * n_out;
        T* gxc = gx + static_cast<size_t>(c) * n_in;
        for (int i = 0; i < n_out; ++i) gxc[ac[i]] += gc[i];
    }
}

template <typename T>
void relu_forward(T* x, int n) {
    for (int i = 0; i < n; ++i)
        if (x[i] < T(0)) x[i] = T(0);
}

// Masks from the post-activation buffer: y > 0 iff the pre-activation was.
template <typename T>
void relu_backward(const T* post, T* g, int n) {
    for (int i = 0; i < n; ++i)
        if (post[i] <= T(0)) g[i] = T(0);
}

template <typename T>
std::array<T, 2> softmax2(T z0, T z1) {
    const T m = z0 > z1 ? z0 : z1;
    const T e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    const T s = e0 + e1;
    return {e0 / s, e1 / s};
}

template <typename T>
T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

}  // namespace lascar
