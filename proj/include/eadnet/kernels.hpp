#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "eadnet/common.hpp"

// Low-level numeric kernels. The default entry points are OpenMP-parallel
// and structured so the hot inner loops vectorize (fused multi-tap passes,
// partial-sum banks for reductions); kernels::serial holds straightforward
// bounds-checked reference loops, kept for testing and benchmarking against.
// Serial and parallel results agree up to rounding (the parallel kernels
// reassociate reductions and the compiler contracts multiply-adds
// differently in scalar and vector code), not bit for bit.
//
// All backward kernels accumulate (+=) into their gradient buffers so callers
// can sum fan-out contributions in place. Parallel partitioning is over
// independent output slices only, so results do not depend on thread count.

namespace eadnet::kernels {

struct ConvDims {
    i64 n, cin, h, w;      // input
    i64 cout, kh, kw;      // weight
    i64 stride, pad;
    i64 oh, ow;            // output
};

inline ConvDims conv_dims(const Shape& x, const Shape& wt, const Shape& b, i64 stride, i64 pad) {
    require<ShapeError>(x.size() == 4, "conv2d: input must be 4-D [N,C,H,W], got " + shape_str(x));
    require<ShapeError>(wt.size() == 4, "conv2d: weight must be 4-D [Cout,Cin,kh,kw], got " + shape_str(wt));
    require<ShapeError>(b.size() == 1 && b[0] == wt[0],
                        "conv2d: bias must be [Cout=" + std::to_string(wt[0]) + "], got " + shape_str(b));
    require<ShapeError>(x[1] == wt[1], "conv2d: input channels (" + std::to_string(x[1]) +
                                           ") != weight in_channels (" + std::to_string(wt[1]) + ")");
    require<ShapeError>(stride >= 1, "conv2d: stride must be >= 1");
    require<ShapeError>(pad >= 0, "conv2d: padding must be >= 0");
    ConvDims d{x[0], x[1], x[2], x[3], wt[0], wt[2], wt[3], stride, pad, 0, 0};
    require<ShapeError>(d.h + 2 * pad >= d.kh, "conv2d: H+2*pad (" + std::to_string(d.h + 2 * pad) +
                                                   ") < kernel_h (" + std::to_string(d.kh) + ")");
    require<ShapeError>(d.w + 2 * pad >= d.kw, "conv2d: W+2*pad (" + std::to_string(d.w + 2 * pad) +
                                                   ") < kernel_w (" + std::to_string(d.kw) + ")");
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    return d;
}

/// Symmetric reflection (edge pixel repeated): -1 -> 0, n -> n-1.
inline i64 reflect_index(i64 i, i64 n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

namespace detail {

// Zero-pad one [C,H,W] image into [C,H+2p,W+2p].
template <class T>
void zero_pad_image(const T* in, i64 c, i64 h, i64 w, i64 pad, T* out) {
    const i64 hp = h + 2 * pad, wp = w + 2 * pad;
    std::memset(out, 0, static_cast<size_t>(c * hp * wp) * sizeof(T));
    for (i64 ci = 0; ci < c; ++ci)
        for (i64 y = 0; y < h; ++y)
            std::memcpy(out + (ci * hp + y + pad) * wp + pad, in + (ci * h + y) * w,
                        static_cast<size_t>(w) * sizeof(T));
}

// One row per (ci,ky,kx) tap holding that tap's input window at every output
// position, so downstream passes work on contiguous data regardless of stride.
template <class T>
std::vector<T> gather_windows(const T* src, const ConvDims& d, i64 hp, i64 wp) {
    const i64 kk = d.kh * d.kw;
    const i64 ckk = d.cin * kk;
    const i64 P = d.n * d.oh * d.ow;
    std::vector<T> M(static_cast<size_t>(ckk * P));
#pragma omp parallel for schedule(static)
    for (i64 r = 0; r < ckk; ++r) {
        const i64 ci = r / kk, ky = (r / d.kw) % d.kh, kx = r % d.kw;
        T* mrow = M.data() + r * P;
        for (i64 n = 0; n < d.n; ++n)
            for (i64 oy = 0; oy < d.oh; ++oy) {
                const T* irow = src + ((n * d.cin + ci) * hp + oy * d.stride + ky) * wp + kx;
                if (d.stride == 1) {
                    std::memcpy(mrow, irow, static_cast<size_t>(d.ow) * sizeof(T));
                } else {
                    for (i64 ox = 0; ox < d.ow; ++ox) mrow[ox] = irow[ox * d.stride];
                }
                mrow += d.ow;
            }
    }
    return M;
}

// Forward on gathered windows: register-tiled over eight output channels so
// the window matrix streams once per channel block while the accumulators
// stay in vector registers across the whole tap loop.
template <class T>
void conv2d_forward_gathered(const T* src, const T* wt, const T* bias, T* out,
                             const ConvDims& d, i64 hp, i64 wp) {
    const i64 ckk = d.cin * d.kh * d.kw;
    const i64 ohow = d.oh * d.ow;
    const i64 P = d.n * ohow;
    const std::vector<T> M = gather_windows(src, d, hp, wp);
    constexpr i64 L = 16;
#pragma omp parallel for schedule(static)
    for (i64 c0 = 0; c0 < d.cout; c0 += 8) {
        const i64 cb = std::min<i64>(8, d.cout - c0);
        for (i64 n = 0; n < d.n; ++n) {
            const i64 base = n * ohow;
            i64 i = 0;
            if (cb == 8) {
                for (; i + L <= ohow; i += L) {
                    T b0[L], b1[L], b2[L], b3[L], b4[L], b5[L], b6[L], b7[L];
                    for (i64 l = 0; l < L; ++l) {
                        b0[l] = b1[l] = b2[l] = b3[l] = T(0);
                        b4[l] = b5[l] = b6[l] = b7[l] = T(0);
                    }
                    for (i64 r = 0; r < ckk; ++r) {
                        const T* m = M.data() + r * P + base + i;
                        const T w0 = wt[(c0 + 0) * ckk + r], w1 = wt[(c0 + 1) * ckk + r];
                        const T w2 = wt[(c0 + 2) * ckk + r], w3 = wt[(c0 + 3) * ckk + r];
                        const T w4 = wt[(c0 + 4) * ckk + r], w5 = wt[(c0 + 5) * ckk + r];
                        const T w6 = wt[(c0 + 6) * ckk + r], w7 = wt[(c0 + 7) * ckk + r];
#pragma omp simd
                        for (i64 l = 0; l < L; ++l) {
                            const T mv = m[l];
                            b0[l] += w0 * mv;
                            b1[l] += w1 * mv;
                            b2[l] += w2 * mv;
                            b3[l] += w3 * mv;
                            b4[l] += w4 * mv;
                            b5[l] += w5 * mv;
                            b6[l] += w6 * mv;
                            b7[l] += w7 * mv;
                        }
                    }
                    T* const obase = out + (n * d.cout + c0) * ohow + i;
                    const T* banks[8] = {b0, b1, b2, b3, b4, b5, b6, b7};
                    for (i64 b = 0; b < 8; ++b) {
                        T* o = obase + b * ohow;
                        for (i64 l = 0; l < L; ++l) o[l] = bias[c0 + b] + banks[b][l];
                    }
                }
            }
            // leftover columns and channel remainders take a plain tap loop
            for (; i < ohow; ++i) {
                for (i64 b = 0; b < cb; ++b) {
                    T acc = bias[c0 + b];
                    for (i64 r = 0; r < ckk; ++r) acc += wt[(c0 + b) * ckk + r] * M[r * P + base + i];
                    out[(n * d.cout + c0 + b) * ohow + i] = acc;
                }
            }
            if (cb != 8)
                for (i64 j = 0; j < i; ++j)
                    for (i64 b = 0; b < cb; ++b) {
                        T acc = bias[c0 + b];
                        for (i64 r = 0; r < ckk; ++r)
                            acc += wt[(c0 + b) * ckk + r] * M[r * P + base + j];
                        out[(n * d.cout + c0 + b) * ohow + j] = acc;
                    }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// serial reference implementations
// ---------------------------------------------------------------------------

namespace serial {

template <class T>
void conv2d_forward(const T* in, const T* wt, const T* b, T* out, const ConvDims& d) {
    for (i64 n = 0; n < d.n; ++n)
        for (i64 co = 0; co < d.cout; ++co)
            for (i64 oy = 0; oy < d.oh; ++oy)
                for (i64 ox = 0; ox < d.ow; ++ox) {
                    T acc = b[co];
                    for (i64 ci = 0; ci < d.cin; ++ci)
                        for (i64 ky = 0; ky < d.kh; ++ky)
                            for (i64 kx = 0; kx < d.kw; ++kx) {
                                const i64 iy = oy * d.stride + ky - d.pad;
                                const i64 ix = ox * d.stride + kx - d.pad;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                acc += wt[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] *
                                       in[((n * d.cin + ci) * d.h + iy) * d.w + ix];
                            }
                    out[((n * d.cout + co) * d.oh + oy) * d.ow + ox] = acc;
                }
}

template <class T>
void conv2d_backward_input(const T* gout, const T* wt, T* gin, const ConvDims& d) {
    for (i64 n = 0; n < d.n; ++n)
        for (i64 ci = 0; ci < d.cin; ++ci)
            for (i64 iy = 0; iy < d.h; ++iy)
                for (i64 ix = 0; ix < d.w; ++ix) {
                    T acc = 0;
                    for (i64 co = 0; co < d.cout; ++co)
                        for (i64 ky = 0; ky < d.kh; ++ky)
                            for (i64 kx = 0; kx < d.kw; ++kx) {
                                const i64 ty = iy + d.pad - ky;
                                const i64 tx = ix + d.pad - kx;
                                if (ty % d.stride || tx % d.stride) continue;
                                const i64 oy = ty / d.stride, ox = tx / d.stride;
                                if (oy < 0 || oy >= d.oh || ox < 0 || ox >= d.ow) continue;
                                acc += wt[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] *
                                       gout[((n * d.cout + co) * d.oh + oy) * d.ow + ox];
                            }
                    gin[((n * d.cin + ci) * d.h + iy) * d.w + ix] += acc;
                }
}

template <class T>
void conv2d_backward_weight(const T* gout, const T* in, T* gw, T* gb, const ConvDims& d) {
    for (i64 co = 0; co < d.cout; ++co) {
        for (i64 ci = 0; ci < d.cin; ++ci)
            for (i64 ky = 0; ky < d.kh; ++ky)
                for (i64 kx = 0; kx < d.kw; ++kx) {
                    T acc = 0;
                    for (i64 n = 0; n < d.n; ++n)
                        for (i64 oy = 0; oy < d.oh; ++oy)
                            for (i64 ox = 0; ox < d.ow; ++ox) {
                                const i64 iy = oy * d.stride + ky - d.pad;
                                const i64 ix = ox * d.stride + kx - d.pad;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                acc += gout[((n * d.cout + co) * d.oh + oy) * d.ow + ox] *
                                       in[((n * d.cin + ci) * d.h + iy) * d.w + ix];
                            }
                    gw[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] += acc;
                }
        T acc = 0;
        for (i64 n = 0; n < d.n; ++n)
            for (i64 oy = 0; oy < d.oh; ++oy)
                for (i64 ox = 0; ox < d.ow; ++ox)
                    acc += gout[((n * d.cout + co) * d.oh + oy) * d.ow + ox];
        gb[co] += acc;
    }
}

template <class T>
void maxpool2_forward(const T* in, i64 n, i64 c, i64 h, i64 w, T* out, i64* argmax) {
    const i64 oh = h / 2, ow = w / 2;
    for (i64 nc = 0; nc < n * c; ++nc)
        for (i64 oy = 0; oy < oh; ++oy)
            for (i64 ox = 0; ox < ow; ++ox) {
                const i64 base = nc * h * w;
                i64 best = base + (2 * oy) * w + 2 * ox;
                T bv = in[best];
                // row-major scan; ties keep the first index seen
                const i64 cand[3] = {base + (2 * oy) * w + 2 * ox + 1, base + (2 * oy + 1) * w + 2 * ox,
                                     base + (2 * oy + 1) * w + 2 * ox + 1};
                for (i64 k = 0; k < 3; ++k)
                    if (in[cand[k]] > bv) {
                        bv = in[cand[k]];
                        best = cand[k];
                    }
                out[(nc * oh + oy) * ow + ox] = bv;
                argmax[(nc * oh + oy) * ow + ox] = best;
            }
}

template <class T>
void bilinear_forward(const T* in, i64 n, i64 c, i64 h, i64 w, i64 oh, i64 ow, T* out) {
    if (oh == h && ow == w) {
        std::memcpy(out, in, static_cast<size_t>(n * c * h * w) * sizeof(T));
        return;
    }
    const double sy = oh > 1 ? static_cast<double>(h - 1) / static_cast<double>(oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / static_cast<double>(ow - 1) : 0.0;
    for (i64 nc = 0; nc < n * c; ++nc) {
        const T* plane = in + nc * h * w;
        for (i64 oy = 0; oy < oh; ++oy)
            for (i64 ox = 0; ox < ow; ++ox) {
                const double fy = sy * static_cast<double>(oy);
                const double fx = sx * static_cast<double>(ox);
                const i64 y0 = std::min<i64>(static_cast<i64>(fy), h - 1);
                const i64 x0 = std::min<i64>(static_cast<i64>(fx), w - 1);
                const i64 y1 = std::min<i64>(y0 + 1, h - 1);
                const i64 x1 = std::min<i64>(x0 + 1, w - 1);
                const T wy = static_cast<T>(fy - static_cast<double>(y0));
                const T wx = static_cast<T>(fx - static_cast<double>(x0));
                out[(nc * oh + oy) * ow + ox] =
                    (T(1) - wy) * ((T(1) - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
                    wy * ((T(1) - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
            }
    }
}

template <class T>
void correlate2d_reflect(const T* img, i64 h, i64 w, const double* k, i64 ks, T* out) {
    const i64 r = ks / 2;
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) {
            double acc = 0.0;
            for (i64 ky = 0; ky < ks; ++ky)
                for (i64 kx = 0; kx < ks; ++kx) {
                    const i64 iy = reflect_index(y + ky - r, h);
                    const i64 ix = reflect_index(x + kx - r, w);
                    acc += k[ky * ks + kx] * static_cast<double>(img[iy * w + ix]);
                }
            out[y * w + x] = static_cast<T>(acc);
        }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP-parallel implementations (default)
// ---------------------------------------------------------------------------

template <class T>
void conv2d_forward(const T* in, const T* wt, const T* b, T* out, const ConvDims& d) {
    const i64 hp = d.h + 2 * d.pad, wp = d.w + 2 * d.pad;
    std::vector<T> padbuf;
    const T* src = in;
    if (d.pad > 0) {
        padbuf.resize(static_cast<size_t>(d.n * d.cin * hp * wp));
#pragma omp parallel for schedule(static)
        for (i64 n = 0; n < d.n; ++n)
            detail::zero_pad_image(in + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.pad,
                                   padbuf.data() + n * d.cin * hp * wp);
        src = padbuf.data();
    }

    const i64 gathered_bytes =
        d.cin * d.kh * d.kw * d.n * d.oh * d.ow * static_cast<i64>(sizeof(T));
    if ((d.stride > 1 || d.ow < 16) && gathered_bytes <= (i64(8) << 20)) {
        detail::conv2d_forward_gathered(src, wt, b, out, d, hp, wp);
        return;
    }

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 n = 0; n < d.n; ++n)
        for (i64 co = 0; co < d.cout; ++co) {
            std::vector<T> acc(static_cast<size_t>(d.ow));
            for (i64 oy = 0; oy < d.oh; ++oy) {
                std::fill(acc.begin(), acc.end(), b[co]);
                if (d.kh == 3 && d.kw == 3 && d.stride == 1) {
                    // fused 9-tap pass: many FMAs per acc load/store
                    for (i64 ci = 0; ci < d.cin; ++ci) {
                        const T* w9 = wt + (co * d.cin + ci) * 9;
                        const T* r0 = src + ((n * d.cin + ci) * hp + oy) * wp;
                        const T* r1 = r0 + wp;
                        const T* r2 = r1 + wp;
                        for (i64 ox = 0; ox < d.ow; ++ox)
                            acc[ox] += w9[0] * r0[ox] + w9[1] * r0[ox + 1] + w9[2] * r0[ox + 2] +
                                       w9[3] * r1[ox] + w9[4] * r1[ox + 1] + w9[5] * r1[ox + 2] +
                                       w9[6] * r2[ox] + w9[7] * r2[ox + 1] + w9[8] * r2[ox + 2];
                    }
                } else if (d.kh == 1 && d.kw == 1 && d.stride == 1) {
                    // channel-blocked 1x1: four input rows per acc pass
                    i64 ci = 0;
                    for (; ci + 4 <= d.cin; ci += 4) {
                        const T* wq = wt + co * d.cin + ci;
                        const T* r0 = src + ((n * d.cin + ci) * hp + oy) * wp;
                        const T* r1 = r0 + hp * wp;
                        const T* r2 = r1 + hp * wp;
                        const T* r3 = r2 + hp * wp;
                        for (i64 ox = 0; ox < d.ow; ++ox)
                            acc[ox] += wq[0] * r0[ox] + wq[1] * r1[ox] + wq[2] * r2[ox] +
                                       wq[3] * r3[ox];
                    }
                    for (; ci < d.cin; ++ci) {
                        const T wv = wt[co * d.cin + ci];
                        const T* r = src + ((n * d.cin + ci) * hp + oy) * wp;
                        for (i64 ox = 0; ox < d.ow; ++ox) acc[ox] += wv * r[ox];
                    }
                } else {
                    for (i64 ci = 0; ci < d.cin; ++ci)
                        for (i64 ky = 0; ky < d.kh; ++ky) {
                            const T* row =
                                src + ((n * d.cin + ci) * hp + oy * d.stride + ky) * wp;
                            const T* wrow = wt + ((co * d.cin + ci) * d.kh + ky) * d.kw;
                            for (i64 kx = 0; kx < d.kw; ++kx) {
                                const T wv = wrow[kx];
                                const T* ir = row + kx;
                                if (d.stride == 1) {
                                    for (i64 ox = 0; ox < d.ow; ++ox) acc[ox] += wv * ir[ox];
                                } else {
                                    for (i64 ox = 0; ox < d.ow; ++ox)
                                        acc[ox] += wv * ir[ox * d.stride];
                                }
                            }
                        }
                }
                std::memcpy(out + ((n * d.cout + co) * d.oh + oy) * d.ow, acc.data(),
                            static_cast<size_t>(d.ow) * sizeof(T));
            }
        }
}

namespace detail {

// Input gradient for short or strided output rows: first form per-tap gradient
// rows gM[r] = sum_co wt[co][r] * gout[co] with blocked vector passes, then
// scatter each row back to its window position. The dense pass does all the
// arithmetic on contiguous data; the scatter is linear in gM's size.
template <class T>
void conv2d_backward_input_gathered(const T* gout, const T* wt, T* gin, const ConvDims& d,
                                    i64 hp, i64 wp) {
    const i64 kk = d.kh * d.kw;
    const i64 ckk = d.cin * kk;
    const i64 ohow = d.oh * d.ow;
    const i64 P = d.n * ohow;
    std::vector<T> gM(static_cast<size_t>(ckk * P), T(0));

    constexpr i64 L = 16;
#pragma omp parallel for schedule(static)
    for (i64 r0 = 0; r0 < ckk; r0 += 8) {
        const i64 rb = std::min<i64>(8, ckk - r0);
        for (i64 co = 0; co < d.cout; ++co) {
            const T* wr = wt + co * ckk + r0;
            for (i64 n = 0; n < d.n; ++n) {
                const T* __restrict g = gout + (n * d.cout + co) * ohow;
                i64 i = 0;
                if (rb == 8) {
                    T* __restrict m0 = gM.data() + (r0 + 0) * P + n * ohow;
                    T* __restrict m1 = gM.data() + (r0 + 1) * P + n * ohow;
                    T* __restrict m2 = gM.data() + (r0 + 2) * P + n * ohow;
                    T* __restrict m3 = gM.data() + (r0 + 3) * P + n * ohow;
                    T* __restrict m4 = gM.data() + (r0 + 4) * P + n * ohow;
                    T* __restrict m5 = gM.data() + (r0 + 5) * P + n * ohow;
                    T* __restrict m6 = gM.data() + (r0 + 6) * P + n * ohow;
                    T* __restrict m7 = gM.data() + (r0 + 7) * P + n * ohow;
                    for (; i + L <= ohow; i += L)
                        // rows of gM never alias each other or gout
#pragma omp simd
                        for (i64 l = 0; l < L; ++l) {
                            const T gv = g[i + l];
                            m0[i + l] += wr[0] * gv;
                            m1[i + l] += wr[1] * gv;
                            m2[i + l] += wr[2] * gv;
                            m3[i + l] += wr[3] * gv;
                            m4[i + l] += wr[4] * gv;
                            m5[i + l] += wr[5] * gv;
                            m6[i + l] += wr[6] * gv;
                            m7[i + l] += wr[7] * gv;
                        }
                }
                for (; i < ohow; ++i) {
                    const T gv = g[i];
                    for (i64 b = 0; b < rb; ++b) gM[(r0 + b) * P + n * ohow + i] += wr[b] * gv;
                }
            }
        }
    }

#pragma omp parallel for collapse(2) schedule(static)
    for (i64 n = 0; n < d.n; ++n)
        for (i64 ci = 0; ci < d.cin; ++ci) {
            T* gplane = gin + (n * d.cin + ci) * d.h * d.w;
            std::vector<T> gpad;
            T* p = gplane;
            if (d.pad > 0) {
                gpad.assign(static_cast<size_t>(hp * wp), T(0));
                p = gpad.data();
            }
            for (i64 ky = 0; ky < d.kh; ++ky)
                for (i64 kx = 0; kx < d.kw; ++kx) {
                    const i64 r = (ci * d.kh + ky) * d.kw + kx;
                    const T* mrow = gM.data() + r * P + n * ohow;
                    for (i64 oy = 0; oy < d.oh; ++oy) {
                        T* prow = p + (oy * d.stride + ky) * wp + kx;
                        if (d.stride == 1) {
                            for (i64 ox = 0; ox < d.ow; ++ox) prow[ox] += mrow[ox];
                        } else {
                            for (i64 ox = 0; ox < d.ow; ++ox) prow[ox * d.stride] += mrow[ox];
                        }
                        mrow += d.ow;
                    }
                }
            if (d.pad > 0)
                for (i64 y = 0; y < d.h; ++y)
                    for (i64 x = 0; x < d.w; ++x)
                        gplane[y * d.w + x] += gpad[(y + d.pad) * wp + x + d.pad];
        }
}

}  // namespace detail

template <class T>
void conv2d_backward_input(const T* gout, const T* wt, T* gin, const ConvDims& d) {
    const i64 hp = d.h + 2 * d.pad, wp = d.w + 2 * d.pad;
    const i64 gathered_bytes = d.cin * d.kh * d.kw * d.n * d.oh * d.ow * static_cast<i64>(sizeof(T));
    if ((d.stride > 1 || d.ow < 32) && gathered_bytes <= (i64(8) << 20)) {
        detail::conv2d_backward_input_gathered(gout, wt, gin, d, hp, wp);
        return;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 n = 0; n < d.n; ++n)
        for (i64 ci = 0; ci < d.cin; ++ci) {
            T* gplane = gin + (n * d.cin + ci) * d.h * d.w;
            // with no padding the scatter target is the gradient plane itself
            std::vector<T> gpad;
            T* p = gplane;
            if (d.pad > 0) {
                gpad.assign(static_cast<size_t>(hp * wp), T(0));
                p = gpad.data();
            }
            for (i64 co = 0; co < d.cout; ++co)
                for (i64 ky = 0; ky < d.kh; ++ky)
                    for (i64 kx = 0; kx < d.kw; ++kx) {
                        const T wv = wt[((co * d.cin + ci) * d.kh + ky) * d.kw + kx];
                        for (i64 oy = 0; oy < d.oh; ++oy) {
                            const T* grow = gout + ((n * d.cout + co) * d.oh + oy) * d.ow;
                            T* prow = p + (oy * d.stride + ky) * wp + kx;
                            if (d.stride == 1) {
                                for (i64 ox = 0; ox < d.ow; ++ox) prow[ox] += wv * grow[ox];
                            } else {
                                for (i64 ox = 0; ox < d.ow; ++ox) prow[ox * d.stride] += wv * grow[ox];
                            }
                        }
                    }
            if (d.pad > 0)
                for (i64 y = 0; y < d.h; ++y)
                    for (i64 x = 0; x < d.w; ++x)
                        gplane[y * d.w + x] += gpad[(y + d.pad) * wp + x + d.pad];
        }
}

namespace detail {

// Weight gradient via a gathered window matrix: row r of M holds the input
// window for one (ci,ky,kx) tap, flattened over every output position. Each
// gw entry is then a contiguous dot product against a gradient plane, which
// vectorizes even when output rows are short or strided. Four output channels
// share one pass over M to keep it in cache.
template <class T>
void conv2d_backward_weight_gathered(const T* gout, const T* src, T* gw, T* gb,
                                     const ConvDims& d, i64 hp, i64 wp) {
    const i64 kk = d.kh * d.kw;
    const i64 ckk = d.cin * kk;
    const i64 ohow = d.oh * d.ow;
    const i64 P = d.n * ohow;
    (void)kk;
    const std::vector<T> M = gather_windows(src, d, hp, wp);

    constexpr i64 L = 16;
#pragma omp parallel for schedule(static)
    for (i64 c0 = 0; c0 < d.cout; c0 += 4) {
        if (c0 + 4 <= d.cout) {
            for (i64 r = 0; r < ckk; ++r) {
                T b0[L] = {}, b1[L] = {}, b2[L] = {}, b3[L] = {};
                T t0 = 0, t1 = 0, t2 = 0, t3 = 0;
                for (i64 n = 0; n < d.n; ++n) {
                    const T* g0 = gout + ((n * d.cout + c0 + 0) * ohow);
                    const T* g1 = gout + ((n * d.cout + c0 + 1) * ohow);
                    const T* g2 = gout + ((n * d.cout + c0 + 2) * ohow);
                    const T* g3 = gout + ((n * d.cout + c0 + 3) * ohow);
                    const T* m = M.data() + r * P + n * ohow;
                    i64 i = 0;
                    for (; i + L <= ohow; i += L)
                        for (i64 l = 0; l < L; ++l) {
                            const T mv = m[i + l];
                            b0[l] += g0[i + l] * mv;
                            b1[l] += g1[i + l] * mv;
                            b2[l] += g2[i + l] * mv;
                            b3[l] += g3[i + l] * mv;
                        }
                    for (; i < ohow; ++i) {
                        const T mv = m[i];
                        t0 += g0[i] * mv;
                        t1 += g1[i] * mv;
                        t2 += g2[i] * mv;
                        t3 += g3[i] * mv;
                    }
                }
                for (i64 l = 0; l < L; ++l) {
                    t0 += b0[l];
                    t1 += b1[l];
                    t2 += b2[l];
                    t3 += b3[l];
                }
                gw[(c0 + 0) * ckk + r] += t0;
                gw[(c0 + 1) * ckk + r] += t1;
                gw[(c0 + 2) * ckk + r] += t2;
                gw[(c0 + 3) * ckk + r] += t3;
            }
        } else {
            for (i64 co = c0; co < d.cout; ++co)
                for (i64 r = 0; r < ckk; ++r) {
                    T bank[L] = {};
                    T tail = 0;
                    for (i64 n = 0; n < d.n; ++n) {
                        const T* g = gout + ((n * d.cout + co) * ohow);
                        const T* m = M.data() + r * P + n * ohow;
                        i64 i = 0;
                        for (; i + L <= ohow; i += L)
                            for (i64 l = 0; l < L; ++l) bank[l] += g[i + l] * m[i + l];
                        for (; i < ohow; ++i) tail += g[i] * m[i];
                    }
                    T acc = tail;
                    for (i64 l = 0; l < L; ++l) acc += bank[l];
                    gw[co * ckk + r] += acc;
                }
        }
    }

#pragma omp parallel for schedule(static)
    for (i64 co = 0; co < d.cout; ++co) {
        T bank[L] = {};
        T tail = 0;
        for (i64 n = 0; n < d.n; ++n) {
            const T* g = gout + ((n * d.cout + co) * ohow);
            i64 i = 0;
            for (; i + L <= ohow; i += L)
                for (i64 l = 0; l < L; ++l) bank[l] += g[i + l];
            for (; i < ohow; ++i) tail += g[i];
        }
        T acc = tail;
        for (i64 l = 0; l < L; ++l) acc += bank[l];
        gb[co] += acc;
    }
}

}  // namespace detail

template <class T>
void conv2d_backward_weight(const T* gout, const T* in, T* gw, T* gb, const ConvDims& d) {
    const i64 hp = d.h + 2 * d.pad, wp = d.w + 2 * d.pad;
    std::vector<T> padbuf;
    const T* src = in;
    if (d.pad > 0) {
        padbuf.resize(static_cast<size_t>(d.n * d.cin * hp * wp));
#pragma omp parallel for schedule(static)
        for (i64 n = 0; n < d.n; ++n)
            detail::zero_pad_image(in + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.pad,
                                   padbuf.data() + n * d.cin * hp * wp);
        src = padbuf.data();
    }

    // short or strided output rows defeat the per-row lane bank below; those
    // cases go through the gathered-window route when its matrix stays modest
    const i64 gathered_bytes = d.cin * d.kh * d.kw * d.n * d.oh * d.ow * static_cast<i64>(sizeof(T));
    if ((d.stride > 1 || d.ow < 32) && gathered_bytes <= (i64(8) << 20)) {
        detail::conv2d_backward_weight_gathered(gout, src, gw, gb, d, hp, wp);
        return;
    }

    // each weight gradient is a long dot product; a bank of independent partial
    // sums keeps the reduction vectorizable (the serial kernel accumulates in
    // plain order, so the two routes agree only up to rounding)
    constexpr i64 L = 16;
#pragma omp parallel for schedule(static)
    for (i64 co = 0; co < d.cout; ++co) {
        for (i64 ci = 0; ci < d.cin; ++ci)
            for (i64 ky = 0; ky < d.kh; ++ky)
                for (i64 kx = 0; kx < d.kw; ++kx) {
                    T lane[L] = {};
                    T tail = 0;
                    for (i64 n = 0; n < d.n; ++n)
                        for (i64 oy = 0; oy < d.oh; ++oy) {
                            const T* grow = gout + ((n * d.cout + co) * d.oh + oy) * d.ow;
                            const T* irow =
                                src + ((n * d.cin + ci) * hp + oy * d.stride + ky) * wp + kx;
                            i64 ox = 0;
                            if (d.stride == 1) {
                                for (; ox + L <= d.ow; ox += L)
                                    for (i64 l = 0; l < L; ++l)
                                        lane[l] += grow[ox + l] * irow[ox + l];
                                for (; ox < d.ow; ++ox) tail += grow[ox] * irow[ox];
                            } else {
                                for (; ox + L <= d.ow; ox += L)
                                    for (i64 l = 0; l < L; ++l)
                                        lane[l] += grow[ox + l] * irow[(ox + l) * d.stride];
                                for (; ox < d.ow; ++ox) tail += grow[ox] * irow[ox * d.stride];
                            }
                        }
                    T acc = tail;
                    for (i64 l = 0; l < L; ++l) acc += lane[l];
                    gw[((co * d.cin + ci) * d.kh + ky) * d.kw + kx] += acc;
                }
        T lane[L] = {};
        T tail = 0;
        for (i64 n = 0; n < d.n; ++n)
            for (i64 oy = 0; oy < d.oh; ++oy) {
                const T* grow = gout + ((n * d.cout + co) * d.oh + oy) * d.ow;
                i64 ox = 0;
                for (; ox + L <= d.ow; ox += L)
                    for (i64 l = 0; l < L; ++l) lane[l] += grow[ox + l];
                for (; ox < d.ow; ++ox) tail += grow[ox];
            }
        T acc = tail;
        for (i64 l = 0; l < L; ++l) acc += lane[l];
        gb[co] += acc;
    }
}

template <class T>
void maxpool2_forward(const T* in, i64 n, i64 c, i64 h, i64 w, T* out, i64* argmax) {
    const i64 oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < n * c; ++nc)
        for (i64 oy = 0; oy < oh; ++oy)
            for (i64 ox = 0; ox < ow; ++ox) {
                const i64 base = nc * h * w;
                i64 best = base + (2 * oy) * w + 2 * ox;
                T bv = in[best];
                const i64 cand[3] = {base + (2 * oy) * w + 2 * ox + 1, base + (2 * oy + 1) * w + 2 * ox,
                                     base + (2 * oy + 1) * w + 2 * ox + 1};
                for (i64 k = 0; k < 3; ++k)
                    if (in[cand[k]] > bv) {
                        bv = in[cand[k]];
                        best = cand[k];
                    }
                out[(nc * oh + oy) * ow + ox] = bv;
                argmax[(nc * oh + oy) * ow + ox] = best;
            }
}

template <class T>
void maxpool2_backward(const T* gout, const i64* argmax, i64 n, i64 c, i64 h, i64 w, T* gin) {
    const i64 oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < n * c; ++nc)
        for (i64 i = nc * oh * ow; i < (nc + 1) * oh * ow; ++i) gin[argmax[i]] += gout[i];
}

template <class T>
void pixel_shuffle_forward(const T* in, i64 n, i64 cout, i64 r, i64 h, i64 w, T* out) {
    const i64 oh = h * r, ow = w * r;
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 ni = 0; ni < n; ++ni)
        for (i64 c = 0; c < cout; ++c)
            for (i64 y = 0; y < oh; ++y)
                for (i64 x = 0; x < ow; ++x) {
                    const i64 ci = c * r * r + (y % r) * r + (x % r);
                    out[((ni * cout + c) * oh + y) * ow + x] =
                        in[((ni * cout * r * r + ci) * h + y / r) * w + x / r];
                }
}

template <class T>
void pixel_shuffle_backward(const T* gout, i64 n, i64 cout, i64 r, i64 h, i64 w, T* gin) {
    const i64 oh = h * r, ow = w * r;
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 ni = 0; ni < n; ++ni)
        for (i64 c = 0; c < cout; ++c)
            for (i64 y = 0; y < oh; ++y)
                for (i64 x = 0; x < ow; ++x) {
                    const i64 ci = c * r * r + (y % r) * r + (x % r);
                    gin[((ni * cout * r * r + ci) * h + y / r) * w + x / r] +=
                        gout[((ni * cout + c) * oh + y) * ow + x];
                }
}

template <class T>
void bilinear_forward(const T* in, i64 n, i64 c, i64 h, i64 w, i64 oh, i64 ow, T* out) {
    if (oh == h && ow == w) {
        std::memcpy(out, in, static_cast<size_t>(n * c * h * w) * sizeof(T));
        return;
    }
    const double sy = oh > 1 ? static_cast<double>(h - 1) / static_cast<double>(oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / static_cast<double>(ow - 1) : 0.0;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < n * c; ++nc) {
        const T* plane = in + nc * h * w;
        for (i64 oy = 0; oy < oh; ++oy) {
            const double fy = sy * static_cast<double>(oy);
            const i64 y0 = std::min<i64>(static_cast<i64>(fy), h - 1);
            const i64 y1 = std::min<i64>(y0 + 1, h - 1);
            const T wy = static_cast<T>(fy - static_cast<double>(y0));
            for (i64 ox = 0; ox < ow; ++ox) {
                const double fx = sx * static_cast<double>(ox);
                const i64 x0 = std::min<i64>(static_cast<i64>(fx), w - 1);
                const i64 x1 = std::min<i64>(x0 + 1, w - 1);
                const T wx = static_cast<T>(fx - static_cast<double>(x0));
                out[(nc * oh + oy) * ow + ox] =
                    (T(1) - wy) * ((T(1) - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
                    wy * ((T(1) - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
            }
        }
    }
}

template <class T>
void bilinear_backward(const T* gout, i64 n, i64 c, i64 h, i64 w, i64 oh, i64 ow, T* gin) {
    if (oh == h && ow == w) {
#pragma omp parallel for schedule(static)
        for (i64 i = 0; i < n * c * h * w; ++i) gin[i] += gout[i];
        return;
    }
    const double sy = oh > 1 ? static_cast<double>(h - 1) / static_cast<double>(oh - 1) : 0.0;
    const double sx = ow > 1 ? static_cast<double>(w - 1) / static_cast<double>(ow - 1) : 0.0;
#pragma omp parallel for schedule(static)
    for (i64 nc = 0; nc < n * c; ++nc) {
        T* gplane = gin + nc * h * w;
        for (i64 oy = 0; oy < oh; ++oy) {
            const double fy = sy * static_cast<double>(oy);
            const i64 y0 = std::min<i64>(static_cast<i64>(fy), h - 1);
            const i64 y1 = std::min<i64>(y0 + 1, h - 1);
            const T wy = static_cast<T>(fy - static_cast<double>(y0));
            for (i64 ox = 0; ox < ow; ++ox) {
                const double fx = sx * static_cast<double>(ox);
                const i64 x0 = std::min<i64>(static_cast<i64>(fx), w - 1);
                const i64 x1 = std::min<i64>(x0 + 1, w - 1);
                const T wx = static_cast<T>(fx - static_cast<double>(x0));
                const T g = gout[(nc * oh + oy) * ow + ox];
                gplane[y0 * w + x0] += (T(1) - wy) * (T(1) - wx) * g;
                gplane[y0 * w + x1] += (T(1) - wy) * wx * g;
                gplane[y1 * w + x0] += wy * (T(1) - wx) * g;
                gplane[y1 * w + x1] += wy * wx * g;
            }
        }
    }
}

template <class T>
void correlate2d_reflect(const T* img, i64 h, i64 w, const double* k, i64 ks, T* out) {
    const i64 r = ks / 2;
#pragma omp parallel for schedule(static)
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) {
            double acc = 0.0;
            for (i64 ky = 0; ky < ks; ++ky)
                for (i64 kx = 0; kx < ks; ++kx) {
                    const i64 iy = reflect_index(y + ky - r, h);
                    const i64 ix = reflect_index(x + kx - r, w);
                    acc += k[ky * ks + kx] * static_cast<double>(img[iy * w + ix]);
                }
            out[y * w + x] = static_cast<T>(acc);
        }
}

}  // namespace eadnet::kernels
