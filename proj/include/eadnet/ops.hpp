#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "eadnet/kernels.hpp"
#include "eadnet/tape.hpp"

// Differentiable operations recorded on the tape. Each function computes the
// forward value eagerly and pushes a closure that accumulates input
// gradients from the output gradient. Elementwise loops stay serial; the
// compute-heavy kernels (conv, pooling, resampling) go through
// eadnet::kernels which parallelizes internally.

namespace eadnet::ad {

template <class T>
int add(Tape<T>& t, int a, int b) {
    require<ShapeError>(t.value(a).same_shape(t.value(b)),
                        "add: shape mismatch " + shape_str(t.value(a).shape) + " vs " +
                            shape_str(t.value(b).shape));
    Tensor<T> out(t.value(a).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = t.value(a).data[i] + t.value(b).data[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(a)) {
            auto& ga = tp.grad_mut(a);
            for (i64 i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& gb = tp.grad_mut(b);
            for (i64 i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i];
        }
    });
}

template <class T>
int sub(Tape<T>& t, int a, int b) {
    require<ShapeError>(t.value(a).same_shape(t.value(b)),
                        "sub: shape mismatch " + shape_str(t.value(a).shape) + " vs " +
                            shape_str(t.value(b).shape));
    Tensor<T> out(t.value(a).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = t.value(a).data[i] - t.value(b).data[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(a)) {
            auto& ga = tp.grad_mut(a);
            for (i64 i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& gb = tp.grad_mut(b);
            for (i64 i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
        }
    });
}

template <class T>
int mul(Tape<T>& t, int a, int b) {
    require<ShapeError>(t.value(a).same_shape(t.value(b)),
                        "mul: shape mismatch " + shape_str(t.value(a).shape) + " vs " +
                            shape_str(t.value(b).shape));
    Tensor<T> out(t.value(a).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = t.value(a).data[i] * t.value(b).data[i];
    return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(a)) {
            auto& ga = tp.grad_mut(a);
            const auto& vb = tp.value(b);
            for (i64 i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * vb.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& gb = tp.grad_mut(b);
            const auto& va = tp.value(a);
            for (i64 i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * va.data[i];
        }
    });
}

/// y = scale * x + shift with compile-time-constant coefficients.
template <class T>
int affine(Tape<T>& t, int x, T scale, T shift) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = scale * t.value(x).data[i] + shift;
    return t.push(std::move(out), {x}, [x, scale](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += scale * g.data[i];
    });
}

/// Elementwise product with a constant tensor (per-pixel loss weights etc).
template <class T>
int xc_mul(Tape<T>& t, int x, Tensor<T> c) {
    require<ShapeError>(t.value(x).same_shape(c), "xc_mul: shape mismatch " +
                                                      shape_str(t.value(x).shape) + " vs " +
                                                      shape_str(c.shape));
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = t.value(x).data[i] * c.data[i];
    auto cc = std::make_shared<Tensor<T>>(std::move(c));
    return t.push(std::move(out), {x}, [x, cc](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] * cc->data[i];
    });
}

/// y = s * x where s is a scalar node (broadcast over x).
template <class T>
int scale_by_scalar(Tape<T>& t, int x, int s) {
    require<ShapeError>(t.value(s).numel() == 1, "scale_by_scalar: scale must be a scalar node");
    const T sv = t.value(s).data[0];
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = sv * t.value(x).data[i];
    return t.push(std::move(out), {x, s}, [x, s](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(x)) {
            auto& gx = tp.grad_mut(x);
            const T svb = tp.value(s).data[0];
            for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += svb * g.data[i];
        }
        if (tp.needs_grad(s)) {
            T acc = 0;
            const auto& vx = tp.value(x);
            for (i64 i = 0; i < g.numel(); ++i) acc += g.data[i] * vx.data[i];
            tp.grad_mut(s).data[0] += acc;
        }
    });
}

template <class T>
int relu(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = t.value(x).data[i] > T(0) ? t.value(x).data[i] : T(0);
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& vx = tp.value(x);
        for (i64 i = 0; i < g.numel(); ++i)
            if (vx.data[i] > T(0)) gx.data[i] += g.data[i];
    });
}

template <class T>
int leaky_relu(Tape<T>& t, int x, T slope) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) {
        const T v = t.value(x).data[i];
        out.data[i] = v > T(0) ? v : slope * v;
    }
    return t.push(std::move(out), {x}, [x, slope](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& vx = tp.value(x);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += (vx.data[i] > T(0) ? T(1) : slope) * g.data[i];
    });
}

template <class T>
int sigmoid(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) {
        const T v = t.value(x).data[i];
        out.data[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& y = tp.value(id);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
    });
}

template <class T>
int tanh_op(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = std::tanh(t.value(x).data[i]);
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& y = tp.value(id);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
    });
}

template <class T>
int log_op(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = std::log(t.value(x).data[i]);
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& vx = tp.value(x);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] / vx.data[i];
    });
}

template <class T>
int sqrt_op(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = std::sqrt(t.value(x).data[i]);
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& y = tp.value(id);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i] / (T(2) * y.data[i]);
    });
}

template <class T>
int reciprocal(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = T(1) / t.value(x).data[i];
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& y = tp.value(id);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] -= g.data[i] * y.data[i] * y.data[i];
    });
}

template <class T>
int abs_op(Tape<T>& t, int x) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = std::abs(t.value(x).data[i]);
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& vx = tp.value(x);
        for (i64 i = 0; i < g.numel(); ++i) {
            if (vx.data[i] > T(0)) gx.data[i] += g.data[i];
            else if (vx.data[i] < T(0)) gx.data[i] -= g.data[i];
        }
    });
}

/// Gradient passes through on [lo,hi] inclusive, zero outside.
template <class T>
int clamp(Tape<T>& t, int x, T lo, T hi) {
    Tensor<T> out(t.value(x).shape);
    for (i64 i = 0; i < out.numel(); ++i) out.data[i] = std::min(hi, std::max(lo, t.value(x).data[i]));
    return t.push(std::move(out), {x}, [x, lo, hi](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        const auto& vx = tp.value(x);
        for (i64 i = 0; i < g.numel(); ++i)
            if (vx.data[i] >= lo && vx.data[i] <= hi) gx.data[i] += g.data[i];
    });
}

template <class T>
int sum(Tape<T>& t, int x) {
    T acc = 0;
    for (i64 i = 0; i < t.value(x).numel(); ++i) acc += t.value(x).data[i];
    return t.push(Tensor<T>::scalar(acc), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const T g = tp.grad(id).data[0];
        auto& gx = tp.grad_mut(x);
        for (i64 i = 0; i < gx.numel(); ++i) gx.data[i] += g;
    });
}

template <class T>
int mean(Tape<T>& t, int x) {
    const i64 n = t.value(x).numel();
    require<ShapeError>(n > 0, "mean: empty tensor");
    T acc = 0;
    for (i64 i = 0; i < n; ++i) acc += t.value(x).data[i];
    return t.push(Tensor<T>::scalar(acc / static_cast<T>(n)), {x}, [x, n](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const T g = tp.grad(id).data[0] / static_cast<T>(n);
        auto& gx = tp.grad_mut(x);
        for (i64 i = 0; i < gx.numel(); ++i) gx.data[i] += g;
    });
}

template <class T>
int dot(Tape<T>& t, int a, int b) {
    require<ShapeError>(t.value(a).same_shape(t.value(b)),
                        "dot: shape mismatch " + shape_str(t.value(a).shape) + " vs " +
                            shape_str(t.value(b).shape));
    T acc = 0;
    for (i64 i = 0; i < t.value(a).numel(); ++i) acc += t.value(a).data[i] * t.value(b).data[i];
    return t.push(Tensor<T>::scalar(acc), {a, b}, [a, b](Tape<T>& tp, int id) {
        const T g = tp.grad(id).data[0];
        if (tp.needs_grad(a)) {
            auto& ga = tp.grad_mut(a);
            const auto& vb = tp.value(b);
            for (i64 i = 0; i < ga.numel(); ++i) ga.data[i] += g * vb.data[i];
        }
        if (tp.needs_grad(b)) {
            auto& gb = tp.grad_mut(b);
            const auto& va = tp.value(a);
            for (i64 i = 0; i < gb.numel(); ++i) gb.data[i] += g * va.data[i];
        }
    });
}

/// y = W x for W [m,n] and x [n].
template <class T>
int matvec(Tape<T>& t, int w, int x) {
    const auto& W = t.value(w);
    const auto& X = t.value(x);
    require<ShapeError>(W.rank() == 2, "matvec: W must be 2-D, got " + shape_str(W.shape));
    require<ShapeError>(X.rank() == 1 && X.dim(0) == W.dim(1),
                        "matvec: x must be [" + std::to_string(W.dim(1)) + "], got " + shape_str(X.shape));
    const i64 m = W.dim(0), n = W.dim(1);
    Tensor<T> out({m});
    for (i64 i = 0; i < m; ++i) {
        T acc = 0;
        for (i64 j = 0; j < n; ++j) acc += W.data[i * n + j] * X.data[j];
        out.data[i] = acc;
    }
    return t.push(std::move(out), {w, x}, [w, x, m, n](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(w)) {
            auto& gw = tp.grad_mut(w);
            const auto& vx = tp.value(x);
            for (i64 i = 0; i < m; ++i)
                for (i64 j = 0; j < n; ++j) gw.data[i * n + j] += g.data[i] * vx.data[j];
        }
        if (tp.needs_grad(x)) {
            auto& gx = tp.grad_mut(x);
            const auto& vw = tp.value(w);
            for (i64 i = 0; i < m; ++i)
                for (i64 j = 0; j < n; ++j) gx.data[j] += vw.data[i * n + j] * g.data[i];
        }
    });
}

/// y = W^T x for W [m,n] and x [m].
template <class T>
int matvec_t(Tape<T>& t, int w, int x) {
    const auto& W = t.value(w);
    const auto& X = t.value(x);
    require<ShapeError>(W.rank() == 2, "matvec_t: W must be 2-D, got " + shape_str(W.shape));
    require<ShapeError>(X.rank() == 1 && X.dim(0) == W.dim(0),
                        "matvec_t: x must be [" + std::to_string(W.dim(0)) + "], got " + shape_str(X.shape));
    const i64 m = W.dim(0), n = W.dim(1);
    Tensor<T> out({n});
    for (i64 i = 0; i < m; ++i)
        for (i64 j = 0; j < n; ++j) out.data[j] += W.data[i * n + j] * X.data[i];
    return t.push(std::move(out), {w, x}, [w, x, m, n](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(w)) {
            auto& gw = tp.grad_mut(w);
            const auto& vx = tp.value(x);
            for (i64 i = 0; i < m; ++i)
                for (i64 j = 0; j < n; ++j) gw.data[i * n + j] += vx.data[i] * g.data[j];
        }
        if (tp.needs_grad(x)) {
            auto& gx = tp.grad_mut(x);
            const auto& vw = tp.value(w);
            for (i64 i = 0; i < m; ++i) {
                T acc = 0;
                for (i64 j = 0; j < n; ++j) acc += vw.data[i * n + j] * g.data[j];
                gx.data[i] += acc;
            }
        }
    });
}

template <class T>
int reshape(Tape<T>& t, int x, Shape s) {
    require<ShapeError>(shape_numel(s) == t.value(x).numel(),
                        "reshape: cannot view " + shape_str(t.value(x).shape) + " as " + shape_str(s));
    Tensor<T> out(std::move(s), t.value(x).data);
    return t.push(std::move(out), {x}, [x](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
    });
}

template <class T>
int concat_channels(Tape<T>& t, const std::vector<int>& xs) {
    require<ShapeError>(!xs.empty(), "concat_channels: no inputs");
    const auto& first = t.value(xs[0]);
    require<ShapeError>(first.rank() == 4, "concat_channels: inputs must be 4-D");
    const i64 n = first.dim(0), h = first.dim(2), w = first.dim(3);
    i64 ctot = 0;
    for (int x : xs) {
        const auto& v = t.value(x);
        require<ShapeError>(v.rank() == 4 && v.dim(0) == n && v.dim(2) == h && v.dim(3) == w,
                            "concat_channels: incompatible shape " + shape_str(v.shape));
        ctot += v.dim(1);
    }
    Tensor<T> out({n, ctot, h, w});
    i64 coff = 0;
    for (int x : xs) {
        const auto& v = t.value(x);
        const i64 c = v.dim(1);
        for (i64 ni = 0; ni < n; ++ni)
            std::copy(v.data.begin() + ni * c * h * w, v.data.begin() + (ni + 1) * c * h * w,
                      out.data.begin() + (ni * ctot + coff) * h * w);
        coff += c;
    }
    auto xs_copy = xs;
    return t.push(std::move(out), xs, [xs_copy, n, h, w, ctot](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        i64 coff = 0;
        for (int x : xs_copy) {
            const i64 c = tp.value(x).dim(1);
            if (tp.needs_grad(x)) {
                auto& gx = tp.grad_mut(x);
                for (i64 ni = 0; ni < n; ++ni) {
                    const T* src = g.ptr() + (ni * ctot + coff) * h * w;
                    T* dst = gx.ptr() + ni * c * h * w;
                    for (i64 i = 0; i < c * h * w; ++i) dst[i] += src[i];
                }
            }
            coff += c;
        }
    });
}

template <class T>
int concat_batch(Tape<T>& t, const std::vector<int>& xs) {
    require<ShapeError>(!xs.empty(), "concat_batch: no inputs");
    const auto& first = t.value(xs[0]);
    require<ShapeError>(first.rank() == 4, "concat_batch: inputs must be 4-D");
    const i64 c = first.dim(1), h = first.dim(2), w = first.dim(3);
    i64 ntot = 0;
    for (int x : xs) {
        const auto& v = t.value(x);
        require<ShapeError>(v.rank() == 4 && v.dim(1) == c && v.dim(2) == h && v.dim(3) == w,
                            "concat_batch: incompatible shape " + shape_str(v.shape));
        ntot += v.dim(0);
    }
    Tensor<T> out({ntot, c, h, w});
    i64 off = 0;
    for (int x : xs) {
        const auto& v = t.value(x);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
        off += v.numel();
    }
    auto xs_copy = xs;
    return t.push(std::move(out), xs, [xs_copy](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        i64 off = 0;
        for (int x : xs_copy) {
            const i64 len = tp.value(x).numel();
            if (tp.needs_grad(x)) {
                auto& gx = tp.grad_mut(x);
                for (i64 i = 0; i < len; ++i) gx.data[i] += g.data[off + i];
            }
            off += len;
        }
    });
}

template <class T>
int slice_batch(Tape<T>& t, int x, i64 start, i64 count) {
    const auto& v = t.value(x);
    require<ShapeError>(v.rank() == 4, "slice_batch: input must be 4-D");
    require<ShapeError>(start >= 0 && count >= 1 && start + count <= v.dim(0),
                        "slice_batch: range [" + std::to_string(start) + "," +
                            std::to_string(start + count) + ") out of N=" + std::to_string(v.dim(0)));
    const i64 stride = v.dim(1) * v.dim(2) * v.dim(3);
    Tensor<T> out({count, v.dim(1), v.dim(2), v.dim(3)});
    std::copy(v.data.begin() + start * stride, v.data.begin() + (start + count) * stride,
              out.data.begin());
    return t.push(std::move(out), {x}, [x, start, stride](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        const auto& g = tp.grad(id);
        auto& gx = tp.grad_mut(x);
        for (i64 i = 0; i < g.numel(); ++i) gx.data[start * stride + i] += g.data[i];
    });
}

template <class T>
int conv2d(Tape<T>& t, int x, int w, int b, i64 stride, i64 pad) {
    const auto d = kernels::conv_dims(t.value(x).shape, t.value(w).shape, t.value(b).shape, stride, pad);
    Tensor<T> out({d.n, d.cout, d.oh, d.ow});
    kernels::conv2d_forward(t.value(x).ptr(), t.value(w).ptr(), t.value(b).ptr(), out.ptr(), d);
    return t.push(std::move(out), {x, w, b}, [x, w, b, d](Tape<T>& tp, int id) {
        const auto& g = tp.grad(id);
        if (tp.needs_grad(x))
            kernels::conv2d_backward_input(g.ptr(), tp.value(w).ptr(), tp.grad_mut(x).ptr(), d);
        if (tp.needs_grad(w) || tp.needs_grad(b))
            kernels::conv2d_backward_weight(g.ptr(), tp.value(x).ptr(), tp.grad_mut(w).ptr(),
                                            tp.grad_mut(b).ptr(), d);
    });
}

template <class T>
int maxpool2(Tape<T>& t, int x) {
    const auto& v = t.value(x);
    require<ShapeError>(v.rank() == 4, "maxpool2: input must be 4-D, got " + shape_str(v.shape));
    require<ShapeError>(v.dim(2) % 2 == 0 && v.dim(3) % 2 == 0,
                        "maxpool2: H and W must be even, got " + shape_str(v.shape));
    const i64 n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
    Tensor<T> out({n, c, h / 2, w / 2});
    auto argmax = std::make_shared<std::vector<i64>>(static_cast<size_t>(out.numel()));
    kernels::maxpool2_forward(v.ptr(), n, c, h, w, out.ptr(), argmax->data());
    return t.push(std::move(out), {x}, [x, n, c, h, w, argmax](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        kernels::maxpool2_backward(tp.grad(id).ptr(), argmax->data(), n, c, h, w,
                                   tp.grad_mut(x).ptr());
    });
}

/// Rearranges [N, C*r^2, H, W] into [N, C, H*r, W*r];
/// out[n,c,y,x] = in[n, c*r^2 + (y%r)*r + (x%r), y/r, x/r].
template <class T>
int pixel_shuffle(Tape<T>& t, int x, i64 r) {
    const auto& v = t.value(x);
    require<ShapeError>(v.rank() == 4, "pixel_shuffle: input must be 4-D, got " + shape_str(v.shape));
    require<ShapeError>(r >= 1 && v.dim(1) % (r * r) == 0,
                        "pixel_shuffle: channels (" + std::to_string(v.dim(1)) +
                            ") not divisible by r^2=" + std::to_string(r * r));
    const i64 n = v.dim(0), cout = v.dim(1) / (r * r), h = v.dim(2), w = v.dim(3);
    Tensor<T> out({n, cout, h * r, w * r});
    kernels::pixel_shuffle_forward(v.ptr(), n, cout, r, h, w, out.ptr());
    return t.push(std::move(out), {x}, [x, n, cout, r, h, w](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        kernels::pixel_shuffle_backward(tp.grad(id).ptr(), n, cout, r, h, w, tp.grad_mut(x).ptr());
    });
}

/// Bilinear resize with align-corners sampling; identity when sizes match.
template <class T>
int upsample_bilinear(Tape<T>& t, int x, i64 oh, i64 ow) {
    const auto& v = t.value(x);
    require<ShapeError>(v.rank() == 4, "upsample_bilinear: input must be 4-D, got " + shape_str(v.shape));
    require<ShapeError>(oh >= 1 && ow >= 1, "upsample_bilinear: target size must be positive");
    const i64 n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
    Tensor<T> out({n, c, oh, ow});
    kernels::bilinear_forward(v.ptr(), n, c, h, w, oh, ow, out.ptr());
    return t.push(std::move(out), {x}, [x, n, c, h, w, oh, ow](Tape<T>& tp, int id) {
        if (!tp.needs_grad(x)) return;
        kernels::bilinear_backward(tp.grad(id).ptr(), n, c, h, w, oh, ow, tp.grad_mut(x).ptr());
    });
}

/// w[co,...] = g[co] * v[co,...] / ||v[co,...]|| with the norm over each
/// output channel's fan-in block.
template <class T>
int weight_norm(Tape<T>& t, int v, int g) {
    const auto& V = t.value(v);
    const auto& G = t.value(g);
    require<ShapeError>(V.rank() == 4, "weight_norm: direction must be 4-D, got " + shape_str(V.shape));
    require<ShapeError>(G.rank() == 1 && G.dim(0) == V.dim(0),
                        "weight_norm: gain must be [" + std::to_string(V.dim(0)) + "], got " +
                            shape_str(G.shape));
    const i64 cout = V.dim(0), blk = V.numel() / cout;
    Tensor<T> out(V.shape);
    std::vector<T> norms(static_cast<size_t>(cout));
    for (i64 co = 0; co < cout; ++co) {
        T ss = 0;
        for (i64 i = 0; i < blk; ++i) ss += V.data[co * blk + i] * V.data[co * blk + i];
        const T nrm = std::sqrt(ss);
        require<NumericError>(nrm >= T(1e-12), "weight_norm: degenerate direction (norm " +
                                                   std::to_string(static_cast<double>(nrm)) +
                                                   ") in channel " + std::to_string(co));
        norms[static_cast<size_t>(co)] = nrm;
        const T s = G.data[co] / nrm;
        for (i64 i = 0; i < blk; ++i) out.data[co * blk + i] = s * V.data[co * blk + i];
    }
    return t.push(std::move(out), {v, g}, [v, g, cout, blk, norms](Tape<T>& tp, int id) {
        const auto& gw = tp.grad(id);
        const auto& V2 = tp.value(v);
        const auto& G2 = tp.value(g);
        for (i64 co = 0; co < cout; ++co) {
            const T nrm = norms[static_cast<size_t>(co)];
            // d = gw . vhat, shared by both partials
            T d = 0;
            for (i64 i = 0; i < blk; ++i) d += gw.data[co * blk + i] * V2.data[co * blk + i] / nrm;
            if (tp.needs_grad(g)) tp.grad_mut(g).data[co] += d;
            if (tp.needs_grad(v)) {
                auto& gv = tp.grad_mut(v);
                const T s = G2.data[co] / nrm;
                for (i64 i = 0; i < blk; ++i) {
                    const T vhat = V2.data[co * blk + i] / nrm;
                    gv.data[co * blk + i] += s * (gw.data[co * blk + i] - vhat * d);
                }
            }
        }
    });
}

}  // namespace eadnet::ad
