#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "eadnet/ops.hpp"
#include "eadnet/params.hpp"
#include "eadnet/rng.hpp"

// The three networks. Parameters live in ParamStores with stable names so
// checkpoints interoperate between variants: a full edge-net checkpoint can
// be loaded into any reduced variant because reduced parameter names are a
// subset of the full set.
//
// Initialization is fan-in-scaled uniform, U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
// biases zero, drawn in store insertion order from the build seed.
// Weight-normalized convs store direction v and per-channel gain g, with g
// initialized to ||v|| so the effective initial weight equals v.

namespace eadnet::models {

// ---------------------------------------------------------------------------
// shared conv-layer helpers
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv_weight_init(Rng& rng, i64 cout, i64 cin, i64 kh, i64 kw) {
    Tensor<T> w({cout, cin, kh, kw});
    const double s = 1.0 / std::sqrt(static_cast<double>(cin * kh * kw));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform_in(-s, s));
    return w;
}

template <class T>
void add_conv(ParamStore<T>& ps, const std::string& name, i64 cout, i64 cin, i64 k, Rng& rng) {
    ps.add(name + ".w", conv_weight_init<T>(rng, cout, cin, k, k));
    ps.add(name + ".b", Tensor<T>({cout}));
}

template <class T>
int conv_fwd(ad::Tape<T>& t, const BoundParams<T>& b, const std::string& name, int x, i64 stride,
             i64 pad) {
    return ad::conv2d(t, x, b.at(name + ".w"), b.at(name + ".b"), stride, pad);
}

template <class T>
void add_wnconv(ParamStore<T>& ps, const std::string& name, i64 cout, i64 cin, i64 k, Rng& rng) {
    Tensor<T> v = conv_weight_init<T>(rng, cout, cin, k, k);
    Tensor<T> g({cout});
    const i64 blk = cin * k * k;
    for (i64 co = 0; co < cout; ++co) {
        T ss = 0;
        for (i64 i = 0; i < blk; ++i) ss += v.data[co * blk + i] * v.data[co * blk + i];
        g.data[co] = std::sqrt(ss);
    }
    ps.add(name + ".v", std::move(v));
    ps.add(name + ".g", std::move(g));
    ps.add(name + ".b", Tensor<T>({cout}));
}

template <class T>
int wnconv_fwd(ad::Tape<T>& t, const BoundParams<T>& b, const std::string& name, int x, i64 stride,
               i64 pad) {
    const int w = ad::weight_norm(t, b.at(name + ".v"), b.at(name + ".g"));
    return ad::conv2d(t, x, w, b.at(name + ".b"), stride, pad);
}

template <class T>
void add_snconv(ParamStore<T>& ps, const std::string& name, i64 cout, i64 cin, i64 k, Rng& rng) {
    ps.add(name + ".w", conv_weight_init<T>(rng, cout, cin, k, k));
    ps.add(name + ".b", Tensor<T>({cout}));
    Tensor<T> u({cout});
    double ss = 0;
    for (auto& v : u.data) {
        v = static_cast<T>(rng.normal());
        ss += static_cast<double>(v) * static_cast<double>(v);
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(ss));
    for (auto& v : u.data) v *= inv;
    ps.add(name + ".sn_u", std::move(u), /*trainable=*/false);
}

/// One-or-more power iterations on W viewed as [cout, cin*kh*kw]; returns
/// (W/sigma_hat, updated u). Non-tape utility for inference and u refresh.
template <class T>
std::pair<Tensor<T>, Tensor<T>> spectral_norm_apply(const Tensor<T>& w4, Tensor<T> u, int iters) {
    require<ShapeError>(w4.rank() >= 2, "spectral_norm: weight must be at least 2-D");
    const i64 m = w4.dim(0), n = w4.numel() / w4.dim(0);
    require<ShapeError>(u.numel() == m, "spectral_norm: u must have " + std::to_string(m) +
                                            " elements, got " + shape_str(u.shape));
    require<Error>(iters >= 1, "spectral_norm: iters must be >= 1");
    std::vector<T> v(static_cast<size_t>(n));
    for (int it = 0; it < iters; ++it) {
        // v = normalize(W^T u)
        std::fill(v.begin(), v.end(), T(0));
        for (i64 i = 0; i < m; ++i)
            for (i64 j = 0; j < n; ++j) v[static_cast<size_t>(j)] += w4.data[i * n + j] * u.data[i];
        T vs = 0;
        for (T x : v) vs += x * x;
        const T vinv = T(1) / std::max(std::sqrt(vs), T(1e-24));
        for (T& x : v) x *= vinv;
        // u = normalize(W v)
        for (i64 i = 0; i < m; ++i) {
            T acc = 0;
            for (i64 j = 0; j < n; ++j) acc += w4.data[i * n + j] * v[static_cast<size_t>(j)];
            u.data[i] = acc;
        }
        T us = 0;
        for (i64 i = 0; i < m; ++i) us += u.data[i] * u.data[i];
        const T uinv = T(1) / std::max(std::sqrt(us), T(1e-24));
        for (i64 i = 0; i < m; ++i) u.data[i] *= uinv;
    }
    // sigma estimate u^T W v with the refreshed vectors
    T sigma = 0;
    for (i64 i = 0; i < m; ++i) {
        T acc = 0;
        for (i64 j = 0; j < n; ++j) acc += w4.data[i * n + j] * v[static_cast<size_t>(j)];
        sigma += u.data[i] * acc;
    }
    Tensor<T> out = w4;
    const T inv = T(1) / sigma;
    for (auto& x : out.data) x *= inv;
    return {std::move(out), std::move(u)};
}

/// Differentiable W/sigma_hat for a FIXED u vector (u enters as a constant).
/// Records: v = normalize(W^T u); sigma = u . (W v); returns W * (1/sigma).
template <class T>
int snconv_weight(ad::Tape<T>& t, int w4, const Tensor<T>& u) {
    // copy the shape: pushing nodes below may reallocate tape storage
    const Shape wshape = t.value(w4).shape;
    const i64 m = wshape[0];
    const i64 n = shape_numel(wshape) / m;
    const int wm = ad::reshape(t, w4, {m, n});
    const int un = t.leaf(u, /*needs_grad=*/false);
    const int vraw = ad::matvec_t(t, wm, un);
    const int vnorm = ad::sqrt_op(t, ad::dot(t, vraw, vraw));
    const int v = ad::scale_by_scalar(t, vraw, ad::reciprocal(t, vnorm));
    const int wv = ad::matvec(t, wm, v);
    const int sigma = ad::dot(t, un, wv);
    const int wsn = ad::scale_by_scalar(t, wm, ad::reciprocal(t, sigma));
    return ad::reshape(t, wsn, wshape);
}

template <class T>
int snconv_fwd(ad::Tape<T>& t, const BoundParams<T>& b, const std::string& name, const Tensor<T>& u,
               int x, i64 stride, i64 pad) {
    const int w = snconv_weight(t, b.at(name + ".w"), u);
    return ad::conv2d(t, x, w, b.at(name + ".b"), stride, pad);
}

// ---------------------------------------------------------------------------
// EdgeNet
// ---------------------------------------------------------------------------

enum class EdgeVariant { full, reduced1, reduced3, reduced5 };

inline int variant_stages(EdgeVariant v) {
    switch (v) {
        case EdgeVariant::reduced1: return 1;
        case EdgeVariant::reduced3: return 3;
        case EdgeVariant::reduced5: return 5;
        default: return 5;
    }
}

/// Spatial divisibility demanded by the pooling stack in front of the
/// deepest used side tap: 2^(stages-1), except full which also pools.
inline i64 variant_divisor(EdgeVariant v) {
    return i64(1) << (variant_stages(v) - 1);
}

inline std::string variant_tag(EdgeVariant v) {
    switch (v) {
        case EdgeVariant::reduced1: return "edgenet-reduced1";
        case EdgeVariant::reduced3: return "edgenet-reduced3";
        case EdgeVariant::reduced5: return "edgenet-reduced5";
        default: return "edgenet-full";
    }
}

inline EdgeVariant variant_from_side_layer(const std::string& s) {
    if (s == "1") return EdgeVariant::reduced1;
    if (s == "3") return EdgeVariant::reduced3;
    if (s == "5") return EdgeVariant::reduced5;
    if (s == "full") return EdgeVariant::full;
    throw Error("unknown side layer '" + s + "' (want 1, 3, 5, or full)");
}

inline const std::vector<std::vector<i64>>& edgenet_default_widths() {
    static const std::vector<std::vector<i64>> w = {
        {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
    return w;
}

template <class T>
struct EdgeNet {
    EdgeVariant variant = EdgeVariant::full;
    std::vector<std::vector<i64>> widths;  // per used stage
    ParamStore<T> params;
};

/// widths may be overridden for small-scale gradient tests; production
/// builds use the VGG-16 stage plan (64,64 / 128,128 / 256x3 / 512x3 / 512x3).
template <class T>
EdgeNet<T> build_edgenet(EdgeVariant variant, std::uint64_t seed,
                         std::vector<std::vector<i64>> widths = {}) {
    EdgeNet<T> net;
    net.variant = variant;
    const int stages = variant_stages(variant);
    if (widths.empty())
        widths.assign(edgenet_default_widths().begin(), edgenet_default_widths().begin() + stages);
    require<Error>(static_cast<int>(widths.size()) == stages, "edgenet widths/stage mismatch");
    net.widths = widths;

    Rng rng(seed);
    i64 cin = 3;
    for (int s = 0; s < stages; ++s) {
        for (size_t c = 0; c < widths[static_cast<size_t>(s)].size(); ++c) {
            const i64 cout = widths[static_cast<size_t>(s)][c];
            add_conv(net.params, "s" + std::to_string(s + 1) + "c" + std::to_string(c + 1), cout,
                     cin, 3, rng);
            cin = cout;
        }
    }
    const bool full = variant == EdgeVariant::full;
    const int first_side = full ? 1 : stages;
    for (int s = first_side; s <= stages; ++s)
        add_conv(net.params, "side" + std::to_string(s), 1,
                 widths[static_cast<size_t>(s - 1)].back(), 1, rng);
    if (full) {
        Tensor<T> fw({1, 5, 1, 1});
        std::fill(fw.data.begin(), fw.data.end(), T(0.2));
        net.params.add("fuse.w", std::move(fw));
        net.params.add("fuse.b", Tensor<T>({1}));
    }
    return net;
}

template <class T>
struct EdgeOut {
    std::vector<int> sides;  // node ids, each [N,1,H,W] in (0,1)
    int fuse = -1;           // -1 when the variant has no fusion layer
    std::vector<int> side_logits;
};

/// img: [N,3,H,W] in [0,1]. Side taps sit after the last conv+ReLU of each
/// stage (before that stage's pool); side path is 1x1 conv -> upsample to
/// input size -> sigmoid; the fusion layer mixes the 5 upsampled logits.
template <class T>
EdgeOut<T> edgenet_forward(ad::Tape<T>& t, const BoundParams<T>& b, const EdgeNet<T>& net, int img) {
    const auto& shp = t.value(img).shape;
    require<ShapeError>(shp.size() == 4 && shp[1] == 3,
                        "edgenet: input must be [N,3,H,W], got " + shape_str(t.value(img).shape));
    const i64 h = shp[2], w = shp[3];
    const i64 div = variant_divisor(net.variant);
    require<ShapeError>(h % div == 0 && w % div == 0,
                        "edgenet(" + variant_tag(net.variant) + "): spatial size " +
                            std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
                            std::to_string(div) + "; pad the input first");

    const int stages = variant_stages(net.variant);
    const bool full = net.variant == EdgeVariant::full;
    EdgeOut<T> out;
    int x = img;
    for (int s = 0; s < stages; ++s) {
        if (s > 0) x = ad::maxpool2(t, x);
        for (size_t c = 0; c < net.widths[static_cast<size_t>(s)].size(); ++c) {
            x = conv_fwd(t, b, "s" + std::to_string(s + 1) + "c" + std::to_string(c + 1), x, 1, 1);
            x = ad::relu(t, x);
        }
        if (full || s == stages - 1) {
            int logit = conv_fwd(t, b, "side" + std::to_string(s + 1), x, 1, 0);
            logit = ad::upsample_bilinear(t, logit, h, w);
            out.side_logits.push_back(logit);
            out.sides.push_back(ad::sigmoid(t, logit));
        }
    }
    if (full) {
        const int cat = ad::concat_channels(t, out.side_logits);
        const int fused = conv_fwd(t, b, "fuse", cat, 1, 0);
        out.fuse = ad::sigmoid(t, fused);
    }
    return out;
}

// ---------------------------------------------------------------------------
// DeblurNet
// ---------------------------------------------------------------------------

struct DeblurConfig {
    i64 in_channels = 4;      // RGB in [-1,1] + edge map in [0,1]
    i64 base_channels = 64;   // head width, also both 9x9 output taps
    i64 down1_channels = 128;
    i64 down2_channels = 256;  // residual trunk width
    i64 n_res_blocks = 9;
    i64 expand_channels = 1024;  // wide 1x1 inside each residual block
    i64 lowrank_channels = 128;  // narrow 1x1 before the 3x3
    i64 head_kernel = 9;
    i64 head_stride = 1;  // the paper's stride-4 head contradicts its own
                          // same-size claim; stride kept configurable
};

template <class T>
struct DeblurNet {
    DeblurConfig cfg;
    ParamStore<T> params;
};

template <class T>
DeblurNet<T> build_deblurnet(const DeblurConfig& cfg, std::uint64_t seed) {
    DeblurNet<T> net;
    net.cfg = cfg;
    Rng rng(seed);
    auto& ps = net.params;
    add_wnconv(ps, "head", cfg.base_channels, cfg.in_channels, cfg.head_kernel, rng);
    add_wnconv(ps, "down1", cfg.down1_channels, cfg.base_channels, 3, rng);
    add_wnconv(ps, "down2", cfg.down2_channels, cfg.down1_channels, 3, rng);
    for (i64 r = 1; r <= cfg.n_res_blocks; ++r) {
        const std::string p = "res" + std::to_string(r);
        add_wnconv(ps, p + ".c1", cfg.expand_channels, cfg.down2_channels, 1, rng);
        add_wnconv(ps, p + ".c2", cfg.lowrank_channels, cfg.expand_channels, 1, rng);
        add_wnconv(ps, p + ".c3", cfg.down2_channels, cfg.lowrank_channels, 3, rng);
    }
    add_wnconv(ps, "up1", cfg.down2_channels * 2, cfg.down2_channels, 3, rng);
    add_wnconv(ps, "up2", cfg.down2_channels, cfg.down2_channels * 2 / 4, 3, rng);
    const i64 up2_out = cfg.down2_channels / 4;
    add_wnconv(ps, "outA", 3, cfg.base_channels, cfg.head_kernel, rng);
    add_wnconv(ps, "outB", 3, up2_out, cfg.head_kernel, rng);
    return net;
}

/// x: [N,4,H,W] with H,W divisible by 4 (two stride-2 stages are undone by
/// two pixel-shuffle x2 stages). Output [N,3,H,W] in [-1,1].
template <class T>
int deblurnet_forward(ad::Tape<T>& t, const BoundParams<T>& b, const DeblurNet<T>& net, int x) {
    const auto& cfg = net.cfg;
    const auto& shp = t.value(x).shape;
    require<ShapeError>(shp.size() == 4 && shp[1] == cfg.in_channels,
                        "deblurnet: input must be [N," + std::to_string(cfg.in_channels) +
                            ",H,W], got " + shape_str(t.value(x).shape));
    require<ShapeError>(shp[2] % 4 == 0 && shp[3] % 4 == 0,
                        "deblurnet: H and W must be divisible by 4, got " + shape_str(shp) +
                            "; pad the input first");

    const i64 hk = cfg.head_kernel / 2;
    int low = ad::relu(t, wnconv_fwd(t, b, "head", x, cfg.head_stride, hk));
    int f = ad::relu(t, wnconv_fwd(t, b, "down1", low, 2, 1));
    f = ad::relu(t, wnconv_fwd(t, b, "down2", f, 2, 1));
    for (i64 r = 1; r <= cfg.n_res_blocks; ++r) {
        const std::string p = "res" + std::to_string(r);
        int y = ad::relu(t, wnconv_fwd(t, b, p + ".c1", f, 1, 0));
        y = wnconv_fwd(t, b, p + ".c2", y, 1, 0);
        y = wnconv_fwd(t, b, p + ".c3", y, 1, 1);
        f = ad::add(t, f, y);
    }
    f = ad::relu(t, ad::pixel_shuffle(t, wnconv_fwd(t, b, "up1", f, 1, 1), 2));
    f = ad::relu(t, ad::pixel_shuffle(t, wnconv_fwd(t, b, "up2", f, 1, 1), 2));
    const int ya = wnconv_fwd(t, b, "outA", low, 1, hk);
    const int yb = wnconv_fwd(t, b, "outB", f, 1, hk);
    return ad::tanh_op(t, ad::add(t, ya, yb));
}

// ---------------------------------------------------------------------------
// PatchGAN-style discriminator
// ---------------------------------------------------------------------------

template <class T>
struct Discriminator {
    ParamStore<T> params;
    static constexpr int n_sn_blocks = 4;
};

template <class T>
Discriminator<T> build_discriminator(std::uint64_t seed) {
    Discriminator<T> net;
    Rng rng(seed);
    const i64 widths[4] = {64, 128, 256, 512};
    i64 cin = 1;
    for (int i = 0; i < 4; ++i) {
        add_snconv(net.params, "d" + std::to_string(i + 1), widths[i], cin, 4, rng);
        cin = widths[i];
    }
    add_conv(net.params, "d5", 1, cin, 4, rng);
    return net;
}

/// Refreshes every spectral-norm u buffer in place via power iteration.
/// Call once per optimization step, before binding params onto a tape.
template <class T>
void discriminator_power_iterate(Discriminator<T>& net, int iters = 1) {
    for (int i = 0; i < Discriminator<T>::n_sn_blocks; ++i) {
        const std::string p = "d" + std::to_string(i + 1);
        auto& w = net.params.tensor(p + ".w");
        auto& u = net.params.tensor(p + ".sn_u");
        u = spectral_norm_apply(w, u, iters).second;
    }
}

/// edge: [N,1,H,W] with H,W >= 64. Output: patch probabilities in (0,1).
template <class T>
int discriminator_forward(ad::Tape<T>& t, const BoundParams<T>& b, const Discriminator<T>& net,
                          int edge) {
    const auto& shp = t.value(edge).shape;
    require<ShapeError>(shp.size() == 4 && shp[1] == 1,
                        "discriminator: input must be [N,1,H,W], got " + shape_str(shp));
    require<ShapeError>(shp[2] >= 64 && shp[3] >= 64,
                        "discriminator: spatial size must be >= 64, got " + shape_str(shp));
    const i64 strides[4] = {2, 2, 2, 1};
    int x = edge;
    for (int i = 0; i < 4; ++i) {
        const std::string p = "d" + std::to_string(i + 1);
        x = snconv_fwd(t, b, p, net.params.find(p + ".sn_u")->t, x, strides[i], 1);
        x = ad::leaky_relu(t, x, T(0.2));
    }
    x = conv_fwd(t, b, "d5", x, 1, 1);
    return ad::sigmoid(t, x);
}

}  // namespace eadnet::models
