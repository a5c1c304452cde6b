#pragma once

#include <vector>

#include "eadnet/models.hpp"

// Training objectives. Phase I: class-balanced cross-entropy over every side
// output plus the fusion output, with an optional adversarial term. Phase II:
// weighted sum of pixel MSE, feature-space MSE, and an edge-consistency term
// computed through the frozen edge network.

namespace eadnet::losses {

struct LossConfig {
    double lambda = 0.05;     // phase-1 adversarial weight before the cutoff
    int lambda_zero_epoch = 50;
    double lambda1 = 1.0;     // phase-2 pixel weight
    double lambda2 = 0.05;    // phase-2 feature weight
    double lambda3 = 0.1;     // phase-2 edge weight
    std::array<double, 5> alpha = {0.7, 0.1, 0.1, 0.1, 0.1};  // per-side weights
    double eps = 1e-8;        // log clamp
    double binarize_threshold = 0.5;
    bool edge_target_sharp = false;  // phase-2 edge branch target: blurry input
                                     // (formula as published) or sharp ground truth
};

/// Class-balanced BCE. beta = |negatives|/|all|, computed globally over the
/// target; positive terms weigh beta, negative terms (1-beta), and the total
/// is divided by the pixel count. An all-positive or all-negative target
/// falls back to plain unweighted BCE.
template <class T>
int cbce(ad::Tape<T>& t, int pred, const Tensor<T>& target, T eps = T(1e-8)) {
    const auto& p = t.value(pred);
    require<ShapeError>(p.same_shape(target), "cbce: shape mismatch " + shape_str(p.shape) +
                                                  " vs " + shape_str(target.shape));
    const i64 n = target.numel();
    require<ShapeError>(n > 0, "cbce: empty tensors");
    i64 pos = 0;
    for (T v : target.data) {
        require<Error>(v == T(0) || v == T(1), "cbce: target must be binary");
        if (v == T(1)) ++pos;
    }
    T wpos, wneg;
    if (pos == 0 || pos == n) {
        wpos = wneg = T(1);
    } else {
        const T beta = static_cast<T>(n - pos) / static_cast<T>(n);
        wpos = beta;
        wneg = T(1) - beta;
    }
    Tensor<T> wp(target.shape), wm(target.shape);
    for (i64 i = 0; i < n; ++i) {
        wp.data[i] = target.data[i] == T(1) ? -wpos : T(0);
        wm.data[i] = target.data[i] == T(0) ? -wneg : T(0);
    }
    const int pc = ad::clamp(t, pred, eps, T(1) - eps);
    const int lp = ad::log_op(t, pc);
    const int lm = ad::log_op(t, ad::affine(t, pc, T(-1), T(1)));
    const int total = ad::add(t, ad::sum(t, ad::xc_mul(t, lp, std::move(wp))),
                              ad::sum(t, ad::xc_mul(t, lm, std::move(wm))));
    return ad::affine(t, total, T(1) / static_cast<T>(n), T(0));
}

/// Unweighted sum of cbce over all side outputs plus the fusion output.
template <class T>
int edge_loss_phase1(ad::Tape<T>& t, const models::EdgeOut<T>& out, const Tensor<T>& edge_gt,
                     T eps = T(1e-8)) {
    require<Error>(!out.sides.empty(), "edge loss: no side outputs");
    int total = cbce(t, out.sides[0], edge_gt, eps);
    for (size_t i = 1; i < out.sides.size(); ++i)
        total = ad::add(t, total, cbce(t, out.sides[i], edge_gt, eps));
    if (out.fuse >= 0) total = ad::add(t, total, cbce(t, out.fuse, edge_gt, eps));
    return total;
}

/// Generator objective: mean(-log D(fake)).
template <class T>
int adv_g_loss(ad::Tape<T>& t, int d_fake, T eps = T(1e-8)) {
    const int lg = ad::log_op(t, ad::clamp(t, d_fake, eps, T(1) - eps));
    return ad::affine(t, ad::mean(t, lg), T(-1), T(0));
}

/// Discriminator objective: mean(-log D(real)) + mean(-log(1 - D(fake))).
template <class T>
int adv_d_loss(ad::Tape<T>& t, int d_real, int d_fake, T eps = T(1e-8)) {
    const int lr = ad::log_op(t, ad::clamp(t, d_real, eps, T(1) - eps));
    const int lf = ad::log_op(t, ad::affine(t, ad::clamp(t, d_fake, eps, T(1) - eps), T(-1), T(1)));
    const int a = ad::affine(t, ad::mean(t, lr), T(-1), T(0));
    const int b = ad::affine(t, ad::mean(t, lf), T(-1), T(0));
    return ad::add(t, a, b);
}

/// Mean squared difference over all elements.
template <class T>
int pixel_loss(ad::Tape<T>& t, int pred, int target) {
    const int d = ad::sub(t, pred, target);
    return ad::mean(t, ad::mul(t, d, d));
}

// ---------------------------------------------------------------------------
// perceptual feature extractor
// ---------------------------------------------------------------------------

/// Frozen convolutional feature stack. kind "identity" passes input through
/// (making the feature loss collapse to the pixel loss); kind "conv3" is a
/// fixed-seed 3-layer stack (16/32/64 channels, stride 2, ReLU). External
/// feature weights can be loaded into the store through the checkpoint
/// format.
template <class T>
struct FeatureExtractor {
    std::string kind = "conv3";
    int layer = 1;  // 1-based tap; the earliest layer is the default
    ParamStore<T> params;
};

template <class T>
FeatureExtractor<T> build_feature_extractor(const std::string& kind, int layer,
                                            std::uint64_t seed = 0x9edf00d) {
    require<Error>(kind == "identity" || kind == "conv3",
                   "feature extractor kind must be identity or conv3, got " + kind);
    FeatureExtractor<T> fx;
    fx.kind = kind;
    fx.layer = layer;
    if (kind == "conv3") {
        require<Error>(layer >= 1 && layer <= 3, "conv3 extractor layer must be in 1..3");
        Rng rng(seed);
        models::add_conv(fx.params, "f1", 16, 3, 3, rng);
        models::add_conv(fx.params, "f2", 32, 16, 3, rng);
        models::add_conv(fx.params, "f3", 64, 32, 3, rng);
    } else {
        require<Error>(layer == 1, "identity extractor has a single layer");
    }
    return fx;
}

template <class T>
int feature_forward(ad::Tape<T>& t, const BoundParams<T>& b, const FeatureExtractor<T>& fx, int x) {
    if (fx.kind == "identity") return x;
    for (int l = 1; l <= fx.layer; ++l) {
        x = models::conv_fwd(t, b, "f" + std::to_string(l), x, 2, 1);
        x = ad::relu(t, x);
    }
    return x;
}

/// Squared feature differences summed over space, divided by W_j*H_j, then
/// averaged over channels (and batch) — algebraically the plain mean over
/// all feature elements.
template <class T>
int perceptual_loss(ad::Tape<T>& t, const BoundParams<T>& b, const FeatureExtractor<T>& fx,
                    int pred, int target) {
    const int fa = feature_forward(t, b, fx, pred);
    const int fb = feature_forward(t, b, fx, target);
    return pixel_loss(t, fa, fb);
}

/// Edge-consistency loss for phase 2. Runs the frozen edge network on both
/// images; the target branch is binarized and detached, the prediction
/// branch keeps its gradient path into the deblur network. Side i carries
/// weight alpha[i] (zipped up to the variant's side count).
template <class T>
int edge_loss_phase2(ad::Tape<T>& t, const BoundParams<T>& edge_bound,
                     const models::EdgeNet<T>& edgenet, int pred_img01, int target_img01,
                     const std::array<double, 5>& alpha, T binarize_threshold = T(0.5),
                     T eps = T(1e-8)) {
    const auto pred_out = models::edgenet_forward(t, edge_bound, edgenet, pred_img01);
    const auto tgt_out = models::edgenet_forward(t, edge_bound, edgenet, target_img01);
    int total = -1;
    for (size_t i = 0; i < pred_out.sides.size() && i < alpha.size(); ++i) {
        if (alpha[i] == 0.0) continue;
        Tensor<T> bin = t.value(tgt_out.sides[i]);  // detached copy
        for (auto& v : bin.data) v = v >= binarize_threshold ? T(1) : T(0);
        const int term =
            ad::affine(t, cbce(t, pred_out.sides[i], std::move(bin), eps), static_cast<T>(alpha[i]), T(0));
        total = total < 0 ? term : ad::add(t, total, term);
    }
    require<Error>(total >= 0, "edge loss: every side weight is zero");
    return total;
}

template <class T>
int total_phase1(ad::Tape<T>& t, int edge_l, int disc_l, T lambda) {
    if (lambda == T(0) || disc_l < 0) return edge_l;
    return ad::add(t, edge_l, ad::affine(t, disc_l, lambda, T(0)));
}

template <class T>
int total_phase2(ad::Tape<T>& t, int pix, int perc, int edge, T l1, T l2, T l3) {
    int total = ad::affine(t, pix, l1, T(0));
    total = ad::add(t, total, ad::affine(t, perc, l2, T(0)));
    total = ad::add(t, total, ad::affine(t, edge, l3, T(0)));
    return total;
}

}  // namespace eadnet::losses
