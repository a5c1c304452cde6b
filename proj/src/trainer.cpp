#include "eadnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "eadnet/checkpoint.hpp"
#include "eadnet/image_io.hpp"

namespace eadnet::train {

std::vector<LoadedSample> load_dataset(const data::Manifest& m) {
    require<DataError>(!m.empty(), "dataset manifest is empty");
    std::vector<LoadedSample> out;
    out.reserve(m.size());
    for (const auto& rec : m) {
        LoadedSample s;
        s.clear = img::read_image(rec.clear_path);
        s.blurry = img::read_image(rec.blurry_path);
        Tensor<float> e = img::read_image(rec.edge_path);
        require<DataError>(s.clear.rank() == 3 && s.clear.dim(0) == 3,
                           rec.clear_path + ": clear image must be RGB, got " +
                               shape_str(s.clear.shape));
        require<DataError>(s.blurry.same_shape(s.clear),
                           rec.blurry_path + ": blurry image shape " + shape_str(s.blurry.shape) +
                               " does not match clear image " + shape_str(s.clear.shape));
        require<DataError>(e.rank() == 3 && e.dim(0) == 1 && e.dim(1) == s.clear.dim(1) &&
                               e.dim(2) == s.clear.dim(2),
                           rec.edge_path + ": edge map shape " + shape_str(e.shape) +
                               " does not match image " + shape_str(s.clear.shape));
        for (float v : e.data)
            require<DataError>(v == 0.0f || v == 1.0f,
                               rec.edge_path + ": edge map must be binary (pixel bytes 0 or 255)");
        s.edge = Tensor<float>({e.dim(1), e.dim(2)}, std::move(e.data));
        out.push_back(std::move(s));
    }
    return out;
}

Batch random_crop_batch(const std::vector<LoadedSample>& data, i64 crop, i64 batch, Rng& rng) {
    require<Error>(crop > 0 && batch > 0, "crop and batch must be positive");
    require<DataError>(!data.empty(), "cannot sample from an empty dataset");
    bool any_fit = false;
    for (const auto& s : data)
        if (s.clear.dim(1) >= crop && s.clear.dim(2) >= crop) {
            any_fit = true;
            break;
        }
    require<DataError>(any_fit, "no training image is at least " + std::to_string(crop) + "x" +
                                    std::to_string(crop) + "; shrink the crop size");

    Batch out;
    out.clear = Tensor<float>({batch, 3, crop, crop});
    out.blurry = Tensor<float>({batch, 3, crop, crop});
    out.edge = Tensor<float>({batch, 1, crop, crop});
    for (i64 b = 0; b < batch; ++b) {
        for (;;) {
            const i64 idx = rng.uniform_int(static_cast<i64>(data.size()));
            const auto& s = data[static_cast<size_t>(idx)];
            const i64 h = s.clear.dim(1), w = s.clear.dim(2);
            if (h < crop || w < crop) {
                std::fprintf(stderr,
                             "# warning: sample %lld is %lldx%lld, smaller than the %lld crop; "
                             "skipped\n",
                             static_cast<long long>(idx), static_cast<long long>(h),
                             static_cast<long long>(w), static_cast<long long>(crop));
                continue;
            }
            const i64 y0 = h == crop ? 0 : rng.uniform_int(h - crop + 1);
            const i64 x0 = w == crop ? 0 : rng.uniform_int(w - crop + 1);
            for (i64 c = 0; c < 3; ++c)
                for (i64 y = 0; y < crop; ++y)
                    for (i64 x = 0; x < crop; ++x) {
                        out.clear.at4(b, c, y, x) = s.clear.at3(c, y0 + y, x0 + x);
                        out.blurry.at4(b, c, y, x) = s.blurry.at3(c, y0 + y, x0 + x);
                    }
            for (i64 y = 0; y < crop; ++y)
                for (i64 x = 0; x < crop; ++x)
                    out.edge.at4(b, 0, y, x) = s.edge.at2(y0 + y, x0 + x);
            break;
        }
    }
    return out;
}

std::string format_history(const History& h) {
    std::ostringstream os;
    os.precision(8);
    for (const auto& s : h) {
        os << s.step << '\t' << s.total;
        for (const auto& [name, v] : s.parts) os << '\t' << name << '=' << v;
        os << '\n';
    }
    return os.str();
}

namespace {

std::vector<Tensor<float>> collect_grads(const ad::Tape<float>& t, const BoundParams<float>& b) {
    std::vector<Tensor<float>> g(b.node_of.size());
    for (size_t i = 0; i < b.node_of.size(); ++i)
        if (t.has_grad(b.node_of[i])) g[i] = t.grad(b.node_of[i]);
    return g;
}

void abort_non_finite(double v, const char* phase, i64 step, const std::string& snapshot_path,
                      const std::string& variant, const ParamStore<float>& params) {
    if (std::isfinite(v)) return;
    if (!snapshot_path.empty()) {
        ckpt::save_checkpoint(snapshot_path, variant, params);
        std::fprintf(stderr, "# parameter snapshot written to %s\n", snapshot_path.c_str());
    }
    throw NumericError(std::string(phase) + " loss became non-finite at step " +
                       std::to_string(step) + " (value " + std::to_string(v) + ")");
}

Tensor<float> to_signed(const Tensor<float>& t01) {
    Tensor<float> out = t01;
    for (auto& v : out.data) v = v * 2.0f - 1.0f;
    return out;
}

}  // namespace

EdgeTrainResult train_edgenet(const std::vector<LoadedSample>& data, const TrainEdgeConfig& cfg) {
    const i64 div = models::variant_divisor(models::EdgeVariant::full);
    require<Error>(cfg.opt.crop % div == 0, "phase-1 crop must be a multiple of " +
                                                std::to_string(div) + ", got " +
                                                std::to_string(cfg.opt.crop));
    const bool uses_adv = cfg.loss.lambda > 0.0 && cfg.loss.lambda_zero_epoch > 0;
    require<Error>(!uses_adv || cfg.opt.crop >= 64,
                   "adversarial phase-1 training needs crop >= 64 for the discriminator");

    EdgeTrainResult r;
    r.net = models::build_edgenet<float>(models::EdgeVariant::full, Rng::derive(cfg.opt.seed, 0));
    r.disc = models::build_discriminator<float>(Rng::derive(cfg.opt.seed, 1));
    Rng batch_rng(Rng::derive(cfg.opt.seed, 2));
    auto adam_g = optim::make_adam_state(r.net.params);
    auto adam_d = optim::make_adam_state(r.disc.params);

    const i64 spe = std::max<i64>(1, static_cast<i64>(data.size()) / cfg.opt.batch);
    const i64 total_steps = cfg.max_steps >= 0 ? cfg.max_steps : cfg.epochs * spe;
    const float eps = static_cast<float>(cfg.loss.eps);

    for (i64 step = 0; step < total_steps; ++step) {
        const int epoch = static_cast<int>(step / spe);
        const double lr = optim::lr_schedule(epoch, cfg.opt);
        const float lambda =
            epoch < cfg.loss.lambda_zero_epoch ? static_cast<float>(cfg.loss.lambda) : 0.0f;
        Batch b = random_crop_batch(data, cfg.opt.crop, cfg.opt.batch, batch_rng);

        ad::Tape<float> t;
        auto bg = bind_params(t, r.net.params);
        const int img = t.leaf(b.blurry, false);
        auto out = models::edgenet_forward(t, bg, r.net, img);
        const int edge_l = losses::edge_loss_phase1(t, out, b.edge, eps);

        int g_total = edge_l;
        double adv_v = 0.0, d_v = 0.0;
        if (lambda > 0.0f) {
            // Discriminator step first, on its own tape, with the generator
            // output detached. Power-iterate u before binding so the
            // spectral estimate tracks the current weights.
            Tensor<float> fake = t.value(out.fuse);
            models::discriminator_power_iterate(r.disc);
            ad::Tape<float> td;
            auto bd = bind_params(td, r.disc.params);
            const int d_real =
                models::discriminator_forward(td, bd, r.disc, td.leaf(b.edge, false));
            const int d_fake =
                models::discriminator_forward(td, bd, r.disc, td.leaf(fake, false));
            const int dl = losses::adv_d_loss(td, d_real, d_fake, eps);
            d_v = td.value(dl).data[0];
            abort_non_finite(d_v, "discriminator", step, cfg.snapshot_path, "edgenet-full",
                             r.net.params);
            td.backward(dl);
            optim::adam_step(r.disc.params, collect_grads(td, bd), adam_d, lr, cfg.opt);

            // Generator adversarial term through the freshly updated
            // discriminator, frozen on the generator tape.
            auto bdg = bind_params(t, r.disc.params, /*frozen=*/true);
            const int dg = models::discriminator_forward(t, bdg, r.disc, out.fuse);
            const int ga = losses::adv_g_loss(t, dg, eps);
            adv_v = t.value(ga).data[0];
            g_total = losses::total_phase1(t, edge_l, ga, lambda);
        }

        const double total_v = t.value(g_total).data[0];
        abort_non_finite(total_v, "phase-1", step, cfg.snapshot_path, "edgenet-full",
                         r.net.params);
        t.backward(g_total);
        optim::adam_step(r.net.params, collect_grads(t, bg), adam_g, lr, cfg.opt);

        r.history.push_back({step,
                             total_v,
                             {{"edge", t.value(edge_l).data[0]}, {"adv", adv_v}, {"d", d_v}}});
    }
    return r;
}

DeblurTrainResult train_deblurnet(const std::vector<LoadedSample>& data,
                                  const models::EdgeNet<float>& edgenet,
                                  const TrainDeblurConfig& cfg) {
    const i64 div = std::lcm<i64>(4, models::variant_divisor(edgenet.variant));
    require<Error>(cfg.opt.crop % div == 0, "phase-2 crop must be a multiple of " +
                                                std::to_string(div) + ", got " +
                                                std::to_string(cfg.opt.crop));

    DeblurTrainResult r;
    r.net = models::build_deblurnet<float>(cfg.arch, Rng::derive(cfg.opt.seed, 0));
    auto fx = losses::build_feature_extractor<float>(cfg.feature_kind, cfg.feature_layer);
    Rng batch_rng(Rng::derive(cfg.opt.seed, 2));
    auto adam = optim::make_adam_state(r.net.params);

    const i64 spe = std::max<i64>(1, static_cast<i64>(data.size()) / cfg.opt.batch);
    const i64 total_steps = cfg.max_steps >= 0 ? cfg.max_steps : cfg.epochs * spe;
    const float eps = static_cast<float>(cfg.loss.eps);

    for (i64 step = 0; step < total_steps; ++step) {
        const int epoch = static_cast<int>(step / spe);
        const double lr = optim::lr_schedule(epoch, cfg.opt);
        Batch b = random_crop_batch(data, cfg.opt.crop, cfg.opt.batch, batch_rng);

        ad::Tape<float> t;
        auto be = bind_params(t, edgenet.params, /*frozen=*/true);
        auto bd = bind_params(t, r.net.params);
        auto bf = bind_params(t, fx.params, /*frozen=*/true);

        const int blur01 = t.leaf(b.blurry, false);
        auto eo = models::edgenet_forward(t, be, edgenet, blur01);
        const int edge_chan = eo.fuse >= 0 ? eo.fuse : eo.sides.back();
        const int rgb = t.leaf(to_signed(b.blurry), false);
        const int xin = ad::concat_channels(t, {rgb, edge_chan});
        const int out = models::deblurnet_forward(t, bd, r.net, xin);
        const int tgt = t.leaf(to_signed(b.clear), false);

        const int pix = losses::pixel_loss(t, out, tgt);
        int total = ad::affine(t, pix, static_cast<float>(cfg.loss.lambda1), 0.0f);
        double perc_v = 0.0, el_v = 0.0;
        if (cfg.loss.lambda2 != 0.0) {
            const int perc = losses::perceptual_loss(t, bf, fx, out, tgt);
            perc_v = t.value(perc).data[0];
            total = ad::add(t, total, ad::affine(t, perc, static_cast<float>(cfg.loss.lambda2), 0.0f));
        }
        if (cfg.loss.lambda3 != 0.0) {
            const int pred01 = ad::affine(t, out, 0.5f, 0.5f);
            const int tgt01 = cfg.loss.edge_target_sharp ? t.leaf(b.clear, false) : blur01;
            const int el = losses::edge_loss_phase2(
                t, be, edgenet, pred01, tgt01, cfg.loss.alpha,
                static_cast<float>(cfg.loss.binarize_threshold), eps);
            el_v = t.value(el).data[0];
            total = ad::add(t, total, ad::affine(t, el, static_cast<float>(cfg.loss.lambda3), 0.0f));
        }

        const double total_v = t.value(total).data[0];
        abort_non_finite(total_v, "phase-2", step, cfg.snapshot_path, "deblurnet", r.net.params);
        t.backward(total);
        optim::adam_step(r.net.params, collect_grads(t, bd), adam, lr, cfg.opt);

        r.history.push_back({step,
                             total_v,
                             {{"pixel", t.value(pix).data[0]}, {"feat", perc_v}, {"edge", el_v}}});
    }
    return r;
}

Tensor<float> reflect_pad_to(const Tensor<float>& t, i64 mult) {
    require<ShapeError>(t.rank() == 3, "reflect_pad_to: want [C,H,W], got " + shape_str(t.shape));
    require<Error>(mult >= 1, "reflect_pad_to: multiple must be >= 1");
    const i64 c = t.dim(0), h = t.dim(1), w = t.dim(2);
    const i64 ph = (h + mult - 1) / mult * mult;
    const i64 pw = (w + mult - 1) / mult * mult;
    if (ph == h && pw == w) return t;
    require<DataError>(ph - h < h && pw - w < w,
                       "image " + std::to_string(h) + "x" + std::to_string(w) +
                           " is too small to reflect-pad to a multiple of " +
                           std::to_string(mult));
    Tensor<float> out({c, ph, pw});
    for (i64 ch = 0; ch < c; ++ch)
        for (i64 y = 0; y < ph; ++y) {
            const i64 sy = y < h ? y : 2 * h - 2 - y;
            for (i64 x = 0; x < pw; ++x) {
                const i64 sx = x < w ? x : 2 * w - 2 - x;
                out.at3(ch, y, x) = t.at3(ch, sy, sx);
            }
        }
    return out;
}

Tensor<float> deblur_image(const models::EdgeNet<float>& edgenet,
                           const models::DeblurNet<float>& deblur,
                           const Tensor<float>& blurry01) {
    require<ShapeError>(blurry01.rank() == 3 && blurry01.dim(0) == 3,
                        "deblur_image: want [3,H,W], got " + shape_str(blurry01.shape));
    const i64 h = blurry01.dim(1), w = blurry01.dim(2);
    const i64 div = std::lcm<i64>(4, models::variant_divisor(edgenet.variant));
    Tensor<float> padded = reflect_pad_to(blurry01, div);
    const i64 ph = padded.dim(1), pw = padded.dim(2);
    Tensor<float> b4({1, 3, ph, pw}, padded.data);

    ad::Tape<float> t;
    auto be = bind_params(t, edgenet.params, /*frozen=*/true);
    auto bd = bind_params(t, deblur.params, /*frozen=*/true);
    const int img = t.leaf(b4, false);
    auto eo = models::edgenet_forward(t, be, edgenet, img);
    const int edge_chan = eo.fuse >= 0 ? eo.fuse : eo.sides.back();
    const int rgb = t.leaf(to_signed(b4), false);
    const int out = models::deblurnet_forward(t, bd, deblur,
                                              ad::concat_channels(t, {rgb, edge_chan}));
    const auto& o = t.value(out);

    Tensor<float> result({3, h, w});
    for (i64 c = 0; c < 3; ++c)
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x) {
                const float v = (o.at4(0, c, y, x) + 1.0f) * 0.5f;
                result.at3(c, y, x) = std::min(1.0f, std::max(0.0f, v));
            }
    return result;
}

metrics::MetricReport evaluate(const models::EdgeNet<float>& edgenet,
                               const models::DeblurNet<float>& deblur, const data::Manifest& m,
                               const std::vector<std::string>& metric_names) {
    require<DataError>(!m.empty(), "evaluation manifest is empty");
    metrics::MetricReport rep;
    rep.metric_names = metric_names;
    for (const auto& rec : m) {
        const Tensor<float> clear = img::read_image(rec.clear_path);
        const Tensor<float> blurry = img::read_image(rec.blurry_path);
        const Tensor<float> restored = deblur_image(edgenet, deblur, blurry);
        rep.ids.push_back(std::filesystem::path(rec.clear_path).stem().string());
        std::vector<double> row;
        for (const auto& name : metric_names) {
            if (name == "psnr")
                row.push_back(metrics::psnr(restored, clear, 1.0));
            else if (name == "ssim")
                row.push_back(metrics::ssim(restored, clear));
            else if (name == "ms-ssim" || name == "mean-ssim")
                row.push_back(metrics::ms_ssim(restored, clear));
            else
                throw Error("unknown metric '" + name + "' (want psnr, ssim, ms-ssim)");
        }
        rep.values.push_back(std::move(row));
    }
    return rep;
}

}  // namespace eadnet::train
