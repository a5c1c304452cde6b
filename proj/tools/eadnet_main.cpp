// Command-line surface for the whole pipeline: synthesize training data,
// train both phases, run inference, and score results.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "eadnet/checkpoint.hpp"
#include "eadnet/image_io.hpp"
#include "eadnet/synth.hpp"
#include "eadnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace eadnet;

namespace {

// Every command echoes its full resolved configuration (defaults included)
// so any run can be reproduced from captured stderr.
struct ConfigEcho {
    std::vector<std::pair<std::string, std::string>> kv;
    void add(const std::string& k, const std::string& v) { kv.emplace_back(k, v); }
    void add(const std::string& k, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        kv.emplace_back(k, buf);
    }
    void add(const std::string& k, i64 v) { kv.emplace_back(k, std::to_string(v)); }
    void add(const std::string& k, std::uint64_t v) { kv.emplace_back(k, std::to_string(v)); }
    void print(const std::string& cmd) const {
        std::fprintf(stderr, "# command=%s\n", cmd.c_str());
        for (const auto& [k, v] : kv) std::fprintf(stderr, "# %s=%s\n", k.c_str(), v.c_str());
    }
};

bool is_image_file(const fs::path& p) {
    const auto e = p.extension().string();
    return e == ".ppm" || e == ".pgm";
}

std::vector<fs::path> list_images(const std::string& dir) {
    require<DataError>(fs::is_directory(dir), dir + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require<DataError>(f.good(), "cannot open " + path + " for writing");
    f << text;
    require<DataError>(f.good(), "failed writing " + path);
}

std::string zero_padded(i64 v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*lld", width, static_cast<long long>(v));
    return buf;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

models::EdgeNet<float> load_edgenet(const std::string& ckpt_path, const std::string& side_layer) {
    auto net = models::build_edgenet<float>(models::variant_from_side_layer(side_layer), 0);
    const auto ck = ckpt::read_checkpoint(ckpt_path);
    ckpt::load_into(ck, net.params);
    return net;
}

models::DeblurNet<float> load_deblurnet(const std::string& ckpt_path) {
    auto net = models::build_deblurnet<float>(models::DeblurConfig{}, 0);
    const auto ck = ckpt::read_checkpoint(ckpt_path);
    ckpt::load_into(ck, net.params);
    return net;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string input, output;
    i64 count = 20;
    std::uint64_t seed = 0;
    std::string blur = "mixed";
    blur::SynthConfig cfg;
    edge::CannyConfig canny;
};

int run_synth(const SynthArgs& a) {
    ConfigEcho echo;
    echo.add("input", a.input);
    echo.add("output", a.output);
    echo.add("count", a.count);
    echo.add("seed", a.seed);
    echo.add("blur", a.blur);
    echo.add("kernel_size", a.cfg.kernel_size);
    echo.add("sigma_lo", a.cfg.sigma_lo);
    echo.add("sigma_hi", a.cfg.sigma_hi);
    echo.add("p_motion", a.cfg.p_motion);
    echo.add("canny_low", a.canny.low);
    echo.add("canny_high", a.canny.high);
    echo.add("canny_sigma", a.canny.smooth_sigma);
    echo.print("synth");

    fs::create_directories(a.output);
    if (a.count == 0) {
        data::write_manifest((fs::path(a.output) / "manifest.tsv").string(), {});
        return 0;
    }

    const auto files = list_images(a.input);
    require<DataError>(!files.empty(), "no .ppm/.pgm images in " + a.input);
    std::vector<Tensor<float>> clears;
    std::vector<std::string> bad;
    for (const auto& f : files) {
        try {
            clears.push_back(img::read_image(f.string()));
        } catch (const Error& e) {
            bad.push_back(std::string(e.what()));
        }
    }
    if (!bad.empty()) {
        for (const auto& b : bad) std::fprintf(stderr, "unreadable input: %s\n", b.c_str());
        throw DataError(std::to_string(bad.size()) + " unreadable input image(s)");
    }

    blur::SynthConfig cfg = a.cfg;
    if (a.blur == "gaussian")
        cfg.p_motion = 0.0;
    else if (a.blur == "motion")
        cfg.p_motion = 1.0;

    data::Manifest manifest;
    std::string sidecar = "index\tkind\tsize\tsigma\tsum\n";
    for (i64 i = 0; i < a.count; ++i) {
        const auto& clear = clears[static_cast<size_t>(i % static_cast<i64>(clears.size()))];
        const auto pair = blur::synth_pair(clear, cfg, a.canny, Rng::derive(a.seed, static_cast<std::uint64_t>(i)));
        const std::string stem = zero_padded(i, 4);
        const std::string cpath = (fs::path(a.output) / (stem + "_clear.ppm")).string();
        const std::string bpath = (fs::path(a.output) / (stem + "_blurry.ppm")).string();
        const std::string epath = (fs::path(a.output) / (stem + "_edge.pgm")).string();
        img::write_image(cpath, pair.clear);
        img::write_image(bpath, pair.blurry);
        img::write_image(epath, Tensor<float>({1, pair.edge.dim(0), pair.edge.dim(1)}, pair.edge.data));
        manifest.push_back({stem + "_clear.ppm", stem + "_blurry.ppm", stem + "_edge.pgm"});
        char line[160];
        std::snprintf(line, sizeof line, "%lld\t%s\t%lld\t%.6g\t%.12g\n", static_cast<long long>(i),
                      pair.kernel.kind.c_str(), static_cast<long long>(pair.kernel.size),
                      pair.kernel.sigma, pair.kernel.sum);
        sidecar += line;
    }
    data::write_manifest((fs::path(a.output) / "manifest.tsv").string(), manifest);
    write_text((fs::path(a.output) / "kernels.tsv").string(), sidecar);
    std::printf("wrote %lld pairs to %s\n", static_cast<long long>(a.count), a.output.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// edges
// ---------------------------------------------------------------------------

struct EdgesArgs {
    std::string input, output;
    edge::CannyConfig canny;
};

int run_edges(const EdgesArgs& a) {
    ConfigEcho echo;
    echo.add("input", a.input);
    echo.add("output", a.output);
    echo.add("low", a.canny.low);
    echo.add("high", a.canny.high);
    echo.add("sigma", a.canny.smooth_sigma);
    echo.print("edges");

    auto detect = [&](const std::string& in_path, const std::string& out_path) {
        const Tensor<float> im = img::read_image(in_path);
        const Tensor<float> gray = im.dim(0) == 1
                                       ? Tensor<float>({im.dim(1), im.dim(2)}, im.data)
                                       : img::to_gray(im);
        const Tensor<float> e = edge::canny(gray, a.canny);
        img::write_image(out_path, Tensor<float>({1, e.dim(0), e.dim(1)}, e.data));
    };

    if (fs::is_directory(a.input)) {
        const auto files = list_images(a.input);
        require<DataError>(!files.empty(), "no .ppm/.pgm images in " + a.input);
        fs::create_directories(a.output);
        for (const auto& f : files)
            detect(f.string(), (fs::path(a.output) / (f.stem().string() + "_edge.pgm")).string());
        std::printf("wrote %zu edge maps to %s\n", files.size(), a.output.c_str());
    } else {
        detect(a.input, a.output);
        std::printf("wrote %s\n", a.output.c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train-edge
// ---------------------------------------------------------------------------

struct TrainEdgeArgs {
    std::string manifest, output, disc_output, history;
    train::TrainEdgeConfig cfg;
};

int run_train_edge(const TrainEdgeArgs& a) {
    ConfigEcho echo;
    echo.add("manifest", a.manifest);
    echo.add("output", a.output);
    echo.add("disc_output", a.disc_output);
    echo.add("history", a.history);
    echo.add("epochs", a.cfg.epochs);
    echo.add("max_steps", a.cfg.max_steps);
    echo.add("batch", a.cfg.opt.batch);
    echo.add("crop", a.cfg.opt.crop);
    echo.add("lr", a.cfg.opt.lr0);
    echo.add("decay_every", static_cast<i64>(a.cfg.opt.decay_every));
    echo.add("decay_factor", a.cfg.opt.decay_factor);
    echo.add("seed", a.cfg.opt.seed);
    echo.add("lambda", a.cfg.loss.lambda);
    echo.add("lambda_zero_epoch", static_cast<i64>(a.cfg.loss.lambda_zero_epoch));
    echo.print("train-edge");

    TrainEdgeArgs args = a;
    if (args.cfg.snapshot_path.empty()) args.cfg.snapshot_path = a.output + ".nan-snapshot";
    const auto dataset = train::load_dataset(data::read_manifest(a.manifest));
    const auto r = train::train_edgenet(dataset, args.cfg);
    ckpt::save_checkpoint(a.output, models::variant_tag(models::EdgeVariant::full), r.net.params);
    if (!a.disc_output.empty())
        ckpt::save_checkpoint(a.disc_output, "discriminator", r.disc.params);
    if (!a.history.empty()) write_text(a.history, train::format_history(r.history));
    if (!r.history.empty())
        std::printf("final step %lld loss %.8g\n", static_cast<long long>(r.history.back().step),
                    r.history.back().total);
    std::printf("wrote %s\n", a.output.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train-deblur
// ---------------------------------------------------------------------------

struct TrainDeblurArgs {
    std::string manifest, edge_ckpt, output, history;
    std::string side_layer = "1";
    std::string edge_target = "blurry";
    train::TrainDeblurConfig cfg;
};

int run_train_deblur(const TrainDeblurArgs& a) {
    ConfigEcho echo;
    echo.add("manifest", a.manifest);
    echo.add("edge_ckpt", a.edge_ckpt);
    echo.add("output", a.output);
    echo.add("history", a.history);
    echo.add("side_layer", a.side_layer);
    echo.add("epochs", a.cfg.epochs);
    echo.add("max_steps", a.cfg.max_steps);
    echo.add("batch", a.cfg.opt.batch);
    echo.add("crop", a.cfg.opt.crop);
    echo.add("lr", a.cfg.opt.lr0);
    echo.add("decay_every", static_cast<i64>(a.cfg.opt.decay_every));
    echo.add("decay_factor", a.cfg.opt.decay_factor);
    echo.add("seed", a.cfg.opt.seed);
    echo.add("lambda1", a.cfg.loss.lambda1);
    echo.add("lambda2", a.cfg.loss.lambda2);
    echo.add("lambda3", a.cfg.loss.lambda3);
    echo.add("feature", a.cfg.feature_kind);
    echo.add("feature_layer", static_cast<i64>(a.cfg.feature_layer));
    echo.add("edge_target", a.edge_target);
    echo.print("train-deblur");

    TrainDeblurArgs args = a;
    args.cfg.loss.edge_target_sharp = a.edge_target == "sharp";
    if (args.cfg.snapshot_path.empty()) args.cfg.snapshot_path = a.output + ".nan-snapshot";
    const auto edgenet = load_edgenet(a.edge_ckpt, a.side_layer);
    const auto dataset = train::load_dataset(data::read_manifest(a.manifest));
    const auto r = train::train_deblurnet(dataset, edgenet, args.cfg);
    ckpt::save_checkpoint(a.output, "deblurnet", r.net.params);
    if (!a.history.empty()) write_text(a.history, train::format_history(r.history));
    if (!r.history.empty())
        std::printf("final step %lld loss %.8g\n", static_cast<long long>(r.history.back().step),
                    r.history.back().total);
    std::printf("wrote %s\n", a.output.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// deblur
// ---------------------------------------------------------------------------

struct DeblurArgs {
    std::string input, output, edge_ckpt, deblur_ckpt;
    std::string side_layer = "1";
};

int run_deblur(const DeblurArgs& a) {
    ConfigEcho echo;
    echo.add("input", a.input);
    echo.add("output", a.output);
    echo.add("edge_ckpt", a.edge_ckpt);
    echo.add("deblur_ckpt", a.deblur_ckpt);
    echo.add("side_layer", a.side_layer);
    echo.print("deblur");

    const auto edgenet = load_edgenet(a.edge_ckpt, a.side_layer);
    const auto deblurnet = load_deblurnet(a.deblur_ckpt);

    auto one = [&](const std::string& in_path, const std::string& out_path) {
        const Tensor<float> im = img::read_image(in_path);
        require<DataError>(im.dim(0) == 3, in_path + ": deblur input must be RGB");
        img::write_image(out_path, train::deblur_image(edgenet, deblurnet, im));
    };

    if (fs::is_directory(a.input)) {
        const auto files = list_images(a.input);
        require<DataError>(!files.empty(), "no .ppm/.pgm images in " + a.input);
        fs::create_directories(a.output);
        for (const auto& f : files)
            one(f.string(), (fs::path(a.output) / f.filename()).string());
        std::printf("deblurred %zu images into %s\n", files.size(), a.output.c_str());
    } else {
        one(a.input, a.output);
        std::printf("wrote %s\n", a.output.c_str());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string pred, gt;
    std::string metrics = "psnr,ssim,ms-ssim";
};

int run_eval(const EvalArgs& a) {
    ConfigEcho echo;
    echo.add("pred", a.pred);
    echo.add("gt", a.gt);
    echo.add("metrics", a.metrics);
    echo.print("eval");

    const auto names = split_csv(a.metrics);
    require<Error>(!names.empty(), "no metrics requested");
    const auto gt_files = list_images(a.gt);
    require<DataError>(!gt_files.empty(), "no .ppm/.pgm images in " + a.gt);

    metrics::MetricReport rep;
    rep.metric_names = names;
    for (const auto& g : gt_files) {
        const fs::path p = fs::path(a.pred) / g.filename();
        require<DataError>(fs::exists(p), "missing prediction for " + g.filename().string());
        const Tensor<float> gt = img::read_image(g.string());
        const Tensor<float> pr = img::read_image(p.string());
        require<DataError>(pr.same_shape(gt), g.filename().string() + ": prediction shape " +
                                                  shape_str(pr.shape) + " vs ground truth " +
                                                  shape_str(gt.shape));
        rep.ids.push_back(g.stem().string());
        std::vector<double> row;
        for (const auto& name : names) {
            if (name == "psnr")
                row.push_back(metrics::psnr(pr, gt, 1.0));
            else if (name == "ssim")
                row.push_back(metrics::ssim(pr, gt));
            else if (name == "ms-ssim" || name == "mean-ssim")
                row.push_back(metrics::ms_ssim(pr, gt));
            else
                throw Error("unknown metric '" + name + "' (want psnr, ssim, ms-ssim)");
        }
        rep.values.push_back(std::move(row));
    }
    std::fputs(metrics::format_report(rep).c_str(), stdout);
    return 0;
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

int run_params(const std::string& model) {
    ConfigEcho echo;
    echo.add("model", model);
    echo.print("params");

    i64 n = 0;
    if (model == "deblurnet")
        n = models::build_deblurnet<float>(models::DeblurConfig{}, 0).params.param_count();
    else if (model == "discriminator")
        n = models::build_discriminator<float>(0).params.param_count();
    else if (model.rfind("edgenet-", 0) == 0) {
        std::string v = model.substr(8);  // "full" or "reducedK"
        if (v.rfind("reduced", 0) == 0) v = v.substr(7);
        n = models::build_edgenet<float>(models::variant_from_side_layer(v), 0)
                .params.param_count();
    } else
        throw Error("unknown model '" + model +
                    "' (want edgenet-full, edgenet-reduced1, edgenet-reduced3, edgenet-reduced5, "
                    "deblurnet, discriminator)");
    std::printf("%lld\n", static_cast<long long>(n));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* tn = std::getenv("EADNET_THREADS")) {
        const int n = std::atoi(tn);
        if (n > 0) omp_set_num_threads(n);
    }

    CLI::App app{"Edge-assisted two-phase image deblurring pipeline"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Generate (clear, blurry, edge) training triples");
    synth->add_option("--input", sa.input, "Directory of clear .ppm images")->required();
    synth->add_option("--output", sa.output, "Output dataset directory")->required();
    synth->add_option("--count", sa.count, "Number of pairs to generate");
    synth->add_option("--seed", sa.seed, "Base seed");
    synth->add_option("--blur", sa.blur, "Kernel family")
        ->check(CLI::IsMember({"gaussian", "motion", "mixed"}));
    synth->add_option("--kernel-size", sa.cfg.kernel_size, "Motion kernel grid size (odd)");
    synth->add_option("--sigma-lo", sa.cfg.sigma_lo, "Gaussian sigma lower bound");
    synth->add_option("--sigma-hi", sa.cfg.sigma_hi, "Gaussian sigma upper bound");
    synth->add_option("--p-motion", sa.cfg.p_motion, "Motion probability for mixed blur");
    synth->add_option("--canny-low", sa.canny.low, "Canny low threshold (relative)");
    synth->add_option("--canny-high", sa.canny.high, "Canny high threshold (relative)");

    EdgesArgs ea;
    auto* edges = app.add_subcommand("edges", "Run the edge detector on images");
    edges->add_option("--input", ea.input, "Image file or directory")->required();
    edges->add_option("--output", ea.output, "Output file or directory")->required();
    edges->add_option("--low", ea.canny.low, "Low threshold (relative)");
    edges->add_option("--high", ea.canny.high, "High threshold (relative)");
    edges->add_option("--sigma", ea.canny.smooth_sigma, "Smoothing sigma");

    TrainEdgeArgs tea;
    auto* tre = app.add_subcommand("train-edge", "Phase-1 training of the edge network");
    tre->add_option("--manifest", tea.manifest, "Dataset manifest")->required();
    tre->add_option("--output", tea.output, "Edge network checkpoint path")->required();
    tre->add_option("--disc-output", tea.disc_output, "Optional discriminator checkpoint path");
    tre->add_option("--history", tea.history, "Loss history output file");
    tre->add_option("--epochs", tea.cfg.epochs, "Training epochs");
    tre->add_option("--max-steps", tea.cfg.max_steps, "Step cap (-1 = use epochs)");
    tre->add_option("--batch", tea.cfg.opt.batch, "Batch size");
    tre->add_option("--crop", tea.cfg.opt.crop, "Crop size (multiple of 16)");
    tre->add_option("--lr", tea.cfg.opt.lr0, "Initial learning rate");
    tre->add_option("--seed", tea.cfg.opt.seed, "Seed");
    tre->add_option("--lambda", tea.cfg.loss.lambda, "Adversarial weight");
    tre->add_option("--lambda-zero-epoch", tea.cfg.loss.lambda_zero_epoch,
                    "Epoch at which the adversarial weight drops to zero");

    TrainDeblurArgs tda;
    auto* trd = app.add_subcommand("train-deblur", "Phase-2 training of the deblur network");
    trd->add_option("--manifest", tda.manifest, "Dataset manifest")->required();
    trd->add_option("--edge-ckpt", tda.edge_ckpt, "Frozen edge network checkpoint")->required();
    trd->add_option("--output", tda.output, "Deblur network checkpoint path")->required();
    trd->add_option("--history", tda.history, "Loss history output file");
    trd->add_option("--side-layer", tda.side_layer, "Edge network variant: 1, 3, 5, or full")
        ->check(CLI::IsMember({"1", "3", "5", "full"}));
    trd->add_option("--epochs", tda.cfg.epochs, "Training epochs");
    trd->add_option("--max-steps", tda.cfg.max_steps, "Step cap (-1 = use epochs)");
    trd->add_option("--batch", tda.cfg.opt.batch, "Batch size");
    trd->add_option("--crop", tda.cfg.opt.crop, "Crop size");
    trd->add_option("--lr", tda.cfg.opt.lr0, "Initial learning rate");
    trd->add_option("--seed", tda.cfg.opt.seed, "Seed");
    trd->add_option("--lambda1", tda.cfg.loss.lambda1, "Pixel loss weight");
    trd->add_option("--lambda2", tda.cfg.loss.lambda2, "Feature loss weight");
    trd->add_option("--lambda3", tda.cfg.loss.lambda3, "Edge loss weight");
    trd->add_option("--feature", tda.cfg.feature_kind, "Feature extractor: identity or conv3")
        ->check(CLI::IsMember({"identity", "conv3"}));
    trd->add_option("--feature-layer", tda.cfg.feature_layer, "Feature tap layer");
    trd->add_option("--edge-target", tda.edge_target,
                    "Edge-consistency target image: blurry (as published) or sharp")
        ->check(CLI::IsMember({"blurry", "sharp"}));

    DeblurArgs da;
    auto* deb = app.add_subcommand("deblur", "Deblur an image or a directory of images");
    deb->add_option("--input", da.input, "Blurry image file or directory")->required();
    deb->add_option("--output", da.output, "Output file or directory")->required();
    deb->add_option("--edge-ckpt", da.edge_ckpt, "Edge network checkpoint")->required();
    deb->add_option("--deblur-ckpt", da.deblur_ckpt, "Deblur network checkpoint")->required();
    deb->add_option("--side-layer", da.side_layer, "Edge network variant: 1, 3, 5, or full")
        ->check(CLI::IsMember({"1", "3", "5", "full"}));

    EvalArgs va;
    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth by filename");
    ev->add_option("--pred", va.pred, "Prediction directory")->required();
    ev->add_option("--gt", va.gt, "Ground-truth directory")->required();
    ev->add_option("--metrics", va.metrics, "Comma-separated: psnr, ssim, ms-ssim");

    std::string params_model;
    auto* pm = app.add_subcommand("params", "Print exact trainable parameter counts");
    pm->add_option("--model", params_model, "Model name")->required();

    try {
        app.parse(argc, argv);
        if (*synth) return run_synth(sa);
        if (*edges) return run_edges(ea);
        if (*tre) return run_train_edge(tea);
        if (*trd) return run_train_deblur(tda);
        if (*deb) return run_deblur(da);
        if (*ev) return run_eval(va);
        if (*pm) return run_params(params_model);
        return 1;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
