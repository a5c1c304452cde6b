#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "eadnet/blur.hpp"
#include "eadnet/image_io.hpp"
#include "eadnet/trainer.hpp"

using namespace eadnet;
using optim::OptimConfig;

namespace {

// hand-stepped reference for a single scalar parameter, written against the
// published update equations rather than the library loop
double adam_reference(double theta, const std::vector<double>& grads, double lr,
                      const OptimConfig& cfg) {
    double m = 0.0, v = 0.0;
    for (size_t step = 1; step <= grads.size(); ++step) {
        const double g = grads[step - 1];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        const double mhat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
        const double vhat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
        theta -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    return theta;
}

train::LoadedSample coordinate_sample(i64 h, i64 w) {
    train::LoadedSample s;
    s.clear = Tensor<float>({3, h, w});
    s.blurry = Tensor<float>({3, h, w});
    s.edge = Tensor<float>({h, w});
    for (i64 c = 0; c < 3; ++c)
        for (i64 y = 0; y < h; ++y)
            for (i64 x = 0; x < w; ++x) {
                s.clear.at3(c, y, x) = static_cast<float>(y * 1000 + x) * 1e-6f;
                s.blurry.at3(c, y, x) = static_cast<float>(y * 1000 + x + 7) * 1e-6f;
            }
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) s.edge.at2(y, x) = static_cast<float>((y + x) % 2);
    return s;
}

train::LoadedSample random_sample(i64 h, i64 w, std::uint64_t seed) {
    Rng rng(seed);
    train::LoadedSample s;
    s.clear = Tensor<float>({3, h, w});
    for (auto& v : s.clear.data) v = static_cast<float>(rng.uniform());
    s.blurry = blur::apply_blur(s.clear, blur::gaussian_kernel(1.0));
    s.edge = Tensor<float>({h, w});
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) s.edge.at2(y, x) = static_cast<float>((y / 2 + x / 2) % 2);
    return s;
}

models::DeblurConfig tiny_arch() {
    models::DeblurConfig a;
    a.base_channels = 8;
    a.down1_channels = 8;
    a.down2_channels = 8;
    a.n_res_blocks = 1;
    a.expand_channels = 8;
    a.lowrank_channels = 8;
    a.head_kernel = 5;
    return a;
}

}  // namespace

TEST_SUITE("optim") {
    TEST_CASE("adam tracks the reference recurrence to machine precision") {
        const std::vector<double> grads = {0.3, -1.2, 0.05, 2.0, -0.7, 0.0, 1.1, -0.4, 0.9, -2.5};
        OptimConfig cfg;
        const double lr = 0.1;

        ParamStore<double> store;
        store.add("theta", Tensor<double>({1}, {1.0}));
        auto st = optim::make_adam_state(store);
        for (double g : grads)
            optim::adam_step(store, {Tensor<double>({1}, {g})}, st, lr, cfg);

        CHECK(st.t == 10);
        CHECK(store.items[0].t.data[0] ==
              doctest::Approx(adam_reference(1.0, grads, lr, cfg)).epsilon(1e-12));
    }

    TEST_CASE("the first adam step moves by almost exactly the learning rate") {
        ParamStore<double> store;
        store.add("w", Tensor<double>({2}, {0.0, 5.0}));
        auto st = optim::make_adam_state(store);
        optim::adam_step(store, {Tensor<double>({2}, {3.7, -0.01})}, st, 5e-4, OptimConfig{});
        CHECK(store.items[0].t.data[0] == doctest::Approx(-5e-4).epsilon(1e-5));
        CHECK(store.items[0].t.data[1] == doctest::Approx(5.0 + 5e-4).epsilon(1e-5));
    }

    TEST_CASE("missing gradients leave parameters untouched but advance time") {
        ParamStore<double> store;
        store.add("w", Tensor<double>({3}, {1.0, -2.0, 0.5}));
        store.add("buf", Tensor<double>({2}, {9.0, 9.0}), /*trainable=*/false);
        auto st = optim::make_adam_state(store);
        const auto before = store.items[0].t.data;
        optim::adam_step(store, {Tensor<double>(), Tensor<double>()}, st, 0.1, OptimConfig{});
        CHECK(store.items[0].t.data == before);
        CHECK(store.items[1].t.data == std::vector<double>{9.0, 9.0});
        CHECK(st.t == 1);
    }

    TEST_CASE("adam validates list sizes and gradient shapes") {
        ParamStore<double> store;
        store.add("w", Tensor<double>({2}));
        auto st = optim::make_adam_state(store);
        CHECK_THROWS_AS(optim::adam_step(store, {}, st, 0.1, OptimConfig{}), ShapeError);
        CHECK_THROWS_WITH_AS(
            optim::adam_step(store, {Tensor<double>({3})}, st, 0.1, OptimConfig{}),
            doctest::Contains("does not match parameter w"), ShapeError);
    }

    TEST_CASE("the decade schedule hits its decimal steps exactly") {
        OptimConfig cfg;  // lr0 5e-4, decay 0.1 every 20 epochs
        CHECK(optim::lr_schedule(0, cfg) == 5e-4);
        CHECK(optim::lr_schedule(19, cfg) == 5e-4);
        CHECK(optim::lr_schedule(20, cfg) == 5e-5);
        CHECK(optim::lr_schedule(39, cfg) == 5e-5);
        CHECK(optim::lr_schedule(40, cfg) == 5e-6);
        CHECK(optim::lr_schedule(45, cfg) == 5e-6);
        CHECK_THROWS_AS(optim::lr_schedule(-1, cfg), Error);

        cfg.decay_every = 0;  // disabled
        CHECK(optim::lr_schedule(100, cfg) == 5e-4);
    }
}

TEST_SUITE("trainer") {
    TEST_CASE("crop windows cut all three images at the same place") {
        std::vector<train::LoadedSample> data;
        data.push_back(coordinate_sample(40, 50));
        Rng rng(17);
        const i64 crop = 12, batch = 3;
        const auto b = train::random_crop_batch(data, crop, batch, rng);
        REQUIRE(b.clear.shape == Shape{batch, 3, crop, crop});
        REQUIRE(b.blurry.shape == Shape{batch, 3, crop, crop});
        REQUIRE(b.edge.shape == Shape{batch, 1, crop, crop});
        for (i64 k = 0; k < batch; ++k) {
            // decode the window origin from the first clear pixel
            const i64 code = static_cast<i64>(std::lround(b.clear.at4(k, 0, 0, 0) * 1e6));
            const i64 y0 = code / 1000, x0 = code % 1000;
            CHECK(y0 + crop <= 40);
            CHECK(x0 + crop <= 50);
            for (i64 y = 0; y < crop; ++y)
                for (i64 x = 0; x < crop; ++x) {
                    const i64 gy = y0 + y, gx = x0 + x;
                    CHECK(b.clear.at4(k, 2, y, x) ==
                          static_cast<float>(gy * 1000 + gx) * 1e-6f);
                    CHECK(b.blurry.at4(k, 1, y, x) ==
                          static_cast<float>(gy * 1000 + gx + 7) * 1e-6f);
                    CHECK(b.edge.at4(k, 0, y, x) == static_cast<float>((gy + gx) % 2));
                }
        }
    }

    TEST_CASE("crop sampling is deterministic in the generator state") {
        std::vector<train::LoadedSample> data;
        data.push_back(random_sample(32, 32, 1));
        data.push_back(random_sample(24, 40, 2));
        Rng r1(5), r2(5), r3(6);
        const auto a = train::random_crop_batch(data, 16, 4, r1);
        const auto b = train::random_crop_batch(data, 16, 4, r2);
        const auto c = train::random_crop_batch(data, 16, 4, r3);
        CHECK(a.clear.data == b.clear.data);
        CHECK(a.blurry.data == b.blurry.data);
        CHECK(a.edge.data == b.edge.data);
        CHECK(a.clear.data != c.clear.data);
    }

    TEST_CASE("undersized images are skipped, and an impossible crop is an error") {
        std::vector<train::LoadedSample> data;
        auto small = random_sample(8, 8, 3);
        for (auto& v : small.clear.data) v = 0.75f;
        auto big = random_sample(32, 32, 4);
        for (auto& v : big.clear.data) v = 0.25f;
        data.push_back(std::move(small));
        data.push_back(std::move(big));

        Rng rng(9);
        for (int trial = 0; trial < 4; ++trial) {
            const auto b = train::random_crop_batch(data, 16, 2, rng);
            for (float v : b.clear.data) CHECK(v == 0.25f);  // only the big one fits
        }
        CHECK_THROWS_WITH_AS(train::random_crop_batch(data, 64, 1, rng),
                             doctest::Contains("shrink the crop"), DataError);
        CHECK_THROWS_AS(train::random_crop_batch({}, 8, 1, rng), DataError);
        CHECK_THROWS_AS(train::random_crop_batch(data, 0, 1, rng), Error);
    }

    TEST_CASE("dataset loading validates shapes and binary edge maps") {
        namespace fs = std::filesystem;
        const auto dir = fs::temp_directory_path() / "eadnet_trainer_ds";
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto path = [&](const std::string& n) { return (dir / n).string(); };

        const auto s = random_sample(16, 16, 7);
        img::write_image(path("c.ppm"), s.clear);
        img::write_image(path("b.ppm"), s.blurry);
        img::write_image(path("e.pgm"), Tensor<float>({1, 16, 16}, s.edge.data));

        data::Manifest m{{path("c.ppm"), path("b.ppm"), path("e.pgm")}};
        const auto ds = train::load_dataset(m);
        REQUIRE(ds.size() == 1);
        CHECK(ds[0].clear.shape == Shape{3, 16, 16});
        CHECK(ds[0].edge.shape == Shape{16, 16});
        CHECK(ds[0].edge.data == s.edge.data);

        // blurry image with the wrong size
        img::write_image(path("b_small.ppm"), Tensor<float>({3, 8, 8}));
        CHECK_THROWS_WITH_AS(
            train::load_dataset({{path("c.ppm"), path("b_small.ppm"), path("e.pgm")}}),
            doctest::Contains("does not match clear image"), DataError);

        // edge map with gray values
        Tensor<float> grayish({1, 16, 16});
        for (auto& v : grayish.data) v = 0.5f;
        img::write_image(path("e_gray.pgm"), grayish);
        CHECK_THROWS_WITH_AS(
            train::load_dataset({{path("c.ppm"), path("b.ppm"), path("e_gray.pgm")}}),
            doctest::Contains("binary"), DataError);

        // grayscale image where RGB is required
        img::write_image(path("c_gray.pgm"), Tensor<float>({1, 16, 16}));
        CHECK_THROWS_WITH_AS(
            train::load_dataset({{path("c_gray.pgm"), path("b.ppm"), path("e.pgm")}}),
            doctest::Contains("must be RGB"), DataError);

        CHECK_THROWS_AS(train::load_dataset({}), DataError);
        fs::remove_all(dir);
    }

    TEST_CASE("history formatting is tab separated with named parts") {
        train::History h;
        h.push_back({0, 0.5, {{"edge", 0.25}, {"adv", 0.0}}});
        h.push_back({1, 0.125, {}});
        CHECK(train::format_history(h) == "0\t0.5\tedge=0.25\tadv=0\n1\t0.125\n");
    }

    TEST_CASE("a lambda of zero and a zeroed cutoff train identically") {
        std::vector<train::LoadedSample> data;
        data.push_back(random_sample(32, 32, 11));

        train::TrainEdgeConfig base;
        base.opt.crop = 16;
        base.opt.batch = 1;
        base.opt.seed = 5;
        base.max_steps = 2;

        auto a = base;
        a.loss.lambda = 0.0;
        auto b = base;
        b.loss.lambda = 0.05;
        b.loss.lambda_zero_epoch = 0;  // cutoff disables the assist from epoch 0

        const auto ra = train_edgenet(data, a);
        const auto rb = train_edgenet(data, b);
        REQUIRE(ra.history.size() == 2);
        REQUIRE(rb.history.size() == 2);
        CHECK(ra.net.params.find("s1c1.w")->t.data == rb.net.params.find("s1c1.w")->t.data);
        CHECK(ra.net.params.find("fuse.w")->t.data == rb.net.params.find("fuse.w")->t.data);
        CHECK(ra.history[1].total == rb.history[1].total);
        // without the assist the adversarial parts stay at zero
        for (const auto& [name, v] : ra.history[0].parts)
            if (name == "adv" || name == "d") CHECK(v == 0.0);
    }

    TEST_CASE("the adversarial assist changes the training trajectory") {
        std::vector<train::LoadedSample> data;
        data.push_back(random_sample(80, 80, 13));

        train::TrainEdgeConfig plain;
        plain.opt.crop = 64;
        plain.opt.batch = 1;
        plain.opt.seed = 5;
        plain.max_steps = 1;
        plain.loss.lambda = 0.0;

        auto adv = plain;
        adv.loss.lambda = 0.05;

        const auto rp = train_edgenet(data, plain);
        const auto rado = train_edgenet(data, adv);
        CHECK(rp.net.params.find("s1c1.w")->t.data != rado.net.params.find("s1c1.w")->t.data);

        // the discriminator actually took a step
        const auto fresh = models::build_discriminator<float>(Rng::derive(5, 1));
        CHECK(rado.disc.params.find("d1.w")->t.data != fresh.params.find("d1.w")->t.data);
        double adv_part = 0.0, d_part = 0.0;
        for (const auto& [name, v] : rado.history[0].parts) {
            if (name == "adv") adv_part = v;
            if (name == "d") d_part = v;
        }
        CHECK(adv_part != 0.0);
        CHECK(d_part != 0.0);
        CHECK_THROWS_WITH_AS(train_edgenet(data, [&] {
                                 auto c = adv;
                                 c.opt.crop = 32;
                                 return c;
                             }()),
                             doctest::Contains("crop >= 64"), Error);
        CHECK_THROWS_WITH_AS(train_edgenet(data, [&] {
                                 auto c = plain;
                                 c.opt.crop = 24;
                                 return c;
                             }()),
                             doctest::Contains("multiple of 16"), Error);
    }

    TEST_CASE("phase-2 training leaves the frozen edge network bit-identical") {
        std::vector<train::LoadedSample> data;
        data.push_back(random_sample(24, 24, 21));
        data.push_back(random_sample(16, 20, 22));

        const auto edgenet =
            models::build_edgenet<float>(models::EdgeVariant::reduced1, 31, {{4, 4}});
        std::vector<std::vector<float>> before;
        for (const auto& item : edgenet.params.items) before.push_back(item.t.data);

        train::TrainDeblurConfig cfg;
        cfg.opt.crop = 8;
        cfg.opt.batch = 2;
        cfg.opt.seed = 3;
        cfg.max_steps = 3;
        cfg.arch = tiny_arch();
        cfg.feature_kind = "identity";

        const auto r = train_deblurnet(data, edgenet, cfg);
        REQUIRE(r.history.size() == 3);
        for (size_t i = 0; i < edgenet.params.items.size(); ++i)
            CHECK(edgenet.params.items[i].t.data == before[i]);
        for (const auto& s : r.history) {
            CHECK(std::isfinite(s.total));
            REQUIRE(s.parts.size() == 3);
            CHECK(s.parts[0].first == "pixel");
            CHECK(s.parts[1].first == "feat");
            CHECK(s.parts[2].first == "edge");
        }
        // the deblur net moved away from its initialization
        const auto fresh = models::build_deblurnet<float>(cfg.arch, Rng::derive(3, 0));
        CHECK(r.net.params.find("head.v")->t.data != fresh.params.find("head.v")->t.data);

        CHECK_THROWS_WITH_AS(train_deblurnet(data, edgenet, [&] {
                                 auto c = cfg;
                                 c.opt.crop = 6;
                                 return c;
                             }()),
                             doctest::Contains("multiple of 4"), Error);
    }

    TEST_CASE("reflect padding extends to the next multiple and mirrors rows") {
        Tensor<float> t({1, 5, 7});
        for (i64 i = 0; i < 35; ++i) t.data[static_cast<size_t>(i)] = static_cast<float>(i);
        const auto p = train::reflect_pad_to(t, 4);
        REQUIRE(p.shape == Shape{1, 8, 8});
        for (i64 y = 0; y < 5; ++y)
            for (i64 x = 0; x < 7; ++x) CHECK(p.at3(0, y, x) == t.at3(0, y, x));
        CHECK(p.at3(0, 5, 0) == t.at3(0, 3, 0));  // sy = 2h-2-y
        CHECK(p.at3(0, 6, 2) == t.at3(0, 2, 2));
        CHECK(p.at3(0, 1, 7) == t.at3(0, 1, 5));  // sx = 2w-2-x

        const auto same = train::reflect_pad_to(t, 1);
        CHECK(same.data == t.data);

        CHECK_THROWS_AS(train::reflect_pad_to(Tensor<float>({3, 3}), 4), ShapeError);
        CHECK_THROWS_WITH_AS(train::reflect_pad_to(Tensor<float>({1, 2, 2}), 8),
                             doctest::Contains("too small to reflect-pad"), DataError);
    }

    TEST_CASE("whole-image inference restores the original size and range") {
        const auto edgenet =
            models::build_edgenet<float>(models::EdgeVariant::reduced1, 41, {{4, 4}});
        const auto deblur = models::build_deblurnet<float>(tiny_arch(), 42);
        const auto s = random_sample(10, 14, 33);
        const auto out = train::deblur_image(edgenet, deblur, s.blurry);
        REQUIRE(out.shape == Shape{3, 10, 14});
        for (float v : out.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
        CHECK_THROWS_AS(train::deblur_image(edgenet, deblur, Tensor<float>({10, 14})), ShapeError);
    }

    TEST_CASE("evaluation scores every manifest record and names the rows") {
        namespace fs = std::filesystem;
        const auto dir = fs::temp_directory_path() / "eadnet_trainer_eval";
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto path = [&](const std::string& n) { return (dir / n).string(); };

        data::Manifest m;
        for (int i = 0; i < 2; ++i) {
            const auto s = random_sample(20, 20, 50 + static_cast<std::uint64_t>(i));
            const std::string tag = "pair" + std::to_string(i);
            img::write_image(path(tag + "_c.ppm"), s.clear);
            img::write_image(path(tag + "_b.ppm"), s.blurry);
            img::write_image(path(tag + "_e.pgm"), Tensor<float>({1, 20, 20}, s.edge.data));
            m.push_back({path(tag + "_c.ppm"), path(tag + "_b.ppm"), path(tag + "_e.pgm")});
        }

        const auto edgenet =
            models::build_edgenet<float>(models::EdgeVariant::reduced1, 51, {{4, 4}});
        const auto deblur = models::build_deblurnet<float>(tiny_arch(), 52);
        const auto rep = train::evaluate(edgenet, deblur, m, {"psnr", "ssim"});
        REQUIRE(rep.ids.size() == 2);
        CHECK(rep.ids[0] == "pair0_c");
        REQUIRE(rep.values.size() == 2);
        for (const auto& row : rep.values) {
            REQUIRE(row.size() == 2);
            CHECK(row[0] > 0.0);       // psnr of an untrained net is poor but positive
            CHECK(row[1] <= 1.0);      // ssim bounded
        }
        CHECK_THROWS_WITH_AS(train::evaluate(edgenet, deblur, m, {"lpips"}),
                             doctest::Contains("unknown metric"), Error);
        CHECK_THROWS_AS(train::evaluate(edgenet, deblur, {}, {"psnr"}), DataError);
        fs::remove_all(dir);
    }
}
