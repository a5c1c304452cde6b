#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "eadnet/grad_check.hpp"
#include "eadnet/losses.hpp"

using namespace eadnet;
using ad::fd_check;
using ad::Tape;

namespace {

Tensor<double> filled(Shape s, double v) {
    Tensor<double> t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor<double> rand_in(Shape s, Rng& rng, double lo, double hi) {
    Tensor<double> t(std::move(s));
    for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
}

Tensor<double> half_ones(Shape s) {
    Tensor<double> t(std::move(s));
    for (i64 i = 0; i < t.numel(); ++i) t.data[static_cast<size_t>(i)] = i % 2 == 0 ? 1.0 : 0.0;
    return t;
}

double eval_cbce(const Tensor<double>& pred, const Tensor<double>& target) {
    Tape<double> t;
    const int p = t.leaf(pred, false);
    return t.value(losses::cbce(t, p, target)).data[0];
}

}  // namespace

TEST_SUITE("losses") {
    TEST_CASE("balanced cross entropy closed forms") {
        // uncommitted predictions on a balanced target: both class weights are
        // 1/2, every pixel contributes ln 2, and the mean halves it
        const auto pred = filled({2, 2}, 0.5);
        CHECK(eval_cbce(pred, half_ones({2, 2})) ==
              doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

        // single-class targets fall back to plain BCE: ln 2 at p = 1/2
        CHECK(eval_cbce(pred, filled({2, 2}, 0.0)) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(eval_cbce(pred, filled({2, 2}, 1.0)) ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));

        // a perfect prediction costs (numerically) nothing
        CHECK(eval_cbce(half_ones({4, 4}), half_ones({4, 4})) < 1e-7);

        // imbalance: one positive among four, p = 0.5 everywhere.
        // beta = 3/4, loss = (0.75*ln2 + 3*0.25*ln2)/4 = 1.5*ln2/4
        Tensor<double> tgt({4});
        tgt.data = {1.0, 0.0, 0.0, 0.0};
        CHECK(eval_cbce(filled({4}, 0.5), tgt) ==
              doctest::Approx(1.5 * std::log(2.0) / 4.0).epsilon(1e-12));
    }

    TEST_CASE("balanced cross entropy is permutation invariant") {
        Rng rng(3);
        const auto pred = rand_in({64}, rng, 0.1, 0.9);
        auto tgt = half_ones({64});
        const double base = eval_cbce(pred, tgt);

        std::vector<i64> perm(64);
        std::iota(perm.begin(), perm.end(), 0);
        for (i64 i = 63; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
        Tensor<double> pp({64}), tp({64});
        for (i64 i = 0; i < 64; ++i) {
            pp.data[static_cast<size_t>(i)] = pred.data[static_cast<size_t>(perm[i])];
            tp.data[static_cast<size_t>(i)] = tgt.data[static_cast<size_t>(perm[i])];
        }
        CHECK(eval_cbce(pp, tp) == doctest::Approx(base).epsilon(1e-12));
    }

    TEST_CASE("duplicating the batch leaves the mean-based loss unchanged") {
        Rng rng(5);
        const auto pred = rand_in({1, 1, 4, 4}, rng, 0.1, 0.9);
        const auto tgt = half_ones({1, 1, 4, 4});
        Tensor<double> pred2({2, 1, 4, 4}), tgt2({2, 1, 4, 4});
        for (int r = 0; r < 2; ++r)
            for (i64 i = 0; i < 16; ++i) {
                pred2.data[static_cast<size_t>(r * 16 + i)] = pred.data[static_cast<size_t>(i)];
                tgt2.data[static_cast<size_t>(r * 16 + i)] = tgt.data[static_cast<size_t>(i)];
            }
        CHECK(eval_cbce(pred2, tgt2) == doctest::Approx(eval_cbce(pred, tgt)).epsilon(1e-12));
    }

    TEST_CASE("balanced cross entropy validates its target") {
        Tape<double> t;
        const int p = t.leaf(filled({4}, 0.5), false);
        CHECK_THROWS_WITH_AS(losses::cbce(t, p, filled({4}, 0.25)),
                             doctest::Contains("binary"), Error);
        CHECK_THROWS_AS(losses::cbce(t, p, filled({5}, 1.0)), ShapeError);
    }

    TEST_CASE("the stage loss sums every side map plus the fusion map") {
        Tape<double> t;
        const auto tgt = half_ones({1, 1, 2, 2});
        models::EdgeOut<double> eo;
        eo.sides = {t.leaf(filled({1, 1, 2, 2}, 0.5), false),
                    t.leaf(filled({1, 1, 2, 2}, 0.5), false)};
        const double two = t.value(losses::edge_loss_phase1(t, eo, tgt)).data[0];
        CHECK(two == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // 2 * ln2/2

        eo.fuse = t.leaf(filled({1, 1, 2, 2}, 0.5), false);
        const double three = t.value(losses::edge_loss_phase1(t, eo, tgt)).data[0];
        CHECK(three == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));

        models::EdgeOut<double> empty;
        CHECK_THROWS_AS(losses::edge_loss_phase1(t, empty, tgt), Error);
    }

    TEST_CASE("adversarial losses match their closed forms") {
        Tape<double> t;
        const int half = t.leaf(filled({1, 1, 2, 2}, 0.5), false);
        CHECK(t.value(losses::adv_g_loss(t, half)).data[0] ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));

        const int real = t.leaf(filled({4}, 0.8), false);
        const int fake = t.leaf(filled({4}, 0.2), false);
        CHECK(t.value(losses::adv_d_loss(t, real, fake)).data[0] ==
              doctest::Approx(-2.0 * std::log(0.8)).epsilon(1e-12));

        // a perfect discriminator sits at (numerically) zero loss; the clamp
        // keeps the hopeless one finite at -2 ln(eps)
        const int one = t.leaf(filled({4}, 1.0), false);
        const int zero = t.leaf(filled({4}, 0.0), false);
        CHECK(t.value(losses::adv_d_loss(t, one, zero)).data[0] < 1e-7);
        CHECK(t.value(losses::adv_d_loss(t, zero, one)).data[0] ==
              doctest::Approx(-2.0 * std::log(1e-8)).epsilon(1e-9));
    }

    TEST_CASE("pixel loss of a constant offset is its square") {
        Tape<double> t;
        Rng rng(9);
        const auto base = rand_in({3, 4, 4}, rng, -1.0, 1.0);
        auto shifted = base;
        for (auto& v : shifted.data) v += 0.5;
        const int a = t.leaf(base, false);
        const int b = t.leaf(shifted, false);
        CHECK(t.value(losses::pixel_loss(t, a, b)).data[0] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(t.value(losses::pixel_loss(t, a, a)).data[0] == 0.0);
    }

    TEST_CASE("the identity extractor collapses the feature loss to the pixel loss") {
        Tape<double> t;
        Rng rng(2);
        const auto fx = losses::build_feature_extractor<double>("identity", 1);
        const auto bfx = bind_params(t, fx.params, /*frozen=*/true);
        const int a = t.leaf(rand_in({1, 3, 8, 8}, rng, -1.0, 1.0), false);
        const int b = t.leaf(rand_in({1, 3, 8, 8}, rng, -1.0, 1.0), false);
        CHECK(t.value(losses::perceptual_loss(t, bfx, fx, a, b)).data[0] ==
              t.value(losses::pixel_loss(t, a, b)).data[0]);
    }

    TEST_CASE("the conv extractor is fixed by its seed and downsamples per layer") {
        const auto fx1 = losses::build_feature_extractor<double>("conv3", 3);
        const auto fx2 = losses::build_feature_extractor<double>("conv3", 3);
        CHECK(fx1.params.find("f1.w")->t.data == fx2.params.find("f1.w")->t.data);

        Tape<double> t;
        Rng rng(4);
        const auto b = bind_params(t, fx1.params, true);
        const int x = t.leaf(rand_in({1, 3, 16, 16}, rng, 0.0, 1.0), false);
        const int f = losses::feature_forward(t, b, fx1, x);
        CHECK(t.value(f).shape == Shape{1, 64, 2, 2});

        CHECK_THROWS_WITH_AS(losses::build_feature_extractor<double>("vgg", 1),
                             doctest::Contains("identity or conv3"), Error);
        CHECK_THROWS_AS(losses::build_feature_extractor<double>("conv3", 4), Error);
        CHECK_THROWS_AS(losses::build_feature_extractor<double>("identity", 2), Error);
    }

    TEST_CASE("phase totals weigh their terms as configured") {
        Tape<double> t;
        const int edge_l = t.leaf(filled({1}, 0.2), false);
        const int disc_l = t.leaf(filled({1}, 1.0), false);

        CHECK(losses::total_phase1(t, edge_l, disc_l, 0.0) == edge_l);
        CHECK(losses::total_phase1(t, edge_l, -1, 0.05) == edge_l);
        CHECK(t.value(losses::total_phase1(t, edge_l, disc_l, 0.05)).data[0] ==
              doctest::Approx(0.25).epsilon(1e-12));

        const int pix = t.leaf(filled({1}, 0.2), false);
        const int perc = t.leaf(filled({1}, 1.0), false);
        const int edge = t.leaf(filled({1}, 0.5), false);
        CHECK(t.value(losses::total_phase2(t, pix, perc, edge, 1.0, 0.05, 0.1)).data[0] ==
              doctest::Approx(0.3).epsilon(1e-12));
    }

    TEST_CASE("the edge-consistency loss detaches its target branch") {
        const auto net = models::build_edgenet<double>(models::EdgeVariant::reduced1, 6, {{4, 4}});
        Rng rng(8);
        Tape<double> t;
        const auto b = bind_params(t, net.params, /*frozen=*/true);
        const int pred = t.leaf(rand_in({1, 3, 8, 8}, rng, 0.0, 1.0), true);
        const int tgt = t.leaf(rand_in({1, 3, 8, 8}, rng, 0.0, 1.0), true);
        const std::array<double, 5> alpha = {0.7, 0.1, 0.1, 0.1, 0.1};
        const int loss = losses::edge_loss_phase2(t, b, net, pred, tgt, alpha);
        t.backward(loss);
        // prediction branch carries gradient, binarized target branch does not
        double gp = 0, gt_sum = 0;
        for (double v : t.grad_or_zero(pred).data) gp += std::abs(v);
        for (double v : t.grad_or_zero(tgt).data) gt_sum += std::abs(v);
        CHECK(gp > 0.0);
        CHECK(gt_sum == 0.0);

        const std::array<double, 5> zeros = {0, 0, 0, 0, 0};
        CHECK_THROWS_WITH_AS(losses::edge_loss_phase2(t, b, net, pred, tgt, zeros),
                             doctest::Contains("every side weight is zero"), Error);
    }

    TEST_CASE("loss gradients agree with finite differences") {
        Rng rng(12);

        SUBCASE("balanced cross entropy") {
            const auto tgt = half_ones({1, 1, 4, 4});
            const auto r = fd_check(std::vector<Tensor<double>>{rand_in({1, 1, 4, 4}, rng, 0.1, 0.9)},
                                    [&](Tape<double>& t, const std::vector<int>& ids) {
                                        return losses::cbce(t, ids[0], tgt);
                                    });
            CHECK(r.max_rel_diff < 1e-7);
        }

        SUBCASE("adversarial pair") {
            const auto rg = fd_check(std::vector<Tensor<double>>{rand_in({1, 1, 3, 3}, rng, 0.15, 0.85)},
                                     [&](Tape<double>& t, const std::vector<int>& ids) {
                                         return losses::adv_g_loss(t, ids[0]);
                                     });
            CHECK(rg.max_rel_diff < 1e-7);

            const auto rd = fd_check(std::vector<Tensor<double>>{rand_in({6}, rng, 0.15, 0.85), rand_in({6}, rng, 0.15, 0.85)},
                                     [&](Tape<double>& t, const std::vector<int>& ids) {
                                         return losses::adv_d_loss(t, ids[0], ids[1]);
                                     });
            CHECK(rd.max_rel_diff < 1e-7);
        }

        SUBCASE("feature loss through the conv extractor") {
            const auto fx = losses::build_feature_extractor<double>("conv3", 2);
            const auto r = fd_check(
                std::vector<Tensor<double>>{rand_in({1, 3, 8, 8}, rng, 0.2, 0.8),
                                            rand_in({1, 3, 8, 8}, rng, 0.2, 0.8)},
                [&](Tape<double>& t, const std::vector<int>& ids) {
                    const auto b = bind_params(t, fx.params, true);
                    return losses::perceptual_loss(t, b, fx, ids[0], ids[1]);
                });
            CHECK(r.max_rel_diff < 1e-4);  // ReLU kinks cap the attainable accuracy
        }

        SUBCASE("edge consistency through a tiny frozen edge net") {
            const auto net =
                models::build_edgenet<double>(models::EdgeVariant::reduced1, 16, {{4, 4}});
            const auto tgt = rand_in({1, 3, 8, 8}, rng, 0.0, 1.0);
            const std::array<double, 5> alpha = {0.7, 0.1, 0.1, 0.1, 0.1};
            const auto r = fd_check(std::vector<Tensor<double>>{rand_in({1, 3, 8, 8}, rng, 0.0, 1.0)},
                                    [&](Tape<double>& t, const std::vector<int>& ids) {
                                        const auto b = bind_params(t, net.params, true);
                                        const int tid = t.leaf(tgt, false);
                                        return losses::edge_loss_phase2(t, b, net, ids[0], tid,
                                                                        alpha);
                                    });
            CHECK(r.max_rel_diff < 1e-4);
        }
    }
}
