#include <doctest.h>

#include <type_traits>
#include <vector>

#include "eadnet/kernels.hpp"
#include "eadnet/rng.hpp"

using namespace eadnet;
using namespace eadnet::kernels;

namespace {

template <class T>
std::vector<T> random_vec(size_t n, Rng& rng) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.uniform_in(-1.0, 1.0));
    return v;
}

struct ConvCase {
    i64 n, cin, h, w, cout, k, stride, pad;
};

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE_TEMPLATE("conv serial and parallel agree within contraction tolerance", T, float,
                       double) {
        // f32 tolerance covers sequential FMA-vs-plain rounding drift over a
        // few thousand accumulands; f64 pins the same property 8 decades down.
        const double tol = std::is_same_v<T, float> ? 1e-4 : 1e-12;
        const ConvCase cases[] = {
            {1, 1, 5, 5, 1, 3, 1, 1},  {2, 3, 8, 9, 4, 3, 1, 1},   {1, 4, 9, 9, 2, 3, 2, 1},
            {2, 2, 12, 7, 3, 5, 2, 2}, {1, 3, 8, 8, 2, 1, 1, 0},   {1, 2, 16, 16, 8, 9, 1, 4},
            {3, 5, 6, 6, 5, 3, 3, 0},  {2, 32, 12, 12, 9, 3, 1, 1}, {1, 8, 6, 6, 4, 1, 1, 0},
            {1, 6, 20, 20, 7, 4, 2, 1},
        };
        Rng rng(11);
        for (const auto& c : cases) {
            CAPTURE(c.h);
            CAPTURE(c.stride);
            const ConvDims d =
                conv_dims({c.n, c.cin, c.h, c.w}, {c.cout, c.cin, c.k, c.k}, {c.cout}, c.stride, c.pad);
            const auto x = random_vec<T>(static_cast<size_t>(c.n * c.cin * c.h * c.w), rng);
            const auto wt = random_vec<T>(static_cast<size_t>(c.cout * c.cin * c.k * c.k), rng);
            const auto b = random_vec<T>(static_cast<size_t>(c.cout), rng);
            std::vector<T> ys(static_cast<size_t>(d.n * d.cout * d.oh * d.ow));
            std::vector<T> yp(ys.size());
            serial::conv2d_forward(x.data(), wt.data(), b.data(), ys.data(), d);
            conv2d_forward(x.data(), wt.data(), b.data(), yp.data(), d);
            for (size_t i = 0; i < ys.size(); ++i)
                CHECK(ys[i] == doctest::Approx(yp[i]).epsilon(tol));

            const auto g = random_vec<T>(ys.size(), rng);
            std::vector<T> gxs(x.size(), T(0)), gxp(x.size(), T(0));
            serial::conv2d_backward_input(g.data(), wt.data(), gxs.data(), d);
            conv2d_backward_input(g.data(), wt.data(), gxp.data(), d);
            for (size_t i = 0; i < gxs.size(); ++i)
                CHECK(gxs[i] == doctest::Approx(gxp[i]).epsilon(tol));

            std::vector<T> gws(wt.size(), T(0)), gwp(wt.size(), T(0));
            std::vector<T> gbs(b.size(), T(0)), gbp(b.size(), T(0));
            serial::conv2d_backward_weight(g.data(), x.data(), gws.data(), gbs.data(), d);
            conv2d_backward_weight(g.data(), x.data(), gwp.data(), gbp.data(), d);
            for (size_t i = 0; i < gws.size(); ++i)
                CHECK(gws[i] == doctest::Approx(gwp[i]).epsilon(tol));
            for (size_t i = 0; i < gbs.size(); ++i)
                CHECK(gbs[i] == doctest::Approx(gbp[i]).epsilon(tol));
        }
    }

    TEST_CASE("conv known answer 2x2 input") {
        // x = [[1,2],[3,4]], w = [[1,0],[0,1]], no pad, stride 1 -> 1+4 = 5
        const ConvDims d = conv_dims({1, 1, 2, 2}, {1, 1, 2, 2}, {1}, 1, 0);
        const float x[] = {1, 2, 3, 4};
        const float w[] = {1, 0, 0, 1};
        const float b[] = {0.5f};
        float y = 0;
        conv2d_forward(x, w, b, &y, d);
        CHECK(y == 5.5f);
    }

    TEST_CASE("conv identity kernel with padding preserves the image") {
        Rng rng(3);
        const ConvDims d = conv_dims({1, 1, 6, 6}, {1, 1, 3, 3}, {1}, 1, 1);
        const auto x = random_vec<float>(36, rng);
        const float w[] = {0, 0, 0, 0, 1, 0, 0, 0, 0};
        const float b[] = {0};
        std::vector<float> y(36);
        conv2d_forward(x.data(), w, b, y.data(), d);
        CHECK(y == x);
    }

    TEST_CASE("conv shape law and validation errors") {
        const ConvDims d = conv_dims({2, 3, 11, 8}, {5, 3, 3, 3}, {5}, 2, 1);
        CHECK(d.oh == 6);  // (11+2-3)/2+1
        CHECK(d.ow == 4);  // (8+2-3)/2+1
        CHECK_THROWS_AS(conv_dims({1, 2, 4, 4}, {1, 3, 3, 3}, {1}, 1, 1), ShapeError);
        CHECK_THROWS_AS(conv_dims({1, 3, 4, 4}, {2, 3, 3, 3}, {1}, 1, 1), ShapeError);
        CHECK_THROWS_AS(conv_dims({1, 1, 2, 2}, {1, 1, 5, 5}, {1}, 1, 0), ShapeError);
        CHECK_THROWS_AS(conv_dims({1, 1, 4, 4}, {1, 1, 3, 3}, {1}, 0, 0), ShapeError);
    }

    TEST_CASE("maxpool forward, ties, and backward routing") {
        // 4x4 plane with a tie in the first window
        const float x[] = {5, 5, 1, 2, 3, 4, 8, 8, 0, 1, 2, 3, 1, 9, 3, 3};
        float y[4];
        i64 am[4];
        maxpool2_forward(x, 1, 1, 4, 4, y, am);
        CHECK(y[0] == 5.0f);
        CHECK(am[0] == 0);  // first of the tied pair in row-major order
        CHECK(y[1] == 8.0f);
        CHECK(am[1] == 6);
        CHECK(y[2] == 9.0f);
        CHECK(am[2] == 13);
        CHECK(y[3] == 3.0f);
        CHECK(am[3] == 11);  // first 3 seen in row-major window scan

        float ys[4];
        i64 ams[4];
        serial::maxpool2_forward(x, 1, 1, 4, 4, ys, ams);
        for (int i = 0; i < 4; ++i) {
            CHECK(y[i] == ys[i]);
            CHECK(am[i] == ams[i]);
        }

        const float g[] = {1, 2, 3, 4};
        std::vector<float> gx(16, 0.0f);
        maxpool2_backward(g, am, 1, 1, 4, 4, gx.data());
        CHECK(gx[0] == 1.0f);
        CHECK(gx[6] == 2.0f);
        CHECK(gx[13] == 3.0f);
        CHECK(gx[11] == 4.0f);
        float total = 0;
        for (float v : gx) total += v;
        CHECK(total == 10.0f);
    }

    TEST_CASE("pixel shuffle index law and inverse") {
        // in: [1, 4, 2, 2] r=2 -> out [1, 1, 4, 4]
        std::vector<float> in(16);
        for (int i = 0; i < 16; ++i) in[static_cast<size_t>(i)] = static_cast<float>(i);
        std::vector<float> out(16);
        pixel_shuffle_forward(in.data(), 1, 1, 2, 2, 2, out.data());
        // out[y][x] = in[(y%2)*2+(x%2)][y/2][x/2]
        for (i64 y = 0; y < 4; ++y)
            for (i64 x = 0; x < 4; ++x) {
                const i64 ci = (y % 2) * 2 + (x % 2);
                CHECK(out[static_cast<size_t>(y * 4 + x)] == in[static_cast<size_t>(ci * 4 + (y / 2) * 2 + x / 2)]);
            }
        // backward of forward output recovers the input exactly (permutation)
        std::vector<float> back(16, 0.0f);
        pixel_shuffle_backward(out.data(), 1, 1, 2, 2, 2, back.data());
        CHECK(back == in);
    }

    TEST_CASE("bilinear 1x3 to 1x2x3 known answer") {
        // [1,3] -> [2,3]: rows duplicate, columns interpolate align-corners
        const float in[] = {0.0f, 1.0f, 2.0f};
        float out[6];
        bilinear_forward(in, 1, 1, 1, 3, 2, 3, out);
        const float want[] = {0, 1, 2, 0, 1, 2};
        for (int i = 0; i < 6; ++i) CHECK(out[i] == doctest::Approx(want[i]));
    }

    TEST_CASE("bilinear upsample 2x2 to 4x4 corners match") {
        const float in[] = {0, 3, 6, 9};
        float out[16];
        bilinear_forward(in, 1, 1, 2, 2, 4, 4, out);
        CHECK(out[0] == 0.0f);
        CHECK(out[3] == 3.0f);
        CHECK(out[12] == 6.0f);
        CHECK(out[15] == 9.0f);
        CHECK(out[1] == doctest::Approx(1.0f));
        float outs[16];
        serial::bilinear_forward(in, 1, 1, 2, 2, 4, 4, outs);
        for (int i = 0; i < 16; ++i) CHECK(out[i] == doctest::Approx(outs[i]).epsilon(1e-6));
    }

    TEST_CASE("bilinear same size is the identity in both directions") {
        Rng rng(8);
        const auto x = random_vec<float>(2 * 3 * 5 * 4, rng);
        std::vector<float> y(x.size());
        bilinear_forward(x.data(), 2, 3, 5, 4, 5, 4, y.data());
        CHECK(y == x);
        std::vector<float> gx(x.size(), 1.0f);
        bilinear_backward(x.data(), 2, 3, 5, 4, 5, 4, gx.data());
        for (size_t i = 0; i < x.size(); ++i) CHECK(gx[i] == 1.0f + x[i]);
    }

    TEST_CASE("bilinear backward conserves gradient mass") {
        Rng rng(4);
        const auto g = random_vec<double>(1 * 1 * 7 * 9, rng);
        std::vector<double> gx(1 * 1 * 3 * 4, 0.0);
        bilinear_backward(g.data(), 1, 1, 3, 4, 7, 9, gx.data());
        double sg = 0, sx = 0;
        for (double v : g) sg += v;
        for (double v : gx) sx += v;
        CHECK(sx == doctest::Approx(sg).epsilon(1e-12));
    }

    TEST_CASE("reflect index walks back from both edges") {
        CHECK(reflect_index(0, 5) == 0);
        CHECK(reflect_index(-1, 5) == 0);
        CHECK(reflect_index(-2, 5) == 1);
        CHECK(reflect_index(5, 5) == 4);
        CHECK(reflect_index(6, 5) == 3);
        CHECK(reflect_index(4, 5) == 4);
    }

    TEST_CASE("correlate2d serial and parallel agree") {
        Rng rng(21);
        const auto im = random_vec<float>(11 * 13, rng);
        std::vector<double> k(25);
        for (auto& v : k) v = rng.uniform_in(0.0, 1.0);
        std::vector<float> a(im.size()), b(im.size());
        serial::correlate2d_reflect(im.data(), 11, 13, k.data(), 5, a.data());
        correlate2d_reflect(im.data(), 11, 13, k.data(), 5, b.data());
        CHECK(a == b);
    }
}
