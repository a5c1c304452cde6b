// Timing comparison between the serial reference kernels and the OpenMP
// parallel kernels. Run with no arguments for the default problem set, or
// pass an iteration count.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "eadnet/kernels.hpp"
#include "eadnet/rng.hpp"

using namespace eadnet;
using namespace eadnet::kernels;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

volatile float g_sink = 0.0f;  // defeats dead-code elimination

template <class F>
double time_best(F&& f, int iters) {
    double best = 1e30;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = clk::now();
        f();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

struct Case {
    const char* name;
    i64 n, cin, h, w, cout, k, stride, pad;
};

void bench_conv(const Case& c, int iters) {
    Rng rng(7);
    const ConvDims d = conv_dims({c.n, c.cin, c.h, c.w}, {c.cout, c.cin, c.k, c.k}, {c.cout},
                                 c.stride, c.pad);
    std::vector<float> x(static_cast<size_t>(c.n * c.cin * c.h * c.w));
    std::vector<float> wt(static_cast<size_t>(c.cout * c.cin * c.k * c.k));
    std::vector<float> b(static_cast<size_t>(c.cout));
    for (auto& v : x) v = static_cast<float>(rng.uniform_in(-1, 1));
    for (auto& v : wt) v = static_cast<float>(rng.uniform_in(-1, 1));
    std::vector<float> y(static_cast<size_t>(d.n * d.cout * d.oh * d.ow));
    std::vector<float> gx(x.size()), gw(wt.size()), gb(b.size());

    const double flops_fwd =
        2.0 * static_cast<double>(d.n * d.cout * d.oh * d.ow) * static_cast<double>(d.cin * d.kh * d.kw);

    const double ts = time_best(
        [&] { serial::conv2d_forward(x.data(), wt.data(), b.data(), y.data(), d); }, iters);
    const double tp =
        time_best([&] { conv2d_forward(x.data(), wt.data(), b.data(), y.data(), d); }, iters);
    g_sink = g_sink + y[0];
    std::printf("%-28s fwd   serial %8.2f ms  parallel %8.2f ms  %6.2fx  %7.2f GFLOP/s\n", c.name,
                ts * 1e3, tp * 1e3, ts / tp, flops_fwd / tp * 1e-9);

    const double tsb = time_best(
        [&] {
            std::fill(gx.begin(), gx.end(), 0.0f);
            serial::conv2d_backward_input(y.data(), wt.data(), gx.data(), d);
        },
        iters);
    const double tpb = time_best(
        [&] {
            std::fill(gx.begin(), gx.end(), 0.0f);
            conv2d_backward_input(y.data(), wt.data(), gx.data(), d);
        },
        iters);
    g_sink = g_sink + gx[0];
    std::printf("%-28s bwd-x serial %8.2f ms  parallel %8.2f ms  %6.2fx  %7.2f GFLOP/s\n", c.name,
                tsb * 1e3, tpb * 1e3, tsb / tpb, flops_fwd / tpb * 1e-9);

    const double tsw = time_best(
        [&] {
            std::fill(gw.begin(), gw.end(), 0.0f);
            std::fill(gb.begin(), gb.end(), 0.0f);
            serial::conv2d_backward_weight(y.data(), x.data(), gw.data(), gb.data(), d);
        },
        iters);
    const double tpw = time_best(
        [&] {
            std::fill(gw.begin(), gw.end(), 0.0f);
            std::fill(gb.begin(), gb.end(), 0.0f);
            conv2d_backward_weight(y.data(), x.data(), gw.data(), gb.data(), d);
        },
        iters);
    g_sink = g_sink + gw[0];
    std::printf("%-28s bwd-w serial %8.2f ms  parallel %8.2f ms  %6.2fx  %7.2f GFLOP/s\n", c.name,
                tsw * 1e3, tpw * 1e3, tsw / tpw, flops_fwd / tpw * 1e-9);
}

void bench_pool(int iters) {
    Rng rng(9);
    const i64 n = 4, c = 64, h = 256, w = 256;
    std::vector<float> x(static_cast<size_t>(n * c * h * w));
    for (auto& v : x) v = static_cast<float>(rng.uniform_in(-1, 1));
    std::vector<float> y(static_cast<size_t>(n * c * (h / 2) * (w / 2)));
    std::vector<i64> am(y.size());
    const double ts = time_best(
        [&] { serial::maxpool2_forward(x.data(), n, c, h, w, y.data(), am.data()); }, iters);
    const double tp =
        time_best([&] { maxpool2_forward(x.data(), n, c, h, w, y.data(), am.data()); }, iters);
    g_sink = g_sink + y[0];
    std::printf("%-28s fwd   serial %8.2f ms  parallel %8.2f ms  %6.2fx\n", "maxpool2 4x64x256x256",
                ts * 1e3, tp * 1e3, ts / tp);
}

}  // namespace

int main(int argc, char** argv) {
    int iters = 5;
    if (argc > 1) iters = std::max(1, std::atoi(argv[1]));
    std::printf("kernel benchmark, best of %d runs\n\n", iters);

    const Case cases[] = {
        {"conv 1x64x128x128 k3 s1", 1, 64, 128, 128, 64, 3, 1, 1},
        {"conv 4x64x64x64 k3 s1", 4, 64, 64, 64, 64, 3, 1, 1},
        {"conv 1x128x64x64 k3 s2", 1, 128, 64, 64, 256, 3, 2, 1},
        {"conv 1x4x128x128 k9 s1", 1, 4, 128, 128, 64, 9, 1, 4},
    };
    for (const auto& c : cases) bench_conv(c, iters);
    bench_pool(iters);
    return 0;
}
