#include "eadnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "eadnet/image_io.hpp"

namespace eadnet::metrics {

double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak) {
    require<ShapeError>(a.same_shape(b), "psnr: shape mismatch " + shape_str(a.shape) + " vs " +
                                             shape_str(b.shape));
    require<Error>(peak > 0.0, "psnr: peak must be positive");
    require<ShapeError>(a.numel() > 0, "psnr: empty tensors");
    double mse = 0.0;
    for (i64 i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWin = 11;

const double* ssim_window() {
    static double w[kWin * kWin];
    static bool init = false;
    if (!init) {
        const double sigma = 1.5;
        double total = 0.0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - kWin / 2, dx = x - kWin / 2;
                w[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                total += w[y * kWin + x];
            }
        for (double& v : w) v /= total;
        init = true;
    }
    return w;
}

struct PlaneList {
    std::vector<std::vector<double>> planes;  // each H*W
    i64 h = 0, w = 0;
};

PlaneList to_planes(const Tensor<float>& t, ChannelMode mode, const char* who) {
    PlaneList out;
    if (t.rank() == 2) {
        out.h = t.dim(0);
        out.w = t.dim(1);
        out.planes.emplace_back(t.data.begin(), t.data.end());
        return out;
    }
    require<ShapeError>(t.rank() == 3, std::string(who) + ": want [H,W] or [C,H,W], got " +
                                           shape_str(t.shape));
    out.h = t.dim(1);
    out.w = t.dim(2);
    if (t.dim(0) == 3 && mode == ChannelMode::luma) {
        const auto g = img::to_gray(t);
        out.planes.emplace_back(g.data.begin(), g.data.end());
    } else {
        for (i64 c = 0; c < t.dim(0); ++c)
            out.planes.emplace_back(t.data.begin() + c * out.h * out.w,
                                    t.data.begin() + (c + 1) * out.h * out.w);
    }
    return out;
}

struct SsimSums {
    double ssim = 0.0;  // mean of l*cs over windows
    double cs = 0.0;    // mean of cs over windows
};

SsimSums ssim_plane(const std::vector<double>& a, const std::vector<double>& b, i64 h, i64 w,
                    double L) {
    const double* win = ssim_window();
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);
    const i64 oh = h - kWin + 1, ow = w - kWin + 1;
    double sum_ssim = 0.0, sum_cs = 0.0;
    for (i64 y = 0; y < oh; ++y)
        for (i64 x = 0; x < ow; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int ky = 0; ky < kWin; ++ky)
                for (int kx = 0; kx < kWin; ++kx) {
                    const double g = win[ky * kWin + kx];
                    const double va = a[static_cast<size_t>((y + ky) * w + x + kx)];
                    const double vb = b[static_cast<size_t>((y + ky) * w + x + kx)];
                    ma += g * va;
                    mb += g * vb;
                    saa += g * va * va;
                    sbb += g * vb * vb;
                    sab += g * va * vb;
                }
            const double var_a = saa - ma * ma;
            const double var_b = sbb - mb * mb;
            const double cov = sab - ma * mb;
            const double l = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            const double cs = (2 * cov + c2) / (var_a + var_b + c2);
            sum_ssim += l * cs;
            sum_cs += cs;
        }
    const double n = static_cast<double>(oh * ow);
    return {sum_ssim / n, sum_cs / n};
}

SsimSums ssim_all_planes(const PlaneList& pa, const PlaneList& pb, double L) {
    SsimSums total;
    for (size_t c = 0; c < pa.planes.size(); ++c) {
        const auto s = ssim_plane(pa.planes[c], pb.planes[c], pa.h, pa.w, L);
        total.ssim += s.ssim;
        total.cs += s.cs;
    }
    total.ssim /= static_cast<double>(pa.planes.size());
    total.cs /= static_cast<double>(pa.planes.size());
    return total;
}

void mean_pool2(PlaneList& p) {
    const i64 oh = p.h / 2, ow = p.w / 2;
    for (auto& plane : p.planes) {
        std::vector<double> out(static_cast<size_t>(oh * ow));
        for (i64 y = 0; y < oh; ++y)
            for (i64 x = 0; x < ow; ++x)
                out[static_cast<size_t>(y * ow + x)] =
                    0.25 * (plane[static_cast<size_t>(2 * y * p.w + 2 * x)] +
                            plane[static_cast<size_t>(2 * y * p.w + 2 * x + 1)] +
                            plane[static_cast<size_t>((2 * y + 1) * p.w + 2 * x)] +
                            plane[static_cast<size_t>((2 * y + 1) * p.w + 2 * x + 1)]);
        plane = std::move(out);
    }
    p.h = oh;
    p.w = ow;
}

void check_pair(const Tensor<float>& a, const Tensor<float>& b, const char* who) {
    require<ShapeError>(a.same_shape(b), std::string(who) + ": shape mismatch " +
                                             shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace

double ssim(const Tensor<float>& a, const Tensor<float>& b, double L, ChannelMode mode) {
    check_pair(a, b, "ssim");
    const auto pa = to_planes(a, mode, "ssim");
    const auto pb = to_planes(b, mode, "ssim");
    require<ShapeError>(pa.h >= kWin && pa.w >= kWin,
                        "ssim: image " + std::to_string(pa.h) + "x" + std::to_string(pa.w) +
                            " smaller than the 11x11 window");
    return ssim_all_planes(pa, pb, L).ssim;
}

double ms_ssim(const Tensor<float>& a, const Tensor<float>& b, int scales, double L,
               ChannelMode mode) {
    check_pair(a, b, "ms_ssim");
    require<Error>(scales >= 1 && scales <= 5, "ms_ssim: scales must be in 1..5");
    static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double wsum = 0.0;
    for (int j = 0; j < scales; ++j) wsum += kWeights[j];

    auto pa = to_planes(a, mode, "ms_ssim");
    auto pb = to_planes(b, mode, "ms_ssim");
    const i64 need = static_cast<i64>(kWin) << (scales - 1);
    require<ShapeError>(pa.h >= need && pa.w >= need,
                        "ms_ssim: image " + std::to_string(pa.h) + "x" + std::to_string(pa.w) +
                            " too small for " + std::to_string(scales) +
                            " scales (need >= " + std::to_string(need) + "); lower the scale count");

    double product = 1.0;
    for (int j = 0; j < scales; ++j) {
        const auto s = ssim_all_planes(pa, pb, L);
        const double wj = kWeights[j] / wsum;
        // negative means clamp to zero before the fractional power
        const double base = std::max(0.0, j == scales - 1 ? s.ssim : s.cs);
        product *= std::pow(base, wj);
        if (j + 1 < scales) mean_pool2(pa), mean_pool2(pb);
    }
    return product;
}

std::vector<double> MetricReport::means() const {
    std::vector<double> m(metric_names.size(), 0.0);
    for (const auto& row : values)
        for (size_t k = 0; k < m.size(); ++k) m[k] += row[k];
    for (auto& v : m) v /= values.empty() ? 1.0 : static_cast<double>(values.size());
    return m;
}

std::string format_metric_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string format_report(const MetricReport& r) {
    std::string out;
    for (size_t i = 0; i < r.ids.size(); ++i)
        for (size_t k = 0; k < r.metric_names.size(); ++k)
            out += r.ids[i] + "\t" + r.metric_names[k] + "=" +
                   format_metric_value(r.values[i][k]) + "\n";
    const auto m = r.means();
    for (size_t k = 0; k < r.metric_names.size(); ++k)
        out += "MEAN\t" + r.metric_names[k] + "=" + format_metric_value(m[k]) + "\n";
    return out;
}

}  // namespace eadnet::metrics
