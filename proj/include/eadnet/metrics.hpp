#pragma once

#include <string>
#include <vector>

#include "eadnet/tensor.hpp"

// Full-reference quality metrics. SSIM family accepts [H,W] directly or
// [C,H,W]; RGB inputs are reduced to luma by default (per-channel averaging
// available). All internal accumulation is double precision.

namespace eadnet::metrics {

/// 10*log10(peak^2/MSE); returns +infinity when the images are identical.
double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak);

enum class ChannelMode { luma, per_channel_mean };

/// 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic range L.
/// Windows are fully interior (no padding); mean of the local SSIM map.
double ssim(const Tensor<float>& a, const Tensor<float>& b, double L = 1.0,
            ChannelMode mode = ChannelMode::luma);

/// Multi-scale SSIM: contrast-structure means at every scale, the full SSIM
/// mean at the coarsest, combined as a weighted geometric product with the
/// standard weights (renormalized when scales != 5). 2x2 mean pooling
/// between scales. scales=1 reduces to ssim exactly.
double ms_ssim(const Tensor<float>& a, const Tensor<float>& b, int scales = 5, double L = 1.0,
               ChannelMode mode = ChannelMode::luma);

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct MetricReport {
    std::vector<std::string> metric_names;
    std::vector<std::string> ids;                 // one per image
    std::vector<std::vector<double>> values;      // [image][metric]

    std::vector<double> means() const;            // arithmetic mean per metric
};

/// Line-oriented rendering: one `<image-id>\t<metric>=<value>` line per
/// (image, metric) pair, then a MEAN row per metric. Infinite values print
/// as "inf".
std::string format_report(const MetricReport& r);

std::string format_metric_value(double v);

}  // namespace eadnet::metrics
