#include "eadnet/canny.hpp"

#include <cmath>
#include <vector>

#include "eadnet/blur.hpp"
#include "eadnet/kernels.hpp"

namespace eadnet::edge {

Tensor<float> canny(const Tensor<float>& gray, const CannyConfig& cfg) {
    require<ShapeError>(gray.rank() == 2, "canny: want [H,W], got " + shape_str(gray.shape));
    const i64 h = gray.dim(0), w = gray.dim(1);
    require<ShapeError>(h >= 7 && w >= 7, "canny: image too small (" + std::to_string(h) + "x" +
                                              std::to_string(w) + ", need >= 7)");
    require<Error>(cfg.low > 0.0 && cfg.low < cfg.high && cfg.high <= 1.0,
                   "canny: thresholds must satisfy 0 < low < high <= 1");

    // smoothing (double precision throughout the gradient stage)
    const auto gk = blur::gaussian_kernel(cfg.smooth_sigma);
    std::vector<double> img(static_cast<size_t>(h * w));
    for (i64 i = 0; i < h * w; ++i) img[static_cast<size_t>(i)] = gray.data[static_cast<size_t>(i)];
    std::vector<double> smooth(static_cast<size_t>(h * w));
    kernels::correlate2d_reflect(img.data(), h, w, gk.w.data(), gk.size, smooth.data());

    // Sobel gradients, reflect borders
    std::vector<double> mag(static_cast<size_t>(h * w)), dir(static_cast<size_t>(h * w));
    double maxgrad = 0.0;
    auto at = [&](i64 y, i64 x) {
        return smooth[static_cast<size_t>(kernels::reflect_index(y, h) * w +
                                          kernels::reflect_index(x, w))];
    };
    for (i64 y = 0; y < h; ++y)
        for (i64 x = 0; x < w; ++x) {
            const double gx = -at(y - 1, x - 1) + at(y - 1, x + 1) - 2 * at(y, x - 1) +
                              2 * at(y, x + 1) - at(y + 1, x - 1) + at(y + 1, x + 1);
            const double gy = -at(y - 1, x - 1) - 2 * at(y - 1, x) - at(y - 1, x + 1) +
                              at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1);
            const double m = std::hypot(gx, gy);
            mag[static_cast<size_t>(y * w + x)] = m;
            dir[static_cast<size_t>(y * w + x)] = std::atan2(gy, gx);
            maxgrad = std::max(maxgrad, m);
        }

    Tensor<float> out({h, w});
    if (maxgrad == 0.0) return out;  // constant image

    // non-maximum suppression along the quantized gradient direction;
    // asymmetric tie-break (strictly greater than one side, at least equal
    // to the other) keeps symmetric step edges one pixel wide
    std::vector<double> nms(static_cast<size_t>(h * w), 0.0);
    for (i64 y = 1; y < h - 1; ++y)
        for (i64 x = 1; x < w - 1; ++x) {
            const double m = mag[static_cast<size_t>(y * w + x)];
            if (m == 0.0) continue;
            double a = dir[static_cast<size_t>(y * w + x)] * (180.0 / 3.14159265358979323846);
            if (a < 0) a += 180.0;
            i64 dx, dy;
            if (a < 22.5 || a >= 157.5) {
                dx = 1; dy = 0;          // horizontal gradient, E-W neighbors
            } else if (a < 67.5) {
                dx = 1; dy = 1;          // diagonal
            } else if (a < 112.5) {
                dx = 0; dy = 1;          // vertical gradient, N-S neighbors
            } else {
                dx = -1; dy = 1;         // anti-diagonal
            }
            const double m_plus = mag[static_cast<size_t>((y + dy) * w + (x + dx))];
            const double m_minus = mag[static_cast<size_t>((y - dy) * w + (x - dx))];
            if (m > m_minus && m >= m_plus) nms[static_cast<size_t>(y * w + x)] = m;
        }

    const double lo = cfg.low * maxgrad, hi = cfg.high * maxgrad;
    std::vector<unsigned char> cls(static_cast<size_t>(h * w), 0);  // 0 none, 1 weak, 2 strong
    std::vector<i64> stack;
    for (i64 i = 0; i < h * w; ++i) {
        if (nms[static_cast<size_t>(i)] >= hi) {
            cls[static_cast<size_t>(i)] = 2;
            stack.push_back(i);
        } else if (nms[static_cast<size_t>(i)] >= lo) {
            cls[static_cast<size_t>(i)] = 1;
        }
    }

    // hysteresis: 8-connected flood from strong pixels through weak ones
    while (!stack.empty()) {
        const i64 i = stack.back();
        stack.pop_back();
        const i64 y = i / w, x = i % w;
        out.data[static_cast<size_t>(i)] = 1.0f;
        for (i64 ny = y - 1; ny <= y + 1; ++ny)
            for (i64 nx = x - 1; nx <= x + 1; ++nx) {
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const i64 j = ny * w + nx;
                if (cls[static_cast<size_t>(j)] == 1) {
                    cls[static_cast<size_t>(j)] = 2;
                    stack.push_back(j);
                }
            }
    }
    return out;
}

}  // namespace eadnet::edge
