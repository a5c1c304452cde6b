#pragma once

#include "eadnet/tensor.hpp"

// Classic Canny pipeline for ground-truth edge maps: Gaussian smoothing,
// Sobel gradients, 4-bin non-maximum suppression, relative double threshold,
// 8-connected hysteresis.

namespace eadnet::edge {

struct CannyConfig {
    double smooth_sigma = 1.4;
    double low = 0.1;   // relative to the max raw gradient magnitude
    double high = 0.2;
};

/// gray: [H,W] in [0,1], H,W >= 7. Returns a strictly binary [H,W] map.
Tensor<float> canny(const Tensor<float>& gray, const CannyConfig& cfg = {});

}  // namespace eadnet::edge
