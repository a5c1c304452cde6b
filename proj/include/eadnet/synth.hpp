#pragma once

#include "eadnet/blur.hpp"
#include "eadnet/canny.hpp"

namespace eadnet::blur {

struct SamplePair {
    Tensor<float> clear;   // [3,H,W]
    Tensor<float> blurry;  // [3,H,W]
    Tensor<float> edge;    // [H,W] in {0,1}, from the clear image
    KernelInfo kernel;
};

/// One training triple: a p_motion coin picks motion vs Gaussian blur
/// (Gaussian sigma uniform in the configured range), the ground-truth edge
/// map comes from Canny on the clear image. Fully determined by (cfg, seed).
SamplePair synth_pair(const Tensor<float>& clear, const SynthConfig& cfg,
                      const edge::CannyConfig& canny_cfg, std::uint64_t seed);

}  // namespace eadnet::blur
