#pragma once

#include <array>
#include <string>
#include <vector>

#include "eadnet/rng.hpp"
#include "eadnet/tensor.hpp"

// Blur-pair synthesis: isotropic Gaussian kernels, random motion kernels from
// a Markov-walk camera trajectory, and their application to clear images.

namespace eadnet::blur {

struct BlurKernel {
    i64 size = 0;                 // odd, <= 31
    std::vector<double> w;        // size*size, nonnegative, sums to 1
    double at(i64 y, i64 x) const { return w[static_cast<size_t>(y * size + x)]; }
};

struct TrajectoryParams {
    i64 n_samples = 2000;
    double max_extent = 16.0;          // radius after centering, pixels
    double anxiety = 0.005;            // scales random acceleration
    double impulse_prob = 0.2;         // per-step big direction kick
    double initial_speed_scale = 0.5;  // in units of the per-step length cap
};

struct SynthConfig {
    double p_motion = 0.5;
    double sigma_lo = 1.0, sigma_hi = 3.0;
    i64 kernel_size = 31;
    std::uint64_t seed = 0;
};

/// Metadata for the synth sidecar (one line per generated pair).
struct KernelInfo {
    std::string kind;    // "gaussian" | "motion" | "none"
    i64 size = 0;
    double sigma = 0.0;  // gaussian only
    double sum = 0.0;
};

/// size = 2*ceil(3*sigma)+1, cell-center sampling, renormalized. Sigma is
/// clamped to [0.3, 5.0]; the upper clamp keeps the size within the 31 cap.
BlurKernel gaussian_kernel(double sigma);

/// Markov-walk trajectory of n_samples sub-pixel points. Velocity gets
/// Gaussian acceleration scaled by anxiety plus occasional direction
/// impulses, with speed capped at the per-step length budget
/// 2*max_extent/(n_samples-1). Points are re-centered on their centroid and
/// radially clipped to max_extent, so the max pairwise distance is bounded
/// by 2*max_extent.
std::vector<std::array<double, 2>> motion_trajectory(const TrajectoryParams& p, Rng& rng);
std::vector<std::array<double, 2>> motion_trajectory(const TrajectoryParams& p, std::uint64_t seed);

/// Splats unit mass per point onto the 4 surrounding cells (bilinear) and
/// normalizes. Points that would place nonzero mass outside the grid are an
/// error; callers must choose max_extent within (size-1)/2.
BlurKernel trajectory_to_kernel(const std::vector<std::array<double, 2>>& traj, i64 size);

/// Trajectory -> kernel with the clip radius tightened to what the grid can
/// hold, min(p.max_extent, (size-1)/2), so default params always fit.
BlurKernel motion_kernel(const TrajectoryParams& p, i64 size, Rng& rng);
BlurKernel motion_kernel(const TrajectoryParams& p, i64 size, std::uint64_t seed);

/// Per-channel correlation with reflect padding; accepts [C,H,W] or [H,W].
Tensor<float> apply_blur(const Tensor<float>& img, const BlurKernel& k);

}  // namespace eadnet::blur
