#include "eadnet/synth.hpp"

#include "eadnet/image_io.hpp"

namespace eadnet::blur {

SamplePair synth_pair(const Tensor<float>& clear, const SynthConfig& cfg,
                      const edge::CannyConfig& canny_cfg, std::uint64_t seed) {
    require<ShapeError>(clear.rank() == 3 && clear.dim(0) == 3,
                        "synth_pair: clear image must be [3,H,W], got " + shape_str(clear.shape));
    require<Error>(cfg.p_motion >= 0.0 && cfg.p_motion <= 1.0, "synth_pair: p_motion not in [0,1]");
    require<Error>(cfg.sigma_lo > 0.0 && cfg.sigma_lo <= cfg.sigma_hi,
                   "synth_pair: sigma range must be positive with low <= high");
    require<Error>(cfg.kernel_size % 2 == 1 && cfg.kernel_size >= 3 && cfg.kernel_size <= 31,
                   "synth_pair: kernel size must be odd in [3,31]");

    Rng rng(seed);
    SamplePair out;
    out.clear = clear;
    BlurKernel k;
    if (rng.bernoulli(cfg.p_motion)) {
        k = motion_kernel(TrajectoryParams{}, cfg.kernel_size, rng);
        out.kernel.kind = "motion";
    } else {
        const double sigma = rng.uniform_in(cfg.sigma_lo, cfg.sigma_hi);
        k = gaussian_kernel(sigma);
        out.kernel.kind = "gaussian";
        out.kernel.sigma = sigma;
    }
    out.kernel.size = k.size;
    for (double v : k.w) out.kernel.sum += v;
    out.blurry = apply_blur(clear, k);
    out.edge = edge::canny(img::to_gray(clear), canny_cfg);
    return out;
}

}  // namespace eadnet::blur
