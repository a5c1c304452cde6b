#include "eadnet/blur.hpp"

#include <cmath>

#include "eadnet/kernels.hpp"

namespace eadnet::blur {

BlurKernel gaussian_kernel(double sigma) {
    sigma = std::min(5.0, std::max(0.3, sigma));
    const i64 size = 2 * static_cast<i64>(std::ceil(3.0 * sigma)) + 1;
    BlurKernel k;
    k.size = size;
    k.w.resize(static_cast<size_t>(size * size));
    const i64 c = size / 2;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double total = 0.0;
    for (i64 y = 0; y < size; ++y)
        for (i64 x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y - c), dx = static_cast<double>(x - c);
            const double v = std::exp(-(dx * dx + dy * dy) * inv2s2);
            k.w[static_cast<size_t>(y * size + x)] = v;
            total += v;
        }
    for (auto& v : k.w) v /= total;
    return k;
}

namespace {

std::vector<std::array<double, 2>> trajectory_impl(const TrajectoryParams& p, Rng& rng,
                                                   double clip_radius) {
    require<Error>(p.n_samples >= 2, "trajectory: n_samples must be >= 2");
    const i64 n = p.n_samples;
    const double step = 2.0 * p.max_extent / static_cast<double>(n - 1);

    std::vector<std::array<double, 2>> pts(static_cast<size_t>(n));
    const double phi0 = rng.uniform_in(0.0, 2.0 * 3.14159265358979323846);
    double vx = p.initial_speed_scale * step * std::cos(phi0);
    double vy = p.initial_speed_scale * step * std::sin(phi0);
    double x = 0.0, y = 0.0;
    pts[0] = {0.0, 0.0};
    for (i64 i = 1; i < n; ++i) {
        vx += p.anxiety * step * rng.normal();
        vy += p.anxiety * step * rng.normal();
        if (rng.bernoulli(p.impulse_prob)) {
            const double phi = rng.uniform_in(0.0, 2.0 * 3.14159265358979323846);
            vx += 0.5 * step * std::cos(phi);
            vy += 0.5 * step * std::sin(phi);
        }
        const double speed = std::hypot(vx, vy);
        if (speed > step) {
            vx *= step / speed;
            vy *= step / speed;
        }
        x += vx;
        y += vy;
        pts[static_cast<size_t>(i)] = {x, y};
    }

    double cx = 0.0, cy = 0.0;
    for (const auto& pt : pts) {
        cx += pt[0];
        cy += pt[1];
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    for (auto& pt : pts) {
        pt[0] -= cx;
        pt[1] -= cy;
        const double r = std::hypot(pt[0], pt[1]);
        if (r > clip_radius) {
            pt[0] *= clip_radius / r;
            pt[1] *= clip_radius / r;
        }
    }
    return pts;
}

}  // namespace

std::vector<std::array<double, 2>> motion_trajectory(const TrajectoryParams& p, Rng& rng) {
    return trajectory_impl(p, rng, p.max_extent);
}

std::vector<std::array<double, 2>> motion_trajectory(const TrajectoryParams& p, std::uint64_t seed) {
    Rng rng(seed);
    return trajectory_impl(p, rng, p.max_extent);
}

BlurKernel trajectory_to_kernel(const std::vector<std::array<double, 2>>& traj, i64 size) {
    require<Error>(size >= 1 && size % 2 == 1, "trajectory_to_kernel: size must be odd");
    require<Error>(!traj.empty(), "trajectory_to_kernel: empty trajectory");
    BlurKernel k;
    k.size = size;
    k.w.assign(static_cast<size_t>(size * size), 0.0);
    const double c = static_cast<double>(size / 2);
    for (const auto& pt : traj) {
        const double gx = c + pt[0], gy = c + pt[1];
        const i64 x0 = static_cast<i64>(std::floor(gx)), y0 = static_cast<i64>(std::floor(gy));
        const double wx = gx - static_cast<double>(x0), wy = gy - static_cast<double>(y0);
        const double wgt[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
        const i64 cx[4] = {x0, x0 + 1, x0, x0 + 1};
        const i64 cy[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int q = 0; q < 4; ++q) {
            if (wgt[q] == 0.0) continue;
            require<Error>(cx[q] >= 0 && cx[q] < size && cy[q] >= 0 && cy[q] < size,
                           "trajectory_to_kernel: point (" + std::to_string(pt[0]) + "," +
                               std::to_string(pt[1]) + ") exceeds the " + std::to_string(size) +
                               "x" + std::to_string(size) + " grid after centering");
            k.w[static_cast<size_t>(cy[q] * size + cx[q])] += wgt[q];
        }
    }
    double total = 0.0;
    for (double v : k.w) total += v;
    for (auto& v : k.w) v /= total;
    return k;
}

BlurKernel motion_kernel(const TrajectoryParams& p, i64 size, Rng& rng) {
    const double clip = std::min(p.max_extent, static_cast<double>(size / 2));
    return trajectory_to_kernel(trajectory_impl(p, rng, clip), size);
}

BlurKernel motion_kernel(const TrajectoryParams& p, i64 size, std::uint64_t seed) {
    Rng rng(seed);
    return motion_kernel(p, size, rng);
}

Tensor<float> apply_blur(const Tensor<float>& img, const BlurKernel& k) {
    require<ShapeError>(img.rank() == 2 || img.rank() == 3,
                        "apply_blur: want [H,W] or [C,H,W], got " + shape_str(img.shape));
    const i64 c = img.rank() == 3 ? img.dim(0) : 1;
    const i64 h = img.dim(img.rank() - 2), w = img.dim(img.rank() - 1);
    require<ShapeError>(k.size <= h && k.size <= w,
                        "apply_blur: kernel " + std::to_string(k.size) + "x" +
                            std::to_string(k.size) + " larger than image " + std::to_string(h) +
                            "x" + std::to_string(w));
    Tensor<float> out(img.shape);
    for (i64 ci = 0; ci < c; ++ci)
        kernels::correlate2d_reflect(img.ptr() + ci * h * w, h, w, k.w.data(), k.size,
                                     out.ptr() + ci * h * w);
    return out;
}

}  // namespace eadnet::blur
