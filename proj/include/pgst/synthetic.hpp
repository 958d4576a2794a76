#pragma once

// Procedural scenes and cameras for tests, gradient checks and the
// self-reconstruction experiments.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "pgst/gaussian.hpp"

namespace pgst::synth {

struct RandomSceneOptions {
    std::size_t count = 32;
    double half_extent = 1.0; // positions uniform in a box of this half size (x, y)
    double depth_extent = 0.5;
    double min_scale = 0.03, max_scale = 0.2;
    double min_opacity = 0.2, max_opacity = 0.95;
    double min_color = 0.05, max_color = 0.95;
    int sh_degree = 0;
};

inline Vec4 random_quaternion(std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    return q.normalized();
}

inline GaussianCloud random_cloud(std::uint64_t seed, const RandomSceneOptions &opt = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    GaussianCloud c;
    c.sh_degree = opt.sh_degree;
    c.resize(opt.count);
    for (std::size_t i = 0; i < opt.count; ++i) {
        c.positions[i] = {uniform(-opt.half_extent, opt.half_extent),
                          uniform(-opt.half_extent, opt.half_extent),
                          uniform(-opt.depth_extent, opt.depth_extent)};
        for (int k = 0; k < 3; ++k)
            c.raw_scales[i][k] = std::log(uniform(opt.min_scale, opt.max_scale));
        c.raw_rotations[i] = random_quaternion(rng) * uniform(0.5, 2.0);
        c.raw_opacities[i] = logit(uniform(opt.min_opacity, opt.max_opacity));
        double *f = c.color(i);
        for (int ch = 0; ch < 3; ++ch) f[ch] = (uniform(opt.min_color, opt.max_color) - 0.5) / kShC0;
        for (std::size_t k = 3; k < c.color_stride(); ++k) f[k] = uniform(-0.1, 0.1);
    }
    return c;
}

/// Camera on a sphere of radius `distance` around the origin, looking at it.
/// `yaw`/`pitch` in radians; yaw 0 looks along +z.
inline Camera orbit_camera(double yaw, double pitch, double distance, int width, int height,
                           double focal) {
    const Vec3 eye(distance * std::cos(pitch) * std::sin(yaw), distance * std::sin(pitch),
                   -distance * std::cos(pitch) * std::cos(yaw));
    return Camera::look_at(eye, Vec3::Zero(), Vec3(0, -1, 0), width, height, focal);
}

inline Camera default_camera(int width = 64, int height = 64) {
    return orbit_camera(0.0, 0.0, 4.0, width, height, width);
}

/// `count` cameras spread over a small arc facing the origin.
inline std::vector<Camera> camera_rig(int count, int width, int height, double spread = 0.35,
                                      double distance = 4.0) {
    std::vector<Camera> cams;
    for (int k = 0; k < count; ++k) {
        const double t = count == 1 ? 0.0 : (2.0 * k / (count - 1) - 1.0);
        const double yaw = spread * t;
        const double pitch = 0.5 * spread * std::sin(std::numbers::pi * (k + 0.5) / count) *
                             ((k % 2) ? 1.0 : -1.0);
        cams.push_back(orbit_camera(yaw, pitch, distance, width, height, width));
    }
    return cams;
}

} // namespace pgst::synth
