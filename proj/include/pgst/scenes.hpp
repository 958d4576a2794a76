#pragma once

// Synthetic experiment scenes: self-reconstruction, the thin-stripe
// densification ablation and the audio-driven head rig.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "pgst/deform.hpp"
#include "pgst/raster.hpp"
#include "pgst/synthetic.hpp"
#include "pgst/train.hpp"

namespace pgst::scenes {

inline std::vector<TrainView> render_views(const GaussianCloud &truth,
                                           const std::vector<Camera> &cams,
                                           const RenderConfig &rcfg) {
    std::vector<TrainView> views;
    for (const auto &cam : cams) views.push_back({cam, rasterize_forward(truth, cam, rcfg).image, {}, -1});
    return views;
}

/// Uniformly scattered, semi-transparent grey-ish starting cloud.
inline GaussianCloud random_init(std::uint64_t seed, std::size_t count, double half_extent,
                                 double depth_extent, double scale) {
    synth::RandomSceneOptions o;
    o.count = count;
    o.half_extent = half_extent;
    o.depth_extent = depth_extent;
    o.min_scale = o.max_scale = scale;
    o.min_opacity = 0.1;
    o.max_opacity = 0.1;
    o.min_color = 0.3;
    o.max_color = 0.7;
    return synth::random_cloud(seed, o);
}

struct Fit {
    GaussianCloud truth;
    GaussianCloud init;
    std::vector<TrainView> views;
    RenderConfig render;
    double extent = 1.0;
};

/// Hidden 8-Gaussian ground truth seen from 4 cameras at 64×64.
inline Fit self_reconstruction(std::uint64_t seed, std::size_t init_count = 64) {
    Fit f;
    synth::RandomSceneOptions o;
    o.count = 8;
    o.half_extent = 0.8;
    o.depth_extent = 0.4;
    o.min_scale = 0.08;
    o.max_scale = 0.3;
    o.min_opacity = 0.6;
    o.max_opacity = 0.95;
    f.truth = synth::random_cloud(seed, o);
    const auto cams = synth::camera_rig(4, 64, 64, 0.35, 4.0);
    f.views = render_views(f.truth, cams, f.render);
    f.extent = scene_extent(cams);
    f.init = random_init(seed ^ 0xabcdefull, init_count, 1.0, 0.4, 0.12);
    return f;
}

struct StripeFit : Fit {
    std::vector<Plane> stripe_masks; // one per view
};

/// Smooth backdrop crossed by a vertical stripe about 2 px wide whose
/// colour alternates every couple of pixels along its length.
inline StripeFit thin_stripe(std::uint64_t seed, std::size_t init_count = 64) {
    StripeFit f;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianCloud &t = f.truth;
    t.sh_degree = 0;
    auto add = [&](const Vec3 &p, const Vec3 &scale, const Vec3 &rgb, double opacity) {
        const std::size_t i = t.size();
        t.resize(i + 1);
        t.positions[i] = p;
        t.raw_scales[i] = scale.array().log();
        t.raw_rotations[i] = Vec4(1, 0, 0, 0);
        t.raw_opacities[i] = logit(opacity);
        for (int c = 0; c < 3; ++c) t.color(i)[c] = (rgb[c] - 0.5) / kShC0;
    };
    for (int k = 0; k < 6; ++k)
        add({-1.2 + 0.48 * k, 0.6 * (u(rng) - 0.5), 0.3},
            {0.35 + 0.1 * u(rng), 0.6 + 0.2 * u(rng), 0.2},
            {0.2 + 0.5 * u(rng), 0.2 + 0.5 * u(rng), 0.2 + 0.5 * u(rng)}, 0.95);
    const std::size_t stripe_begin = t.size();
    const double x0 = 0.2 * (u(rng) - 0.5);
    const double px = 4.0 / 64.0; // world size of one pixel at the rig distance
    for (int k = 0; k < 24; ++k) {
        const double y = -1.5 + (k + 0.5) * (3.0 / 24);
        const bool light = k % 2 == 0;
        add({x0, y, 0.0}, {0.45 * px, 0.8 * px, 0.45 * px},
            light ? Vec3(0.95, 0.9, 0.8) : Vec3(0.05, 0.1, 0.2), 0.99);
    }
    // Cameras at different distances, so a Gaussian's pixel coverage varies
    // strongly from view to view.
    std::vector<Camera> cams;
    const double distances[] = {2.5, 4.0, 5.5, 8.0};
    for (int k = 0; k < 4; ++k)
        cams.push_back(synth::orbit_camera(0.15 * (k - 1.5), 0.05 * (k % 2 ? 1 : -1),
                                           distances[k], 64, 64, 64));
    f.views = render_views(t, cams, f.render);
    f.extent = scene_extent(cams);
    GaussianCloud stripe;
    stripe.sh_degree = 0;
    for (std::size_t i = stripe_begin; i < t.size(); ++i) stripe.push_from(t, i);
    for (const auto &cam : cams) {
        const auto art = rasterize_forward(stripe, cam, f.render);
        Plane m(cam.width, cam.height);
        for (std::size_t p = 0; p < m.data.size(); ++p)
            m.data[p] = art.final_transmittance.data[p] < 0.5 ? 1.0 : 0.0;
        f.stripe_masks.push_back(std::move(m));
    }
    f.init = random_init(seed ^ 0x5171feull, init_count, 1.3, 0.4, 0.12);
    return f;
}

struct HeadRigOptions {
    int frames = 24;
    int cameras = 3;
    int size = 64;
    double focal = 128;
    int audio_dim = 4;
    int expression_dim = 2;
    Vec3 amplitude = Vec3(0.03, 0.12, 0.0);
};

/// Two-branch synthetic talking head. An opaque ring of face Gaussians
/// leaves a hole through which the inside-mouth cloud is seen; a marked
/// subset of mouth Gaussians moves by amplitude·sin(s) where s is the first
/// audio channel. The other audio and expression channels are distractors.
struct HeadRig {
    HeadModel truth;
    std::vector<std::size_t> marked;
    Vec3 amplitude;
    std::vector<Camera> cameras;
    std::vector<FrameFeatures> frames;
    std::vector<TrainView> face_static, mouth_static; // neutral frame, masked
    std::vector<TrainView> face_frames, mouth_frames; // every frame, masked
    std::vector<TrainView> full_frames;               // every frame, unmasked
    Vec3 box_min = Vec3::Constant(-1.5), box_max = Vec3::Constant(1.5);

    Deformation truth_deltas(const FrameFeatures &f) const {
        auto d = Deformation::zeros(truth.mouth.cloud.size());
        for (auto i : marked) d.d_position[i] = amplitude * std::sin(f.audio[0]);
        return d;
    }
};

inline HeadRig head_rig(std::uint64_t seed, const HeadRigOptions &opt = {}) {
    HeadRig rig;
    rig.amplitude = opt.amplitude;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto add = [&](GaussianCloud &t, const Vec3 &p, double scale, const Vec3 &rgb, double opacity) {
        const std::size_t i = t.size();
        t.resize(i + 1);
        t.positions[i] = p;
        t.raw_scales[i] = Vec3::Constant(std::log(scale));
        t.raw_rotations[i] = synth::random_quaternion(rng);
        t.raw_opacities[i] = logit(opacity);
        for (int c = 0; c < 3; ++c) t.color(i)[c] = (rgb[c] - 0.5) / kShC0;
    };
    GaussianCloud &face = rig.truth.face.cloud;
    face.sh_degree = 0;
    for (int k = 0; k < 16; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 16;
        const double r = 0.9 + 0.04 * u(rng);
        add(face, {r * std::cos(a), r * std::sin(a), 0.0}, 0.15,
            {0.75 + 0.15 * u(rng), 0.55 + 0.1 * u(rng), 0.45 + 0.1 * u(rng)}, 0.98);
    }
    GaussianCloud &mouth = rig.truth.mouth.cloud;
    mouth.sh_degree = 0;
    for (int k = 0; k < 8; ++k) {
        const Vec3 p(-0.24 + 0.16 * (k % 4) + 0.03 * (u(rng) - 0.5),
                     (k < 4 ? -0.12 : 0.12) + 0.03 * (u(rng) - 0.5), 0.4);
        const Vec3 rgb = k < 4 ? Vec3(0.9, 0.9, 0.85) : Vec3(0.6 + 0.2 * u(rng), 0.15, 0.2);
        add(mouth, p, 0.07, rgb, 0.95);
        if (k >= 4) rig.marked.push_back(k);
    }
    rig.truth.mouth_background = Vec3(0.12, 0.03, 0.05);

    for (int k = 0; k < opt.cameras; ++k)
        rig.cameras.push_back(synth::orbit_camera(0.12 * (k - 0.5 * (opt.cameras - 1)),
                                                  0.06 * (k % 2 ? 1 : -1), 4.0, opt.size, opt.size,
                                                  opt.focal));
    for (int f = 0; f < opt.frames; ++f) {
        FrameFeatures ff;
        ff.audio = Eigen::VectorXd(opt.audio_dim);
        ff.expression = Eigen::VectorXd(opt.expression_dim);
        // Frame 0 is neutral; the rest sweep the audio scalar over [-1.6, 1.6].
        ff.audio[0] = f == 0 ? 0.0 : -1.6 + 3.2 * (f - 1) / std::max(1, opt.frames - 2);
        for (int k = 1; k < opt.audio_dim; ++k) ff.audio[k] = 2.0 * u(rng) - 1.0;
        for (int k = 0; k < opt.expression_dim; ++k) ff.expression[k] = 2.0 * u(rng) - 1.0;
        rig.frames.push_back(ff);
    }

    RenderConfig rcfg;
    for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
        const Camera &cam = rig.cameras[c];
        const auto face_art = rasterize_forward(face, cam, rcfg);
        Plane face_mask(cam.width, cam.height), mouth_mask(cam.width, cam.height);
        for (std::size_t p = 0; p < face_mask.data.size(); ++p) {
            const bool opaque = 1.0 - face_art.final_transmittance.data[p] > 0.5;
            face_mask.data[p] = opaque ? 1.0 : 0.0;
            mouth_mask.data[p] = opaque ? 0.0 : 1.0;
        }
        for (int f = 0; f < opt.frames; ++f) {
            HeadModel posed = rig.truth;
            posed.mouth.cloud = apply_deformation(mouth, rig.truth_deltas(rig.frames[f]));
            const Image target = render_head(posed, cam, nullptr, rcfg).image;
            rig.face_frames.push_back({cam, target, face_mask, f});
            rig.mouth_frames.push_back({cam, target, mouth_mask, f});
            rig.full_frames.push_back({cam, target, std::nullopt, f});
            if (f == 0) {
                rig.face_static.push_back({cam, target, face_mask, f});
                rig.mouth_static.push_back({cam, target, mouth_mask, f});
            }
        }
    }
    return rig;
}

/// Mean over frames and marked Gaussians of ‖predicted − true offset‖.
inline double marked_position_error(const HeadRig &rig, const DeformModel &model,
                                    const GaussianCloud &base) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto &f : rig.frames) {
        const auto pred = model.forward(base, f).deltas;
        const auto truth = rig.truth_deltas(f);
        for (auto i : rig.marked) {
            total += (base.positions[i] + pred.d_position[i] -
                      (rig.truth.mouth.cloud.positions[i] + truth.d_position[i]))
                         .norm();
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

} // namespace pgst::scenes
