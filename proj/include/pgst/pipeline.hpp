#pragma once

// End-to-end fitting driven by a RunConfig: builds the scene, runs the
// requested stages and collects everything the CLI writes out.

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgst/io/config.hpp"
#include "pgst/io/ply.hpp"
#include "pgst/io/png.hpp"
#include "pgst/scenes.hpp"
#include "pgst/train.hpp"

namespace pgst {

struct FitResult {
    HeadModel head;
    bool two_branch = false;
    TrainLog log;
    std::vector<TrainView> eval_views; // unmasked targets used for reporting
    std::vector<FrameFeatures> frames;
    RenderConfig render;
    std::vector<Plane> stripe_masks; // thin-stripe scene only
    std::vector<TrainView> face_views; // head rig: masked static supervision of the face
    std::vector<std::string> notes;
};

inline bool has_stage(const io::RunConfig &c, const std::string &s) {
    return std::find(c.stages.begin(), c.stages.end(), s) != c.stages.end();
}

/// Final render of the fitted model for a view.
inline Image render_fit(const FitResult &r, const TrainView &v) {
    const FrameFeatures *f =
        v.frame >= 0 && static_cast<std::size_t>(v.frame) < r.frames.size() ? &r.frames[v.frame]
                                                                            : nullptr;
    if (r.two_branch) return render_head(r.head, v.camera, f, r.render).image;
    return rasterize_forward(r.head.face.cloud, v.camera, r.render).image;
}

inline double mean_psnr(const FitResult &r) {
    double total = 0.0;
    for (const auto &v : r.eval_views) total += psnr(render_fit(r, v), v.target);
    return total / static_cast<double>(r.eval_views.size());
}

inline double mean_ssim(const FitResult &r) {
    double total = 0.0;
    for (const auto &v : r.eval_views) total += ssim(render_fit(r, v), v.target);
    return total / static_cast<double>(r.eval_views.size());
}

/// Mean PSNR over the stripe masks of the thin-stripe scene.
inline double stripe_psnr(const FitResult &r) {
    if (r.stripe_masks.size() != r.eval_views.size())
        throw ContractViolation("stripe_psnr: scene has no stripe masks");
    double total = 0.0;
    for (std::size_t k = 0; k < r.eval_views.size(); ++k)
        total += masked_psnr(render_fit(r, r.eval_views[k]), r.eval_views[k].target, r.stripe_masks[k]);
    return total / static_cast<double>(r.eval_views.size());
}

/// Targets on disk: `dir/cameras.json` lists views as
/// {"image": "a.png", "yaw": 0, "pitch": 0, "distance": 4, "focal": 64}.
inline std::vector<TrainView> load_target_directory(const std::filesystem::path &dir) {
    const auto path = dir / "cameras.json";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::exception &e) {
        throw InputError(path.string() + ": " + e.what());
    }
    if (!j.contains("views") || !j["views"].is_array() || j["views"].empty())
        throw InputError(path.string() + ": expected a non-empty 'views' array");
    std::vector<TrainView> views;
    for (const auto &v : j["views"]) {
        try {
            const Image target = io::read_png(dir / v.at("image").get<std::string>());
            const Camera cam = synth::orbit_camera(v.value("yaw", 0.0), v.value("pitch", 0.0),
                                                   v.value("distance", 4.0), target.width,
                                                   target.height, v.value("focal", 1.0 * target.width));
            views.push_back({cam, target, std::nullopt, -1});
        } catch (const nlohmann::json::exception &e) {
            throw InputError(path.string() + ": " + e.what());
        }
    }
    return views;
}

namespace detail {

inline GaussianCloud shifted(GaussianCloud c, const Vec3 &offset) {
    for (auto &p : c.positions) p += offset;
    return c;
}

inline void fit_single(const io::RunConfig &cfg, const std::vector<TrainView> &views,
                       const GaussianCloud &init, double extent, FitResult &r,
                       const IterationHook &hook) {
    r.render = cfg.render;
    r.eval_views = views;
    r.head.face.cloud = cfg.data.init_ply.empty() ? init : io::read_ply(cfg.data.init_ply);
    if (has_stage(cfg, "static"))
        run_stage_static(r.head.face.cloud, views, cfg.effective_schedule(), cfg.render, extent,
                         r.log, "static", hook);
    for (const char *st : {"deform", "finetune"})
        if (has_stage(cfg, st))
            r.notes.push_back(std::string("stage '") + st +
                              "' needs the two-branch head-rig scene; skipped");
}

inline void fit_head(const io::RunConfig &cfg, FitResult &r) {
    scenes::HeadRigOptions opt;
    opt.frames = cfg.data.frames;
    const auto rig = scenes::head_rig(cfg.data.seed, opt);
    const auto sched = cfg.effective_schedule();
    const double extent = scene_extent(rig.cameras);
    r.two_branch = true;
    r.render = cfg.render;
    r.frames = rig.frames;
    r.eval_views = rig.full_frames;
    r.face_views = rig.face_static;
    r.head.mouth_background = rig.truth.mouth_background;

    const auto seed = cfg.data.seed;
    const auto n = static_cast<std::size_t>(cfg.data.init_points);
    if (!cfg.data.init_ply.empty())
        r.head.face.cloud = io::read_ply(cfg.data.init_ply);
    else
        r.head.face.cloud = scenes::random_init(seed ^ 0xfaceull, n, 1.1, 0.1, 0.12);
    r.head.mouth.cloud =
        shifted(scenes::random_init(seed ^ 0x3047ull, n / 2 + 1, 0.35, 0.05, 0.06), Vec3(0, 0, 0.4));

    RenderConfig face_cfg = cfg.render, mouth_cfg = cfg.render;
    face_cfg.background = Vec3::Zero();
    mouth_cfg.background = r.head.mouth_background;
    if (has_stage(cfg, "static")) {
        run_stage_static(r.head.face.cloud, rig.face_static, sched, face_cfg, extent, r.log,
                         "static-face");
        run_stage_static(r.head.mouth.cloud, rig.mouth_static, sched, mouth_cfg, extent, r.log,
                         "static-mouth");
    }
    if (has_stage(cfg, "deform")) {
        const int da = static_cast<int>(rig.frames[0].audio.size());
        const int de = static_cast<int>(rig.frames[0].expression.size());
        r.head.face.deform =
            DeformModel(Branch::face, cfg.mgf, da, de, rig.box_min, rig.box_max, seed ^ 0xf1);
        r.head.mouth.deform =
            DeformModel(Branch::mouth, cfg.mgf, da, de, rig.box_min, rig.box_max, seed ^ 0xf2);
        run_stage_deform(r.head.face.cloud, *r.head.face.deform, rig.face_frames, rig.frames, sched,
                         face_cfg, r.log, "deform-face");
        run_stage_deform(r.head.mouth.cloud, *r.head.mouth.deform, rig.mouth_frames, rig.frames,
                         sched, mouth_cfg, r.log, "deform-mouth");
    }
    if (has_stage(cfg, "finetune"))
        run_stage_finetune(r.head, rig.full_frames, rig.frames, sched, cfg.render, r.log, "finetune");
}

} // namespace detail

/// Runs the configured scene and stages into `r`. Models are updated in
/// place, so after a NumericalError `r` still holds the last good state.
inline void run_fit(const io::RunConfig &cfg, FitResult &r, const IterationHook &hook = {}) {
    cfg.validate();
    if (cfg.data.scene == "head-rig") {
        detail::fit_head(cfg, r);
    } else if (cfg.data.scene == "thin-stripe") {
        const auto scene = scenes::thin_stripe(cfg.data.seed, cfg.data.init_points);
        r.stripe_masks = scene.stripe_masks;
        detail::fit_single(cfg, scene.views, scene.init, scene.extent, r, hook);
    } else if (cfg.data.scene == "directory") {
        const auto views = load_target_directory(cfg.data.targets);
        std::vector<Camera> cams;
        for (const auto &v : views) cams.push_back(v.camera);
        const auto init = scenes::random_init(cfg.data.seed, cfg.data.init_points, 1.0, 0.4, 0.12);
        detail::fit_single(cfg, views, init, scene_extent(cams), r, hook);
    } else {
        const auto scene = scenes::self_reconstruction(cfg.data.seed, cfg.data.init_points);
        detail::fit_single(cfg, scene.views, scene.init, scene.extent, r, hook);
    }
}

inline FitResult run_fit(const io::RunConfig &cfg) {
    FitResult r;
    run_fit(cfg, r);
    return r;
}

} // namespace pgst
