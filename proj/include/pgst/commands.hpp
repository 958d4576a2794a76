#pragma once

// Command implementations behind the `pgst` executable. Each command
// reports progress on `out` and signals failure by exception; run_command
// maps exceptions to exit codes.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pgst/gradcheck.hpp"
#include "pgst/io/checkpoint.hpp"
#include "pgst/io/features.hpp"
#include "pgst/io/png.hpp"
#include "pgst/pipeline.hpp"

namespace pgst::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kFailed = 1, kInput = 2, kNumerical = 3 };

/// Runs fn and converts the error taxonomy into exit codes, printing the
/// message to `err`.
template <typename Fn>
int run_command(std::ostream &err, Fn &&fn) {
    try {
        return fn();
    } catch (const NumericalError &e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const InputError &e) {
        err << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const DegenerateInput &e) {
        err << "degenerate input: " << e.what() << '\n';
        return kInput;
    } catch (const ContractViolation &e) {
        err << "invalid request: " << e.what() << '\n';
        return kInput;
    } catch (const fs::filesystem_error &e) {
        err << "input error: " << e.what() << '\n';
        return kInput;
    }
}

namespace detail {

inline std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline void write_text(const fs::path &path, const std::string &text) {
    io::write_file_atomic(path, text);
}

/// One preview per camera: the first supervised frame seen from it.
inline std::vector<const TrainView *> preview_views(const FitResult &r) {
    std::vector<const TrainView *> out;
    for (const auto &v : r.eval_views)
        if (v.frame <= 0) out.push_back(&v);
    return out;
}

inline void write_fit_outputs(const FitResult &r, const fs::path &out) {
    fs::create_directories(out / "previews");
    io::save_checkpoint(out / "checkpoint", r.head);
    std::ostringstream log, events;
    r.log.write_csv(log);
    write_text(out / "log.csv", log.str());
    write_densify_log_header(events);
    for (const auto &e : r.log.densify_events) write_densify_event(events, e);
    write_text(out / "densify.csv", events.str());
    if (!r.frames.empty()) {
        io::FeatureSequence seq;
        seq.audio_dim = static_cast<int>(r.frames[0].audio.size());
        seq.expression_dim = static_cast<int>(r.frames[0].expression.size());
        seq.frames = r.frames;
        io::write_features(out / "features.pgsf", seq);
    }
    const auto previews = preview_views(r);
    for (std::size_t k = 0; k < previews.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%02zu.png", k);
        io::write_png(out / "previews" / name, render_fit(r, *previews[k]));
    }
}

inline std::size_t point_count(const HeadModel &h) { return h.face.cloud.size() + h.mouth.cloud.size(); }

} // namespace detail

/// fit: runs the configured stages and writes checkpoint/, log.csv,
/// densify.csv, summary.json, previews/ and, for the head rig, the
/// driving features.pgsf. On divergence the last good
/// state is still written before the NumericalError propagates.
inline int cmd_fit(const io::RunConfig &cfg, const fs::path &out, std::ostream &os) {
    cfg.validate();
    FitResult r;
    try {
        run_fit(cfg, r);
    } catch (const NumericalError &) {
        if (r.eval_views.empty()) throw;
        detail::write_fit_outputs(r, out);
        os << "diverged; last good state written to " << out.string() << '\n';
        throw;
    }
    for (const auto &n : r.notes) os << "note: " << n << '\n';
    detail::write_fit_outputs(r, out);
    nlohmann::json summary;
    summary["scene"] = cfg.data.scene;
    summary["policy"] = to_string(cfg.densify.policy);
    summary["iterations"] = r.log.rows.size();
    summary["points"] = detail::point_count(r.head);
    summary["psnr"] = mean_psnr(r);
    summary["ssim"] = mean_ssim(r);
    summary["densify_events"] = r.log.densify_events.size();
    if (!r.stripe_masks.empty()) summary["stripe_psnr"] = stripe_psnr(r);
    detail::write_text(out / "summary.json", summary.dump(2) + "\n");
    os << "scene " << cfg.data.scene << ", " << r.log.rows.size() << " iterations, N "
       << detail::point_count(r.head) << ", PSNR " << detail::fixed(summary["psnr"].get<double>(), 2)
       << " dB, SSIM " << detail::fixed(summary["ssim"].get<double>()) << '\n';
    return kOk;
}

/// Loads `path` and checks its dimensions against the checkpoint.
inline io::FeatureSequence load_features_for(const HeadModel &h, const fs::path &path) {
    auto seq = io::read_features(path);
    for (const auto *b : {&h.face, &h.mouth}) {
        if (!b->deform) continue;
        if (seq.audio_dim != b->deform->audio_dim() ||
            (b->deform->branch() == Branch::face && seq.expression_dim != b->deform->expression_dim()))
            throw InputError(path.string() + ": feature dimensions (" + std::to_string(seq.audio_dim) +
                             ", " + std::to_string(seq.expression_dim) +
                             ") do not match the checkpoint");
    }
    return seq;
}

/// Renders a checkpoint. Two-branch checkpoints are composited; a face-only
/// checkpoint is rendered over the configured background.
inline Image render_checkpoint(const HeadModel &h, const Camera &cam, const FrameFeatures *frame,
                               const RenderConfig &rcfg) {
    if (h.mouth.cloud.size() == 0 && h.mouth.deform)
        throw InputError("checkpoint has a mouth deformation model but no mouth cloud; cannot composite");
    if (h.mouth.cloud.size() > 0) return render_head(h, cam, frame, rcfg).image;
    return render_branch(h.face, cam, frame, rcfg, rcfg.background).art.image;
}

inline int cmd_render(const io::RunConfig &cfg, const fs::path &checkpoint,
                      const std::optional<fs::path> &features, int frame, const fs::path &out,
                      std::ostream &os) {
    const HeadModel h = io::load_checkpoint(checkpoint);
    std::optional<io::FeatureSequence> seq;
    if (features) {
        seq = load_features_for(h, *features);
        if (frame < 0 || static_cast<std::size_t>(frame) >= seq->frames.size())
            throw InputError("frame " + std::to_string(frame) + " is outside " + features->string());
    }
    const Image img = render_checkpoint(h, cfg.camera.camera(), seq ? &seq->frames[frame] : nullptr,
                                        cfg.render);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_png(out, img);
    os << "wrote " << out.string() << '\n';
    return kOk;
}

/// animate: one numbered PNG per feature frame.
inline int cmd_animate(const io::RunConfig &cfg, const fs::path &checkpoint,
                       const fs::path &features, const fs::path &out, std::ostream &os) {
    const HeadModel h = io::load_checkpoint(checkpoint);
    const auto seq = load_features_for(h, features);
    fs::create_directories(out);
    const Camera cam = cfg.camera.camera();
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05zu.png", f);
        io::write_png(out / name, render_checkpoint(h, cam, &seq.frames[f], cfg.render));
    }
    os << "wrote " << seq.frames.size() << " frames to " << out.string() << '\n';
    return kOk;
}

namespace detail {

/// Render of `cloud` from `cam` with every centre marked by a white pixel.
inline Image point_distribution(const GaussianCloud &cloud, const Camera &cam, const RenderConfig &rcfg) {
    Image img = rasterize_forward(cloud, cam, rcfg).image;
    for (auto &v : img.data) v *= 0.35;
    for (const auto &p : cloud.positions) {
        const Vec3 c = cam.to_camera(p);
        if (c.z() <= cam.near) continue;
        const int u = static_cast<int>(std::floor(cam.fx * c.x() / c.z() + cam.cx));
        const int v = static_cast<int>(std::floor(cam.fy * c.y() / c.z() + cam.cy));
        if (u < 0 || v < 0 || u >= img.width || v >= img.height) continue;
        for (int ch = 0; ch < 3; ++ch) img.data[(static_cast<std::size_t>(v) * img.width + u) * 3 + ch] = 1.0;
    }
    return img;
}

} // namespace detail

/// compare-densify: two static fits that differ only in the densification
/// policy. Reports N, PSNR, SSIM, stripe PSNR (thin-stripe scene) and the
/// densify event count at four evenly spaced checkpoints per policy.
inline int cmd_compare_densify(io::RunConfig cfg, const fs::path &out, std::ostream &os) {
    cfg.validate();
    if (cfg.data.scene == "head-rig")
        throw InputError("compare-densify runs on single-branch scenes (self-reconstruction, "
                         "thin-stripe, directory)");
    cfg.stages = {"static"};
    const int iters = cfg.schedule.iterations.static_init;
    if (iters < 1) throw InputError("compare-densify needs schedule.static_iters ≥ 1");
    fs::create_directories(out);
    std::ostringstream report;
    report << "policy,iteration,N,psnr,ssim,stripe_psnr,densify_events\n";
    struct Final {
        std::string policy;
        double psnr, stripe;
        std::size_t n;
    };
    std::vector<Final> finals;
    for (auto policy : {DensifyPolicy::baseline, DensifyPolicy::pixel_aware}) {
        cfg.densify.policy = policy;
        FitResult r;
        auto hook = [&](int done, const GaussianCloud &cloud) {
            if (done % std::max(1, iters / 4) != 0 && done != iters) return;
            if (done != iters && done / std::max(1, iters / 4) > 3) return;
            FitResult snap;
            snap.render = r.render;
            snap.eval_views = r.eval_views;
            snap.stripe_masks = r.stripe_masks;
            snap.head.face.cloud = cloud;
            report << to_string(policy) << ',' << done << ',' << cloud.size() << ','
                   << detail::fixed(mean_psnr(snap)) << ',' << detail::fixed(mean_ssim(snap)) << ','
                   << (snap.stripe_masks.empty() ? std::string("") : detail::fixed(stripe_psnr(snap)))
                   << ',' << r.log.densify_events.size() << '\n';
        };
        run_fit(cfg, r, hook);
        const double stripe = r.stripe_masks.empty() ? 0.0 : stripe_psnr(r);
        finals.push_back({to_string(policy), mean_psnr(r), stripe, r.head.face.cloud.size()});
        io::write_png(out / (std::string("points_") + to_string(policy) + ".png"),
                      detail::point_distribution(r.head.face.cloud, r.eval_views[0].camera, r.render));
        io::write_png(out / (std::string("render_") + to_string(policy) + ".png"),
                      render_fit(r, r.eval_views[0]));
    }
    detail::write_text(out / "report.csv", report.str());
    for (const auto &f : finals) {
        os << std::left << std::setw(12) << f.policy << " N " << std::setw(6) << f.n << " PSNR "
           << detail::fixed(f.psnr, 2);
        if (f.stripe > 0) os << "  stripe PSNR " << detail::fixed(f.stripe, 2);
        os << '\n';
    }
    return kOk;
}

/// gradcheck: every finite-difference suite, one line per parameter class.
inline int cmd_gradcheck(const gradcheck::Options &opt, std::ostream &os) {
    bool ok = true;
    os << std::left << std::setw(16) << "suite" << std::setw(22) << "class" << std::setw(14)
       << "max_rel_err" << std::setw(11) << "instances" << "result\n";
    for (const auto &r : gradcheck::check_all(opt)) {
        const bool pass = r.passed(opt.tolerance);
        ok = ok && pass;
        std::ostringstream err;
        err << std::scientific << std::setprecision(2) << r.max_rel_error;
        os << std::setw(16) << r.suite << std::setw(22) << r.param_class << std::setw(14) << err.str()
           << std::setw(11) << r.instances << (pass ? "PASS" : "FAIL") << '\n';
    }
    return ok ? kOk : kFailed;
}

/// stats: per-Gaussian densification statistics of a cloud (the scene's
/// initial cloud unless a checkpoint is given) over the training views of
/// the configured scene, under both policies. For the head rig this is the
/// face branch.
inline int cmd_stats(const io::RunConfig &cfg, const std::optional<fs::path> &checkpoint,
                     const fs::path &out, std::ostream &os) {
    cfg.validate();
    io::RunConfig init = cfg;
    init.stages.clear();
    FitResult r;
    run_fit(init, r);
    const std::vector<TrainView> &views = r.two_branch ? r.face_views : r.eval_views;
    std::vector<Camera> cams;
    for (const auto &v : views) cams.push_back(v.camera);
    const double extent = scene_extent(cams);
    GaussianCloud cloud = r.head.face.cloud;
    if (checkpoint) cloud = io::load_checkpoint(*checkpoint).face.cloud;
    RenderConfig rcfg = cfg.render;
    if (r.two_branch) rcfg.background = Vec3::Zero();
    DensifyStats base(cloud.size()), pixel(cloud.size());
    for (const auto &v : views) {
        auto art = rasterize_forward(cloud, v.camera, rcfg);
        const auto loss = loss_l1_dssim(art.image, v.target, v.mask ? &*v.mask : nullptr,
                                        cfg.schedule.loss.lambda);
        rasterize_backward(cloud, v.camera, rcfg, art, loss.grad);
        accumulate(base, art, DensifyPolicy::baseline);
        accumulate(pixel, art, DensifyPolicy::pixel_aware);
    }
    const auto decisions =
        decide(cfg.densify.policy == DensifyPolicy::baseline ? base : pixel, cloud, cfg.densify, extent);
    std::ostringstream csv;
    csv << "index,views_seen,coverage_sum,coverage_min,coverage_max,grad_min,grad_max,"
           "score_baseline,score_pixel_aware,action\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const bool seen = pixel.views_seen[i] > 0;
        csv << i << ',' << base.views_seen[i] << ',' << pixel.sum_m[i] << ','
            << (seen ? pixel.coverage_min[i] : 0) << ',' << pixel.coverage_max[i] << ','
            << (base.views_seen[i] ? base.grad_min[i] : 0.0) << ',' << base.grad_max[i] << ','
            << densify_score(base, i, DensifyPolicy::baseline) << ','
            << densify_score(pixel, i, DensifyPolicy::pixel_aware) << ','
            << to_string(decisions.action[i]) << '\n';
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    detail::write_text(out, csv.str());
    os << "wrote statistics for " << cloud.size() << " Gaussians over " << views.size()
       << " views to " << out.string() << '\n';
    return kOk;
}

} // namespace pgst::cli
