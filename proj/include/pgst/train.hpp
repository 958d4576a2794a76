#pragma once

// Three-stage training: static initialisation of each branch's cloud with
// density control, deformation prediction on a frozen canonical cloud, and
// joint colour fine-tuning of the composited head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pgst/adam.hpp"
#include "pgst/composite.hpp"
#include "pgst/deform.hpp"
#include "pgst/densify.hpp"
#include "pgst/loss.hpp"
#include "pgst/raster.hpp"

namespace pgst {

struct StageLengths {
    int static_init = 2000;
    int deform = 1500;
    int finetune = 300;
};

struct TrainSchedule {
    StageLengths iterations;
    CloudLearningRates cloud_lr;
    double encoder_lr = 1e-2;
    double mgf_lr = 1e-3;
    double finetune_color_lr = 2.5e-3;
    AdamConfig adam;
    DensifyConfig densify;
    LossConfig loss;
    std::uint64_t seed = 0;

    void validate() const {
        if (iterations.static_init < 0 || iterations.deform < 0 || iterations.finetune < 0)
            throw InputError("schedule: stage lengths must be ≥ 0");
        if (encoder_lr < 0 || mgf_lr < 0 || finetune_color_lr < 0)
            throw InputError("schedule: learning rates must be ≥ 0");
        densify.validate();
        loss.validate();
    }
};

/// One supervised image. `frame` indexes the feature sequence (−1: none).
struct TrainView {
    Camera camera;
    Image target;
    std::optional<Plane> mask;
    int frame = -1;
};

struct LogRow {
    int iter = 0;
    std::string stage;
    double loss = 0.0;
    double psnr = 0.0;
    std::size_t n = 0;
    std::size_t densified = 0;
};

struct TrainLog {
    std::vector<LogRow> rows;
    std::vector<DensifyEvent> densify_events;

    void write_csv(std::ostream &os) const {
        os << "iter,stage,loss,psnr,N,#densified\n";
        for (const auto &r : rows)
            os << r.iter << ',' << r.stage << ',' << r.loss << ',' << r.psnr << ',' << r.n << ','
               << r.densified << '\n';
    }
};

namespace detail {

/// Deterministic epoch-shuffled view order.
class ViewOrder {
  public:
    ViewOrder(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
        if (n == 0) throw InputError("training needs at least one view");
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        pos_ = n;
    }
    std::size_t next() {
        if (pos_ == order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

  private:
    std::mt19937_64 rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_;
};

inline void check_finite(double loss, const std::string &stage, int iter) {
    if (!std::isfinite(loss))
        throw NumericalError(stage + ": non-finite loss at iteration " + std::to_string(iter));
}

inline double view_psnr(const Image &img, const TrainView &v) {
    return v.mask ? masked_psnr(img, v.target, *v.mask) : psnr(img, v.target);
}

/// Composition of two edits applied in sequence.
inline CloudEdit chain(const CloudEdit &first, CloudEdit second) {
    for (std::size_t j = 0; j < second.source.size(); ++j) {
        const std::size_t mid = second.source[j];
        second.fresh[j] = second.fresh[j] || first.fresh[mid];
        second.source[j] = first.source[mid];
    }
    return second;
}

} // namespace detail

/// Observer called with the cloud after every completed iteration.
using IterationHook = std::function<void(int done, const GaussianCloud &cloud)>;

/// Static initialisation of one cloud: render → loss → backward → Adam, with
/// periodic densify/prune under the configured policy. The cloud is updated
/// in place, so on a NumericalError the caller holds the last good state.
inline void run_stage_static(GaussianCloud &cloud, std::span<const TrainView> views,
                             const TrainSchedule &s, const RenderConfig &rcfg, double extent,
                             TrainLog &log, const std::string &stage = "static",
                             const IterationHook &on_iteration = {}) {
    s.validate();
    cloud.validate();
    const int iters = s.iterations.static_init;
    if (iters == 0) return;
    const auto &dc = s.densify;
    Adam opt(s.adam);
    DensifyStats stats(cloud.size());
    detail::ViewOrder order(views.size(), s.seed);
    std::mt19937_64 rng(s.seed ^ 0xd3e5f1ull);
    for (int it = 0; it < iters; ++it) {
        const TrainView &v = views[order.next()];
        auto art = rasterize_forward(cloud, v.camera, rcfg);
        auto loss = loss_l1_dssim(art.image, v.target, v.mask ? &*v.mask : nullptr, s.loss.lambda);
        detail::check_finite(loss.value, stage, it);
        auto grads = rasterize_backward(cloud, v.camera, rcfg, art, loss.grad);
        if (it < dc.stop_iter) accumulate(stats, art, dc.policy);
        adam_step_cloud(opt, "cloud.", cloud, grads, s.cloud_lr);

        const int done = it + 1;
        std::size_t densified = 0;
        if (done >= dc.start_iter && done < dc.stop_iter && done % dc.interval == 0) {
            const auto decisions = decide(stats, cloud, dc, extent);
            const auto grown = apply(cloud, decisions, dc, rng());
            const auto kept = prune(grown.cloud, dc, extent);
            const CloudEdit edit = detail::chain(grown, kept);
            DensifyEvent ev;
            ev.iteration = done;
            ev.policy = dc.policy;
            ev.clones = decisions.count(DensifyAction::clone);
            ev.splits = decisions.count(DensifyAction::split);
            ev.pruned = grown.cloud.size() - kept.cloud.size();
            ev.n_after = edit.cloud.size();
            densified = grown.cloud.size() - cloud.size();
            adam_remap_cloud(opt, "cloud.", edit);
            cloud = edit.cloud;
            stats.reset(cloud.size());
            log.densify_events.push_back(ev);
        }
        if (dc.opacity_reset && done < dc.stop_iter && done % dc.opacity_reset_interval == 0)
            reset_opacity(cloud, dc);
        log.rows.push_back(
            {done, stage, loss.value, detail::view_psnr(art.image, v), cloud.size(), densified});
        if (on_iteration) on_iteration(done, cloud);
    }
}

/// Deformation stage: the canonical cloud is frozen and only the encoder
/// and fusion module of `model` are optimised. Every view must reference a
/// frame.
inline void run_stage_deform(const GaussianCloud &base, DeformModel &model,
                             std::span<const TrainView> views,
                             std::span<const FrameFeatures> frames, const TrainSchedule &s,
                             const RenderConfig &rcfg, TrainLog &log,
                             const std::string &stage = "deform") {
    s.validate();
    const int iters = s.iterations.deform;
    if (iters == 0) return;
    for (const auto &v : views)
        if (v.frame < 0 || static_cast<std::size_t>(v.frame) >= frames.size())
            throw InputError(stage + ": view without a valid frame index");
    Adam opt(s.adam);
    detail::ViewOrder order(views.size(), s.seed ^ 0x5eedull);
    for (int it = 0; it < iters; ++it) {
        const TrainView &v = views[order.next()];
        const auto pass = model.forward(base, frames[v.frame]);
        const GaussianCloud deformed = apply_deformation(base, pass.deltas);
        auto art = rasterize_forward(deformed, v.camera, rcfg);
        auto loss = loss_l1_dssim(art.image, v.target, v.mask ? &*v.mask : nullptr, s.loss.lambda);
        detail::check_finite(loss.value, stage, it);
        const auto d_cloud = rasterize_backward(deformed, v.camera, rcfg, art, loss.grad);
        DeformModel grads = zeros_like_params(model);
        model.backward(base, pass, d_cloud, grads);
        adam_step_module(opt, "encoder.", model.encoder(), grads.encoder(), s.encoder_lr);
        if (model.branch() == Branch::mouth)
            adam_step_module(opt, "mgf.", model.mouth(), grads.mouth(), s.mgf_lr);
        else
            adam_step_module(opt, "mgf.", model.face(), grads.face(), s.mgf_lr);
        log.rows.push_back(
            {it + 1, stage, loss.value, detail::view_psnr(art.image, v), base.size(), 0});
    }
}

struct BranchModel {
    GaussianCloud cloud;
    std::optional<DeformModel> deform;
};

/// Face and inside-mouth branches. The face renders on black; the mouth on
/// `mouth_background`.
struct HeadModel {
    BranchModel face;
    BranchModel mouth;
    Vec3 mouth_background = Vec3::Zero();
};

struct BranchRender {
    GaussianCloud deformed;
    RenderArtifacts art;
};

inline BranchRender render_branch(const BranchModel &b, const Camera &cam,
                                  const FrameFeatures *frame, RenderConfig rcfg,
                                  const Vec3 &background) {
    BranchRender r;
    r.deformed = b.deform && frame
                     ? apply_deformation(b.cloud, b.deform->forward(b.cloud, *frame).deltas)
                     : b.cloud;
    rcfg.background = background;
    r.art = rasterize_forward(r.deformed, cam, rcfg);
    return r;
}

struct HeadRender {
    BranchRender face, mouth;
    Image image;
};

inline HeadRender render_head(const HeadModel &h, const Camera &cam, const FrameFeatures *frame,
                              const RenderConfig &rcfg) {
    HeadRender r;
    r.face = render_branch(h.face, cam, frame, rcfg, Vec3::Zero());
    r.mouth = render_branch(h.mouth, cam, frame, rcfg, h.mouth_background);
    r.image = composite_head(r.face.art, r.mouth.art);
    return r;
}

/// Joint fine-tuning of colour coefficients of both clouds against full
/// frames through the compositor. Positions, scales, rotations, opacities
/// and N are untouched.
inline void run_stage_finetune(HeadModel &head, std::span<const TrainView> views,
                               std::span<const FrameFeatures> frames, const TrainSchedule &s,
                               const RenderConfig &rcfg, TrainLog &log,
                               const std::string &stage = "finetune") {
    s.validate();
    const int iters = s.iterations.finetune;
    if (iters == 0) return;
    CloudLearningRates colors_only{0, 0, 0, 0, s.finetune_color_lr};
    Adam opt(s.adam);
    detail::ViewOrder order(views.size(), s.seed ^ 0xf17eull);
    for (int it = 0; it < iters; ++it) {
        const TrainView &v = views[order.next()];
        const FrameFeatures *frame =
            v.frame >= 0 && static_cast<std::size_t>(v.frame) < frames.size() ? &frames[v.frame]
                                                                                : nullptr;
        auto r = render_head(head, v.camera, frame, rcfg);
        auto loss = loss_finetune(r.image, v.target, s.loss);
        detail::check_finite(loss.value, stage, it);
        const auto cg = composite_backward(r.face.art, r.mouth.art, loss.grad);
        RenderConfig face_cfg = rcfg, mouth_cfg = rcfg;
        face_cfg.background = Vec3::Zero();
        mouth_cfg.background = head.mouth_background;
        auto gf = rasterize_backward(r.face.deformed, v.camera, face_cfg, r.face.art, cg.d_face,
                                     &cg.d_face_transmittance);
        auto gm = rasterize_backward(r.mouth.deformed, v.camera, mouth_cfg, r.mouth.art, cg.d_mouth);
        adam_step_cloud(opt, "face.", head.face.cloud, gf, colors_only);
        adam_step_cloud(opt, "mouth.", head.mouth.cloud, gm, colors_only);
        log.rows.push_back({it + 1, stage, loss.value, psnr(r.image, v.target),
                            head.face.cloud.size() + head.mouth.cloud.size(), 0});
    }
}

} // namespace pgst
