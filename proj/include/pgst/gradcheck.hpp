#pragma once

// Finite-difference gradient-check suites for the hand-written backward
// passes. Each suite draws randomized instances, compares analytic
// gradients against central differences per parameter class and reports
// the worst relative error.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pgst/composite.hpp"
#include "pgst/deform.hpp"
#include "pgst/fd.hpp"
#include "pgst/loss.hpp"
#include "pgst/raster.hpp"
#include "pgst/synthetic.hpp"
#include "pgst/train.hpp"

namespace pgst::gradcheck {

struct Options {
    int instances = 20;
    double step = 1e-4;
    double exclusion = 10.0; // multiples of step
    double tolerance = 1e-3;
    std::uint64_t seed = 1;
    /// Flip the sign of every analytic gradient; used to prove the harness
    /// can fail.
    bool inject_fault = false;
};

struct ClassResult {
    std::string suite;
    std::string param_class;
    double max_rel_error = 0.0;
    int instances = 0;
    std::size_t checked = 0;
    std::size_t excluded = 0;

    bool passed(double tol) const { return instances > 0 && max_rel_error <= tol; }
};

namespace detail {

/// Collects per-class worst errors across instances, preserving insertion order.
class Tally {
  public:
    explicit Tally(std::string suite) : suite_(std::move(suite)) {}

    void add(const std::string &cls, std::span<const double> analytic, const fd::Estimate &numeric,
             bool flip) {
        std::vector<double> a(analytic.begin(), analytic.end());
        if (flip)
            for (auto &v : a) v = -v;
        auto it = index_.find(cls);
        if (it == index_.end()) {
            it = index_.emplace(cls, results_.size()).first;
            results_.push_back({suite_, cls});
        }
        auto &r = results_[it->second];
        const std::size_t usable = fd::usable_count(numeric);
        r.checked += usable;
        r.excluded += numeric.usable.size() - usable;
        if (usable == 0) return;
        r.max_rel_error = std::max(r.max_rel_error, fd::relative_error(a, numeric));
        ++r.instances;
    }

    std::vector<ClassResult> take() { return std::move(results_); }

  private:
    std::string suite_;
    std::map<std::string, std::size_t> index_;
    std::vector<ClassResult> results_;
};

inline Image random_weights(int w, int h, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Image img(w, h);
    for (auto &v : img.data) v = n(rng);
    return img;
}

inline double weighted_sum(const Image &img, const Image &w) {
    double s = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) s += img.data[i] * w.data[i];
    return s;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64 &rng, double sd = 1.0) {
    std::normal_distribution<double> d(0.0, sd);
    Eigen::VectorXd v(n);
    for (auto &x : v) x = d(rng);
    return v;
}

/// Small shapes for module checks: 2 levels, 64-entry tables, narrow layers.
inline DeformConfig small_deform_config() {
    DeformConfig cfg;
    cfg.encoder.levels = 2;
    cfg.encoder.features = 2;
    cfg.encoder.table_size = 64;
    cfg.encoder.base_resolution = 3;
    cfg.encoder.max_resolution = 9;
    cfg.proj_spatial = 6;
    cfg.proj_audio = 5;
    cfg.proj_expression = 4;
    cfg.hidden = {8, 8};
    return cfg;
}

/// Head outputs are initialised near zero for training; checks use a full
/// scale output layer so every path carries a measurable gradient.
inline void widen_output(Mlp &head, std::mt19937_64 &rng) {
    head.layers.back().weight.fill_uniform(rng, 0.5);
    head.layers.back().bias.fill_uniform(rng, 0.5);
}

template <typename Module, typename Eval>
void check_tensors(Tally &tally, const std::string &group_prefix, Module &probe, Module &grads,
                   Eval &&eval, const Options &opt) {
    auto params = named_tensors(probe, "");
    auto g = named_tensors(grads, "");
    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::string &name = params[k].first;
        const std::string cls = group_prefix + name.substr(0, name.find('.'));
        auto numeric =
            fd::central_difference(params[k].second->span(), eval, opt.step, opt.exclusion);
        tally.add(cls, g[k].second->span(), numeric, opt.inject_fault);
    }
}

} // namespace detail

/// Rasterizer gradients for every parameter class of the cloud, with
/// L = Σ w ⊙ image for random weights w.
inline std::vector<ClassResult> check_rasterizer(const Options &opt) {
    detail::Tally tally("raster");
    std::mt19937_64 rng(opt.seed);
    for (int inst = 0; inst < opt.instances; ++inst) {
        synth::RandomSceneOptions so;
        so.count = 6 + inst % 5;
        so.half_extent = 0.6;
        so.min_scale = 0.06;
        so.max_scale = 0.25;
        so.sh_degree = inst % 2;
        GaussianCloud cloud = synth::random_cloud(rng(), so);
        const int w = 24, h = 20;
        Camera cam = synth::orbit_camera(0.2 * std::sin(inst), 0.1 * std::cos(inst), 4.0, w, h, 28);
        RenderConfig cfg;
        cfg.tile_size = 8;
        cfg.background = Vec3(0.2, 0.3, 0.1);
        cfg.track_signature = true;
        Image weights = detail::random_weights(w, h, rng);

        auto art = rasterize_forward(cloud, cam, cfg);
        GaussianCloud analytic = rasterize_backward(cloud, cam, cfg, art, weights);

        GaussianCloud probe = cloud;
        auto eval = [&] {
            auto a = rasterize_forward(probe, cam, cfg);
            return fd::Probe{detail::weighted_sum(a.image, weights), a.signature};
        };
        std::vector<std::pair<std::string, std::span<double>>> groups, grad_groups;
        for_each_param_group(probe, [&](const char *name, std::span<double> s) {
            groups.emplace_back(name, s);
        });
        for_each_param_group(analytic, [&](const char *name, std::span<double> s) {
            grad_groups.emplace_back(name, s);
        });
        for (std::size_t g = 0; g < groups.size(); ++g) {
            auto numeric = fd::central_difference(groups[g].second, eval, opt.step, opt.exclusion);
            tally.add(groups[g].first, grad_groups[g].second, numeric, opt.inject_fault);
        }
    }
    return tally.take();
}

/// Tri-plane hash encoder: gradients w.r.t. the hash tables and w.r.t. the
/// query position, with L = Σ w ⊙ encode(μ) over a handful of points.
inline std::vector<ClassResult> check_encoder(const Options &opt) {
    detail::Tally tally("encoder");
    std::mt19937_64 rng(opt.seed ^ 0xe1c0de);
    std::uniform_real_distribution<double> u(-1.1, 1.1);
    for (int inst = 0; inst < opt.instances; ++inst) {
        const auto cfg = detail::small_deform_config();
        TriPlaneHashEncoder enc(cfg.encoder, Vec3::Constant(-1), Vec3::Constant(1), rng());
        const int points = 2 + inst % 4;
        std::vector<Vec3> mu(points);
        std::vector<Eigen::VectorXd> w(points);
        for (int p = 0; p < points; ++p) {
            mu[p] = Vec3(u(rng), u(rng), u(rng));
            w[p] = detail::random_vector(enc.output_dim(), rng);
        }

        TriPlaneHashEncoder grads = zeros_like_params(enc);
        std::vector<double> d_mu(3 * points);
        for (int p = 0; p < points; ++p) {
            enc.backward(mu[p], w[p], grads);
            const Eigen::Vector3d j = enc.position_jacobian(mu[p]).transpose() * w[p];
            for (int k = 0; k < 3; ++k) d_mu[3 * p + k] = j[k];
        }

        TriPlaneHashEncoder probe = enc;
        std::vector<double> flat_mu(3 * points);
        for (int p = 0; p < points; ++p)
            for (int k = 0; k < 3; ++k) flat_mu[3 * p + k] = mu[p][k];
        auto eval = [&] {
            fd::Probe r;
            for (int p = 0; p < points; ++p) {
                const Vec3 m(flat_mu[3 * p], flat_mu[3 * p + 1], flat_mu[3 * p + 2]);
                r.value += w[p].dot(probe.encode(m));
                r.signature = r.signature * 31 + probe.cell_signature(m);
            }
            return r;
        };
        auto numeric_table =
            fd::central_difference(probe.table().span(), eval, opt.step, opt.exclusion);
        tally.add("table", grads.table().span(), numeric_table, opt.inject_fault);
        auto numeric_mu = fd::central_difference(std::span<double>(flat_mu), eval, opt.step,
                                                 opt.exclusion);
        tally.add("position", d_mu, numeric_mu, opt.inject_fault);
    }
    return tally.take();
}

/// Gated fusion modules of one branch: every parameter tensor of the
/// projections, gate and head, plus the spatial-feature input gradient.
inline std::vector<ClassResult> check_mgf(Branch branch, const Options &opt) {
    detail::Tally tally(std::string("mgf.") + to_string(branch));
    std::mt19937_64 rng(opt.seed ^ (branch == Branch::face ? 0xface : 0x3047));
    for (int inst = 0; inst < opt.instances; ++inst) {
        const auto cfg = detail::small_deform_config();
        MgfDims dims;
        dims.spatial = 3 * cfg.encoder.levels * cfg.encoder.features;
        dims.audio = 3 + inst % 3;
        dims.expression = 2 + inst % 2;
        dims.proj_spatial = cfg.proj_spatial;
        dims.proj_audio = cfg.proj_audio;
        dims.proj_expression = cfg.proj_expression;
        dims.hidden = cfg.hidden;
        const int points = 2 + inst % 3;
        const int out_dim = branch == Branch::face ? 10 : 3;
        std::vector<Eigen::VectorXd> fs(points), w(points);
        for (int p = 0; p < points; ++p) {
            fs[p] = detail::random_vector(dims.spatial, rng, 0.3);
            w[p] = detail::random_vector(out_dim, rng);
        }
        const Eigen::VectorXd fa = detail::random_vector(dims.audio, rng);
        const Eigen::VectorXd fe = detail::random_vector(dims.expression, rng);

        auto run = [&](auto &module) {
            detail::widen_output(module.head, rng);
            auto grads = zeros_like_params(module);
            std::vector<double> d_fs;
            for (int p = 0; p < points; ++p) {
                Eigen::VectorXd dfs;
                if constexpr (std::is_same_v<std::decay_t<decltype(module)>, MouthMgf>)
                    module.backward(module.forward(fs[p], fa), w[p], grads, &dfs);
                else
                    module.backward(module.forward(fs[p], fa, fe), w[p], grads, &dfs);
                d_fs.insert(d_fs.end(), dfs.begin(), dfs.end());
            }
            auto probe = module;
            std::vector<double> flat_fs;
            for (const auto &f : fs) flat_fs.insert(flat_fs.end(), f.begin(), f.end());
            auto eval = [&] {
                fd::Probe r;
                for (int p = 0; p < points; ++p) {
                    const Eigen::VectorXd f =
                        Eigen::Map<const Eigen::VectorXd>(flat_fs.data() + p * dims.spatial,
                                                          dims.spatial);
                    if constexpr (std::is_same_v<std::decay_t<decltype(module)>, MouthMgf>)
                        r.value += w[p].dot(probe.forward(f, fa).head.out);
                    else
                        r.value += w[p].dot(probe.forward(f, fa, fe).head.out);
                }
                return r;
            };
            detail::check_tensors(tally, "", probe, grads, eval, opt);
            auto numeric = fd::central_difference(std::span<double>(flat_fs), eval, opt.step,
                                                  opt.exclusion);
            tally.add("spatial_input", d_fs, numeric, opt.inject_fault);
        };
        if (branch == Branch::mouth) {
            MouthMgf m(dims, rng);
            run(m);
        } else {
            FaceMgf m(dims, rng);
            run(m);
        }
    }
    return tally.take();
}

/// Face and mouth clouds through the compositor, including the face
/// transmittance path, with L = Σ w ⊙ composited image.
inline std::vector<ClassResult> check_composite(const Options &opt) {
    detail::Tally tally("composite");
    std::mt19937_64 rng(opt.seed ^ 0xc0ffee);
    for (int inst = 0; inst < opt.instances; ++inst) {
        synth::RandomSceneOptions so;
        so.count = 4 + inst % 3;
        so.half_extent = 0.5;
        so.min_scale = 0.08;
        so.max_scale = 0.25;
        HeadModel head;
        head.face.cloud = synth::random_cloud(rng(), so);
        so.depth_extent = 0.2;
        head.mouth.cloud = synth::random_cloud(rng(), so);
        head.mouth_background = Vec3(0.3, 0.1, 0.2);
        const int w = 20, h = 16;
        Camera cam = synth::orbit_camera(0.15 * std::sin(inst), 0.1 * std::cos(inst), 4.0, w, h, 24);
        RenderConfig cfg;
        cfg.tile_size = 8;
        cfg.track_signature = true;
        Image weights = detail::random_weights(w, h, rng);

        auto r = render_head(head, cam, nullptr, cfg);
        const auto cg = composite_backward(r.face.art, r.mouth.art, weights);
        RenderConfig face_cfg = cfg, mouth_cfg = cfg;
        face_cfg.background = Vec3::Zero();
        mouth_cfg.background = head.mouth_background;
        GaussianCloud gf = rasterize_backward(head.face.cloud, cam, face_cfg, r.face.art, cg.d_face,
                                              &cg.d_face_transmittance);
        GaussianCloud gm = rasterize_backward(head.mouth.cloud, cam, mouth_cfg, r.mouth.art, cg.d_mouth);

        HeadModel probe = head;
        auto eval = [&] {
            auto pr = render_head(probe, cam, nullptr, cfg);
            return fd::Probe{detail::weighted_sum(pr.image, weights),
                             pr.face.art.signature * 1000003u ^ pr.mouth.art.signature};
        };
        auto check_cloud = [&](const std::string &prefix, GaussianCloud &params, GaussianCloud &grads) {
            std::vector<std::span<double>> g;
            for_each_param_group(grads, [&](const char *, std::span<double> s) { g.push_back(s); });
            std::size_t k = 0;
            for_each_param_group(params, [&](const char *name, std::span<double> s) {
                auto numeric = fd::central_difference(s, eval, opt.step, opt.exclusion);
                tally.add(prefix + name, g[k++], numeric, opt.inject_fault);
            });
        };
        check_cloud("face.", probe.face.cloud, gf);
        check_cloud("mouth.", probe.mouth.cloud, gm);
    }
    return tally.take();
}

namespace detail {

inline Image random_image(int w, int h, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (auto &v : img.data) v = u(rng);
    return img;
}

/// Mean squared error with its gradient; registered as a perceptual hook
/// so the fine-tuning suite exercises the plugin path.
inline LossResult mse_hook(const Image &pred, const Image &target) {
    LossResult r;
    r.grad = Image(pred.width, pred.height);
    const double n = static_cast<double>(pred.data.size());
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        r.value += d * d / n;
        r.grad.data[i] = 2.0 * d / n;
    }
    return r;
}

} // namespace detail

/// Masked L1 + D-SSIM w.r.t. the predicted image; the L1 sign pattern is
/// the decision signature.
inline std::vector<ClassResult> check_loss(const Options &opt) {
    detail::Tally tally("loss.l1_dssim");
    std::mt19937_64 rng(opt.seed ^ 0x1055);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int inst = 0; inst < opt.instances; ++inst) {
        const int w = 8 + inst % 3, h = 8;
        const Image target = detail::random_image(w, h, rng);
        Image pred = detail::random_image(w, h, rng);
        Plane mask(w, h);
        for (auto &m : mask.data) m = u(rng) < 0.7 ? 1.0 : 0.0;
        mask.data[0] = 1.0;
        const Plane *mp = inst % 4 == 0 ? nullptr : &mask;
        const double lambda = inst % 5 == 0 ? 1.0 : 0.2;
        const auto analytic = loss_l1_dssim(pred, target, mp, lambda);
        auto eval = [&] {
            return fd::Probe{loss_l1_dssim(pred, target, mp, lambda).value, l1_signature(pred, target)};
        };
        auto numeric = fd::central_difference(std::span<double>(pred.data), eval, opt.step, opt.exclusion);
        tally.add("pred", analytic.grad.data, numeric, opt.inject_fault);
    }
    return tally.take();
}

/// Full-frame fine-tuning loss with a registered perceptual hook.
inline std::vector<ClassResult> check_finetune_loss(const Options &opt) {
    detail::Tally tally("loss.finetune");
    auto &reg = PerceptualRegistry::instance();
    if (!reg.contains("gradcheck.mse")) reg.add("gradcheck.mse", detail::mse_hook);
    std::mt19937_64 rng(opt.seed ^ 0xf1e7);
    for (int inst = 0; inst < opt.instances; ++inst) {
        const int w = 8, h = 8 + inst % 3;
        const Image target = detail::random_image(w, h, rng);
        Image pred = detail::random_image(w, h, rng);
        LossConfig cfg;
        cfg.perceptual = "gradcheck.mse";
        cfg.gamma = 0.5;
        const auto analytic = loss_finetune(pred, target, cfg);
        auto eval = [&] {
            return fd::Probe{loss_finetune(pred, target, cfg).value, l1_signature(pred, target)};
        };
        auto numeric = fd::central_difference(std::span<double>(pred.data), eval, opt.step, opt.exclusion);
        tally.add("pred", analytic.grad.data, numeric, opt.inject_fault);
    }
    return tally.take();
}

/// Every suite, in a fixed order.
inline std::vector<ClassResult> check_all(const Options &opt) {
    std::vector<ClassResult> all;
    auto append = [&](std::vector<ClassResult> r) { all.insert(all.end(), r.begin(), r.end()); };
    append(check_rasterizer(opt));
    append(check_composite(opt));
    append(check_encoder(opt));
    append(check_mgf(Branch::mouth, opt));
    append(check_mgf(Branch::face, opt));
    append(check_loss(opt));
    append(check_finetune_loss(opt));
    return all;
}

} // namespace pgst::gradcheck
