#pragma once

// Densification statistics and the two clone/split policies: the baseline
// mean of per-view NDC gradient norms, and the pixel-aware variant that
// weights each view by the Gaussian's pixel coverage m.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pgst/gaussian.hpp"
#include "pgst/raster.hpp"

namespace pgst {

enum class DensifyPolicy { baseline, pixel_aware };

inline const char *to_string(DensifyPolicy p) {
    return p == DensifyPolicy::baseline ? "baseline" : "pixel-aware";
}

inline DensifyPolicy parse_policy(const std::string &s) {
    if (s == "baseline") return DensifyPolicy::baseline;
    if (s == "pixel-aware" || s == "pixel_aware") return DensifyPolicy::pixel_aware;
    throw InputError("unknown densify policy '" + s + "' (expected baseline or pixel-aware)");
}

struct DensifyConfig {
    double tau_pos = 2e-4;
    DensifyPolicy policy = DensifyPolicy::pixel_aware;
    int interval = 100;
    int start_iter = 500;
    int stop_iter = 15000;
    double split_scale_threshold = 0.01; // fraction of the scene extent
    double split_factor = 1.6;
    double prune_opacity = 0.005;
    std::size_t max_points = 100000;
    bool opacity_reset = false;
    int opacity_reset_interval = 3000;
    double opacity_reset_value = 0.01;

    void validate() const {
        if (!(tau_pos > 0)) throw InputError("densify: tau_pos must be > 0");
        if (!(split_factor > 0)) throw InputError("densify: split_factor must be > 0");
        if (interval < 1) throw InputError("densify: interval must be ≥ 1");
        if (max_points < 1) throw InputError("densify: max_points must be ≥ 1");
        if (!(prune_opacity >= 0 && prune_opacity < 1))
            throw InputError("densify: prune_opacity must lie in [0,1)");
    }
};

/// Per-Gaussian running sums across views.
///
/// Besides the sums that define the two scores, the observed range of the
/// per-view gradient norm and of the coverage is tracked; the scores are
/// weighted means, so they must land inside that range.
struct DensifyStats {
    std::vector<double> sum_w_grad; // Σ m_k ‖g_k‖
    std::vector<double> sum_m;      // Σ m_k
    std::vector<double> sum_grad;   // Σ ‖g_k‖
    std::vector<int> views_seen;
    std::vector<double> grad_min, grad_max;
    std::vector<int> coverage_min, coverage_max;

    DensifyStats() = default;
    explicit DensifyStats(std::size_t n) { reset(n); }

    std::size_t size() const { return sum_m.size(); }

    void reset(std::size_t n) {
        sum_w_grad.assign(n, 0.0);
        sum_m.assign(n, 0.0);
        sum_grad.assign(n, 0.0);
        views_seen.assign(n, 0);
        grad_min.assign(n, std::numeric_limits<double>::infinity());
        grad_max.assign(n, 0.0);
        coverage_min.assign(n, std::numeric_limits<int>::max());
        coverage_max.assign(n, 0);
    }

    /// Records one observation of Gaussian i.
    void observe(std::size_t i, int coverage, double grad_norm) {
        sum_w_grad[i] += coverage * grad_norm;
        sum_m[i] += coverage;
        sum_grad[i] += grad_norm;
        views_seen[i] += 1;
        grad_min[i] = std::min(grad_min[i], grad_norm);
        grad_max[i] = std::max(grad_max[i], grad_norm);
        coverage_min[i] = std::min(coverage_min[i], coverage);
        coverage_max[i] = std::max(coverage_max[i], coverage);
    }

    /// Sum of two partial accumulations over disjoint view sets.
    void merge(const DensifyStats &o) {
        if (o.size() != size()) throw ContractViolation("DensifyStats::merge: size mismatch");
        for (std::size_t i = 0; i < size(); ++i) {
            sum_w_grad[i] += o.sum_w_grad[i];
            sum_m[i] += o.sum_m[i];
            sum_grad[i] += o.sum_grad[i];
            views_seen[i] += o.views_seen[i];
            grad_min[i] = std::min(grad_min[i], o.grad_min[i]);
            grad_max[i] = std::max(grad_max[i], o.grad_max[i]);
            coverage_min[i] = std::min(coverage_min[i], o.coverage_min[i]);
            coverage_max[i] = std::max(coverage_max[i], o.coverage_max[i]);
        }
    }
};

/// Folds one rendered-and-backpropagated view into the stats. A Gaussian
/// counts when it passed the validity filter and, for the pixel-aware
/// policy, covered at least one pixel.
inline void accumulate(DensifyStats &stats, const RenderArtifacts &art, DensifyPolicy policy) {
    if (art.per_gaussian.size() != stats.size())
        throw ContractViolation("accumulate: stats and artifacts disagree on N");
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto &g = art.per_gaussian[i];
        if (!g.valid) continue;
        if (policy == DensifyPolicy::pixel_aware && g.coverage <= 0) continue;
        stats.observe(i, g.coverage, g.ndc_grad_norm);
    }
}

/// Densification score of Gaussian i under `policy`; 0 when unobserved.
inline double densify_score(const DensifyStats &s, std::size_t i, DensifyPolicy policy) {
    if (s.views_seen[i] == 0) return 0.0;
    double score;
    if (policy == DensifyPolicy::baseline || s.coverage_min[i] == s.coverage_max[i]) {
        // Constant coverage makes the weighted mean the plain mean exactly.
        if (policy == DensifyPolicy::pixel_aware && s.sum_m[i] <= 0) return 0.0;
        score = s.sum_grad[i] / s.views_seen[i];
    } else {
        if (s.sum_m[i] <= 0) return 0.0;
        score = s.sum_w_grad[i] / s.sum_m[i];
    }
    return std::clamp(score, s.grad_min[i], s.grad_max[i]);
}

enum class DensifyAction : std::uint8_t { none, clone, split };

inline const char *to_string(DensifyAction a) {
    return a == DensifyAction::clone ? "clone" : a == DensifyAction::split ? "split" : "none";
}

struct DensifyDecisions {
    std::vector<DensifyAction> action;
    std::vector<double> score;

    std::size_t count(DensifyAction a) const {
        return static_cast<std::size_t>(std::count(action.begin(), action.end(), a));
    }
};

inline DensifyDecisions decide(const DensifyStats &stats, const GaussianCloud &cloud,
                               const DensifyConfig &cfg, double extent) {
    if (stats.size() != cloud.size()) throw ContractViolation("decide: stats/cloud size mismatch");
    DensifyDecisions d;
    d.action.assign(cloud.size(), DensifyAction::none);
    d.score.assign(cloud.size(), 0.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        d.score[i] = densify_score(stats, i, cfg.policy);
        if (!(d.score[i] > cfg.tau_pos)) continue;
        d.action[i] = cloud.max_scale(i) <= cfg.split_scale_threshold * extent
                          ? DensifyAction::clone
                          : DensifyAction::split;
    }
    return d;
}

/// Result of a structural edit: the new cloud and, for each output entry,
/// the input entry it came from. `fresh` marks entries created by the edit
/// (optimizer state for those starts from zero).
struct CloudEdit {
    GaussianCloud cloud;
    std::vector<std::size_t> source;
    std::vector<bool> fresh;
};

/// Clones and splits. Split children are drawn from the parent's Gaussian
/// density; the first child takes the parent's slot, the second and all
/// clones are appended in index order. When the point budget cannot hold
/// every decision, the lowest-scoring ones are dropped.
inline CloudEdit apply(const GaussianCloud &cloud, const DensifyDecisions &decisions,
                       const DensifyConfig &cfg, std::uint64_t seed) {
    const std::size_t n = cloud.size();
    if (decisions.action.size() != n) throw ContractViolation("apply: decisions length != N");
    std::vector<DensifyAction> action = decisions.action;

    std::vector<std::size_t> wanted;
    for (std::size_t i = 0; i < n; ++i)
        if (action[i] != DensifyAction::none) wanted.push_back(i);
    const std::size_t budget = cfg.max_points > n ? cfg.max_points - n : 0;
    if (wanted.size() > budget) {
        std::stable_sort(wanted.begin(), wanted.end(), [&](std::size_t a, std::size_t b) {
            return decisions.score[a] > decisions.score[b];
        });
        for (std::size_t k = budget; k < wanted.size(); ++k) action[wanted[k]] = DensifyAction::none;
    }

    CloudEdit out;
    out.cloud = cloud;
    out.source.resize(n);
    std::iota(out.source.begin(), out.source.end(), std::size_t{0});
    out.fresh.assign(n, false);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double shrink = std::log(cfg.split_factor);
    std::vector<std::pair<std::size_t, Vec3>> second_children;
    for (std::size_t i = 0; i < n; ++i) {
        if (action[i] != DensifyAction::split) continue;
        const Mat3 r = quat_to_rotation(cloud.raw_rotations[i]);
        const Vec3 s = cloud.scale(i);
        Vec3 samples[2];
        for (auto &p : samples) {
            Vec3 z(normal(rng), normal(rng), normal(rng));
            p = cloud.positions[i] + r * s.cwiseProduct(z);
        }
        out.cloud.positions[i] = samples[0];
        out.cloud.raw_scales[i] = cloud.raw_scales[i] - Vec3::Constant(shrink);
        out.fresh[i] = true;
        second_children.emplace_back(i, samples[1]);
    }
    std::size_t next_child = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (action[i] == DensifyAction::clone) {
            out.cloud.push_from(cloud, i);
        } else if (action[i] == DensifyAction::split) {
            out.cloud.push_from(cloud, i);
            out.cloud.positions.back() = second_children[next_child++].second;
            out.cloud.raw_scales.back() = out.cloud.raw_scales[i];
        } else {
            continue;
        }
        out.source.push_back(i);
        out.fresh.push_back(true);
    }
    return out;
}

/// Drops Gaussians that are nearly transparent or larger than the scene.
/// Refuses to remove every Gaussian.
inline CloudEdit prune(const GaussianCloud &cloud, const DensifyConfig &cfg, double extent) {
    CloudEdit out;
    out.cloud.sh_degree = cloud.sh_degree;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.opacity(i) < cfg.prune_opacity || cloud.max_scale(i) > extent) continue;
        out.cloud.push_from(cloud, i);
        out.source.push_back(i);
        out.fresh.push_back(false);
    }
    if (out.cloud.size() == 0) throw ContractViolation("prune: every Gaussian would be removed");
    return out;
}

/// Clamps opacities down to cfg.opacity_reset_value.
inline void reset_opacity(GaussianCloud &cloud, const DensifyConfig &cfg) {
    const double cap = logit(cfg.opacity_reset_value);
    for (auto &o : cloud.raw_opacities) o = std::min(o, cap);
}

struct DensifyEvent {
    int iteration = 0;
    DensifyPolicy policy = DensifyPolicy::pixel_aware;
    std::size_t clones = 0, splits = 0, pruned = 0, n_after = 0;
};

inline void write_densify_log_header(std::ostream &os) {
    os << "iteration,policy,clone,split,pruned,n_after\n";
}

inline void write_densify_event(std::ostream &os, const DensifyEvent &e) {
    os << e.iteration << ',' << to_string(e.policy) << ',' << e.clones << ',' << e.splits << ','
       << e.pruned << ',' << e.n_after << '\n';
}

} // namespace pgst
