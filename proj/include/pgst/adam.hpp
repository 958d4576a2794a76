#pragma once

// Adam with per-group state. Groups are addressed by name, so a cloud and
// any number of network modules can share one optimizer.

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgst/densify.hpp"
#include "pgst/errors.hpp"
#include "pgst/gaussian.hpp"
#include "pgst/tensor.hpp"

namespace pgst {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

class Adam {
  public:
    struct Moments {
        std::vector<double> m, v;
        long steps = 0;
    };

    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig &config() const { return cfg_; }

    /// One update of `params` from `grads`. Throws NumericalError naming
    /// the group when a gradient is not finite; params are left untouched.
    void step(const std::string &group, std::span<double> params, std::span<const double> grads,
              double lr) {
        if (params.size() != grads.size())
            throw ContractViolation("adam: params and grads differ in size for '" + group + "'");
        for (double g : grads)
            if (!std::isfinite(g))
                throw NumericalError("non-finite gradient in parameter group '" + group + "'");
        Moments &s = state_[group];
        if (s.m.size() != params.size()) {
            s.m.assign(params.size(), 0.0);
            s.v.assign(params.size(), 0.0);
            s.steps = 0;
        }
        ++s.steps;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.steps));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.steps));
        for (std::size_t i = 0; i < params.size(); ++i) {
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * grads[i];
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
            const double m_hat = s.m[i] / c1;
            const double v_hat = s.v[i] / c2;
            params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }

    /// Follows a structural edit of a cloud: surviving entries keep their
    /// moments, fresh entries start from zero.
    void remap(const std::string &group, std::size_t stride, const CloudEdit &edit) {
        auto it = state_.find(group);
        if (it == state_.end()) return;
        Moments &s = it->second;
        Moments next;
        next.steps = s.steps;
        next.m.assign(edit.source.size() * stride, 0.0);
        next.v.assign(edit.source.size() * stride, 0.0);
        for (std::size_t j = 0; j < edit.source.size(); ++j) {
            if (edit.fresh[j]) continue;
            const std::size_t i = edit.source[j];
            if ((i + 1) * stride > s.m.size()) throw ContractViolation("adam: remap source out of range");
            for (std::size_t k = 0; k < stride; ++k) {
                next.m[j * stride + k] = s.m[i * stride + k];
                next.v[j * stride + k] = s.v[i * stride + k];
            }
        }
        s = std::move(next);
    }

    bool has(const std::string &group) const { return state_.count(group) > 0; }
    const Moments &moments(const std::string &group) const { return state_.at(group); }
    void clear() { state_.clear(); }

  private:
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
};

/// Learning rates for the cloud's parameter groups; 0 freezes a group.
struct CloudLearningRates {
    double position = 1.6e-3;
    double scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double color = 2.5e-3;

    double get(std::string_view group) const {
        if (group == "positions") return position;
        if (group == "raw_scales") return scale;
        if (group == "raw_rotations") return rotation;
        if (group == "raw_opacities") return opacity;
        if (group == "colors") return color;
        throw ContractViolation("unknown cloud parameter group");
    }
};

/// Steps every cloud group with a non-zero rate. Groups are named
/// prefix + group name.
inline void adam_step_cloud(Adam &opt, const std::string &prefix, GaussianCloud &cloud,
                            GaussianCloud &grads, const CloudLearningRates &lr) {
    std::vector<std::pair<std::string, std::span<double>>> g;
    for_each_param_group(grads, [&](const char *name, std::span<double> s) { g.emplace_back(name, s); });
    std::size_t k = 0;
    for_each_param_group(cloud, [&](const char *name, std::span<double> s) {
        const double rate = lr.get(name);
        if (rate > 0) opt.step(prefix + name, s, g[k].second, rate);
        ++k;
    });
}

/// Remaps every cloud group after apply() or prune().
inline void adam_remap_cloud(Adam &opt, const std::string &prefix, const CloudEdit &edit) {
    for_each_param_group(edit.cloud, [&](const char *name, auto s) {
        const std::size_t stride = edit.cloud.size() ? s.size() / edit.cloud.size() : 1;
        opt.remap(prefix + name, stride, edit);
    });
}

/// Steps every tensor of a module; names are prefix + tensor name.
template <typename Module>
void adam_step_module(Adam &opt, const std::string &prefix, Module &params, Module &grads,
                      double lr) {
    auto p = named_tensors(params, prefix);
    auto g = named_tensors(grads, prefix);
    if (p.size() != g.size()) throw ContractViolation("adam: module gradient layout mismatch");
    for (std::size_t k = 0; k < p.size(); ++k)
        opt.step(p[k].first, p[k].second->span(), g[k].second->span(), lr);
}

} // namespace pgst
