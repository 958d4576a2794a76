#pragma once

// Image losses and quality metrics: masked L1 + D-SSIM with analytic
// gradients, the fine-tuning loss with an optional perceptual hook, PSNR
// and SSIM.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "pgst/errors.hpp"
#include "pgst/image.hpp"

namespace pgst {

struct LossResult {
    double value = 0.0;
    Image grad; // dL/dpred
};

namespace detail {

constexpr int kSsimRadius = 5; // 11×11 window
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

inline const std::array<double, 2 * kSsimRadius + 1> &ssim_kernel() {
    static const auto k = [] {
        std::array<double, 2 * kSsimRadius + 1> w{};
        double sum = 0.0;
        for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
            w[i + kSsimRadius] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[i + kSsimRadius];
        }
        for (auto &v : w) v /= sum;
        return w;
    }();
    return k;
}

/// Separable Gaussian filter with zero padding. The kernel is symmetric, so
/// this operator is self-adjoint and also serves the backward pass.
inline std::vector<double> blur(const std::vector<double> &src, int w, int h) {
    const auto &k = ssim_kernel();
    std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
                const int xx = x + d;
                if (xx >= 0 && xx < w) s += k[d + kSsimRadius] * src[y * w + xx];
            }
            tmp[y * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
                const int yy = y + d;
                if (yy >= 0 && yy < h) s += k[d + kSsimRadius] * tmp[yy * w + x];
            }
            out[y * w + x] = s;
        }
    return out;
}

inline std::vector<double> channel(const Image &img, int c) {
    std::vector<double> out(img.pixel_count());
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = img.data[p * 3 + c];
    return out;
}

/// Σ_p weight_p · SSIM_p for one channel; adds d/dx into grad_x when given.
inline double ssim_channel(const std::vector<double> &x, const std::vector<double> &y, int w,
                           int h, const std::vector<double> &weight, std::vector<double> *grad_x) {
    const std::size_t n = x.size();
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t p = 0; p < n; ++p) {
        xx[p] = x[p] * x[p];
        yy[p] = y[p] * y[p];
        xy[p] = x[p] * y[p];
    }
    const auto mx = blur(x, w, h), my = blur(y, w, h);
    const auto exx = blur(xx, w, h), eyy = blur(yy, w, h), exy = blur(xy, w, h);
    double total = 0.0;
    std::vector<double> d_mx(n), d_exx(n), d_exy(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double a1 = 2.0 * mx[p] * my[p] + kSsimC1;
        const double a2 = 2.0 * (exy[p] - mx[p] * my[p]) + kSsimC2;
        const double b1 = mx[p] * mx[p] + my[p] * my[p] + kSsimC1;
        const double b2 = (exx[p] - mx[p] * mx[p]) + (eyy[p] - my[p] * my[p]) + kSsimC2;
        const double s = a1 * a2 / (b1 * b2);
        total += weight[p] * s;
        if (!grad_x) continue;
        const double ws = weight[p] * s;
        d_mx[p] = ws * (2.0 * my[p] / a1 - 2.0 * my[p] / a2 - 2.0 * mx[p] / b1 + 2.0 * mx[p] / b2);
        d_exx[p] = -ws / b2;
        d_exy[p] = 2.0 * ws / a2;
    }
    if (grad_x) {
        const auto g_mx = blur(d_mx, w, h), g_exx = blur(d_exx, w, h), g_exy = blur(d_exy, w, h);
        for (std::size_t p = 0; p < n; ++p)
            (*grad_x)[p] += g_mx[p] + 2.0 * x[p] * g_exx[p] + y[p] * g_exy[p];
    }
    return total;
}

/// Weighted mean SSIM over channels and pixels; per-pixel weights sum to 1
/// per channel. grad (optional) receives d/da.
inline double weighted_ssim(const Image &a, const Image &b, const std::vector<double> &weight,
                            Image *grad) {
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> g;
        if (grad) g.assign(a.pixel_count(), 0.0);
        total += ssim_channel(channel(a, c), channel(b, c), a.width, a.height, weight,
                              grad ? &g : nullptr);
        if (grad)
            for (std::size_t p = 0; p < g.size(); ++p) grad->data[p * 3 + c] += g[p] / 3.0;
    }
    return total / 3.0;
}

inline double sign(double v) { return (v > 0) - (v < 0); }

} // namespace detail

/// 10·log10(1/MSE); 100 dB when the images agree to MSE < 1e-10.
inline double psnr(const Image &a, const Image &b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    mse /= static_cast<double>(a.data.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

/// PSNR over the pixels where mask is 1.
inline double masked_psnr(const Image &a, const Image &b, const Plane &mask) {
    require_same_shape(a, b, "masked_psnr");
    double mse = 0.0, count = 0.0;
    for (std::size_t p = 0; p < a.pixel_count(); ++p) {
        if (mask.data[p] <= 0) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = a.data[p * 3 + c] - b.data[p * 3 + c];
            mse += d * d;
        }
        count += 3;
    }
    if (count == 0) throw InputError("masked_psnr: empty mask");
    mse /= count;
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

/// Mean local SSIM (11×11 Gaussian window, σ = 1.5, zero padding).
inline double ssim(const Image &a, const Image &b) {
    require_same_shape(a, b, "ssim");
    const std::vector<double> weight(a.pixel_count(), 1.0 / static_cast<double>(a.pixel_count()));
    return detail::weighted_ssim(a, b, weight, nullptr);
}

/// L1 + λ·(1 − SSIM)/2 restricted to mask (all pixels when mask is null).
/// Both terms see pred⊙mask and target⊙mask and average over the masked
/// pixels only.
inline LossResult loss_l1_dssim(const Image &pred, const Image &target, const Plane *mask,
                                double lambda) {
    require_same_shape(pred, target, "loss_l1_dssim");
    if (lambda < 0) throw InputError("loss: lambda must be ≥ 0");
    const std::size_t n = pred.pixel_count();
    std::vector<double> m(n, 1.0);
    if (mask) {
        if (mask->width != pred.width || mask->height != pred.height)
            throw ContractViolation("loss_l1_dssim: mask shape differs from image");
        for (std::size_t p = 0; p < n; ++p) {
            const double v = mask->data[p];
            if (v != 0.0 && v != 1.0) throw InputError("loss: mask values must be 0 or 1");
            m[p] = v;
        }
    }
    double count = 0.0;
    for (double v : m) count += v;
    if (count == 0) throw InputError("loss: mask is empty");

    LossResult r;
    r.grad = Image(pred.width, pred.height);
    const double l1_scale = 1.0 / (3.0 * count);
    for (std::size_t p = 0; p < n; ++p) {
        if (m[p] == 0.0) continue;
        for (int c = 0; c < 3; ++c) {
            const double d = pred.data[p * 3 + c] - target.data[p * 3 + c];
            r.value += std::abs(d) * l1_scale;
            r.grad.data[p * 3 + c] = detail::sign(d) * l1_scale;
        }
    }
    if (lambda > 0) {
        Image pm = pred, tm = target;
        std::vector<double> weight(n);
        for (std::size_t p = 0; p < n; ++p) {
            weight[p] = m[p] / count;
            for (int c = 0; c < 3; ++c) {
                pm.data[p * 3 + c] *= m[p];
                tm.data[p * 3 + c] *= m[p];
            }
        }
        Image g(pred.width, pred.height);
        const double s = detail::weighted_ssim(pm, tm, weight, &g);
        r.value += lambda * (1.0 - s) / 2.0;
        for (std::size_t p = 0; p < n; ++p)
            for (int c = 0; c < 3; ++c)
                r.grad.data[p * 3 + c] += -0.5 * lambda * g.data[p * 3 + c] * m[p];
    }
    return r;
}

/// Decision signature of the loss (the L1 sign pattern), for finite
/// differences.
inline std::uint64_t l1_signature(const Image &pred, const Image &target) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < pred.data.size(); ++i)
        h = (h ^ static_cast<std::uint64_t>(detail::sign(pred.data[i] - target.data[i]) + 1)) *
            1099511628211ull;
    return h;
}

using PerceptualHook = std::function<LossResult(const Image &pred, const Image &target)>;

/// Process-wide registry of perceptual loss plugins. "off" is reserved.
class PerceptualRegistry {
  public:
    static PerceptualRegistry &instance() {
        static PerceptualRegistry r;
        return r;
    }

    void add(const std::string &id, PerceptualHook hook) {
        if (id == "off") throw ContractViolation("perceptual hook id 'off' is reserved");
        std::lock_guard lock(mutex_);
        hooks_[id] = std::move(hook);
    }

    bool contains(const std::string &id) const {
        std::lock_guard lock(mutex_);
        return id == "off" || hooks_.count(id) > 0;
    }

    PerceptualHook find(const std::string &id) const {
        std::lock_guard lock(mutex_);
        auto it = hooks_.find(id);
        if (it == hooks_.end()) throw InputError("unknown perceptual hook '" + id + "'");
        return it->second;
    }

  private:
    mutable std::mutex mutex_;
    std::map<std::string, PerceptualHook> hooks_;
};

struct LossConfig {
    double lambda = 0.2;
    double gamma = 0.05;
    std::string perceptual = "off";

    void validate() const {
        if (!(lambda >= 0) || !(gamma >= 0)) throw InputError("loss: lambda and gamma must be ≥ 0");
        if (!PerceptualRegistry::instance().contains(perceptual))
            throw InputError("unknown perceptual hook '" + perceptual + "'");
    }
};

/// L1 + λ·D-SSIM + γ·hook over the full frame.
inline LossResult loss_finetune(const Image &pred, const Image &target, const LossConfig &cfg) {
    cfg.validate();
    LossResult r = loss_l1_dssim(pred, target, nullptr, cfg.lambda);
    if (cfg.perceptual == "off") return r;
    const LossResult extra = PerceptualRegistry::instance().find(cfg.perceptual)(pred, target);
    if (cfg.gamma == 0) return r;
    r.value += cfg.gamma * extra.value;
    for (std::size_t i = 0; i < r.grad.data.size(); ++i) r.grad.data[i] += cfg.gamma * extra.grad.data[i];
    return r;
}

} // namespace pgst
