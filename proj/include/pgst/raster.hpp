#pragma once

// Tile-based front-to-back alpha-compositing rasterizer, its analytic
// backward pass, and a brute-force per-pixel reference renderer.
//
// Every pixel is shaded by the same routine (shade_pixel) in both renderers,
// so tiling only decides which Gaussians a pixel visits. Tiles are binned
// with an opacity-aware extent that contains every pixel where the splat can
// reach alpha_min, which makes the two renderers agree exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <vector>

#include "pgst/gaussian.hpp"
#include "pgst/image.hpp"
#include "pgst/parallel.hpp"
#include "pgst/projection.hpp"

namespace pgst {

inline constexpr double kValidDepthMin = 0.2;

struct RenderConfig {
    int tile_size = 16;
    Vec3 background = Vec3::Zero();
    double alpha_min = 1.0 / 255.0;
    double alpha_max = 0.99;
    double transmittance_min = 1e-4;
    bool count_coverage = true;
    /// Hash every thresholding decision into RenderArtifacts::signature.
    /// Gradient checks use it to detect discontinuity crossings.
    bool track_signature = false;
    std::size_t reference_cap = 4096;
    ProjectionOptions projection;

    void validate() const {
        if (tile_size < 1) throw ContractViolation("RenderConfig: tile_size must be ≥ 1");
        auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
        if (!in_unit(alpha_min) || !in_unit(transmittance_min) || !(alpha_max > alpha_min) ||
            alpha_max >= 1.0)
            throw ContractViolation("RenderConfig: thresholds must lie in (0,1)");
    }
};

/// Per-Gaussian, per-view bookkeeping.
struct GaussianViewStats {
    int radius_px = 0;
    int coverage = 0; // m: pixels passing the radius, opacity and occlusion tests
    bool valid = false;
    bool culled = true;
    Vec2 ndc_grad = Vec2::Zero(); // filled by rasterize_backward
    double ndc_grad_norm = 0.0;
};

struct RenderArtifacts {
    Image image;
    Plane final_transmittance;
    std::vector<GaussianViewStats> per_gaussian;

    // Forward state reused by the backward pass.
    std::vector<Projected2D> projected;
    std::vector<Vec3> rgb;
    std::vector<std::uint8_t> rgb_clamped; // bit c set when channel c was clamped
    std::vector<double> alpha;
    std::vector<int> order; // non-culled Gaussians, front to back
    std::vector<std::vector<int>> tiles;
    int tiles_x = 0, tiles_y = 0;
    std::uint64_t signature = 0;
    bool from_tiled = false;
};

namespace detail {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    v *= 0x9E3779B97F4A7C15ull;
    v ^= v >> 32;
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    return h;
}

struct Contribution {
    int slot;      // position in the visited list
    double a;      // evaluated alpha after clamping
    double T;      // transmittance before this Gaussian
    double g;      // exp(-q/2)
    Vec2 d;        // pixel - center
    bool clamped;  // a hit alpha_max
};

/// Front-to-back compositing of one pixel over `ids` (depth-sorted).
/// `visit` sees every accepted contribution in order.
template <typename Ids, typename Visit>
Vec3 shade_pixel(const RenderArtifacts &art, const RenderConfig &cfg, int x, int y,
                 const Ids &ids, double &T, std::uint64_t *sig, Visit &&visit) {
    Vec3 color = Vec3::Zero();
    T = 1.0;
    const Vec2 p(x, y);
    for (int slot = 0; slot < static_cast<int>(ids.size()); ++slot) {
        if (T < cfg.transmittance_min) {
            if (sig) *sig = mix(*sig, 0xB4EAull + slot);
            break;
        }
        const int id = ids[slot];
        const Projected2D &pr = art.projected[id];
        const Vec2 d = p - pr.center_px;
        const double q = pr.conic(0, 0) * d.x() * d.x() + 2.0 * pr.conic(0, 1) * d.x() * d.y() +
                         pr.conic(1, 1) * d.y() * d.y();
        const double g = std::exp(-0.5 * q);
        double a = art.alpha[id] * g;
        if (a < cfg.alpha_min) continue;
        const bool clamped = a > cfg.alpha_max;
        if (clamped) a = cfg.alpha_max;
        if (sig) *sig = mix(*sig, (static_cast<std::uint64_t>(id) << 1) | clamped);
        visit(Contribution{slot, a, T, g, d, clamped});
        color += (T * a) * art.rgb[id];
        T *= 1.0 - a;
    }
    return color;
}

// Compositing is a convex combination, so this only trims round-off when
// the background is in [0,1]; the backward pass treats it as identity.
inline double unit_clamp(double v) { return std::clamp(v, 0.0, 1.0); }

inline bool within_radius(const Contribution &c, int radius) {
    return c.d.squaredNorm() < static_cast<double>(radius) * radius;
}

/// Projection, color evaluation, validity and depth ordering; shared by
/// both renderers.
inline RenderArtifacts prepare(const GaussianCloud &cloud, const Camera &cam,
                               const RenderConfig &cfg) {
    cloud.validate();
    cam.validate();
    cfg.validate();
    const std::size_t n = cloud.size();
    RenderArtifacts art;
    art.image = Image(cam.width, cam.height);
    art.final_transmittance = Plane(cam.width, cam.height, 1.0);
    art.per_gaussian.assign(n, {});
    art.projected.assign(n, {});
    art.rgb.assign(n, Vec3::Zero());
    art.rgb_clamped.assign(n, 0);
    art.alpha.assign(n, 0.0);
    const Vec3 cam_center = cam.center();

    parallel_for(n, [&](std::size_t i) {
        Projected2D pr = project(cloud.positions[i], cloud.raw_scales[i], cloud.raw_rotations[i],
                                 cam, cfg.projection);
        Vec3 rgb = evaluate_sh(cloud, i, cam_center);
        std::uint8_t mask = 0;
        for (int c = 0; c < 3; ++c) {
            if (rgb[c] < 0.0 || rgb[c] > 1.0) mask |= 1u << c;
            rgb[c] = std::clamp(rgb[c], 0.0, 1.0);
        }
        auto &st = art.per_gaussian[i];
        st.culled = pr.culled;
        st.radius_px = pr.culled ? 0 : pr.radius_px;
        const double R = st.radius_px;
        st.valid = !pr.culled && st.radius_px > 0 && pr.depth_cam > kValidDepthMin &&
                   -R - 0.5 < pr.center_px.x() && pr.center_px.x() < R + cam.width - 0.5 &&
                   -R - 0.5 < pr.center_px.y() && pr.center_px.y() < R + cam.height - 0.5;
        art.projected[i] = pr;
        art.rgb[i] = rgb;
        art.rgb_clamped[i] = mask;
        art.alpha[i] = cloud.opacity(i);
    });

    for (std::size_t i = 0; i < n; ++i)
        if (!art.projected[i].culled) art.order.push_back(static_cast<int>(i));
    std::sort(art.order.begin(), art.order.end(), [&](int a, int b) {
        double za = art.projected[a].depth_cam, zb = art.projected[b].depth_cam;
        return za < zb || (za == zb && a < b);
    });
    return art;
}

inline std::uint64_t per_gaussian_signature(const RenderArtifacts &art) {
    std::uint64_t h = 0x51A7ull;
    for (std::size_t i = 0; i < art.projected.size(); ++i) {
        const auto &p = art.projected[i];
        h = mix(h, (static_cast<std::uint64_t>(p.culled) << 3) |
                       (static_cast<std::uint64_t>(p.clamped_x) << 2) |
                       (static_cast<std::uint64_t>(p.clamped_y) << 1));
        h = mix(h, art.rgb_clamped[i]);
    }
    return h;
}

inline void finalize_coverage(RenderArtifacts &art) {
    for (auto &st : art.per_gaussian)
        if (!st.valid || st.culled) st.coverage = 0;
}

} // namespace detail

/// Tile-based forward render.
inline RenderArtifacts rasterize_forward(const GaussianCloud &cloud, const Camera &cam,
                                         const RenderConfig &cfg) {
    RenderArtifacts art = detail::prepare(cloud, cam, cfg);
    art.from_tiled = true;
    const int ts = cfg.tile_size;
    art.tiles_x = (cam.width + ts - 1) / ts;
    art.tiles_y = (cam.height + ts - 1) / ts;
    art.tiles.assign(static_cast<std::size_t>(art.tiles_x) * art.tiles_y, {});

    // Binning: a splat can reach alpha_min only where
    // q ≤ 2 ln(alpha/alpha_min), i.e. within sqrt(λmax·that) of its center.
    for (int id : art.order) {
        const double alpha = art.alpha[id];
        if (alpha < cfg.alpha_min) continue;
        const auto &pr = art.projected[id];
        const double extent =
            std::sqrt(pr.max_eigenvalue * 2.0 * std::log(alpha / cfg.alpha_min)) + 1.0;
        const double x0 = pr.center_px.x() - extent, x1 = pr.center_px.x() + extent;
        const double y0 = pr.center_px.y() - extent, y1 = pr.center_px.y() + extent;
        if (x1 < 0 || y1 < 0 || x0 > cam.width - 1 || y0 > cam.height - 1) continue;
        const int tx0 = std::max(0, static_cast<int>(std::floor(x0)) / ts);
        const int ty0 = std::max(0, static_cast<int>(std::floor(y0)) / ts);
        const int tx1 = std::min(art.tiles_x - 1, static_cast<int>(std::floor(x1)) / ts);
        const int ty1 = std::min(art.tiles_y - 1, static_cast<int>(std::floor(y1)) / ts);
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                art.tiles[static_cast<std::size_t>(ty) * art.tiles_x + tx].push_back(id);
    }

    const std::size_t n_tiles = art.tiles.size();
    std::vector<std::vector<int>> tile_coverage(n_tiles);
    std::vector<std::uint64_t> tile_sig(n_tiles, 0);
    parallel_for(n_tiles, [&](std::size_t t) {
        const auto &ids = art.tiles[t];
        auto &cov = tile_coverage[t];
        cov.assign(ids.size(), 0);
        const int bx = static_cast<int>(t % art.tiles_x) * ts;
        const int by = static_cast<int>(t / art.tiles_x) * ts;
        std::uint64_t sig = 0x7117ull + t;
        for (int y = by; y < std::min(by + ts, cam.height); ++y) {
            for (int x = bx; x < std::min(bx + ts, cam.width); ++x) {
                double T;
                Vec3 c = detail::shade_pixel(
                    art, cfg, x, y, ids, T, cfg.track_signature ? &sig : nullptr,
                    [&](const detail::Contribution &ct) {
                        if (cfg.count_coverage &&
                            detail::within_radius(ct, art.projected[ids[ct.slot]].radius_px))
                            ++cov[ct.slot];
                    });
                c += T * cfg.background;
                for (int ch = 0; ch < 3; ++ch) art.image.at(x, y, ch) = detail::unit_clamp(c[ch]);
                art.final_transmittance.at(x, y) = T;
            }
        }
        tile_sig[t] = sig;
    });

    for (std::size_t t = 0; t < n_tiles; ++t)
        for (std::size_t k = 0; k < art.tiles[t].size(); ++k)
            art.per_gaussian[art.tiles[t][k]].coverage += tile_coverage[t][k];
    detail::finalize_coverage(art);

    if (cfg.track_signature) {
        std::uint64_t h = detail::per_gaussian_signature(art);
        for (auto s : tile_sig) h = detail::mix(h, s);
        art.signature = h;
    }
    return art;
}

/// Brute-force renderer: every pixel visits every non-culled Gaussian.
/// Refuses scenes larger than cfg.reference_cap.
inline RenderArtifacts rasterize_reference(const GaussianCloud &cloud, const Camera &cam,
                                           const RenderConfig &cfg) {
    if (cloud.size() > cfg.reference_cap)
        throw ContractViolation("rasterize_reference: scene exceeds the reference cap");
    RenderArtifacts art = detail::prepare(cloud, cam, cfg);
    std::uint64_t sig = 0x7117ull;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double T;
            Vec3 c = detail::shade_pixel(
                art, cfg, x, y, art.order, T, cfg.track_signature ? &sig : nullptr,
                [&](const detail::Contribution &ct) {
                    const int id = art.order[ct.slot];
                    if (cfg.count_coverage &&
                        detail::within_radius(ct, art.projected[id].radius_px))
                        ++art.per_gaussian[id].coverage;
                });
            c += T * cfg.background;
            for (int ch = 0; ch < 3; ++ch) art.image.at(x, y, ch) = detail::unit_clamp(c[ch]);
            art.final_transmittance.at(x, y) = T;
        }
    }
    detail::finalize_coverage(art);
    if (cfg.track_signature) art.signature = detail::mix(detail::per_gaussian_signature(art), sig);
    return art;
}

/// Analytic gradients of a rasterize_forward render.
///
/// Returns gradients shaped like the cloud and fills ndc_grad /
/// ndc_grad_norm (the screen-space gradient of each Gaussian's 2D mean in
/// NDC units) in `art.per_gaussian`. `d_transmittance`, when given, is an
/// upstream gradient on the final per-pixel transmittance (used by
/// compositing, where it acts as a per-pixel background).
inline GaussianCloud rasterize_backward(const GaussianCloud &cloud, const Camera &cam,
                                        const RenderConfig &cfg, RenderArtifacts &art,
                                        const Image &d_image,
                                        const Plane *d_transmittance = nullptr) {
    if (!art.from_tiled) throw ContractViolation("rasterize_backward: artifacts are not tiled");
    if (art.per_gaussian.size() != cloud.size() || art.image.width != cam.width ||
        art.image.height != cam.height)
        throw ContractViolation("rasterize_backward: artifacts do not match the scene");
    require_same_shape(art.image, d_image, "rasterize_backward");
    if (d_transmittance &&
        (d_transmittance->width != cam.width || d_transmittance->height != cam.height))
        throw ContractViolation("rasterize_backward: transmittance gradient shape mismatch");

    struct Grad2D {
        Vec2 center = Vec2::Zero();
        Mat2 conic = Mat2::Zero();
        double alpha = 0.0;
        Vec3 rgb = Vec3::Zero();
    };

    const int ts = cfg.tile_size;
    const std::size_t n_tiles = art.tiles.size();
    std::vector<std::vector<Grad2D>> tile_grads(n_tiles);
    parallel_for(n_tiles, [&](std::size_t t) {
        const auto &ids = art.tiles[t];
        auto &grads = tile_grads[t];
        grads.assign(ids.size(), {});
        if (ids.empty()) return;
        const int bx = static_cast<int>(t % art.tiles_x) * ts;
        const int by = static_cast<int>(t / art.tiles_x) * ts;
        std::vector<detail::Contribution> hits;
        for (int y = by; y < std::min(by + ts, cam.height); ++y) {
            for (int x = bx; x < std::min(bx + ts, cam.width); ++x) {
                const Vec3 dc(d_image.at(x, y, 0), d_image.at(x, y, 1), d_image.at(x, y, 2));
                const double dT = d_transmittance ? d_transmittance->at(x, y) : 0.0;
                if (dc.isZero(0.0) && dT == 0.0) continue;
                hits.clear();
                double T_final;
                detail::shade_pixel(art, cfg, x, y, ids, T_final, nullptr,
                                    [&](const detail::Contribution &c) { hits.push_back(c); });
                Vec3 behind = T_final * cfg.background;
                const double behind_T = T_final * dT;
                for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
                    const int id = ids[it->slot];
                    const Vec3 &c = art.rgb[id];
                    Grad2D &g = grads[it->slot];
                    g.rgb += (it->T * it->a) * dc;
                    const double d_a =
                        dc.dot(it->T * c - behind / (1.0 - it->a)) - behind_T / (1.0 - it->a);
                    behind += (it->T * it->a) * c;
                    if (it->clamped) continue;
                    g.alpha += d_a * it->g;
                    const double d_q = -0.5 * it->g * art.alpha[id] * d_a;
                    const Mat2 &K = art.projected[id].conic;
                    g.center += d_q * (-2.0 * (K * it->d));
                    g.conic += d_q * (it->d * it->d.transpose());
                }
            }
        }
    });

    std::vector<Grad2D> acc(cloud.size());
    for (std::size_t t = 0; t < n_tiles; ++t) {
        for (std::size_t k = 0; k < art.tiles[t].size(); ++k) {
            const auto &g = tile_grads[t][k];
            auto &a = acc[art.tiles[t][k]];
            a.center += g.center;
            a.conic += g.conic;
            a.alpha += g.alpha;
            a.rgb += g.rgb;
        }
    }

    GaussianCloud grads = zeros_like(cloud);
    const Vec3 cam_center = cam.center();
    parallel_for(cloud.size(), [&](std::size_t i) {
        auto &st = art.per_gaussian[i];
        const auto &pr = art.projected[i];
        if (pr.culled) {
            st.ndc_grad.setZero();
            st.ndc_grad_norm = 0.0;
            return;
        }
        const auto &g = acc[i];
        st.ndc_grad = {g.center.x() * 0.5 * cam.width, g.center.y() * 0.5 * cam.height};
        st.ndc_grad_norm = st.ndc_grad.norm();

        const Mat2 d_cov = -pr.conic * g.conic * pr.conic;
        auto pg = project_vjp(cloud.positions[i], cloud.raw_scales[i], cloud.raw_rotations[i], cam,
                              pr, g.center, d_cov, cfg.projection);
        grads.positions[i] = pg.position;
        grads.raw_scales[i] = pg.raw_scale;
        grads.raw_rotations[i] = pg.raw_q;

        Vec3 d_rgb = g.rgb;
        for (int c = 0; c < 3; ++c)
            if (art.rgb_clamped[i] & (1u << c)) d_rgb[c] = 0.0;
        evaluate_sh_vjp(cloud, i, cam_center, d_rgb, grads.color(i), grads.positions[i]);

        const double alpha = art.alpha[i];
        grads.raw_opacities[i] = g.alpha * alpha * (1.0 - alpha);
    });
    return grads;
}

/// Debug dump: index, valid, R, m, ndc_grad_norm.
inline void write_gaussian_stats_csv(std::ostream &os, const RenderArtifacts &art) {
    os << "index,valid,radius_px,coverage,ndc_grad_norm\n";
    for (std::size_t i = 0; i < art.per_gaussian.size(); ++i) {
        const auto &s = art.per_gaussian[i];
        os << i << ',' << (s.valid ? 1 : 0) << ',' << s.radius_px << ',' << s.coverage << ','
           << s.ndc_grad_norm << '\n';
    }
}

} // namespace pgst
