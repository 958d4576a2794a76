#pragma once

#include <algorithm>
#include <cmath>

#include "pgst/gaussian.hpp"

namespace pgst {

struct ProjectionOptions {
    double low_pass = 0.3;      // px², added to the cov2d diagonal
    double frustum_clamp = 1.3; // camera-space x/z, y/z clamp, in half-FOV units
};

/// Screen-space footprint of one Gaussian in one view.
struct Projected2D {
    Vec2 center_px = Vec2::Zero();
    Vec2 center_ndc = Vec2::Zero();
    double depth_cam = 0.0;
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity(); // cov2d⁻¹
    double max_eigenvalue = 0.0;
    int radius_px = 0;
    bool culled = true;

    // Kept for the backward pass.
    Vec3 cam_point = Vec3::Zero();
    bool clamped_x = false;
    bool clamped_y = false;
};

inline Vec2 pixel_to_ndc(const Vec2 &px, int width, int height) {
    return {2.0 * (px.x() + 0.5) / width - 1.0, 2.0 * (px.y() + 0.5) / height - 1.0};
}

inline Vec2 ndc_to_pixel(const Vec2 &ndc, int width, int height) {
    return {(ndc.x() + 1.0) * 0.5 * width - 0.5, (ndc.y() + 1.0) * 0.5 * height - 0.5};
}

namespace detail {

struct EwaJacobian {
    Mat23 j;
    double tx_eff, ty_eff; // clamped camera-space x, y
    bool clamped_x, clamped_y;
};

inline EwaJacobian ewa_jacobian(const Vec3 &t, const Camera &cam, const ProjectionOptions &opt) {
    const double lim_x = opt.frustum_clamp * 0.5 * cam.width / cam.fx;
    const double lim_y = opt.frustum_clamp * 0.5 * cam.height / cam.fy;
    const double xz = t.x() / t.z(), yz = t.y() / t.z();
    EwaJacobian out;
    out.clamped_x = xz < -lim_x || xz > lim_x;
    out.clamped_y = yz < -lim_y || yz > lim_y;
    out.tx_eff = std::clamp(xz, -lim_x, lim_x) * t.z();
    out.ty_eff = std::clamp(yz, -lim_y, lim_y) * t.z();
    const double iz = 1.0 / t.z(), iz2 = iz * iz;
    out.j << cam.fx * iz, 0.0, -cam.fx * out.tx_eff * iz2, 0.0, cam.fy * iz,
        -cam.fy * out.ty_eff * iz2;
    return out;
}

} // namespace detail

/// Projects one Gaussian through the camera with the local affine (EWA)
/// approximation: cov2d = J W Σ Wᵀ Jᵀ + low_pass·I, W the camera rotation.
inline Projected2D project(const Vec3 &position, const Vec3 &raw_scale, const Vec4 &raw_q,
                           const Camera &cam, const ProjectionOptions &opt = {}) {
    Projected2D p;
    p.cam_point = cam.to_camera(position);
    p.depth_cam = p.cam_point.z();
    if (!(p.depth_cam > cam.near)) return p; // culled

    const Vec3 &t = p.cam_point;
    p.center_px = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};
    p.center_ndc = pixel_to_ndc(p.center_px, cam.width, cam.height);

    auto ewa = detail::ewa_jacobian(t, cam, opt);
    p.clamped_x = ewa.clamped_x;
    p.clamped_y = ewa.clamped_y;
    Mat23 tw = ewa.j * cam.rotation;
    p.cov2d = tw * build_covariance(raw_scale, raw_q) * tw.transpose();
    p.cov2d(0, 0) += opt.low_pass;
    p.cov2d(1, 1) += opt.low_pass;
    p.cov2d(0, 1) = p.cov2d(1, 0) = 0.5 * (p.cov2d(0, 1) + p.cov2d(1, 0));

    const double a = p.cov2d(0, 0), b = p.cov2d(0, 1), c = p.cov2d(1, 1);
    const double det = a * c - b * b;
    if (!(det > 0.0)) return p;
    p.conic << c / det, -b / det, -b / det, a / det;
    const double mid = 0.5 * (a + c);
    p.max_eigenvalue = mid + std::sqrt(std::max(0.0, mid * mid - det));
    p.radius_px = static_cast<int>(std::ceil(3.0 * std::sqrt(p.max_eigenvalue)));
    p.culled = !(p.radius_px > 0);
    return p;
}

struct ProjectionGrad {
    Vec3 position = Vec3::Zero();
    Vec3 raw_scale = Vec3::Zero();
    Vec4 raw_q = Vec4::Zero();
};

/// Backward of project() given dL/d(center_px) and dL/d(cov2d).
inline ProjectionGrad project_vjp(const Vec3 &position, const Vec3 &raw_scale, const Vec4 &raw_q,
                                  const Camera &cam, const Projected2D &proj,
                                  const Vec2 &d_center_px, const Mat2 &d_cov2d,
                                  const ProjectionOptions &opt = {}) {
    ProjectionGrad g;
    if (proj.culled) return g;
    (void)position;
    const Vec3 &t = proj.cam_point;
    auto ewa = detail::ewa_jacobian(t, cam, opt);
    const Mat3 sigma = build_covariance(raw_scale, raw_q);
    const Mat23 tw = ewa.j * cam.rotation;
    const Mat2 gs = 0.5 * (d_cov2d + d_cov2d.transpose());

    const Mat3 d_sigma = tw.transpose() * gs * tw;
    const Mat23 d_tw = 2.0 * gs * tw * sigma;
    const Mat23 d_j = d_tw * cam.rotation.transpose();

    const double iz = 1.0 / t.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 d_t = Vec3::Zero();
    d_t.z() += d_j(0, 0) * (-cam.fx * iz2) + d_j(1, 1) * (-cam.fy * iz2);
    const double d_tx_eff = d_j(0, 2) * (-cam.fx * iz2);
    const double d_ty_eff = d_j(1, 2) * (-cam.fy * iz2);
    d_t.z() += d_j(0, 2) * (2.0 * cam.fx * ewa.tx_eff * iz3);
    d_t.z() += d_j(1, 2) * (2.0 * cam.fy * ewa.ty_eff * iz3);
    if (ewa.clamped_x)
        d_t.z() += d_tx_eff * (ewa.tx_eff * iz);
    else
        d_t.x() += d_tx_eff;
    if (ewa.clamped_y)
        d_t.z() += d_ty_eff * (ewa.ty_eff * iz);
    else
        d_t.y() += d_ty_eff;

    d_t.x() += d_center_px.x() * cam.fx * iz;
    d_t.y() += d_center_px.y() * cam.fy * iz;
    d_t.z() += -(d_center_px.x() * cam.fx * t.x() + d_center_px.y() * cam.fy * t.y()) * iz2;

    g.position = cam.rotation.transpose() * d_t;
    auto cg = build_covariance_vjp(raw_scale, raw_q, d_sigma);
    g.raw_scale = cg.raw_scale;
    g.raw_q = cg.raw_q;
    return g;
}

} // namespace pgst
