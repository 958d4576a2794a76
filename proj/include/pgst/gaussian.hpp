#pragma once

// Gaussian primitive parameterization: activations, covariance assembly and
// the pinhole camera. Projection lives in projection.hpp.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "pgst/errors.hpp"

namespace pgst {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d; // quaternions are stored (w, x, y, z)
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Parameter arrays for N Gaussians in their unconstrained (raw) form.
///
/// Scales are log-space, opacities logit-space and rotations unnormalized
/// quaternions; the activations below map them to valid values. Colors are
/// spherical-harmonic coefficients laid out [gaussian][coefficient][channel].
struct GaussianCloud {
    int sh_degree = 0;
    std::vector<Vec3> positions;
    std::vector<Vec3> raw_scales;
    std::vector<Vec4> raw_rotations;
    std::vector<double> raw_opacities;
    std::vector<double> colors;

    std::size_t size() const { return positions.size(); }
    int coeffs() const { return (sh_degree + 1) * (sh_degree + 1); }
    std::size_t color_stride() const { return static_cast<std::size_t>(coeffs()) * 3; }

    double *color(std::size_t i) { return colors.data() + i * color_stride(); }
    const double *color(std::size_t i) const { return colors.data() + i * color_stride(); }

    Vec3 scale(std::size_t i) const { return raw_scales[i].array().exp(); }
    double opacity(std::size_t i) const { return sigmoid(raw_opacities[i]); }
    double max_scale(std::size_t i) const { return scale(i).maxCoeff(); }

    void resize(std::size_t n) {
        positions.resize(n, Vec3::Zero());
        raw_scales.resize(n, Vec3::Zero());
        raw_rotations.resize(n, Vec4(1, 0, 0, 0));
        raw_opacities.resize(n, 0.0);
        colors.resize(n * color_stride(), 0.0);
    }

    /// Appends a copy of entry i of `src` (which must share the SH degree).
    void push_from(const GaussianCloud &src, std::size_t i) {
        positions.push_back(src.positions[i]);
        raw_scales.push_back(src.raw_scales[i]);
        raw_rotations.push_back(src.raw_rotations[i]);
        raw_opacities.push_back(src.raw_opacities[i]);
        colors.insert(colors.end(), src.color(i), src.color(i) + src.color_stride());
    }

    void validate() const {
        if (sh_degree < 0 || sh_degree > 1)
            throw ContractViolation("GaussianCloud: SH degree must be 0 or 1");
        const std::size_t n = size();
        if (n == 0) throw ContractViolation("GaussianCloud: empty cloud");
        if (raw_scales.size() != n || raw_rotations.size() != n || raw_opacities.size() != n ||
            colors.size() != n * color_stride())
            throw ContractViolation("GaussianCloud: parameter arrays disagree on N");
    }
};

/// Invokes fn(name, span) for every parameter group, in a fixed order.
template <typename Cloud, typename Fn>
void for_each_param_group(Cloud &cloud, Fn &&fn) {
    auto n = cloud.size();
    fn("positions", std::span(cloud.positions.data()->data(), 3 * n));
    fn("raw_scales", std::span(cloud.raw_scales.data()->data(), 3 * n));
    fn("raw_rotations", std::span(cloud.raw_rotations.data()->data(), 4 * n));
    fn("raw_opacities", std::span(cloud.raw_opacities.data(), n));
    fn("colors", std::span(cloud.colors.data(), cloud.colors.size()));
}

/// Same-shaped container of zeros; used for gradients.
inline GaussianCloud zeros_like(const GaussianCloud &c) {
    GaussianCloud z;
    z.sh_degree = c.sh_degree;
    z.positions.assign(c.size(), Vec3::Zero());
    z.raw_scales.assign(c.size(), Vec3::Zero());
    z.raw_rotations.assign(c.size(), Vec4::Zero());
    z.raw_opacities.assign(c.size(), 0.0);
    z.colors.assign(c.colors.size(), 0.0);
    return z;
}

/// Rotation matrix of the normalized quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4 &raw_q) {
    double norm = raw_q.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw DegenerateInput("quat_to_rotation: quaternion has zero or non-finite norm");
    Vec4 q = raw_q / norm;
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back to dL/d(raw quaternion), through the normalization.
inline Vec4 quat_to_rotation_vjp(const Vec4 &raw_q, const Mat3 &g) {
    double norm = raw_q.norm();
    Vec4 q = raw_q / norm;
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 dq;
    dq[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                 x * g(2, 1));
    dq[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                 z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    dq[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                 w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    dq[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                 y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return (dq - q * q.dot(dq)) / norm;
}

/// Σ = R S Sᵀ Rᵀ with S = diag(exp(raw_scale)).
inline Mat3 build_covariance(const Vec3 &raw_scale, const Vec4 &raw_q) {
    Mat3 m = quat_to_rotation(raw_q) * raw_scale.array().exp().matrix().asDiagonal();
    Mat3 sigma = m * m.transpose();
    return 0.5 * (sigma + sigma.transpose());
}

/// Gradients of build_covariance given dL/dΣ (any layout; symmetrized here).
struct CovarianceGrad {
    Vec3 raw_scale = Vec3::Zero();
    Vec4 raw_q = Vec4::Zero();
};

inline CovarianceGrad build_covariance_vjp(const Vec3 &raw_scale, const Vec4 &raw_q,
                                           const Mat3 &d_sigma) {
    Mat3 r = quat_to_rotation(raw_q);
    Vec3 s = raw_scale.array().exp();
    Mat3 m = r * s.asDiagonal();
    Mat3 d_m = (d_sigma + d_sigma.transpose()) * m;
    CovarianceGrad out;
    Mat3 d_r;
    for (int j = 0; j < 3; ++j) {
        out.raw_scale[j] = d_m.col(j).dot(r.col(j)) * s[j];
        d_r.col(j) = d_m.col(j) * s[j];
    }
    out.raw_q = quat_to_rotation_vjp(raw_q, d_r);
    return out;
}

/// Pinhole camera, OpenCV convention (x right, y down, +z forward).
struct Camera {
    double fx = 1, fy = 1;
    double cx = 0, cy = 0;
    Mat3 rotation = Mat3::Identity(); // world → camera
    Vec3 translation = Vec3::Zero();
    int width = 1, height = 1;
    double near = 0.2;

    Vec3 to_camera(const Vec3 &p) const { return rotation * p + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }

    void validate() const {
        if (width < 1 || height < 1) throw ContractViolation("Camera: image size must be ≥ 1");
        if (!(fx > 0) || !(fy > 0)) throw ContractViolation("Camera: focal lengths must be > 0");
        if (!(near > 0)) throw ContractViolation("Camera: near plane must be > 0");
        double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
        if (ortho > 1e-6 || rotation.determinant() < 0)
            throw ContractViolation("Camera: rotation is not a proper rotation");
    }

    /// Camera at `eye` looking at `target`; `up` is the approximate world up.
    static Camera look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int w, int h,
                          double focal) {
        Vec3 forward = (target - eye).normalized();
        Vec3 right = forward.cross(up).normalized();
        Vec3 down = forward.cross(right);
        Camera cam;
        cam.rotation.row(0) = right.transpose();
        cam.rotation.row(1) = down.transpose();
        cam.rotation.row(2) = forward.transpose();
        cam.translation = -cam.rotation * eye;
        cam.width = w;
        cam.height = h;
        cam.fx = cam.fy = focal;
        cam.cx = 0.5 * w - 0.5;
        cam.cy = 0.5 * h - 0.5;
        return cam;
    }
};

/// View-dependent RGB of Gaussian i, before clamping.
inline Vec3 evaluate_sh(const GaussianCloud &cloud, std::size_t i, const Vec3 &cam_center) {
    const double *f = cloud.color(i);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c) rgb[c] = 0.5 + kShC0 * f[c];
    if (cloud.sh_degree >= 1) {
        Vec3 dir = (cloud.positions[i] - cam_center).normalized();
        for (int c = 0; c < 3; ++c)
            rgb[c] += -kShC1 * dir.y() * f[3 + c] + kShC1 * dir.z() * f[6 + c] -
                      kShC1 * dir.x() * f[9 + c];
    }
    return rgb;
}

/// Backward of evaluate_sh: accumulates into the color coefficients and,
/// for degree 1, the position (through the view direction).
inline void evaluate_sh_vjp(const GaussianCloud &cloud, std::size_t i, const Vec3 &cam_center,
                            const Vec3 &d_rgb, double *d_coeffs, Vec3 &d_position) {
    for (int c = 0; c < 3; ++c) d_coeffs[c] += kShC0 * d_rgb[c];
    if (cloud.sh_degree < 1) return;
    const double *f = cloud.color(i);
    Vec3 v = cloud.positions[i] - cam_center;
    double len = v.norm();
    Vec3 dir = v / len;
    Vec3 d_dir = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
        d_coeffs[3 + c] += -kShC1 * dir.y() * d_rgb[c];
        d_coeffs[6 + c] += kShC1 * dir.z() * d_rgb[c];
        d_coeffs[9 + c] += -kShC1 * dir.x() * d_rgb[c];
        d_dir.x() += -kShC1 * f[9 + c] * d_rgb[c];
        d_dir.y() += -kShC1 * f[3 + c] * d_rgb[c];
        d_dir.z() += kShC1 * f[6 + c] * d_rgb[c];
    }
    d_position += (d_dir - dir * dir.dot(d_dir)) / len;
}

/// Radius of the bounding sphere of the camera centers (about their mean).
inline double scene_extent(std::span<const Camera> cameras) {
    if (cameras.empty()) return 1.0;
    Vec3 mean = Vec3::Zero();
    for (const auto &c : cameras) mean += c.center();
    mean /= static_cast<double>(cameras.size());
    double r = 0.0;
    for (const auto &c : cameras) r = std::max(r, (c.center() - mean).norm());
    return r > 0 ? r : 1.0;
}

/// FNV-1a over the bit patterns of one parameter group ("positions",
/// "raw_scales", ...); detects any change, however small.
inline std::uint64_t group_checksum(const GaussianCloud &cloud, std::string_view group) {
    std::uint64_t h = 1469598103934665603ull;
    bool found = false;
    for_each_param_group(cloud, [&](const char *name, auto s) {
        if (group != name) return;
        found = true;
        for (double v : s) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = (h ^ bits) * 1099511628211ull;
        }
    });
    if (!found) throw ContractViolation("unknown cloud parameter group");
    return h;
}

} // namespace pgst
