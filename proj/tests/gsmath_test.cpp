#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

#include "pgst/fd.hpp"
#include "pgst/projection.hpp"
#include "pgst/synthetic.hpp"

using namespace pgst;

TEST(QuatToRotation, IdentityAndHalfTurn) {
    EXPECT_TRUE(quat_to_rotation(Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity()));
    Mat3 half_turn = Vec3(-1, -1, 1).asDiagonal();
    EXPECT_TRUE(quat_to_rotation(Vec4(0, 0, 0, 1)).isApprox(half_turn));
    EXPECT_TRUE(quat_to_rotation(Vec4(2, 0, 0, 0)).isApprox(Mat3::Identity()));
}

TEST(QuatToRotation, ZeroNormIsDegenerate) {
    EXPECT_THROW(quat_to_rotation(Vec4::Zero()), DegenerateInput);
}

TEST(QuatToRotation, OrthonormalForRandomInputs) {
    std::mt19937_64 rng(3);
    for (int k = 0; k < 200; ++k) {
        Vec4 q = synth::random_quaternion(rng) * (0.1 + k);
        Mat3 r = quat_to_rotation(q);
        EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    }
}

TEST(BuildCovariance, ClosedFormCases) {
    EXPECT_TRUE(build_covariance(Vec3::Zero(), Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity()));
    Mat3 expected = Vec3(4, 1, 1).asDiagonal();
    EXPECT_TRUE(build_covariance(Vec3(std::log(2.0), 0, 0), Vec4(1, 0, 0, 0)).isApprox(expected));
}

TEST(BuildCovariance, EigenvaluesMatchSquaredScales) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        Vec3 raw(u(rng), u(rng), u(rng));
        Vec4 q = synth::random_quaternion(rng);
        Mat3 sigma = build_covariance(raw, q);
        EXPECT_EQ(sigma, sigma.transpose());
        Eigen::SelfAdjointEigenSolver<Mat3> solver(sigma);
        Vec3 ev = solver.eigenvalues();
        Vec3 s2 = (2.0 * raw).array().exp();
        std::sort(s2.data(), s2.data() + 3);
        for (int i = 0; i < 3; ++i) {
            EXPECT_GT(ev[i], 0.0);
            EXPECT_NEAR(ev[i], s2[i], 1e-10 * std::max(1.0, s2[2]));
        }
    }
}

TEST(Project, OpticalAxisHitsPrincipalPoint) {
    Camera cam = synth::default_camera();
    cam.rotation.setIdentity();
    cam.translation.setZero();
    auto p = project(Vec3(0, 0, 3), Vec3::Zero(), Vec4(1, 0, 0, 0), cam);
    ASSERT_FALSE(p.culled);
    EXPECT_DOUBLE_EQ(p.center_px.x(), cam.cx);
    EXPECT_DOUBLE_EQ(p.center_px.y(), cam.cy);
}

TEST(Project, RadiusHalvesWithDoubledDepth) {
    Camera cam = synth::default_camera(256, 256);
    cam.rotation.setIdentity();
    cam.translation.setZero();
    ProjectionOptions no_lowpass;
    no_lowpass.low_pass = 0.0;
    auto near_p = project(Vec3(0, 0, 2), Vec3::Zero(), Vec4(1, 0, 0, 0), cam, no_lowpass);
    auto far_p = project(Vec3(0, 0, 4), Vec3::Zero(), Vec4(1, 0, 0, 0), cam, no_lowpass);
    // Isotropic unit Σ: σ_px = f/z exactly on the axis.
    EXPECT_NEAR(std::sqrt(near_p.max_eigenvalue), 256.0 / 2.0, 1e-9);
    EXPECT_NEAR(std::sqrt(near_p.max_eigenvalue) / std::sqrt(far_p.max_eigenvalue), 2.0, 1e-12);
    EXPECT_NEAR(static_cast<double>(near_p.radius_px) / far_p.radius_px, 2.0, 0.01);
}

TEST(Project, NearPlaneCulls) {
    Camera cam = synth::default_camera();
    cam.rotation.setIdentity();
    cam.translation.setZero();
    auto p = project(Vec3(0, 0, cam.near / 2), Vec3::Zero(), Vec4(1, 0, 0, 0), cam);
    EXPECT_TRUE(p.culled);
}

TEST(Project, CovarianceIsSymmetricPositiveDefinite) {
    auto cloud = synth::random_cloud(5, {.count = 64});
    Camera cam = synth::default_camera();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        auto p = project(cloud.positions[i], cloud.raw_scales[i], cloud.raw_rotations[i], cam);
        ASSERT_FALSE(p.culled);
        EXPECT_EQ(p.cov2d(0, 1), p.cov2d(1, 0));
        EXPECT_GT(p.cov2d.determinant(), 0.0);
        EXPECT_GT(p.cov2d(0, 0), 0.0);
        EXPECT_GT(p.radius_px, 0);
    }
}

TEST(Project, NdcMappingIsAffineBijection) {
    const int w = 37, h = 21;
    EXPECT_TRUE(pixel_to_ndc(Vec2(-0.5, -0.5), w, h).isApprox(Vec2(-1, -1)));
    EXPECT_TRUE(pixel_to_ndc(Vec2(w - 0.5, h - 0.5), w, h).isApprox(Vec2(1, 1)));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.5, 40.0);
    for (int k = 0; k < 100; ++k) {
        Vec2 px(u(rng), u(rng));
        EXPECT_TRUE(ndc_to_pixel(pixel_to_ndc(px, w, h), w, h).isApprox(px, 1e-12));
    }
}

// Finite-difference check of center_ndc and cov2d against project_vjp with
// random output weights.
TEST(Project, AnalyticJacobiansMatchFiniteDifferences) {
    Camera cam = synth::default_camera();
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 1.0);
    auto cloud = synth::random_cloud(9, {.count = 24, .half_extent = 1.6});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec2 w_ndc(n(rng), n(rng));
        Mat2 w_cov;
        w_cov << n(rng), n(rng), n(rng), n(rng);
        std::vector<double> x(10);
        auto unpack = [&](Vec3 &mu, Vec3 &s, Vec4 &q) {
            mu = Vec3(x[0], x[1], x[2]);
            s = Vec3(x[3], x[4], x[5]);
            q = Vec4(x[6], x[7], x[8], x[9]);
        };
        for (int k = 0; k < 3; ++k) x[k] = cloud.positions[i][k], x[3 + k] = cloud.raw_scales[i][k];
        for (int k = 0; k < 4; ++k) x[6 + k] = cloud.raw_rotations[i][k];
        auto eval = [&] {
            Vec3 mu, s;
            Vec4 q;
            unpack(mu, s, q);
            auto p = project(mu, s, q, cam);
            return fd::Probe{w_ndc.dot(p.center_ndc) + (w_cov.array() * p.cov2d.array()).sum(),
                             static_cast<std::uint64_t>(p.clamped_x) * 2 + p.clamped_y};
        };
        auto numeric = fd::central_difference(x, eval);

        Vec3 mu, s;
        Vec4 q;
        unpack(mu, s, q);
        auto p = project(mu, s, q, cam);
        const Vec2 d_center(w_ndc.x() * 2.0 / cam.width, w_ndc.y() * 2.0 / cam.height);
        auto g = project_vjp(mu, s, q, cam, p, d_center, w_cov);
        std::vector<double> analytic{g.position[0],  g.position[1],  g.position[2],
                                     g.raw_scale[0], g.raw_scale[1], g.raw_scale[2],
                                     g.raw_q[0],     g.raw_q[1],     g.raw_q[2],
                                     g.raw_q[3]};
        EXPECT_LE(fd::relative_error(analytic, numeric), 1e-3) << "gaussian " << i;
        EXPECT_EQ(fd::usable_count(numeric), 10u);
    }
}
