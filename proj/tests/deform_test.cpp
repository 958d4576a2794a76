#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pgst/deform.hpp"
#include "pgst/fd.hpp"
#include "pgst/gradcheck.hpp"
#include "pgst/synthetic.hpp"

using namespace pgst;

namespace {

TriPlaneHashEncoder default_encoder(std::uint64_t seed = 5) {
    return TriPlaneHashEncoder(HashEncoderConfig{}, Vec3::Constant(-1), Vec3::Constant(1), seed);
}

MgfDims small_dims() {
    MgfDims d;
    d.spatial = 12;
    d.audio = 4;
    d.expression = 3;
    d.proj_spatial = 6;
    d.proj_audio = 5;
    d.proj_expression = 4;
    d.hidden = {8, 8};
    return d;
}

Eigen::VectorXd random_vec(int n, std::mt19937_64 &rng) {
    return gradcheck::detail::random_vector(n, rng);
}

void zero_tensor(Tensor &t) { t.zero(); }

} // namespace

TEST(HashEncoder, OutputLengthIsThreeTimesLevelsTimesFeatures) {
    auto enc = default_encoder();
    EXPECT_EQ(enc.output_dim(), 24);
    EXPECT_EQ(enc.encode(Vec3(0.1, 0.2, 0.3)).size(), 24);
}

TEST(HashEncoder, DeterministicAcrossCallsAndSeeds) {
    auto a = default_encoder(11), b = default_encoder(11);
    const Vec3 mu(0.3, -0.4, 0.2);
    EXPECT_EQ(a.encode(mu), a.encode(mu));
    EXPECT_EQ(a.encode(mu), b.encode(mu));
}

TEST(HashEncoder, ResolutionsGrowGeometricallyBetweenBounds) {
    auto enc = default_encoder();
    EXPECT_EQ(enc.resolution(0), 16);
    EXPECT_EQ(enc.resolution(1), 40);
    EXPECT_EQ(enc.resolution(2), 101);
    EXPECT_EQ(enc.resolution(3), 256);
}

TEST(HashEncoder, PositionsOutsideBoxAreClamped) {
    auto enc = default_encoder();
    EXPECT_EQ(enc.encode(Vec3(5, 0.1, 0.2)), enc.encode(Vec3(1, 0.1, 0.2)));
    EXPECT_EQ(enc.encode(Vec3(-3, -9, 0.2)), enc.encode(Vec3(-1, -1, 0.2)));
    const auto jac = enc.position_jacobian(Vec3(5, 0.1, 0.2));
    EXPECT_EQ(jac.col(0).norm(), 0.0);
}

TEST(HashEncoder, ContinuousAcrossCellBoundaries) {
    auto enc = default_encoder();
    const double edge = -1.0 + 2.0 / 16.0 * 5; // a level-0 cell boundary along x
    const auto left = enc.encode(Vec3(edge - 1e-9, 0.13, 0.27));
    const auto right = enc.encode(Vec3(edge + 1e-9, 0.13, 0.27));
    EXPECT_LT((left - right).norm(), 1e-6);
}

TEST(HashEncoder, PositionJacobianMatchesFiniteDifferences) {
    auto enc = default_encoder(3);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.95, 0.95);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> mu{u(rng), u(rng), u(rng)};
        const auto w = random_vec(enc.output_dim(), rng);
        auto eval = [&] {
            const Vec3 m(mu[0], mu[1], mu[2]);
            return fd::Probe{w.dot(enc.encode(m)), enc.cell_signature(m)};
        };
        const Vec3 m0(mu[0], mu[1], mu[2]);
        const Eigen::Vector3d analytic = enc.position_jacobian(m0).transpose() * w;
        auto numeric = fd::central_difference(std::span<double>(mu), eval, 1e-6);
        if (fd::usable_count(numeric) == 0) continue;
        ++checked;
        EXPECT_LE(fd::relative_error({analytic.data(), 3}, numeric), 1e-3) << "trial " << trial;
    }
    EXPECT_GT(checked, 20);
}

TEST(HashEncoder, TableBackwardIsTransposeOfEncode) {
    // encode is linear in the table, so <w, encode> equals <table, grad>.
    auto enc = default_encoder(2);
    std::mt19937_64 rng(4);
    const Vec3 mu(0.21, -0.52, 0.77);
    const auto w = random_vec(enc.output_dim(), rng);
    auto grads = zeros_like_params(enc);
    enc.backward(mu, w, grads);
    double inner = 0.0;
    for (std::size_t k = 0; k < enc.table().size(); ++k)
        inner += enc.table().data[k] * grads.table().data[k];
    EXPECT_NEAR(inner, w.dot(enc.encode(mu)), 1e-12);
}

TEST(HashEncoder, RejectsDegenerateBox) {
    EXPECT_THROW(TriPlaneHashEncoder(HashEncoderConfig{}, Vec3::Zero(), Vec3(1, 0, 1), 1),
                 InputError);
}

TEST(HashEncoder, BoxIsBufferNotParameter) {
    auto enc = default_encoder();
    auto params = named_tensors(enc, "enc.");
    ASSERT_EQ(params.size(), 1u);
    EXPECT_EQ(params[0].first, "enc.table");
}

TEST(MouthMgf, ZeroGateGivesHalfModulation) {
    std::mt19937_64 rng(1);
    MouthMgf m(small_dims(), rng);
    m.gate.visit("", [](const std::string &, Tensor &t) { zero_tensor(t); });
    const auto c = m.forward(random_vec(12, rng), random_vec(4, rng));
    for (Eigen::Index k = 0; k < c.omega.size(); ++k) EXPECT_EQ(c.omega[k], 0.5);
    const Eigen::VectorXd gated = c.fused.tail(c.pa.size());
    EXPECT_TRUE(gated.isApprox(0.5 * c.pa));
}

TEST(MouthMgf, ClosedGateMakesOutputIndependentOfAudio) {
    std::mt19937_64 rng(2);
    MouthMgf m(small_dims(), rng);
    gradcheck::detail::widen_output(m.head, rng);
    m.gate.weight.zero();
    for (auto &b : m.gate.bias.data) b = -20.0;
    const auto fs = random_vec(12, rng);
    const auto a = m.forward(fs, random_vec(4, rng)).head.out;
    const auto b = m.forward(fs, 3.0 * random_vec(4, rng)).head.out;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(MouthMgf, GateStaysInOpenUnitIntervalAndShrinksAudio) {
    std::mt19937_64 rng(3);
    MouthMgf m(small_dims(), rng);
    for (int t = 0; t < 50; ++t) {
        const auto c = m.forward(5.0 * random_vec(12, rng), 5.0 * random_vec(4, rng));
        EXPECT_GT(c.omega.minCoeff(), 0.0);
        EXPECT_LT(c.omega.maxCoeff(), 1.0);
        const Eigen::VectorXd gated = c.fused.tail(c.pa.size());
        EXPECT_TRUE((gated.cwiseAbs().array() <= c.pa.cwiseAbs().array()).all());
    }
}

TEST(MouthMgf, RejectsDimensionMismatch) {
    std::mt19937_64 rng(4);
    MouthMgf m(small_dims(), rng);
    EXPECT_THROW(m.forward(random_vec(11, rng), random_vec(4, rng)), ContractViolation);
    EXPECT_THROW(m.forward(random_vec(12, rng), random_vec(5, rng)), ContractViolation);
}

TEST(FaceMgf, ZeroHeadGivesBiasOnlyOutput) {
    std::mt19937_64 rng(5);
    FaceMgf m(small_dims(), rng);
    m.head.visit("", [](const std::string &name, Tensor &t) {
        if (name.ends_with("weight")) t.zero();
    });
    const auto out = m.forward(random_vec(12, rng), random_vec(4, rng), random_vec(3, rng)).head.out;
    const Eigen::Map<const Eigen::VectorXd> bias(m.head.layers.back().bias.data.data(), 10);
    EXPECT_EQ(out, Eigen::VectorXd(bias));
}

TEST(FaceMgf, ClosedGateIgnoresGatedAudioCopy) {
    std::mt19937_64 rng(6);
    FaceMgf m(small_dims(), rng);
    gradcheck::detail::widen_output(m.head, rng);
    m.gate.weight.zero();
    for (auto &b : m.gate.bias.data) b = -40.0;
    const auto fs = random_vec(12, rng), fa = random_vec(4, rng), fe = random_vec(3, rng);
    const auto before = m.forward(fs, fa, fe).head.out;
    // proj_a only reaches the head through the gated copy.
    m.proj_a.weight.fill_uniform(rng, 2.0);
    m.proj_a.bias.fill_uniform(rng, 2.0);
    const auto after = m.forward(fs, fa, fe).head.out;
    EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-8);
    // The raw audio path is still live.
    const auto moved = m.forward(fs, fa + Eigen::VectorXd::Constant(4, 0.5), fe).head.out;
    EXPECT_GT((before - moved).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FaceMgf, ForwardIsPure) {
    std::mt19937_64 rng(7);
    FaceMgf m(small_dims(), rng);
    const auto fs = random_vec(12, rng), fa = random_vec(4, rng), fe = random_vec(3, rng);
    EXPECT_EQ(m.forward(fs, fa, fe).head.out, m.forward(fs, fa, fe).head.out);
}

TEST(Mgf, GradientsMatchFiniteDifferences) {
    gradcheck::Options opt;
    opt.instances = 6;
    for (auto branch : {Branch::mouth, Branch::face}) {
        for (const auto &r : gradcheck::check_mgf(branch, opt)) {
            EXPECT_TRUE(r.passed(1e-3)) << r.suite << "/" << r.param_class << " " << r.max_rel_error;
        }
    }
}

TEST(Encoder, GradcheckSuitePasses) {
    gradcheck::Options opt;
    opt.instances = 6;
    const auto results = gradcheck::check_encoder(opt);
    ASSERT_EQ(results.size(), 2u);
    for (const auto &r : results) {
        EXPECT_TRUE(r.passed(1e-3)) << r.param_class << " " << r.max_rel_error;
        EXPECT_GT(r.checked, 0u);
    }
}

TEST(Gradcheck, InjectedFaultIsCaught) {
    gradcheck::Options opt;
    opt.instances = 2;
    opt.inject_fault = true;
    for (const auto &r : gradcheck::check_mgf(Branch::mouth, opt)) EXPECT_FALSE(r.passed(1e-3));
}

TEST(ApplyDeformation, ZeroDeltasAreIdentity) {
    auto cloud = synth::random_cloud(4, {.count = 9, .sh_degree = 1});
    auto out = apply_deformation(cloud, Deformation::zeros(9));
    EXPECT_EQ(out.positions, cloud.positions);
    EXPECT_EQ(out.raw_scales, cloud.raw_scales);
    EXPECT_EQ(out.raw_rotations, cloud.raw_rotations);
}

TEST(ApplyDeformation, OpacityAndColorsAreBitwiseFrozen) {
    auto cloud = synth::random_cloud(5, {.count = 7, .sh_degree = 1});
    std::mt19937_64 rng(1);
    auto d = Deformation::zeros(7);
    for (std::size_t i = 0; i < 7; ++i) {
        d.d_position[i] = Vec3::Random();
        d.d_scale[i] = Vec3::Random();
        d.d_rotation[i] = Vec4::Random();
    }
    auto out = apply_deformation(cloud, d);
    EXPECT_EQ(out.raw_opacities, cloud.raw_opacities);
    EXPECT_EQ(out.colors, cloud.colors);
    EXPECT_EQ(out.positions[3], cloud.positions[3] + d.d_position[3]);
}

TEST(ApplyDeformation, RejectsLengthMismatch) {
    auto cloud = synth::random_cloud(6, {.count = 4});
    EXPECT_THROW(apply_deformation(cloud, Deformation::zeros(3)), ContractViolation);
}

TEST(DeformModel, MouthBranchMovesPositionsOnly) {
    auto cloud = synth::random_cloud(7, {.count = 6});
    DeformModel model(Branch::mouth, DeformConfig{}, 4, 3, Vec3::Constant(-1.5), Vec3::Constant(1.5),
                      9);
    std::mt19937_64 rng(2);
    FrameFeatures f{random_vec(4, rng), random_vec(3, rng)};
    auto pass = model.forward(cloud, f);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(pass.deltas.d_scale[i], Vec3::Zero());
        EXPECT_EQ(pass.deltas.d_rotation[i], Vec4::Zero());
        EXPECT_GT(pass.deltas.d_position[i].norm(), 0.0);
    }
}

TEST(DeformModel, ZeroHeadLeavesCloudUnchanged) {
    auto cloud = synth::random_cloud(8, {.count = 5});
    DeformModel model(Branch::face, DeformConfig{}, 4, 3, Vec3::Constant(-1.5), Vec3::Constant(1.5),
                      3);
    model.face().head.layers.back().weight.zero();
    model.face().head.layers.back().bias.zero();
    std::mt19937_64 rng(3);
    auto pass = model.forward(cloud, {random_vec(4, rng), random_vec(3, rng)});
    auto out = apply_deformation(cloud, pass.deltas);
    EXPECT_EQ(out.positions, cloud.positions);
    EXPECT_EQ(out.raw_scales, cloud.raw_scales);
    EXPECT_EQ(out.raw_rotations, cloud.raw_rotations);
}

TEST(DeformModel, BackwardMatchesFiniteDifferencesThroughEncoder) {
    auto cloud = synth::random_cloud(9, {.count = 4});
    auto cfg = gradcheck::detail::small_deform_config();
    for (auto branch : {Branch::mouth, Branch::face}) {
        DeformModel model(branch, cfg, 3, 2, Vec3::Constant(-1.5), Vec3::Constant(1.5), 17);
        std::mt19937_64 rng(5);
        if (branch == Branch::face)
            gradcheck::detail::widen_output(model.face().head, rng);
        else
            gradcheck::detail::widen_output(model.mouth().head, rng);
        FrameFeatures f{random_vec(3, rng), random_vec(2, rng)};
        GaussianCloud w = zeros_like(cloud);
        for (auto &p : w.positions) p = Vec3::Random();
        for (auto &s : w.raw_scales) s = Vec3::Random();
        for (auto &q : w.raw_rotations) q = Vec4::Random();
        auto objective = [&](const DeformModel &m) {
            auto out = apply_deformation(cloud, m.forward(cloud, f).deltas);
            double v = 0.0;
            for (std::size_t i = 0; i < cloud.size(); ++i)
                v += w.positions[i].dot(out.positions[i]) + w.raw_scales[i].dot(out.raw_scales[i]) +
                     w.raw_rotations[i].dot(out.raw_rotations[i]);
            return v;
        };
        auto grads = zeros_like_params(model);
        model.backward(cloud, model.forward(cloud, f), w, grads);
        auto probe = model;
        auto eval = [&] { return fd::Probe{objective(probe), 0}; };
        auto p = named_tensors(probe, "");
        auto g = named_tensors(grads, "");
        ASSERT_EQ(p.size(), g.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            auto numeric = fd::central_difference(p[k].second->span(), eval, 1e-5, 0);
            EXPECT_LE(fd::relative_error(g[k].second->span(), numeric), 1e-3)
                << to_string(branch) << " " << p[k].first;
        }
    }
}

TEST(DeformModel, RejectsWrongFeatureDimensions) {
    auto cloud = synth::random_cloud(10, {.count = 3});
    DeformModel model(Branch::face, DeformConfig{}, 4, 3, Vec3::Constant(-1), Vec3::Constant(1), 1);
    std::mt19937_64 rng(1);
    EXPECT_THROW(model.forward(cloud, {random_vec(5, rng), random_vec(3, rng)}), ContractViolation);
    EXPECT_THROW(model.forward(cloud, {random_vec(4, rng), random_vec(2, rng)}), ContractViolation);
    Eigen::VectorXd bad = random_vec(4, rng);
    bad[1] = std::nan("");
    EXPECT_THROW(model.forward(cloud, {bad, random_vec(3, rng)}), InputError);
}
