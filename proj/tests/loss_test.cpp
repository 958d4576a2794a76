#include <gtest/gtest.h>

#include "pgst/gradcheck.hpp"
#include "pgst/loss.hpp"

using namespace pgst;

namespace {

Image constant(int w, int h, double v) {
    Image img(w, h);
    for (auto &x : img.data) x = v;
    return img;
}

Image noise(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h);
    for (auto &x : img.data) x = u(rng);
    return img;
}

} // namespace

TEST(Loss, IdenticalImagesGiveZeroLossAndGradient) {
    const Image a = noise(16, 12, 1);
    const auto r = loss_l1_dssim(a, a, nullptr, 0.2);
    EXPECT_NEAR(r.value, 0.0, 1e-12);
    for (double g : r.grad.data) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Loss, ConstantOffsetIsPlainL1) {
    const auto r = loss_l1_dssim(constant(10, 10, 0.6), constant(10, 10, 0.5), nullptr, 0.0);
    EXPECT_NEAR(r.value, 0.1, 1e-12);
}

TEST(Loss, MaskRestrictsTheAverage) {
    Image pred = constant(4, 4, 0.5), target = constant(4, 4, 0.5);
    Plane mask(4, 4);
    mask.data[5] = 1.0;
    pred.data[5 * 3] = 0.8;  // inside the mask
    pred.data[0] = 0.0;      // outside, must not count
    const auto r = loss_l1_dssim(pred, target, &mask, 0.0);
    EXPECT_NEAR(r.value, 0.3 / 3.0, 1e-12);
    EXPECT_EQ(r.grad.data[0], 0.0);
}

TEST(Loss, RejectsBadMasks) {
    const Image a = constant(4, 4, 0.5);
    Plane empty(4, 4), fractional(4, 4, 0.5), wrong(3, 4, 1.0);
    EXPECT_THROW(loss_l1_dssim(a, a, &empty, 0.2), InputError);
    EXPECT_THROW(loss_l1_dssim(a, a, &fractional, 0.2), InputError);
    EXPECT_THROW(loss_l1_dssim(a, a, &wrong, 0.2), ContractViolation);
    EXPECT_THROW(loss_l1_dssim(a, a, nullptr, -1.0), InputError);
}

TEST(Metrics, PsnrKnownValueAndCap) {
    EXPECT_NEAR(psnr(constant(8, 8, 0.1), constant(8, 8, 0.0)), 20.0, 1e-9);
    EXPECT_EQ(psnr(noise(8, 8, 2), noise(8, 8, 2)), 100.0);
    Plane mask(8, 8);
    mask.data[3] = 1.0;
    Image a = constant(8, 8, 0.0);
    a.data[0] = 1.0; // unmasked pixel, ignored
    EXPECT_EQ(masked_psnr(a, constant(8, 8, 0.0), mask), 100.0);
    EXPECT_THROW(masked_psnr(a, a, Plane(8, 8)), InputError);
}

TEST(Metrics, SsimIdentityAndSymmetry) {
    const Image a = noise(16, 16, 3), b = noise(16, 16, 4);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LT(ssim(a, b), 0.5);
}

TEST(Perceptual, GammaZeroAndOffMatchBaseLoss) {
    auto &reg = PerceptualRegistry::instance();
    if (!reg.contains("test.mean_abs"))
        reg.add("test.mean_abs", [](const Image &p, const Image &t) {
            return loss_l1_dssim(p, t, nullptr, 0.0);
        });
    const Image a = noise(12, 12, 5), b = noise(12, 12, 6);
    const double base = loss_l1_dssim(a, b, nullptr, 0.2).value;
    LossConfig off;
    EXPECT_EQ(loss_finetune(a, b, off).value, base);
    LossConfig zero{0.2, 0.0, "test.mean_abs"};
    EXPECT_EQ(loss_finetune(a, b, zero).value, base);
    LossConfig on{0.2, 0.5, "test.mean_abs"};
    EXPECT_NEAR(loss_finetune(a, b, on).value, base + 0.5 * loss_l1_dssim(a, b, nullptr, 0.0).value,
                1e-12);
}

TEST(Perceptual, RegistryContract) {
    auto &reg = PerceptualRegistry::instance();
    EXPECT_THROW(reg.add("off", nullptr), ContractViolation);
    EXPECT_THROW(reg.find("nope"), InputError);
    LossConfig bad{0.2, 0.05, "nope"};
    EXPECT_THROW(bad.validate(), InputError);
}

TEST(LossGradcheck, AllSuitesPass) {
    gradcheck::Options opt;
    opt.instances = 8;
    for (const auto &suite : {gradcheck::check_loss(opt), gradcheck::check_finetune_loss(opt)})
        for (const auto &r : suite) EXPECT_TRUE(r.passed(1e-3)) << r.suite << " " << r.max_rel_error;
}

TEST(LossGradcheck, InjectedFaultIsCaught) {
    gradcheck::Options opt;
    opt.instances = 2;
    opt.inject_fault = true;
    for (const auto &r : gradcheck::check_loss(opt)) EXPECT_FALSE(r.passed(1e-3));
}
