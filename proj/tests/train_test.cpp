#include <gtest/gtest.h>

#include "pgst/adam.hpp"
#include "pgst/composite.hpp"
#include "pgst/scenes.hpp"
#include "pgst/train.hpp"

using namespace pgst;

namespace {

Image filled(int w, int h, double v) {
    Image img(w, h);
    for (auto &x : img.data) x = v;
    return img;
}

TrainSchedule short_schedule(int static_iters, int deform_iters, int finetune_iters) {
    TrainSchedule s;
    s.iterations = {static_iters, deform_iters, finetune_iters};
    s.densify.start_iter = 20;
    s.densify.interval = 20;
    s.densify.stop_iter = 100;
    s.densify.tau_pos = 1e-3;
    s.seed = 3;
    return s;
}

DeformConfig tiny_deform() {
    DeformConfig c;
    c.encoder.levels = 2;
    c.encoder.table_size = 256;
    c.encoder.base_resolution = 4;
    c.encoder.max_resolution = 16;
    c.hidden = {16};
    return c;
}

const char *kGeometry[] = {"positions", "raw_scales", "raw_rotations", "raw_opacities"};

} // namespace

TEST(Composite, SelectsFaceWhereOpaqueAndMouthWhereClear) {
    const Image face = filled(4, 3, 0.7), mouth = filled(4, 3, 0.2);
    EXPECT_EQ(composite_images(face, Plane(4, 3, 0.0), mouth).data, face.data);
    EXPECT_EQ(composite_images(face, Plane(4, 3, 1.0), mouth).data, mouth.data);
    const auto half = composite_images(face, Plane(4, 3, 0.25), mouth);
    for (double v : half.data) EXPECT_NEAR(v, 0.7 * 0.75 + 0.2 * 0.25, 1e-15);
    EXPECT_THROW(composite_images(face, Plane(3, 3), mouth), ContractViolation);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Adam opt;
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
    opt.step("w", p, g, 0.1);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
    EXPECT_EQ(opt.moments("w").steps, 1);
}

TEST(Adam, MinimisesQuadraticMonotonically) {
    Adam opt(AdamConfig{0.9, 0.999, 1e-8});
    std::vector<double> x{3.0};
    double last = x[0] * x[0];
    for (int it = 0; it < 100; ++it) {
        std::vector<double> g{2.0 * x[0]};
        opt.step("x", x, g, 0.01);
        const double f = x[0] * x[0];
        EXPECT_LT(f, last);
        last = f;
    }
    EXPECT_LT(last, 9.0 * 0.6);
}

TEST(Adam, NonFiniteGradientNamesTheGroup) {
    Adam opt;
    std::vector<double> p{1.0}, g{std::nan("")};
    try {
        opt.step("cloud.positions", p, g, 0.1);
        FAIL();
    } catch (const NumericalError &e) {
        EXPECT_NE(std::string(e.what()).find("cloud.positions"), std::string::npos);
    }
    EXPECT_EQ(p[0], 1.0);
}

TEST(Adam, RemapKeepsSurvivorsAndZeroesFreshEntries) {
    Adam opt;
    std::vector<double> p{1, 2, 3, 4}, g{1, 1, 1, 1};
    opt.step("g", p, g, 0.1);
    CloudEdit edit;
    edit.cloud.resize(3);
    edit.source = {1, 0, 1};
    edit.fresh = {false, false, true};
    opt.remap("g", 2, edit);
    const auto &m = opt.moments("g");
    ASSERT_EQ(m.m.size(), 6u);
    EXPECT_NEAR(m.m[0], 0.1, 1e-15);
    EXPECT_EQ(m.m[4], 0.0);
    EXPECT_EQ(m.v[5], 0.0);
}

TEST(StaticStage, ZeroIterationsIsANoOp) {
    auto scene = scenes::self_reconstruction(1, 16);
    GaussianCloud cloud = scene.init;
    TrainLog log;
    run_stage_static(cloud, scene.views, short_schedule(0, 0, 0), scene.render, scene.extent, log);
    EXPECT_TRUE(log.rows.empty());
    for (const char *g : {"positions", "colors"}) EXPECT_EQ(group_checksum(cloud, g), group_checksum(scene.init, g));
}

TEST(StaticStage, ReducesLossDensifiesAndIsDeterministic) {
    auto scene = scenes::self_reconstruction(2, 16);
    auto run = [&] {
        GaussianCloud cloud = scene.init;
        TrainLog log;
        run_stage_static(cloud, scene.views, short_schedule(120, 0, 0), scene.render, scene.extent, log);
        return std::pair{cloud, log};
    };
    auto [a, log] = run();
    auto [b, log2] = run();
    ASSERT_EQ(log.rows.size(), 120u);
    double first = 0, last = 0;
    for (int k = 0; k < 8; ++k) {
        first += log.rows[k].loss;
        last += log.rows[log.rows.size() - 1 - k].loss;
    }
    EXPECT_LT(last, 0.8 * first);
    EXPECT_FALSE(log.densify_events.empty());
    EXPECT_EQ(log.rows.back().n, a.size());
    for (const char *g : {"positions", "raw_scales", "raw_rotations", "raw_opacities", "colors"})
        EXPECT_EQ(group_checksum(a, g), group_checksum(b, g)) << g;
}

TEST(StaticStage, NonFiniteTargetRaisesNumericalError) {
    auto scene = scenes::self_reconstruction(1, 8);
    scene.views[0].target.data[7] = std::nan("");
    for (auto &v : scene.views) v.target = scene.views[0].target;
    GaussianCloud cloud = scene.init;
    TrainLog log;
    EXPECT_THROW(run_stage_static(cloud, scene.views, short_schedule(5, 0, 0), scene.render,
                                  scene.extent, log),
                 NumericalError);
}

TEST(DeformStage, TrainsOnlyTheNetworkAndKeepsAppearance) {
    const auto rig = scenes::head_rig(1, {6, 2, 32, 64});
    const GaussianCloud base = rig.truth.mouth.cloud;
    DeformModel model(Branch::mouth, tiny_deform(), 4, 2, rig.box_min, rig.box_max, 7);
    const DeformModel before = model;
    TrainLog log;
    RenderConfig rcfg;
    rcfg.background = rig.truth.mouth_background;
    run_stage_deform(base, model, rig.mouth_frames, rig.frames, short_schedule(0, 20, 0), rcfg, log);
    EXPECT_EQ(log.rows.size(), 20u);
    EXPECT_NE(model.mouth().head.layers.back().bias.data, before.mouth().head.layers.back().bias.data);
    for (const auto &f : rig.frames) {
        const auto posed = apply_deformation(base, model.forward(base, f).deltas);
        EXPECT_EQ(posed.size(), base.size());
        for (const char *g : {"raw_opacities", "colors"})
            EXPECT_EQ(group_checksum(posed, g), group_checksum(base, g)) << g;
    }
}

TEST(DeformStage, RequiresFrameIndices) {
    const auto rig = scenes::head_rig(1, {4, 1, 32, 64});
    DeformModel model(Branch::mouth, tiny_deform(), 4, 2, rig.box_min, rig.box_max, 7);
    auto views = rig.mouth_frames;
    views[0].frame = -1;
    TrainLog log;
    EXPECT_THROW(run_stage_deform(rig.truth.mouth.cloud, model, views, rig.frames,
                                  short_schedule(0, 3, 0), RenderConfig{}, log),
                 InputError);
}

TEST(FinetuneStage, TouchesOnlyColours) {
    const auto rig = scenes::head_rig(4, {4, 2, 32, 64});
    HeadModel head = rig.truth;
    head.mouth.deform = DeformModel(Branch::mouth, tiny_deform(), 4, 2, rig.box_min, rig.box_max, 1);
    for (auto &c : head.face.cloud.colors) c += 0.2; // give the stage something to fix
    const HeadModel before = head;
    TrainLog log;
    run_stage_finetune(head, rig.full_frames, rig.frames, short_schedule(0, 0, 30), RenderConfig{}, log);
    EXPECT_EQ(log.rows.size(), 30u);
    EXPECT_LT(log.rows.back().loss, log.rows.front().loss);
    for (const auto *pair : {&head.face, &head.mouth}) {
        const auto &old = pair == &head.face ? before.face : before.mouth;
        EXPECT_EQ(pair->cloud.size(), old.cloud.size());
        for (const char *g : kGeometry)
            EXPECT_EQ(group_checksum(pair->cloud, g), group_checksum(old.cloud, g)) << g;
    }
    EXPECT_NE(group_checksum(head.face.cloud, "colors"), group_checksum(before.face.cloud, "colors"));
    EXPECT_EQ(head.mouth.deform->mouth().head.layers[0].weight.data,
              before.mouth.deform->mouth().head.layers[0].weight.data);
}
