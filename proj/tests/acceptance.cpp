// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "pgst/commands.hpp"

using namespace pgst;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// 1. Tiled rasterizer against the brute-force reference.
Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    double worst = 0.0;
    bool coverage_equal = true;
    for (int scene = 0; scene < 100; ++scene) {
        synth::RandomSceneOptions o;
        o.count = 1 + rng() % 256;
        o.sh_degree = scene % 2;
        o.min_scale = 0.02;
        o.max_scale = 0.35;
        const auto cloud = synth::random_cloud(rng(), o);
        const double yaw = 0.5 * (static_cast<double>(rng() % 1000) / 1000 - 0.5);
        const Camera cam = synth::orbit_camera(yaw, 0.1 * (scene % 3 - 1), 3.0 + scene % 3, 64, 64, 64);
        RenderConfig cfg;
        cfg.tile_size = scene % 3 == 0 ? 8 : 16;
        cfg.background = Vec3(0.1 * (scene % 4), 0.2, 0.05);
        const auto tiled = rasterize_forward(cloud, cam, cfg);
        const auto ref = rasterize_reference(cloud, cam, cfg);
        for (std::size_t i = 0; i < tiled.image.data.size(); ++i)
            worst = std::max(worst, std::abs(tiled.image.data[i] - ref.image.data[i]));
        for (std::size_t i = 0; i < cloud.size(); ++i)
            coverage_equal = coverage_equal && tiled.per_gaussian[i].coverage == ref.per_gaussian[i].coverage;
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-5 && coverage_equal && t <= 120.0,
            "100 scenes, max |tiled - reference| = " + num(worst) + ", coverage " +
                (coverage_equal ? "identical" : "DIFFERS") + ", " + num(t) + " s"};
}

// 2. Every finite-difference suite at 20 instances.
Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    gradcheck::Options opt;
    opt.instances = 20;
    double worst = 0.0;
    int min_instances = 1 << 30;
    std::string failing;
    for (const auto &r : gradcheck::check_all(opt)) {
        worst = std::max(worst, r.max_rel_error);
        min_instances = std::min(min_instances, r.instances);
        if (!r.passed(opt.tolerance) || r.instances < 20) failing += " " + r.suite + "/" + r.param_class;
    }
    const double t = seconds_since(t0);
    return {failing.empty() && t <= 300.0,
            "worst relative error " + num(worst) + ", min instances per class " +
                std::to_string(min_instances) + ", " + num(t) + " s" +
                (failing.empty() ? "" : ", failing:" + failing)};
}

// 3. Constant per-view coverage makes both scores and decisions coincide.
Outcome identity() {
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> g(0.0, 1e-3);
    std::uniform_int_distribution<int> cov(1, 5000);
    double worst = 0.0;
    bool same_decisions = true;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 40;
        auto cloud = synth::random_cloud(rng(), {.count = n});
        DensifyStats stats(n);
        std::vector<int> m(n);
        for (auto &c : m) c = cov(rng);
        const int views = 1 + trial % 9;
        for (int v = 0; v < views; ++v)
            for (std::size_t i = 0; i < n; ++i) stats.observe(i, m[i], g(rng));
        std::vector<double> taus{0.0, 1e-6, 2e-4, 5e-4, 1e-3};
        for (std::size_t i = 0; i < n; ++i) {
            const double a = densify_score(stats, i, DensifyPolicy::pixel_aware);
            const double b = densify_score(stats, i, DensifyPolicy::baseline);
            worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
            taus.push_back(b); // thresholds exactly at a score
        }
        for (double tau : taus) {
            DensifyConfig c;
            c.tau_pos = tau;
            c.policy = DensifyPolicy::pixel_aware;
            const auto pa = decide(stats, cloud, c, 4.0);
            c.policy = DensifyPolicy::baseline;
            const auto ba = decide(stats, cloud, c, 4.0);
            same_decisions = same_decisions && pa.action == ba.action;
        }
    }
    return {worst <= 1e-12 && same_decisions,
            "200 stat sets, max relative score gap " + num(worst) + ", decisions " +
                (same_decisions ? "identical" : "DIFFER")};
}

// 4. The pixel-aware score lies within the observed per-view extremes.
Outcome boundedness() {
    std::mt19937_64 rng(404);
    std::uniform_int_distribution<int> cov(0, 4000);
    std::uniform_real_distribution<double> g(0.0, 1.0);
    int violations = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        DensifyStats s(1);
        const int views = 1 + trial % 25;
        double lo = 1e300, hi = 0.0;
        for (int k = 0; k < views; ++k) {
            const int m = std::max(1, cov(rng));
            const double gk = std::pow(10.0, -6 + 4 * g(rng));
            s.observe(0, m, gk);
            lo = std::min(lo, gk);
            hi = std::max(hi, gk);
        }
        const double score = densify_score(s, 0, DensifyPolicy::pixel_aware);
        if (!(lo <= score && score <= hi)) ++violations;
    }
    return {violations == 0, "1000 random stat vectors, " + std::to_string(violations) + " violations"};
}

io::RunConfig config_file(const std::string &name) {
    return io::read_config(fs::path(PGST_SOURCE_DIR) / "configs" / name);
}

// 5. Self-reconstruction of a hidden 8-Gaussian scene.
Outcome self_reconstruction() {
    const auto t0 = Clock::now();
    const auto cfg = config_file("self_reconstruction.json");
    FitResult r;
    run_fit(cfg, r);
    const double p = mean_psnr(r);
    const double t = seconds_since(t0);
    const int iters = static_cast<int>(r.log.rows.size());
    return {p >= 30.0 && iters <= 2000 && t <= 300.0,
            "PSNR " + num(p, 4) + " dB after " + std::to_string(iters) + " iterations, N " +
                std::to_string(r.head.face.cloud.size()) + ", " + num(t) + " s"};
}

// 6. Thin-stripe densification ablation over paired seeds.
Outcome densify_ablation() {
    auto cfg = config_file("thin_stripe.json");
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        cfg.data.seed = seed;
        cfg.schedule.seed = seed;
        double psnr_of[2];
        std::size_t n_of[2];
        for (int k = 0; k < 2; ++k) {
            cfg.densify.policy = k == 0 ? DensifyPolicy::baseline : DensifyPolicy::pixel_aware;
            FitResult r;
            run_fit(cfg, r);
            psnr_of[k] = stripe_psnr(r);
            n_of[k] = r.head.face.cloud.size();
        }
        if (psnr_of[1] >= psnr_of[0]) ++wins;
        detail += " seed " + std::to_string(seed) + ": " + num(psnr_of[1], 4) + " vs " +
                  num(psnr_of[0], 4) + " dB (N " + std::to_string(n_of[1]) + "/" +
                  std::to_string(n_of[0]) + ");";
    }
    return {wins >= 2, std::to_string(wins) + "/3 pixel-aware >= baseline on stripe PSNR;" + detail};
}

// 7. Audio-driven mouth motion recovered by the trained deformation model.
Outcome sync_analog() {
    const auto t0 = Clock::now();
    double worst = 1e300;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 2; ++seed) {
        const auto rig = scenes::head_rig(seed);
        const GaussianCloud &base = rig.truth.mouth.cloud;
        DeformModel model(Branch::mouth, DeformConfig{}, 4, 2, rig.box_min, rig.box_max, seed);
        const double before = scenes::marked_position_error(rig, model, base);
        TrainSchedule s;
        s.iterations.deform = 2000;
        s.seed = seed;
        RenderConfig rcfg;
        rcfg.background = rig.truth.mouth_background;
        TrainLog log;
        run_stage_deform(base, model, rig.mouth_frames, rig.frames, s, rcfg, log);
        const double after = scenes::marked_position_error(rig, model, base);
        worst = std::min(worst, before / after);
        detail += " seed " + std::to_string(seed) + ": " + num(before) + " -> " + num(after) + " (" +
                  num(before / after) + "x);";
    }
    return {worst >= 5.0, "marked-Gaussian position error" + detail + " " + num(seconds_since(t0)) + " s"};
}

// 8. Compositing selects each branch exactly and is a convex blend.
Outcome compositing() {
    std::mt19937_64 rng(808);
    bool exact = true;
    double worst_excess = 0.0;
    for (int k = 0; k < 50; ++k) {
        synth::RandomSceneOptions o;
        o.count = 4 + rng() % 40;
        HeadModel h;
        h.face.cloud = synth::random_cloud(rng(), o);
        h.mouth.cloud = synth::random_cloud(rng(), o);
        h.mouth_background = Vec3(0.2, 0.05, 0.1);
        const Camera cam = synth::orbit_camera(0.1 * (k % 5 - 2), 0.0, 4.0, 48, 48, 48);
        RenderConfig rcfg;
        const auto r = render_head(h, cam, nullptr, rcfg);
        const Image &cf = r.face.art.image, &cm = r.mouth.art.image;
        exact = exact && composite_images(cf, Plane(48, 48, 0.0), cm).data == cf.data;
        exact = exact && composite_images(cf, Plane(48, 48, 1.0), cm).data == cm.data;
        // Every face splat below the alpha threshold leaves T = 1 everywhere.
        HeadModel no_face = h;
        for (auto &a : no_face.face.cloud.raw_opacities) a = logit(1e-4);
        exact = exact && render_head(no_face, cam, nullptr, rcfg).image.data == cm.data;
        for (std::size_t i = 0; i < cf.data.size(); ++i) {
            const double lo = std::min(cf.data[i], cm.data[i]), hi = std::max(cf.data[i], cm.data[i]);
            worst_excess = std::max({worst_excess, lo - r.image.data[i], r.image.data[i] - hi});
        }
    }
    return {exact && worst_excess <= 0.0,
            std::string("A=1 / A=0 selection ") + (exact ? "exact" : "NOT exact") +
                ", 50 renders, max convexity excess " + num(worst_excess)};
}

// 9. Stage contracts on the synthetic head rig.
Outcome stage_contracts() {
    auto cfg = config_file("smoke.json");
    scenes::HeadRigOptions opt;
    opt.frames = cfg.data.frames;
    const auto rig = scenes::head_rig(cfg.data.seed, opt);
    const auto sched = cfg.effective_schedule();
    HeadModel head;
    head.mouth_background = rig.truth.mouth_background;
    head.face.cloud = scenes::random_init(5, 24, 1.1, 0.1, 0.12);
    head.mouth.cloud = scenes::random_init(6, 12, 0.35, 0.05, 0.06);
    RenderConfig face_cfg = cfg.render, mouth_cfg = cfg.render;
    mouth_cfg.background = head.mouth_background;
    TrainLog log;
    run_stage_static(head.face.cloud, rig.face_static, sched, face_cfg, scene_extent(rig.cameras), log);
    run_stage_static(head.mouth.cloud, rig.mouth_static, sched, mouth_cfg, scene_extent(rig.cameras), log);

    const char *all[] = {"positions", "raw_scales", "raw_rotations", "raw_opacities", "colors"};
    auto sums = [&](const GaussianCloud &c, std::initializer_list<const char *> groups) {
        std::vector<std::uint64_t> out;
        for (const char *g : groups) out.push_back(group_checksum(c, g));
        return out;
    };
    bool stage2 = true;
    for (auto *b : {&head.face, &head.mouth}) {
        const auto before = sums(b->cloud, {all[0], all[1], all[2], all[3], all[4]});
        const Branch branch = b == &head.face ? Branch::face : Branch::mouth;
        b->deform = DeformModel(branch, cfg.mgf, 4, 2, rig.box_min, rig.box_max, 9);
        run_stage_deform(b->cloud, *b->deform, branch == Branch::face ? rig.face_frames : rig.mouth_frames,
                         rig.frames, sched, branch == Branch::face ? face_cfg : mouth_cfg, log);
        stage2 = stage2 && sums(b->cloud, {all[0], all[1], all[2], all[3], all[4]}) == before;
        for (const auto &f : rig.frames) {
            const auto posed = apply_deformation(b->cloud, b->deform->forward(b->cloud, f).deltas);
            stage2 = stage2 && sums(posed, {"raw_opacities", "colors"}) == sums(b->cloud, {"raw_opacities", "colors"});
        }
    }
    bool stage3 = true;
    const auto face_geo = sums(head.face.cloud, {all[0], all[1], all[2]});
    const auto mouth_geo = sums(head.mouth.cloud, {all[0], all[1], all[2]});
    const std::size_t nf = head.face.cloud.size(), nm = head.mouth.cloud.size();
    const auto colors_before = group_checksum(head.face.cloud, "colors");
    run_stage_finetune(head, rig.full_frames, rig.frames, sched, cfg.render, log);
    stage3 = sums(head.face.cloud, {all[0], all[1], all[2]}) == face_geo &&
             sums(head.mouth.cloud, {all[0], all[1], all[2]}) == mouth_geo &&
             head.face.cloud.size() == nf && head.mouth.cloud.size() == nm;
    const bool trained = group_checksum(head.face.cloud, "colors") != colors_before;
    return {stage2 && stage3 && trained,
            std::string("stage 2 opacity/colour checksums ") + (stage2 ? "unchanged" : "CHANGED") +
                ", stage 3 position/scale/rotation checksums and N " + (stage3 ? "unchanged" : "CHANGED") +
                ", stage 3 colours " + (trained ? "updated" : "NOT updated")};
}

// 10. Two full pipeline runs, with different worker counts, agree bitwise.
Outcome determinism() {
    const auto cfg = config_file("smoke.json");
    const auto root = fs::temp_directory_path() / "pgst_acceptance_determinism";
    fs::remove_all(root);
    std::ostringstream sink;
    setenv("PGST_THREADS", "1", 1);
    cli::cmd_fit(cfg, root / "a", sink);
    setenv("PGST_THREADS", "3", 1);
    cli::cmd_fit(cfg, root / "b", sink);
    unsetenv("PGST_THREADS");
    std::size_t compared = 0;
    std::string differing;
    for (const auto &e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root / "a");
        const auto ext = rel.extension();
        if (ext != ".ply" && ext != ".pgsw" && ext != ".png") continue;
        ++compared;
        if (!fs::exists(root / "b" / rel) || io::read_file(e.path()) != io::read_file(root / "b" / rel))
            differing += " " + rel.string();
    }
    return {compared >= 6 && differing.empty(),
            std::to_string(compared) + " checkpoint/PNG files compared" +
                (differing.empty() ? ", all identical" : ", differ:" + differing)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle equivalence", oracle_equivalence},
        {"gradient correctness", gradient_correctness},
        {"pixel-aware/baseline identity", identity},
        {"pixel-aware boundedness", boundedness},
        {"self-reconstruction", self_reconstruction},
        {"densification ablation", densify_ablation},
        {"deformation sync analog", sync_analog},
        {"compositing identities", compositing},
        {"stage contracts", stage_contracts},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << " (" << criteria[k].first
                  << "): " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
