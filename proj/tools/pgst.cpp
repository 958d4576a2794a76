// pgst: fit, render and inspect Gaussian splatting heads from the command line.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgst/commands.hpp"

namespace {

using namespace pgst;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string policy;
    std::vector<std::string> stages;
    CLI::Option *stage_option = nullptr;
};

void add_common(CLI::App *cmd, Common &c, bool with_training_flags) {
    cmd->add_option("--config", c.config, "JSON run configuration");
    cmd->add_option("--seed", c.seed, "override data.seed and schedule.seed");
    if (!with_training_flags) return;
    cmd->add_option("--policy", c.policy, "densification policy")
        ->check(CLI::IsMember({"baseline", "pixel-aware"}));
    c.stage_option = cmd->add_option("--stage", c.stages, "stages to run (static, deform, finetune)")
                         ->expected(0, -1);
}

io::RunConfig load(const Common &c) {
    io::RunConfig cfg = c.config.empty() ? io::RunConfig{} : io::read_config(c.config);
    if (c.seed) {
        cfg.data.seed = *c.seed;
        cfg.schedule.seed = *c.seed;
    }
    if (!c.policy.empty()) cfg.densify.policy = parse_policy(c.policy);
    if (c.stage_option && c.stage_option->count() > 0) {
        // A bare --stage selects no stages.
        cfg.stages.clear();
        for (const auto &s : c.stages)
            if (!s.empty()) cfg.stages.push_back(s);
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Pixel-aware Gaussian splatting with audio-driven deformation"};
    app.require_subcommand(1);

    Common common;
    std::string out, checkpoint, features;
    std::optional<std::string> stats_checkpoint;
    int frame = 0;
    gradcheck::Options gc;

    auto *fit = app.add_subcommand("fit", "run the configured training stages");
    add_common(fit, common, true);
    fit->add_option("--out", out, "output directory")->required();

    auto *render = app.add_subcommand("render", "render a checkpoint to a PNG");
    add_common(render, common, false);
    render->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    render->add_option("--features", features, "feature sequence (.pgsf)");
    render->add_option("--frame", frame, "frame index into --features");
    render->add_option("--out", out, "output PNG")->required();

    auto *animate = app.add_subcommand("animate", "render one PNG per feature frame");
    add_common(animate, common, false);
    animate->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    animate->add_option("--features", features, "feature sequence (.pgsf)")->required();
    animate->add_option("--out", out, "output directory")->required();

    auto *compare = app.add_subcommand("compare-densify", "baseline vs pixel-aware densification");
    add_common(compare, common, false);
    compare->add_option("--out", out, "output directory")->required();

    auto *check = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    check->add_option("--instances", gc.instances, "randomized instances per suite");
    check->add_option("--seed", gc.seed, "instance seed");
    check->add_flag("--inject-fault", gc.inject_fault, "flip every analytic gradient (harness test)");

    auto *stats = app.add_subcommand("stats", "dump per-Gaussian densification statistics");
    add_common(stats, common, false);
    stats->add_option("--checkpoint", stats_checkpoint, "cloud to inspect (default: scene init)");
    stats->add_option("--out", out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kInput;
    }

    return cli::run_command(std::cerr, [&] {
        if (*check) return cli::cmd_gradcheck(gc, std::cout);
        const auto cfg = load(common);
        if (*fit) {
            const int code = cli::cmd_fit(cfg, out, std::cout);
            if (!common.config.empty())
                std::filesystem::copy_file(common.config, std::filesystem::path(out) / "config.json",
                                           std::filesystem::copy_options::overwrite_existing);
            return code;
        }
        if (*render)
            return cli::cmd_render(cfg, checkpoint,
                                   features.empty() ? std::nullopt
                                                    : std::optional<std::filesystem::path>(features),
                                   frame, out, std::cout);
        if (*animate) return cli::cmd_animate(cfg, checkpoint, features, out, std::cout);
        if (*compare) return cli::cmd_compare_densify(cfg, out, std::cout);
        std::optional<std::filesystem::path> ck;
        if (stats_checkpoint) ck = *stats_checkpoint;
        return cli::cmd_stats(cfg, ck, out, std::cout);
    });
}
