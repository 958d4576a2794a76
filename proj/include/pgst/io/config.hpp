#pragma once

// JSON run configuration. Every section is optional and mirrors one
// module's config type; unknown keys anywhere are rejected.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgst/io/binary.hpp"
#include "pgst/synthetic.hpp"
#include "pgst/train.hpp"

namespace pgst::io {

struct CameraSettings {
    int width = 64;
    int height = 64;
    double focal = 64;
    double distance = 4.0;
    double yaw = 0.0;
    double pitch = 0.0;

    Camera camera() const { return synth::orbit_camera(yaw, pitch, distance, width, height, focal); }
};

/// Source of supervision: one of the built-in synthetic scenes, or a
/// directory of target PNGs described by cameras.json.
struct DataSettings {
    std::string scene = "self-reconstruction"; // | thin-stripe | head-rig | directory
    std::string targets;                       // directory scene only
    std::uint64_t seed = 1;
    int init_points = 64;
    int frames = 24;
    std::string init_ply; // optional starting cloud (single-branch scenes)
};

struct RunConfig {
    CameraSettings camera;
    RenderConfig render;
    DensifyConfig densify;
    DeformConfig mgf;
    TrainSchedule schedule;
    std::vector<std::string> stages{"static", "deform", "finetune"};
    DataSettings data;

    void validate() const {
        if (camera.width < 1 || camera.height < 1 || !(camera.focal > 0) || !(camera.distance > 0))
            throw InputError("config: camera settings out of range");
        try {
            render.validate();
        } catch (const ContractViolation &e) {
            throw InputError(std::string("config: ") + e.what());
        }
        mgf.validate();
        TrainSchedule s = schedule;
        s.densify = densify;
        s.validate();
        for (const auto &st : stages)
            if (st != "static" && st != "deform" && st != "finetune")
                throw InputError("config: unknown stage '" + st + "'");
        if (data.scene != "self-reconstruction" && data.scene != "thin-stripe" &&
            data.scene != "head-rig" && data.scene != "directory")
            throw InputError("config: unknown data.scene '" + data.scene + "'");
        if ((data.scene == "directory") != !data.targets.empty())
            throw InputError("config: data.targets is required by, and only allowed for, the directory scene");
        if (data.init_points < 1 || data.frames < 2)
            throw InputError("config: data.init_points must be ≥ 1 and data.frames ≥ 2");
    }

    /// Schedule with the densify section folded in.
    TrainSchedule effective_schedule() const {
        TrainSchedule s = schedule;
        s.densify = densify;
        return s;
    }
};

namespace detail {

/// Reads keys from one JSON object and remembers which were used.
class Section {
  public:
    Section(const nlohmann::json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InputError("config: '" + path_ + "' must be an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key()))
                throw InputError("config: unknown key '" + qualified(it.key()) + "'");
    }

    template <typename T>
    void get(const char *key, T &out) {
        used_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception &) {
            throw InputError("config: '" + qualified(key) + "' has the wrong type");
        }
    }

    void vec3(const char *key, Vec3 &out) {
        std::vector<double> v{out[0], out[1], out[2]};
        get(key, v);
        if (v.size() != 3) throw InputError("config: '" + qualified(key) + "' needs 3 values");
        out = Vec3(v[0], v[1], v[2]);
    }

    bool has(const char *key) const { return j_.contains(key); }
    Section sub(const char *key) {
        used_.insert(key);
        static const nlohmann::json empty = nlohmann::json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, qualified(key));
    }

  private:
    std::string qualified(const std::string &k) const { return path_.empty() ? k : path_ + "." + k; }

    const nlohmann::json &j_;
    std::string path_;
    std::set<std::string> used_;
};

} // namespace detail

inline RunConfig parse_config(const std::string &text, const std::string &path = "config") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw InputError(path + ": offset " + std::to_string(e.byte) + ": invalid JSON");
    }
    RunConfig c;
    {
        detail::Section root(j, "");
        {
            auto s = root.sub("camera");
            s.get("width", c.camera.width);
            s.get("height", c.camera.height);
            s.get("focal", c.camera.focal);
            s.get("distance", c.camera.distance);
            s.get("yaw", c.camera.yaw);
            s.get("pitch", c.camera.pitch);
        }
        {
            auto s = root.sub("render");
            s.get("tile_size", c.render.tile_size);
            s.vec3("background", c.render.background);
            s.get("alpha_min", c.render.alpha_min);
            s.get("alpha_max", c.render.alpha_max);
            s.get("transmittance_min", c.render.transmittance_min);
            s.get("low_pass", c.render.projection.low_pass);
        }
        {
            auto s = root.sub("densify");
            std::string policy = to_string(c.densify.policy);
            s.get("policy", policy);
            c.densify.policy = parse_policy(policy);
            s.get("tau_pos", c.densify.tau_pos);
            s.get("interval", c.densify.interval);
            s.get("start_iter", c.densify.start_iter);
            s.get("stop_iter", c.densify.stop_iter);
            s.get("split_scale_threshold", c.densify.split_scale_threshold);
            s.get("split_factor", c.densify.split_factor);
            s.get("prune_opacity", c.densify.prune_opacity);
            s.get("max_points", c.densify.max_points);
            s.get("opacity_reset", c.densify.opacity_reset);
            s.get("opacity_reset_interval", c.densify.opacity_reset_interval);
            s.get("opacity_reset_value", c.densify.opacity_reset_value);
        }
        {
            auto s = root.sub("mgf");
            s.get("levels", c.mgf.encoder.levels);
            s.get("features", c.mgf.encoder.features);
            s.get("table_size", c.mgf.encoder.table_size);
            s.get("base_resolution", c.mgf.encoder.base_resolution);
            s.get("max_resolution", c.mgf.encoder.max_resolution);
            s.get("proj_spatial", c.mgf.proj_spatial);
            s.get("proj_audio", c.mgf.proj_audio);
            s.get("proj_expression", c.mgf.proj_expression);
            s.get("hidden", c.mgf.hidden);
        }
        {
            auto s = root.sub("schedule");
            auto &sc = c.schedule;
            s.get("static_iters", sc.iterations.static_init);
            s.get("deform_iters", sc.iterations.deform);
            s.get("finetune_iters", sc.iterations.finetune);
            s.get("seed", sc.seed);
            s.get("stages", c.stages);
            {
                auto lr = s.sub("lr");
                lr.get("position", sc.cloud_lr.position);
                lr.get("scale", sc.cloud_lr.scale);
                lr.get("rotation", sc.cloud_lr.rotation);
                lr.get("opacity", sc.cloud_lr.opacity);
                lr.get("color", sc.cloud_lr.color);
                lr.get("encoder", sc.encoder_lr);
                lr.get("mgf", sc.mgf_lr);
                lr.get("finetune_color", sc.finetune_color_lr);
            }
            {
                auto a = s.sub("adam");
                a.get("beta1", sc.adam.beta1);
                a.get("beta2", sc.adam.beta2);
                a.get("eps", sc.adam.eps);
            }
            {
                auto l = s.sub("loss");
                l.get("lambda", sc.loss.lambda);
                l.get("gamma", sc.loss.gamma);
                l.get("perceptual", sc.loss.perceptual);
            }
        }
        {
            auto s = root.sub("data");
            s.get("scene", c.data.scene);
            s.get("seed", c.data.seed);
            s.get("init_points", c.data.init_points);
            s.get("frames", c.data.frames);
            s.get("init_ply", c.data.init_ply);
            s.get("targets", c.data.targets);
        }
    }
    c.validate();
    return c;
}

inline RunConfig read_config(const std::filesystem::path &path) {
    return parse_config(read_file(path), path.string());
}

} // namespace pgst::io
