#pragma once

// Audio-driven deformation of a Gaussian cloud. Each branch (face or inside
// mouth) owns a tri-plane hash encoder and a gated fusion module; per-frame
// audio and expression vectors are broadcast to every point, so the only
// per-point input is the spatial feature of the base position.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pgst/errors.hpp"
#include "pgst/gaussian.hpp"
#include "pgst/hash_encoder.hpp"
#include "pgst/mgf.hpp"
#include "pgst/parallel.hpp"
#include "pgst/tensor.hpp"

namespace pgst {

struct FrameFeatures {
    Eigen::VectorXd audio;
    Eigen::VectorXd expression;

    void validate() const {
        if (!audio.allFinite() || !expression.allFinite())
            throw InputError("frame features contain non-finite values");
    }
};

/// Per-point offsets in raw parameter space.
struct Deformation {
    std::vector<Vec3> d_position;
    std::vector<Vec3> d_scale;
    std::vector<Vec4> d_rotation;

    static Deformation zeros(std::size_t n) {
        return {std::vector<Vec3>(n, Vec3::Zero()), std::vector<Vec3>(n, Vec3::Zero()),
                std::vector<Vec4>(n, Vec4::Zero())};
    }
    std::size_t size() const { return d_position.size(); }
};

/// Offsets positions, raw scales and raw quaternions; opacity and colors
/// are copied untouched.
inline GaussianCloud apply_deformation(const GaussianCloud &base, const Deformation &d) {
    if (d.d_position.size() != base.size() || d.d_scale.size() != base.size() ||
        d.d_rotation.size() != base.size())
        throw ContractViolation("apply_deformation: deltas length != N");
    GaussianCloud out = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        out.positions[i] += d.d_position[i];
        out.raw_scales[i] += d.d_scale[i];
        out.raw_rotations[i] += d.d_rotation[i];
    }
    return out;
}

enum class Branch { face, mouth };

inline const char *to_string(Branch b) { return b == Branch::face ? "face" : "mouth"; }

struct DeformConfig {
    HashEncoderConfig encoder;
    int proj_spatial = 16;
    int proj_audio = 16;
    int proj_expression = 8;
    std::vector<int> hidden{64, 64};

    void validate() const {
        encoder.validate();
        if (proj_spatial < 1 || proj_audio < 1 || proj_expression < 1)
            throw InputError("mgf: projection widths must be ≥ 1");
        for (int h : hidden)
            if (h < 1) throw InputError("mgf: hidden layer widths must be ≥ 1");
    }
};

class DeformModel {
  public:
    struct Pass {
        std::vector<Eigen::VectorXd> spatial;
        std::vector<MouthMgf::Cache> mouth;
        std::vector<FaceMgf::Cache> face;
        Deformation deltas;
    };

    DeformModel() = default;
    DeformModel(Branch branch, const DeformConfig &cfg, int audio_dim, int expression_dim,
                const Vec3 &box_min, const Vec3 &box_max, std::uint64_t seed)
        : branch_(branch), cfg_(cfg), audio_dim_(audio_dim), expression_dim_(expression_dim) {
        cfg.validate();
        if (audio_dim < 1 || expression_dim < 1)
            throw InputError("deform: feature dimensions must be ≥ 1");
        encoder_ = TriPlaneHashEncoder(cfg.encoder, box_min, box_max, seed);
        MgfDims dims;
        dims.spatial = encoder_.output_dim();
        dims.audio = audio_dim;
        dims.expression = expression_dim;
        dims.proj_spatial = cfg.proj_spatial;
        dims.proj_audio = cfg.proj_audio;
        dims.proj_expression = cfg.proj_expression;
        dims.hidden = cfg.hidden;
        std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
        if (branch == Branch::mouth)
            mouth_ = MouthMgf(dims, rng);
        else
            face_ = FaceMgf(dims, rng);
    }

    Branch branch() const { return branch_; }
    const DeformConfig &config() const { return cfg_; }
    int audio_dim() const { return audio_dim_; }
    int expression_dim() const { return expression_dim_; }
    TriPlaneHashEncoder &encoder() { return encoder_; }
    const TriPlaneHashEncoder &encoder() const { return encoder_; }
    MouthMgf &mouth() { return mouth_; }
    const MouthMgf &mouth() const { return mouth_; }
    FaceMgf &face() { return face_; }
    const FaceMgf &face() const { return face_; }

    Pass forward(const GaussianCloud &base, const FrameFeatures &frame) const {
        check_frame(frame);
        const std::size_t n = base.size();
        Pass p;
        p.spatial.resize(n);
        p.deltas = Deformation::zeros(n);
        if (branch_ == Branch::mouth)
            p.mouth.resize(n);
        else
            p.face.resize(n);
        parallel_for(n, [&](std::size_t i) {
            p.spatial[i] = encoder_.encode(base.positions[i]);
            if (branch_ == Branch::mouth) {
                p.mouth[i] = mouth_.forward(p.spatial[i], frame.audio);
                p.deltas.d_position[i] = p.mouth[i].head.out;
            } else {
                p.face[i] = face_.forward(p.spatial[i], frame.audio, frame.expression);
                const auto &o = p.face[i].head.out;
                p.deltas.d_position[i] = o.segment<3>(0);
                p.deltas.d_scale[i] = o.segment<3>(3);
                p.deltas.d_rotation[i] = o.segment<4>(6);
            }
        });
        return p;
    }

    /// Accumulates parameter gradients into `grads` given dL/d(deformed
    /// cloud). The base positions are treated as constants here; the
    /// encoder's position Jacobian is available separately.
    void backward(const GaussianCloud &base, const Pass &pass, const GaussianCloud &d_deformed,
                  DeformModel &grads) const {
        const std::size_t n = base.size();
        if (d_deformed.size() != n || pass.spatial.size() != n)
            throw ContractViolation("DeformModel::backward: size mismatch");
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::VectorXd d_fs;
            if (branch_ == Branch::mouth) {
                const Eigen::VectorXd d_out = d_deformed.positions[i];
                mouth_.backward(pass.mouth[i], d_out, grads.mouth_, &d_fs);
            } else {
                Eigen::VectorXd d_out(10);
                d_out << d_deformed.positions[i], d_deformed.raw_scales[i],
                    d_deformed.raw_rotations[i];
                face_.backward(pass.face[i], d_out, grads.face_, &d_fs);
            }
            encoder_.backward(base.positions[i], d_fs, grads.encoder_);
        }
    }

    template <typename Fn>
    void visit(const std::string &prefix, Fn &&fn) {
        encoder_.visit(prefix + "encoder.", fn);
        if (branch_ == Branch::mouth)
            mouth_.visit(prefix + "mgf.", fn);
        else
            face_.visit(prefix + "mgf.", fn);
    }

    template <typename Fn>
    void visit_buffers(const std::string &prefix, Fn &&fn) {
        encoder_.visit_buffers(prefix + "encoder.", fn);
    }

  private:
    void check_frame(const FrameFeatures &f) const {
        f.validate();
        if (f.audio.size() != audio_dim_)
            throw ContractViolation("deform: audio feature dimension mismatch");
        if (branch_ == Branch::face && f.expression.size() != expression_dim_)
            throw ContractViolation("deform: expression feature dimension mismatch");
    }

    Branch branch_ = Branch::face;
    DeformConfig cfg_;
    int audio_dim_ = 0, expression_dim_ = 0;
    TriPlaneHashEncoder encoder_;
    MouthMgf mouth_;
    FaceMgf face_;
};

} // namespace pgst
