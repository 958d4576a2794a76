#pragma once

// Multimodal gated fusion modules. Per-channel 1×1 convolutions over
// per-point feature vectors are shared linear layers, so every projection
// here is a Linear applied pointwise.
//
//   mouth: ω = σ(gate([P_s f_s; P_a f_a]))   fused = [P_s f_s; ω ⊙ P_a f_a]   → Δμ
//   face:  ω = σ(gate([P_a f_a; P_e f_e]))   f_ae  = [ω ⊙ P_a f_a; P_e f_e]
//          fused = [f_a; f_ae; f_s]                                        → (Δμ, Δs, Δq)

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pgst/errors.hpp"
#include "pgst/gaussian.hpp"
#include "pgst/tensor.hpp"

namespace pgst {

using Eigen::VectorXd;

struct Linear {
    Tensor weight; // out × in, row-major
    Tensor bias;   // out

    Linear() = default;
    Linear(int in, int out, std::mt19937_64 &rng, double gain = 1.0)
        : weight({static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in)}),
          bias({static_cast<std::uint32_t>(out)}) {
        const double bound = gain / std::sqrt(static_cast<double>(in));
        weight.fill_uniform(rng, bound);
        bias.fill_uniform(rng, bound);
    }

    int in_dim() const { return static_cast<int>(weight.dims[1]); }
    int out_dim() const { return static_cast<int>(weight.dims[0]); }

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> w() const {
        return {weight.data.data(), out_dim(), in_dim()};
    }
    Eigen::Map<RowMajor> w() { return {weight.data.data(), out_dim(), in_dim()}; }
    Eigen::Map<const VectorXd> b() const { return {bias.data.data(), out_dim()}; }
    Eigen::Map<VectorXd> b() { return {bias.data.data(), out_dim()}; }

    VectorXd forward(const VectorXd &x) const {
        if (x.size() != in_dim()) throw ContractViolation("Linear: input dimension mismatch");
        return w() * x + b();
    }

    /// Accumulates parameter gradients into `g` and returns dL/dx.
    VectorXd backward(const VectorXd &x, const VectorXd &d_out, Linear &g) const {
        g.w().noalias() += d_out * x.transpose();
        g.b() += d_out;
        return w().transpose() * d_out;
    }

    template <typename Fn>
    void visit(const std::string &prefix, Fn &&fn) {
        fn(prefix + "weight", weight);
        fn(prefix + "bias", bias);
    }
};

inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

/// Fully connected network with x·sigmoid(x) hidden activations and a
/// linear output layer.
struct Mlp {
    std::vector<Linear> layers;

    struct Cache {
        std::vector<VectorXd> inputs; // input of each layer
        std::vector<VectorXd> pre;    // pre-activation of each hidden layer
        VectorXd out;
    };

    Mlp() = default;
    Mlp(int in, const std::vector<int> &hidden, int out, std::mt19937_64 &rng,
        double output_gain = 1e-2) {
        int prev = in;
        for (int h : hidden) {
            layers.emplace_back(prev, h, rng);
            prev = h;
        }
        layers.emplace_back(prev, out, rng, output_gain);
    }

    int in_dim() const { return layers.front().in_dim(); }
    int out_dim() const { return layers.back().out_dim(); }

    Cache forward(const VectorXd &x) const {
        Cache c;
        VectorXd h = x;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            c.inputs.push_back(h);
            VectorXd z = layers[l].forward(h);
            if (l + 1 < layers.size()) {
                c.pre.push_back(z);
                h = z.unaryExpr([](double v) { return silu(v); });
            } else {
                h = std::move(z);
            }
        }
        c.out = h;
        return c;
    }

    VectorXd backward(const Cache &c, const VectorXd &d_out, Mlp &g) const {
        VectorXd d = d_out;
        for (std::size_t l = layers.size(); l-- > 0;) {
            if (l + 1 < layers.size())
                d = d.cwiseProduct(c.pre[l].unaryExpr([](double v) { return silu_grad(v); }));
            d = layers[l].backward(c.inputs[l], d, g.layers[l]);
        }
        return d;
    }

    template <typename Fn>
    void visit(const std::string &prefix, Fn &&fn) {
        for (std::size_t l = 0; l < layers.size(); ++l)
            layers[l].visit(prefix + "layer" + std::to_string(l) + ".", fn);
    }
};

inline VectorXd concat(std::initializer_list<const VectorXd *> parts) {
    Eigen::Index n = 0;
    for (auto *p : parts) n += p->size();
    VectorXd out(n);
    Eigen::Index at = 0;
    for (auto *p : parts) {
        out.segment(at, p->size()) = *p;
        at += p->size();
    }
    return out;
}

inline VectorXd sigmoid(const VectorXd &x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

struct MgfDims {
    int spatial = 24;
    int audio = 4;
    int expression = 2;
    int proj_spatial = 16;
    int proj_audio = 16;
    int proj_expression = 8;
    std::vector<int> hidden{64, 64};
};

/// Inside-mouth fusion: spatial features gate the projected audio; the head
/// predicts a position offset only.
struct MouthMgf {
    Linear proj_s, proj_a, gate;
    Mlp head;

    struct Cache {
        VectorXd fs, fa, ps, pa, gate_in, omega, fused;
        Mlp::Cache head;
    };

    MouthMgf() = default;
    MouthMgf(const MgfDims &d, std::mt19937_64 &rng)
        : proj_s(d.spatial, d.proj_spatial, rng), proj_a(d.audio, d.proj_audio, rng),
          gate(d.proj_spatial + d.proj_audio, d.proj_audio, rng),
          head(d.proj_spatial + d.proj_audio, d.hidden, 3, rng) {}

    Cache forward(const VectorXd &fs, const VectorXd &fa) const {
        Cache c;
        c.fs = fs;
        c.fa = fa;
        c.ps = proj_s.forward(fs);
        c.pa = proj_a.forward(fa);
        c.gate_in = concat({&c.ps, &c.pa});
        c.omega = sigmoid(gate.forward(c.gate_in));
        VectorXd gated = c.omega.cwiseProduct(c.pa);
        c.fused = concat({&c.ps, &gated});
        c.head = head.forward(c.fused);
        return c;
    }

    /// Accumulates into `g`; optionally returns input gradients.
    void backward(const Cache &c, const VectorXd &d_out, MouthMgf &g, VectorXd *d_fs = nullptr,
                  VectorXd *d_fa = nullptr) const {
        const Eigen::Index ns = c.ps.size(), na = c.pa.size();
        VectorXd d_fused = head.backward(c.head, d_out, g.head);
        VectorXd d_ps = d_fused.head(ns);
        const VectorXd d_gated = d_fused.tail(na);
        VectorXd d_pa = d_gated.cwiseProduct(c.omega);
        const VectorXd d_omega = d_gated.cwiseProduct(c.pa);
        const VectorXd d_gate_pre =
            d_omega.cwiseProduct(c.omega.cwiseProduct(VectorXd::Ones(na) - c.omega));
        const VectorXd d_gate_in = gate.backward(c.gate_in, d_gate_pre, g.gate);
        d_ps += d_gate_in.head(ns);
        d_pa += d_gate_in.tail(na);
        VectorXd dfs = proj_s.backward(c.fs, d_ps, g.proj_s);
        VectorXd dfa = proj_a.backward(c.fa, d_pa, g.proj_a);
        if (d_fs) *d_fs = std::move(dfs);
        if (d_fa) *d_fa = std::move(dfa);
    }

    template <typename Fn>
    void visit(const std::string &prefix, Fn &&fn) {
        proj_s.visit(prefix + "proj_s.", fn);
        proj_a.visit(prefix + "proj_a.", fn);
        gate.visit(prefix + "gate.", fn);
        head.visit(prefix + "head.", fn);
    }
};

/// Face fusion: expression features gate the projected audio; the head sees
/// the raw audio, the fused audio–expression vector and the spatial
/// features, and predicts (Δμ, Δ raw scale, Δ raw quaternion).
struct FaceMgf {
    Linear proj_a, proj_e, gate;
    Mlp head;

    struct Cache {
        VectorXd fs, fa, fe, pa, pe, gate_in, omega, fused;
        Mlp::Cache head;
    };

    FaceMgf() = default;
    FaceMgf(const MgfDims &d, std::mt19937_64 &rng)
        : proj_a(d.audio, d.proj_audio, rng), proj_e(d.expression, d.proj_expression, rng),
          gate(d.proj_audio + d.proj_expression, d.proj_audio, rng),
          head(d.audio + d.proj_audio + d.proj_expression + d.spatial, d.hidden, 10, rng) {}

    Cache forward(const VectorXd &fs, const VectorXd &fa, const VectorXd &fe) const {
        Cache c;
        c.fs = fs;
        c.fa = fa;
        c.fe = fe;
        c.pa = proj_a.forward(fa);
        c.pe = proj_e.forward(fe);
        c.gate_in = concat({&c.pa, &c.pe});
        c.omega = sigmoid(gate.forward(c.gate_in));
        VectorXd gated = c.omega.cwiseProduct(c.pa);
        c.fused = concat({&c.fa, &gated, &c.pe, &c.fs});
        if (c.fused.size() != head.in_dim())
            throw ContractViolation("FaceMgf: spatial feature dimension mismatch");
        c.head = head.forward(c.fused);
        return c;
    }

    void backward(const Cache &c, const VectorXd &d_out, FaceMgf &g, VectorXd *d_fs = nullptr,
                  VectorXd *d_fa = nullptr, VectorXd *d_fe = nullptr) const {
        const Eigen::Index na_raw = c.fa.size(), na = c.pa.size(), ne = c.pe.size(),
                           ns = c.fs.size();
        VectorXd d_fused = head.backward(c.head, d_out, g.head);
        VectorXd dfa = d_fused.head(na_raw);
        const VectorXd d_gated = d_fused.segment(na_raw, na);
        VectorXd d_pe = d_fused.segment(na_raw + na, ne);
        VectorXd dfs = d_fused.tail(ns);
        VectorXd d_pa = d_gated.cwiseProduct(c.omega);
        const VectorXd d_omega = d_gated.cwiseProduct(c.pa);
        const VectorXd d_gate_pre =
            d_omega.cwiseProduct(c.omega.cwiseProduct(VectorXd::Ones(na) - c.omega));
        const VectorXd d_gate_in = gate.backward(c.gate_in, d_gate_pre, g.gate);
        d_pa += d_gate_in.head(na);
        d_pe += d_gate_in.tail(ne);
        dfa += proj_a.backward(c.fa, d_pa, g.proj_a);
        VectorXd dfe = proj_e.backward(c.fe, d_pe, g.proj_e);
        if (d_fs) *d_fs = std::move(dfs);
        if (d_fa) *d_fa = std::move(dfa);
        if (d_fe) *d_fe = std::move(dfe);
    }

    template <typename Fn>
    void visit(const std::string &prefix, Fn &&fn) {
        proj_a.visit(prefix + "proj_a.", fn);
        proj_e.visit(prefix + "proj_e.", fn);
        gate.visit(prefix + "gate.", fn);
        head.visit(prefix + "head.", fn);
    }
};

} // namespace pgst
