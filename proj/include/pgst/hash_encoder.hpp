#pragma once

// Tri-plane multiresolution hash encoding. Each of the xy, yz and xz planes
// holds L levels of hashed 2D feature grids; a position is projected onto
// every plane, bilinearly interpolated per level, and the results are
// concatenated.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pgst/errors.hpp"
#include "pgst/gaussian.hpp"
#include "pgst/tensor.hpp"

namespace pgst {

struct HashEncoderConfig {
    int levels = 4;
    int features = 2;
    int table_size = 1 << 14;
    int base_resolution = 16;
    int max_resolution = 256;

    void validate() const {
        if (levels < 1 || features < 1 || table_size < 4 || base_resolution < 1 ||
            max_resolution < base_resolution)
            throw InputError("hash encoder: invalid level/feature/table/resolution settings");
    }
};

class TriPlaneHashEncoder {
  public:
    static constexpr int kPlanes = 3;

    TriPlaneHashEncoder() = default;
    TriPlaneHashEncoder(const HashEncoderConfig &cfg, const Vec3 &box_min, const Vec3 &box_max,
                        std::uint64_t seed)
        : cfg_(cfg), box_min_(box_min), box_max_(box_max) {
        cfg_.validate();
        if ((box_max - box_min).minCoeff() <= 0)
            throw InputError("hash encoder: bounding box must have positive extent");
        table_ = Tensor({kPlanes, static_cast<std::uint32_t>(cfg.levels),
                         static_cast<std::uint32_t>(cfg.table_size),
                         static_cast<std::uint32_t>(cfg.features)});
        std::mt19937_64 rng(seed);
        table_.fill_uniform(rng, 1e-1);
        box_ = Tensor({2, 3});
        for (int k = 0; k < 3; ++k) box_.data[k] = box_min[k], box_.data[3 + k] = box_max[k];
    }

    const HashEncoderConfig &config() const { return cfg_; }
    int output_dim() const { return kPlanes * cfg_.levels * cfg_.features; }
    Vec3 box_min() const { return box_min_; }
    Vec3 box_max() const { return box_max_; }
    Tensor &table() { return table_; }
    const Tensor &table() const { return table_; }

    int resolution(int level) const {
        if (cfg_.levels == 1) return cfg_.base_resolution;
        const double growth =
            std::exp((std::log(cfg_.max_resolution) - std::log(cfg_.base_resolution)) /
                     (cfg_.levels - 1));
        return static_cast<int>(std::floor(cfg_.base_resolution * std::pow(growth, level) + 1e-9));
    }

    /// Feature vector f for position mu; positions outside the box are
    /// clamped onto it.
    Eigen::VectorXd encode(const Vec3 &mu) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(output_dim());
        for_each_corner(mu, [&](int slot, std::size_t entry, double w, const Eigen::Vector2d &) {
            for (int f = 0; f < cfg_.features; ++f)
                out[slot * cfg_.features + f] += w * table_.data[entry + f];
        });
        return out;
    }

    /// Accumulates dL/dtable for an upstream gradient d_out at mu.
    void backward(const Vec3 &mu, const Eigen::VectorXd &d_out, TriPlaneHashEncoder &grads) const {
        for_each_corner(mu, [&](int slot, std::size_t entry, double w, const Eigen::Vector2d &) {
            for (int f = 0; f < cfg_.features; ++f)
                grads.table_.data[entry + f] += w * d_out[slot * cfg_.features + f];
        });
    }

    /// d(encode)/d(mu), output_dim × 3. Zero along axes clamped to the box.
    Eigen::MatrixXd position_jacobian(const Vec3 &mu) const {
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(output_dim(), 3);
        const Vec3 extent = box_max_ - box_min_;
        for_each_corner(mu, [&](int slot, std::size_t entry, double,
                                const Eigen::Vector2d &dw_duv) {
            const int plane = slot / cfg_.levels;
            const int level = slot % cfg_.levels;
            const double res = resolution(level);
            const auto axes = plane_axes(plane);
            for (int k = 0; k < 2; ++k) {
                const int axis = axes[k];
                const double p = (mu[axis] - box_min_[axis]) / extent[axis];
                if (p < 0.0 || p > 1.0) continue;
                const double scale = res / extent[axis];
                for (int f = 0; f < cfg_.features; ++f)
                    jac(slot * cfg_.features + f, axis) += dw_duv[k] * scale * table_.data[entry + f];
            }
        });
        return jac;
    }

    /// Hash of the grid cells and clamp state touched by mu; constant
    /// exactly where the encoding is smooth.
    std::uint64_t cell_signature(const Vec3 &mu) const {
        std::uint64_t h = 1469598103934665603ull;
        for (int plane = 0; plane < kPlanes; ++plane) {
            const auto axes = plane_axes(plane);
            for (int level = 0; level < cfg_.levels; ++level) {
                const auto cell = locate(mu, axes, resolution(level));
                for (long v : {cell.i, cell.j, long(cell.clamped)}) h = (h ^ std::uint64_t(v)) * 1099511628211ull;
            }
        }
        return h;
    }

    /// Trainable tensors.
    template <typename Fn>
    void visit(const std::string &prefix, Fn &&fn) {
        fn(prefix + "table", table_);
    }

    /// Non-trainable state that still belongs in a checkpoint.
    template <typename Fn>
    void visit_buffers(const std::string &prefix, Fn &&fn) {
        fn(prefix + "box", box_);
    }

    /// Restores box_min/box_max from the box tensor after a checkpoint load.
    void sync_box() {
        for (int k = 0; k < 3; ++k) box_min_[k] = box_.data[k], box_max_[k] = box_.data[3 + k];
    }

  private:
    struct Cell {
        long i, j;
        double fx, fy;
        bool clamped;
    };

    static std::array<int, 2> plane_axes(int plane) {
        switch (plane) {
        case 0: return {0, 1}; // xy
        case 1: return {1, 2}; // yz
        default: return {0, 2}; // xz
        }
    }

    Cell locate(const Vec3 &mu, const std::array<int, 2> &axes, int res) const {
        Cell c{};
        c.clamped = false;
        double uv[2];
        for (int k = 0; k < 2; ++k) {
            const int axis = axes[k];
            double p = (mu[axis] - box_min_[axis]) / (box_max_[axis] - box_min_[axis]);
            if (p < 0.0 || p > 1.0) c.clamped = true;
            uv[k] = std::clamp(p, 0.0, 1.0) * res;
        }
        c.i = std::min<long>(static_cast<long>(std::floor(uv[0])), res - 1);
        c.j = std::min<long>(static_cast<long>(std::floor(uv[1])), res - 1);
        c.fx = uv[0] - c.i;
        c.fy = uv[1] - c.j;
        return c;
    }

    std::size_t hash_index(long i, long j, int res) const {
        const auto side = static_cast<std::uint64_t>(res) + 1;
        const auto t = static_cast<std::uint64_t>(cfg_.table_size);
        if (side * side <= t) return static_cast<std::size_t>(i + j * side);
        return static_cast<std::size_t>(
            (static_cast<std::uint64_t>(i) ^ (static_cast<std::uint64_t>(j) * 2654435761ull)) % t);
    }

    // fn(slot = plane*L + level, table offset, bilinear weight, d weight/d(u,v))
    template <typename Fn>
    void for_each_corner(const Vec3 &mu, Fn &&fn) const {
        for (int plane = 0; plane < kPlanes; ++plane) {
            const auto axes = plane_axes(plane);
            for (int level = 0; level < cfg_.levels; ++level) {
                const int res = resolution(level);
                const Cell c = locate(mu, axes, res);
                const std::size_t base =
                    (static_cast<std::size_t>(plane) * cfg_.levels + level) * cfg_.table_size;
                const int slot = plane * cfg_.levels + level;
                for (int dj = 0; dj < 2; ++dj) {
                    for (int di = 0; di < 2; ++di) {
                        const double wx = di ? c.fx : 1.0 - c.fx;
                        const double wy = dj ? c.fy : 1.0 - c.fy;
                        const Eigen::Vector2d dw((di ? 1.0 : -1.0) * wy, (dj ? 1.0 : -1.0) * wx);
                        const std::size_t entry =
                            (base + hash_index(c.i + di, c.j + dj, res)) * cfg_.features;
                        fn(slot, entry, wx * wy, dw);
                    }
                }
            }
        }
    }

    HashEncoderConfig cfg_;
    Vec3 box_min_ = Vec3::Constant(-1), box_max_ = Vec3::Constant(1);
    Tensor table_;
    Tensor box_;
};

} // namespace pgst
