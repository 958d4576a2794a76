#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pgst {

/// Dense row-major parameter block with a shape.
struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::uint32_t> shape, double fill = 0.0) : dims(std::move(shape)) {
        data.assign(element_count(dims), fill);
    }

    static std::size_t element_count(const std::vector<std::uint32_t> &shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t b) { return a * b; });
    }

    std::size_t size() const { return data.size(); }
    std::span<double> span() { return data; }
    std::span<const double> span() const { return data; }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    void fill_uniform(std::mt19937_64 &rng, double bound) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto &v : data) v = u(rng);
    }
};

/// A named view of one parameter tensor, as produced by a module's visit().
using TensorVisitor = std::function<void(const std::string &, Tensor &)>;

/// Copy of `m` with every parameter tensor zeroed; gradients use this.
template <typename Module>
Module zeros_like_params(const Module &m) {
    Module z = m;
    z.visit("", [](const std::string &, Tensor &t) { t.zero(); });
    return z;
}

/// Flat list of (name, tensor) pairs in visit order.
template <typename Module>
std::vector<std::pair<std::string, Tensor *>> named_tensors(Module &m, const std::string &prefix) {
    std::vector<std::pair<std::string, Tensor *>> out;
    m.visit(prefix, [&](const std::string &name, Tensor &t) { out.emplace_back(name, &t); });
    return out;
}

} // namespace pgst
