#pragma once

#include <cstddef>
#include <vector>

#include "pgst/errors.hpp"

namespace pgst {

/// Interleaved linear RGB, row-major, H×W×3.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * 3 + c;
    }
    double &at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }

    bool same_shape(const Image &o) const { return width == o.width && height == o.height; }
};

/// Single-channel H×W plane (masks, transmittance).
struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Plane() = default;
    Plane(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    double &at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

inline void require_same_shape(const Image &a, const Image &b, const char *what) {
    if (!a.same_shape(b) || a.data.size() != b.data.size())
        throw ContractViolation(std::string(what) + ": image shapes differ");
}

} // namespace pgst
