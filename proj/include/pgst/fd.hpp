#pragma once

// Central finite differences with discontinuity exclusion, used by the
// gradient-check harness and the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace pgst::fd {

/// A scalar objective plus a hash of every discrete decision taken while
/// evaluating it (threshold crossings, clamps, cell indices).
struct Probe {
    double value = 0.0;
    std::uint64_t signature = 0;
};

struct Estimate {
    std::vector<double> gradient;
    std::vector<bool> usable; // false when a discontinuity lies within the exclusion band
};

/// Central differences of `eval` w.r.t. every entry of `x`. An entry is
/// marked unusable when the decision signature at x ± exclusion·step differs
/// from the one at x.
template <typename Eval>
Estimate central_difference(std::span<double> x, Eval &&eval, double step = 1e-4,
                            double exclusion = 10.0) {
    Estimate est;
    est.gradient.assign(x.size(), 0.0);
    est.usable.assign(x.size(), true);
    const std::uint64_t base = eval().signature;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        Probe plus = eval();
        x[i] = saved - step;
        Probe minus = eval();
        bool ok = plus.signature == base && minus.signature == base;
        if (ok && exclusion > 1.0) {
            x[i] = saved + exclusion * step;
            ok = eval().signature == base;
            if (ok) {
                x[i] = saved - exclusion * step;
                ok = eval().signature == base;
            }
        }
        x[i] = saved;
        est.gradient[i] = (plus.value - minus.value) / (2.0 * step);
        est.usable[i] = ok;
    }
    return est;
}

/// ‖a − n‖ / max(‖a‖, ‖n‖, floor) over the usable entries.
inline double relative_error(std::span<const double> analytic, const Estimate &numeric,
                             double floor = 1e-8) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        if (!numeric.usable[i]) continue;
        const double a = analytic[i], n = numeric.gradient[i];
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

inline std::size_t usable_count(const Estimate &e) {
    return static_cast<std::size_t>(std::count(e.usable.begin(), e.usable.end(), true));
}

} // namespace pgst::fd
