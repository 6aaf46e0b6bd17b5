#pragma once

#include <memory>

#include "gkdv/experiment.hpp"
#include "gkdv/verify.hpp"

namespace gkdv::testing {

// b_c(5.1) on the reference grid, frozen from find_critical_b.
inline constexpr double kBc51 = 0.02219185;

/// Shared p = 5.1 setup on [-4/b_est, 40] with n = 4096 (built once per binary).
inline const Setup& reference_setup() {
    static std::shared_ptr<const Setup> s = prepare(5.1, verify::reference_grid(5.1));
    return *s;
}

inline double max_abs_diff(const GridFunction& a, const GridFunction& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace gkdv::testing
