#pragma once

#include <cmath>

namespace gkdv {

/// Degree-7 smoothstep S(t) = t⁴(35 - 84t + 70t² - 20t³): S(0)=0, S(1)=1,
/// first three derivatives vanish at both ends. Clamped outside [0,1], so
/// plateaus are exact.
inline double smoothstep7(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double t2 = t * t;
    return t2 * t2 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)));
}

/// S'(t) = 140 t³ (1-t)³
inline double smoothstep7_derivative(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double u = t * (1.0 - t);
    return 140.0 * u * u * u;
}

/// χ₀: 1 on |y| ≤ 1, 0 on |y| ≥ 2.
inline double cutoff_chi0(double y) { return smoothstep7(2.0 - std::abs(y)); }

}  // namespace gkdv
