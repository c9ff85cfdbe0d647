#pragma once

#include <cmath>

namespace shuttlelab {

// CODATA 2018 exact / recommended values, SI.
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double elementary_charge = 1.602176634e-19;   // C

inline constexpr double pi = 3.14159265358979323846;

// Spatial 1-sigma extent of the motional ground state, sqrt(hbar / 2 m omega).
inline double ground_state_extent(double mass, double angular_frequency) {
    return std::sqrt(hbar / (2.0 * mass * angular_frequency));
}

}  // namespace shuttlelab
