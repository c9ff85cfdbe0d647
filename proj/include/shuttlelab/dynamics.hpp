#pragma once

#include "shuttlelab/filter.hpp"
#include "shuttlelab/potential.hpp"

#include <complex>
#include <utility>
#include <vector>

namespace shuttlelab {

struct IonSpec {
    double mass = 40.0 * atomic_mass_unit;  // kg
    double charge = elementary_charge;      // C
};

struct IonTrajectory {
    VectorXd times;
    VectorXd positions;
    VectorXd velocities;
};

struct CompensationPulse {
    double amplitude = 0.0;  // V
    double frequency = 0.0;  // Hz
    double phase = 0.0;      // rad
    std::vector<int> electrode_set;
    std::pair<double, double> window{0.0, 0.0};  // s, inside the waveform
};

// Classical motion m z'' = -dU/dz in the filtered time-dependent potential,
// integrated on the fine grid. Throws if the ion leaves the axial range,
// naming the exit time.
IonTrajectory integrate_ion(const ElectrodeBasis& basis, const FilteredWaveform& fine,
                            const IonSpec& ion, double z0, double v0);

// Final coherent displacement of the harmonic mode dragged along z0(t):
//   alpha(T) = -i sqrt(m omega / 2 hbar) * integral z0'(t) e^{i omega (t-T)} dt,
// evaluated by quadrature over the full path (integration by parts, so the
// sampled centers are never numerically differentiated).
std::complex<double> coherent_displacement(const WellPath& path, double omega,
                                           const IonSpec& ion);

// Waveform with A sin(2 pi f (t - t_start) + phi) added to the listed channels
// at sample times inside the window; the input is left unmodified.
Waveform add_compensation(const Waveform& waveform, const CompensationPulse& pulse);

struct CompensationSearchRanges {
    std::pair<double, double> amplitude{0.0, 0.05};     // V
    std::pair<double, double> frequency{1.8e6, 2.6e6};  // Hz
    std::pair<double, double> phase{0.0, 2.0 * pi};     // rad
};

struct CompensationResult {
    CompensationPulse pulse;
    double residual_ncoh = 0.0;  // |alpha|^2 after compensation
    double initial_ncoh = 0.0;   // |alpha|^2 before
    bool converged = false;
    int evaluations = 0;
};

struct OptimizeOptions {
    double fine_dt = 1e-9;
    int grid_amplitude = 6;  // deterministic coarse grid seeding the simplex
    int grid_frequency = 5;
    int grid_phase = 8;
    int max_evaluations = 400;
    double simplex_tolerance = 1e-7;  // on normalized coordinates
};

// Nelder-Mead over (amplitude, frequency, phase) minimizing |alpha|^2 of the
// compensated, filtered waveform, with the pulse applied to `electrode_set`
// inside `window`. A deterministic coarse grid seeds the simplex;
// non-convergence returns the best point found with converged = false.
CompensationResult optimize_compensation(const Waveform& waveform,
                                         const ElectrodeBasis& basis,
                                         const std::vector<FilterSpec>& specs,
                                         const IonSpec& ion,
                                         const std::vector<int>& electrode_set,
                                         std::pair<double, double> window,
                                         const CompensationSearchRanges& ranges,
                                         const OptimizeOptions& options = {});

// Stationary-potential heating: n + rate * dwell.
double simulate_heating(double n_initial, double dwell, double rate = 210.0);

}  // namespace shuttlelab
