#pragma once

#include "shuttlelab/potential.hpp"

#include <vector>

namespace shuttlelab {

// Canonical second-order low-pass, H(s) = g w0^2 / (s^2 + (w0/Q) s + w0^2).
struct FilterSpec {
    double corner_frequency = 608e3;               // Hz, -3 dB for Q = 1/sqrt(2)
    double quality_factor = 0.7071067811865476;    // Butterworth by default
    double dc_gain = 1.0;
};

// |H(2 pi f)| for the spec above.
double filter_magnitude(const FilterSpec& spec, double frequency);

struct ContinuousSignal {
    double dt = 0.0;  // s
    double t0 = 0.0;
    VectorXd samples;
};

// Exact response to the zero-order-hold DAC output: the second-order state is
// propagated in closed form across each hold segment, so there is no
// integration error. dt must divide the waveform sample interval; the filter
// starts settled at the first sample value. Output covers [t0, end] inclusive.
ContinuousSignal filter_channel(const Waveform& waveform, int channel,
                                const FilterSpec& spec, double dt);

struct FilteredWaveform {
    double dt = 0.0;
    double t0 = 0.0;
    MatrixXd channels;  // electrodes x fine samples

    int samples() const { return static_cast<int>(channels.cols()); }
    double time_at(int j) const { return t0 + j * dt; }
};

// Every channel through its filter; `specs` holds one entry shared by all
// channels or one entry per electrode.
FilteredWaveform filter_waveform(const Waveform& waveform,
                                 const std::vector<FilterSpec>& specs, double dt);

struct WellPath {
    double dt = 0.0;
    double t0 = 0.0;
    VectorXd centers;      // m
    VectorXd frequencies;  // Hz
};

// Distorted instantaneous well through the filters: filter every electrode,
// then track the minimum on the fine grid. WellLostError carries the failing
// time.
WellPath filtered_well_trajectory(const ElectrodeBasis& basis, const Waveform& waveform,
                                  const FilterSpec& spec, double dt, double mass,
                                  double charge = elementary_charge);
WellPath filtered_well_trajectory(const ElectrodeBasis& basis, const Waveform& waveform,
                                  const std::vector<FilterSpec>& specs, double dt,
                                  double mass, double charge = elementary_charge);

// Well positions of the unfiltered (ideal ZOH) waveform on the coarse grid.
WellPath designed_well_trajectory(const ElectrodeBasis& basis, const Waveform& waveform,
                                  double mass, double charge = elementary_charge);

}  // namespace shuttlelab
