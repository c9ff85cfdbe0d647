#pragma once

#include "shuttlelab/constants.hpp"
#include "shuttlelab/numerics.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace shuttlelab {

// Potential produced at axial position z per volt applied to one electrode.
class MomentFunction {
  public:
    virtual ~MomentFunction() = default;
    virtual double value(double z) const = 0;
    virtual double slope(double z) const = 0;
    virtual double curvature(double z) const = 0;
};

// Localized smooth bump, exp(-(z-c)^2 / 2w^2), scaled by peak.
class GaussianMoment final : public MomentFunction {
  public:
    GaussianMoment(double center, double width, double peak = 1.0);
    double value(double z) const override;
    double slope(double z) const override;
    double curvature(double z) const override;

  private:
    double center_, width_, peak_;
};

// Natural cubic spline through tabulated (z, phi) samples on a uniform grid.
class SplineMoment final : public MomentFunction {
  public:
    SplineMoment(VectorXd z, VectorXd phi);
    double value(double z) const override;
    double slope(double z) const override;
    double curvature(double z) const override;

  private:
    int segment(double z) const;
    VectorXd z_, a_, b_, c_, d_;  // per-segment cubic coefficients
};

struct Electrode {
    double center = 0.0;  // m
    std::shared_ptr<const MomentFunction> moment;
};

struct ElectrodeBasis {
    std::vector<Electrode> electrodes;
    double axial_min = 0.0;  // m
    double axial_max = 0.0;

    int size() const { return static_cast<int>(electrodes.size()); }

    // Evenly pitched electrodes with Gaussian moments, centered on z = 0.
    static ElectrodeBasis gaussian(int count, double pitch, double moment_width,
                                   double peak = 1.0, double range_margin = 0.5);
    // Tabulated basis: CSV columns z_um, phi_electrode_1, ..., phi_electrode_N
    // on a uniform grid, cubic-spline interpolated.
    static ElectrodeBasis from_csv(const std::string& path);
};

struct WellSpec {
    double center = 0.0;           // m
    double axial_frequency = 0.0;  // Hz
};

struct Waveform {
    double sample_interval = 0.0;  // s
    double t0 = 0.0;               // time of first sample, s
    MatrixXd channels;             // electrodes x samples, volts
    double dac_range = 10.0;       // |V| limit per channel

    int samples() const { return static_cast<int>(channels.cols()); }
    double time_at(int m) const { return t0 + m * sample_interval; }
    double end_time() const { return t0 + samples() * sample_interval; }
};

struct WellLostError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Potential energy q * sum_k V_k phi_k(z), joules.
double potential_at(const ElectrodeBasis& basis, const VectorXd& voltages, double z,
                    double charge = elementary_charge);

// Newton refinement of the local minimum near `guess`; axial_frequency from the
// curvature, f = sqrt(U''/m) / 2pi. Throws WellLostError when no minimum exists
// near the guess — the signal of an over-distorted waveform.
WellSpec find_well(const ElectrodeBasis& basis, const VectorXd& voltages, double guess,
                   double mass, double charge = elementary_charge);

// Tikhonov-regularized minimum-norm voltages giving value 0, zero gradient, and
// the curvature implied by spec.axial_frequency at spec.center.
VectorXd solve_voltages(const ElectrodeBasis& basis, const WellSpec& spec, double mass,
                        double charge = elementary_charge, double regularization = 1e-9);

struct TransportWaveformOptions {
    double settle_before = 0.2e-6;  // s of held start samples
    double settle_after = 3.0e-6;   // s of held end samples
    double dac_range = 10.0;        // V
    double regularization = 1e-9;
    double mass = 40.0 * atomic_mass_unit;
    double charge = elementary_charge;
};

// Ramp of `duration / sample_interval` samples whose well center interpolates
// linearly from z_i to z_f at constant spec_frequency, with held endpoint
// samples so the electrode filters settle. t = 0 is the first ramp sample.
Waveform make_transport_waveform(const ElectrodeBasis& basis, double z_i, double z_f,
                                 double duration, double sample_interval,
                                 double spec_frequency,
                                 const TransportWaveformOptions& options = {});

}  // namespace shuttlelab
