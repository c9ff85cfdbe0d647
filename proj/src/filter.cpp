#include "shuttlelab/filter.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace shuttlelab {

double filter_magnitude(const FilterSpec& spec, double frequency) {
    const double w0 = 2.0 * pi * spec.corner_frequency;
    const double w = 2.0 * pi * frequency;
    const double re = w0 * w0 - w * w;
    const double im = w0 * w / spec.quality_factor;
    return spec.dc_gain * w0 * w0 / std::hypot(re, im);
}

namespace {

// Seed for well tracking: coarse global scan of the potential minimum.
double global_minimum_guess(const ElectrodeBasis& basis, const VectorXd& v,
                            double charge) {
    double best = basis.axial_min, best_u = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 400; ++i) {
        const double z = basis.axial_min + (basis.axial_max - basis.axial_min) * i / 400.0;
        const double u = potential_at(basis, v, z, charge);
        if (u < best_u) {
            best_u = u;
            best = z;
        }
    }
    return best;
}

// State transition of (e, e') over a step h for e'' + (w0/Q) e' + w0^2 e = 0,
// where e = y - g*u is the deviation from the held input's steady state.
struct Propagator {
    double m11, m12, m21, m22;

    Propagator(const FilterSpec& spec, double h) {
        const double w0 = 2.0 * pi * spec.corner_frequency;
        const double zeta = 1.0 / (2.0 * spec.quality_factor);
        const double decay = std::exp(-zeta * w0 * h);
        const double disc = 1.0 - zeta * zeta;
        if (std::abs(disc) < 1e-12) {  // critically damped
            m11 = decay * (1.0 + w0 * h);
            m12 = decay * h;
            m21 = -decay * w0 * w0 * h;
            m22 = decay * (1.0 - w0 * h);
        } else if (disc > 0.0) {  // underdamped
            const double wd = w0 * std::sqrt(disc);
            const double c = std::cos(wd * h), s = std::sin(wd * h);
            m11 = decay * (c + zeta * w0 * s / wd);
            m12 = decay * s / wd;
            m21 = -decay * w0 * w0 * s / wd;
            m22 = decay * (c - zeta * w0 * s / wd);
        } else {  // overdamped
            const double wd = w0 * std::sqrt(-disc);
            const double c = std::cosh(wd * h), s = std::sinh(wd * h);
            m11 = decay * (c + zeta * w0 * s / wd);
            m12 = decay * s / wd;
            m21 = -decay * w0 * w0 * s / wd;
            m22 = decay * (c - zeta * w0 * s / wd);
        }
    }

    void apply(double& e, double& edot) const {
        const double e_new = m11 * e + m12 * edot;
        edot = m21 * e + m22 * edot;
        e = e_new;
    }
};

int steps_per_segment(const Waveform& wf, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("filter: dt must be positive");
    const double ratio = wf.sample_interval / dt;
    const int n = static_cast<int>(std::lround(ratio));
    if (n < 1 || std::abs(ratio - n) > 1e-9)
        throw std::invalid_argument("filter: dt must divide the waveform sample interval");
    return n;
}

void validate(const FilterSpec& spec) {
    if (!(spec.corner_frequency > 0.0) || !(spec.quality_factor > 0.0))
        throw std::invalid_argument("filter: corner frequency and Q must be positive");
}

}  // namespace

ContinuousSignal filter_channel(const Waveform& wf, int channel, const FilterSpec& spec,
                                double dt) {
    validate(spec);
    if (channel < 0 || channel >= wf.channels.rows())
        throw std::out_of_range("filter_channel: no such channel");
    const int per = steps_per_segment(wf, dt);
    const int segments = wf.samples();
    const Propagator prop(spec, dt);

    ContinuousSignal out;
    out.dt = dt;
    out.t0 = wf.t0;
    out.samples.resize(static_cast<Eigen::Index>(segments) * per + 1);

    double y = spec.dc_gain * wf.channels(channel, 0);  // settled at the first sample
    double ydot = 0.0;
    Eigen::Index j = 0;
    out.samples[j++] = y;
    for (int seg = 0; seg < segments; ++seg) {
        const double target = spec.dc_gain * wf.channels(channel, seg);
        double e = y - target;
        double edot = ydot;
        for (int i = 0; i < per; ++i) {
            prop.apply(e, edot);
            out.samples[j++] = e + target;
        }
        y = e + target;
        ydot = edot;
    }
    return out;
}

FilteredWaveform filter_waveform(const Waveform& wf, const std::vector<FilterSpec>& specs,
                                 double dt) {
    const auto n = wf.channels.rows();
    if (specs.empty() || (specs.size() != 1 && static_cast<Eigen::Index>(specs.size()) != n))
        throw std::invalid_argument("filter_waveform: need one spec, or one per electrode");

    FilteredWaveform out;
    out.dt = dt;
    out.t0 = wf.t0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& spec = specs.size() == 1 ? specs[0] : specs[k];
        const ContinuousSignal sig = filter_channel(wf, static_cast<int>(k), spec, dt);
        if (k == 0) out.channels.resize(n, sig.samples.size());
        out.channels.row(k) = sig.samples;
    }
    return out;
}

WellPath filtered_well_trajectory(const ElectrodeBasis& basis, const Waveform& wf,
                                  const std::vector<FilterSpec>& specs, double dt,
                                  double mass, double charge) {
    const FilteredWaveform fine = filter_waveform(wf, specs, dt);
    WellPath path;
    path.dt = dt;
    path.t0 = fine.t0;
    path.centers.resize(fine.samples());
    path.frequencies.resize(fine.samples());

    double guess = global_minimum_guess(basis, fine.channels.col(0), charge);
    for (int j = 0; j < fine.samples(); ++j) {
        WellSpec well;
        try {
            well = find_well(basis, fine.channels.col(j), guess, mass, charge);
        } catch (const WellLostError&) {
            throw WellLostError("well lost at t = " +
                                std::to_string(fine.time_at(j) * 1e6) + " us");
        }
        path.centers[j] = well.center;
        path.frequencies[j] = well.axial_frequency;
        guess = well.center;
    }
    return path;
}

WellPath filtered_well_trajectory(const ElectrodeBasis& basis, const Waveform& wf,
                                  const FilterSpec& spec, double dt, double mass,
                                  double charge) {
    return filtered_well_trajectory(basis, wf, std::vector<FilterSpec>{spec}, dt, mass,
                                    charge);
}

WellPath designed_well_trajectory(const ElectrodeBasis& basis, const Waveform& wf,
                                  double mass, double charge) {
    WellPath path;
    path.dt = wf.sample_interval;
    path.t0 = wf.t0;
    path.centers.resize(wf.samples());
    path.frequencies.resize(wf.samples());
    double guess = global_minimum_guess(basis, wf.channels.col(0), charge);
    for (int m = 0; m < wf.samples(); ++m) {
        const WellSpec well = find_well(basis, wf.channels.col(m), guess, mass, charge);
        path.centers[m] = well.center;
        path.frequencies[m] = well.axial_frequency;
        guess = well.center;
    }
    return path;
}

}  // namespace shuttlelab
