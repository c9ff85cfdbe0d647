#include "shuttlelab/dynamics.hpp"

#include "shuttlelab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace shuttlelab {

namespace {

// Composite Simpson on a uniform grid; odd interval counts close with the
// three-eighths rule on the final three panels.
template <typename Scalar>
Scalar simpson_uniform(const std::function<Scalar(int)>& f, int n_samples, double h) {
    if (n_samples < 2) return Scalar{};
    if (n_samples == 2) return (f(0) + f(1)) * (h / 2.0);
    const int intervals = n_samples - 1;
    Scalar total{};
    int last = intervals;
    if (intervals % 2 == 1) {
        last = intervals - 3;
        total += (f(last) + 3.0 * f(last + 1) + 3.0 * f(last + 2) + f(last + 3)) *
                 (3.0 * h / 8.0);
    }
    if (last > 0) {
        Scalar s = f(0) + f(last);
        for (int i = 1; i < last; i += 2) s += 4.0 * f(i);
        for (int i = 2; i < last; i += 2) s += 2.0 * f(i);
        total += s * (h / 3.0);
    }
    return total;
}

}  // namespace

IonTrajectory integrate_ion(const ElectrodeBasis& basis, const FilteredWaveform& fine,
                            const IonSpec& ion, double z0, double v0) {
    const int n = fine.samples();
    if (n < 2) throw std::invalid_argument("integrate_ion: empty waveform");
    const double t_end = fine.time_at(n - 1);

    auto voltages_at = [&](double t) -> VectorXd {
        const double s = (t - fine.t0) / fine.dt;
        const int j = std::clamp(static_cast<int>(std::floor(s)), 0, n - 2);
        const double frac = std::clamp(s - j, 0.0, 1.0);
        return fine.channels.col(j) * (1.0 - frac) + fine.channels.col(j + 1) * frac;
    };

    DerivFn rhs = [&](double t, const VectorXd& state) -> VectorXd {
        const double z = state[0];
        if (z < basis.axial_min || z > basis.axial_max)
            throw std::runtime_error("integrate_ion: ion left axial range at t = " +
                                     std::to_string(t * 1e6) + " us");
        const VectorXd v = voltages_at(t);
        double grad = 0.0;
        for (int k = 0; k < basis.size(); ++k)
            grad += v[k] * basis.electrodes[k].moment->slope(z);
        VectorXd d(2);
        d[0] = state[1];
        d[1] = -ion.charge * grad / ion.mass;
        return d;
    };

    VectorXd initial(2);
    initial << z0, v0;
    const OdeSolution sol = integrate_ode(rhs, initial, fine.t0, t_end, fine.dt);

    IonTrajectory traj;
    traj.times = sol.times;
    traj.positions = sol.states.col(0);
    traj.velocities = sol.states.col(1);
    return traj;
}

std::complex<double> coherent_displacement(const WellPath& path, double omega,
                                           const IonSpec& ion) {
    const int n = static_cast<int>(path.centers.size());
    if (n < 2) return {0.0, 0.0};
    using cd = std::complex<double>;
    const cd i_unit(0.0, 1.0);
    const double t0 = path.t0;
    const double T = path.t0 + (n - 1) * path.dt;

    // Integration by parts of  integral z' e^{iwt} dt  avoids differencing the
    // tracked centers:  z(T)e^{iwT} - z(t0)e^{iwt0} - iw * integral z e^{iwt} dt.
    std::function<cd(int)> integrand = [&](int j) -> cd {
        const double t = path.t0 + j * path.dt;
        return path.centers[j] * std::exp(i_unit * (omega * t));
    };
    const cd integral = simpson_uniform<cd>(integrand, n, path.dt);
    const cd boundary = path.centers[n - 1] * std::exp(i_unit * (omega * T)) -
                        path.centers[0] * std::exp(i_unit * (omega * t0)) -
                        i_unit * omega * integral;
    return -i_unit * std::sqrt(ion.mass * omega / (2.0 * hbar)) *
           std::exp(-i_unit * (omega * T)) * boundary;
}

Waveform add_compensation(const Waveform& wf, const CompensationPulse& pulse) {
    for (int k : pulse.electrode_set)
        if (k < 0 || k >= wf.channels.rows())
            throw std::out_of_range("add_compensation: electrode index out of range");
    if (pulse.amplitude < 0.0)
        throw std::invalid_argument("add_compensation: negative amplitude");

    Waveform out = wf;
    for (int m = 0; m < wf.samples(); ++m) {
        const double t = wf.time_at(m);
        if (t < pulse.window.first - 1e-15 || t > pulse.window.second + 1e-15) continue;
        const double add = pulse.amplitude *
                           std::sin(2.0 * pi * pulse.frequency * (t - pulse.window.first) +
                                    pulse.phase);
        for (int k : pulse.electrode_set) out.channels(k, m) += add;
    }
    if (out.channels.cwiseAbs().maxCoeff() > out.dac_range)
        throw std::runtime_error("add_compensation: voltage exceeds DAC range");
    return out;
}

namespace {

// Deterministic Nelder-Mead on the unit cube with boundary clamping.
struct SimplexResult {
    Eigen::Vector3d best;
    double value = 0.0;
    bool converged = false;
};

SimplexResult nelder_mead_unit_cube(const std::function<double(const Eigen::Vector3d&)>& f,
                                    const Eigen::Vector3d& start, double scale,
                                    int max_evals, double tol, int* eval_counter) {
    using V3 = Eigen::Vector3d;
    auto clamp01 = [](V3 v) {
        for (int i = 0; i < 3; ++i) v[i] = std::clamp(v[i], 0.0, 1.0);
        return v;
    };
    std::array<V3, 4> x;
    std::array<double, 4> fx;
    x[0] = clamp01(start);
    for (int i = 0; i < 3; ++i) {
        V3 v = x[0];
        v[i] += (v[i] + scale <= 1.0) ? scale : -scale;
        x[i + 1] = clamp01(v);
    }
    int evals = 0;
    auto eval = [&](const V3& v) {
        ++evals;
        return f(v);
    };
    for (int i = 0; i < 4; ++i) fx[i] = eval(x[i]);

    auto order = [&]() {
        for (int i = 1; i < 4; ++i)
            for (int j = i; j > 0 && fx[j] < fx[j - 1]; --j) {
                std::swap(fx[j], fx[j - 1]);
                std::swap(x[j], x[j - 1]);
            }
    };
    order();

    bool converged = false;
    while (evals < max_evals) {
        const double spread = (x[1] - x[0]).norm() + (x[2] - x[0]).norm() + (x[3] - x[0]).norm();
        if (spread < tol) {
            converged = true;
            break;
        }
        const V3 centroid = (x[0] + x[1] + x[2]) / 3.0;
        const V3 reflected = clamp01(centroid + (centroid - x[3]));
        const double fr = eval(reflected);
        if (fr < fx[0]) {
            const V3 expanded = clamp01(centroid + 2.0 * (centroid - x[3]));
            const double fe = eval(expanded);
            if (fe < fr) {
                x[3] = expanded;
                fx[3] = fe;
            } else {
                x[3] = reflected;
                fx[3] = fr;
            }
        } else if (fr < fx[2]) {
            x[3] = reflected;
            fx[3] = fr;
        } else {
            const V3 contracted = clamp01(centroid + 0.5 * ((fr < fx[3] ? reflected : x[3]) - centroid));
            const double fc = eval(contracted);
            if (fc < std::min(fr, fx[3])) {
                x[3] = contracted;
                fx[3] = fc;
            } else {
                for (int i = 1; i < 4; ++i) {
                    x[i] = clamp01(x[0] + 0.5 * (x[i] - x[0]));
                    fx[i] = eval(x[i]);
                }
            }
        }
        order();
    }
    if (eval_counter) *eval_counter += evals;
    return {x[0], fx[0], converged};
}

}  // namespace

CompensationResult optimize_compensation(const Waveform& waveform,
                                         const ElectrodeBasis& basis,
                                         const std::vector<FilterSpec>& specs,
                                         const IonSpec& ion,
                                         const std::vector<int>& electrode_set,
                                         std::pair<double, double> window,
                                         const CompensationSearchRanges& ranges,
                                         const OptimizeOptions& opt) {
    if (electrode_set.empty())
        throw std::invalid_argument("optimize_compensation: empty electrode set");

    auto make_pulse = [&](double a, double f, double ph) {
        CompensationPulse p;
        p.amplitude = a;
        p.frequency = f;
        p.phase = ph;
        p.electrode_set = electrode_set;
        p.window = window;
        return p;
    };

    // The residual coherent state lives in the settled final well; use its
    // frequency for the displacement integral.
    auto ncoh_of = [&](const Waveform& wf) {
        const WellPath path = filtered_well_trajectory(basis, wf, specs, opt.fine_dt,
                                                       ion.mass, ion.charge);
        const double omega = 2.0 * pi * path.frequencies[path.frequencies.size() - 1];
        return std::norm(coherent_displacement(path, omega, ion));
    };

    int evaluations = 1;
    const double initial_ncoh = ncoh_of(waveform);

    auto from_unit = [&](const Eigen::Vector3d& u) {
        return make_pulse(
            ranges.amplitude.first + u[0] * (ranges.amplitude.second - ranges.amplitude.first),
            ranges.frequency.first + u[1] * (ranges.frequency.second - ranges.frequency.first),
            ranges.phase.first + u[2] * (ranges.phase.second - ranges.phase.first));
    };
    auto objective = [&](const Eigen::Vector3d& u) -> double {
        try {
            return ncoh_of(add_compensation(waveform, from_unit(u)));
        } catch (const WellLostError&) {
            return 1e30;  // over-driven pulse; steer the simplex away
        } catch (const std::runtime_error&) {
            return 1e30;  // DAC range exceeded
        }
    };

    // Deterministic coarse grid locates the basin (the phase landscape is
    // periodic, so a simplex started blind can stall on the wrong lobe).
    Eigen::Vector3d best_u(0.0, 0.5, 0.5);
    double best_val = std::numeric_limits<double>::infinity();
    for (int ia = 0; ia < opt.grid_amplitude; ++ia)
        for (int jf = 0; jf < opt.grid_frequency; ++jf)
            for (int kp = 0; kp < opt.grid_phase; ++kp) {
                const Eigen::Vector3d u((ia + 1.0) / (opt.grid_amplitude + 1.0),
                                        (jf + 0.5) / opt.grid_frequency,
                                        (kp + 0.5) / opt.grid_phase);
                const double v = objective(u);
                ++evaluations;
                if (v < best_val) {
                    best_val = v;
                    best_u = u;
                }
            }

    const SimplexResult sr = nelder_mead_unit_cube(objective, best_u, 0.08,
                                                   opt.max_evaluations,
                                                   opt.simplex_tolerance, &evaluations);

    CompensationResult result;
    if (sr.value <= best_val) {
        result.pulse = from_unit(sr.best);
        result.residual_ncoh = sr.value;
    } else {
        result.pulse = from_unit(best_u);
        result.residual_ncoh = best_val;
    }
    result.initial_ncoh = initial_ncoh;
    result.converged = sr.converged;
    result.evaluations = evaluations;
    return result;
}

double simulate_heating(double n_initial, double dwell, double rate) {
    if (dwell < 0.0) throw std::invalid_argument("simulate_heating: negative dwell");
    return n_initial + rate * dwell;
}

}  // namespace shuttlelab
