#include "shuttlelab/potential.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace shuttlelab {

GaussianMoment::GaussianMoment(double center, double width, double peak)
    : center_(center), width_(width), peak_(peak) {
    if (!(width > 0.0)) throw std::invalid_argument("GaussianMoment: width must be positive");
}

double GaussianMoment::value(double z) const {
    const double d = z - center_;
    return peak_ * std::exp(-d * d / (2.0 * width_ * width_));
}

double GaussianMoment::slope(double z) const {
    const double d = z - center_;
    return -d / (width_ * width_) * value(z);
}

double GaussianMoment::curvature(double z) const {
    const double d = z - center_;
    const double w2 = width_ * width_;
    return (d * d / w2 - 1.0) / w2 * value(z);
}

// ---------------------------------------------------------------------------
// Natural cubic spline
// ---------------------------------------------------------------------------

SplineMoment::SplineMoment(VectorXd z, VectorXd phi) : z_(std::move(z)) {
    const Eigen::Index n = z_.size();
    if (n < 4 || phi.size() != n)
        throw std::invalid_argument("SplineMoment: need >= 4 matching samples");
    for (Eigen::Index i = 1; i < n; ++i)
        if (!(z_[i] > z_[i - 1]))
            throw std::invalid_argument("SplineMoment: grid not strictly increasing");

    // Second derivatives M from the natural-spline tridiagonal system.
    VectorXd h(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) h[i] = z_[i + 1] - z_[i];
    VectorXd diag(n), rhs(n), sub(n), sup(n);
    diag[0] = diag[n - 1] = 1.0;
    rhs[0] = rhs[n - 1] = 0.0;
    sub[0] = sup[0] = sub[n - 1] = sup[n - 1] = 0.0;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        sub[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * ((phi[i + 1] - phi[i]) / h[i] - (phi[i] - phi[i - 1]) / h[i - 1]);
    }
    // Thomas elimination.
    for (Eigen::Index i = 1; i < n; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    VectorXd m(n);
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for (Eigen::Index i = n - 2; i >= 0; --i) m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];

    a_.resize(n - 1);
    b_.resize(n - 1);
    c_.resize(n - 1);
    d_.resize(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        a_[i] = phi[i];
        b_[i] = (phi[i + 1] - phi[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
        c_[i] = m[i] / 2.0;
        d_[i] = (m[i + 1] - m[i]) / (6.0 * h[i]);
    }
}

int SplineMoment::segment(double z) const {
    const auto n = z_.size();
    if (z <= z_[0]) return 0;
    if (z >= z_[n - 1]) return static_cast<int>(n - 2);
    auto it = std::upper_bound(z_.data(), z_.data() + n, z);
    return static_cast<int>(it - z_.data()) - 1;
}

double SplineMoment::value(double z) const {
    const int i = segment(z);
    const double u = z - z_[i];
    return a_[i] + u * (b_[i] + u * (c_[i] + u * d_[i]));
}

double SplineMoment::slope(double z) const {
    const int i = segment(z);
    const double u = z - z_[i];
    return b_[i] + u * (2.0 * c_[i] + 3.0 * u * d_[i]);
}

double SplineMoment::curvature(double z) const {
    const int i = segment(z);
    const double u = z - z_[i];
    return 2.0 * c_[i] + 6.0 * u * d_[i];
}

// ---------------------------------------------------------------------------
// ElectrodeBasis
// ---------------------------------------------------------------------------

ElectrodeBasis ElectrodeBasis::gaussian(int count, double pitch, double moment_width,
                                        double peak, double range_margin) {
    if (count < 3) throw std::invalid_argument("ElectrodeBasis: need >= 3 electrodes");
    ElectrodeBasis basis;
    const double half = 0.5 * (count - 1) * pitch;
    for (int k = 0; k < count; ++k) {
        const double c = -half + k * pitch;
        basis.electrodes.push_back({c, std::make_shared<GaussianMoment>(c, moment_width, peak)});
    }
    basis.axial_min = -half - range_margin * pitch;
    basis.axial_max = half + range_margin * pitch;
    return basis;
}

ElectrodeBasis ElectrodeBasis::from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("basis file not readable: " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    int ncols = -1;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.find("z_um") != std::string::npos) continue;  // header
        std::stringstream ss(line);
        std::vector<double> row;
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (ncols < 0) ncols = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != ncols)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": ragged basis row");
        rows.push_back(std::move(row));
    }
    if (ncols < 4 || rows.size() < 4)
        throw std::runtime_error("basis file needs >= 3 electrodes and >= 4 grid rows");

    const auto nrows = static_cast<Eigen::Index>(rows.size());
    VectorXd z(nrows);
    for (Eigen::Index i = 0; i < nrows; ++i) z[i] = rows[i][0] * 1e-6;  // um -> m

    ElectrodeBasis basis;
    for (int k = 1; k < ncols; ++k) {
        VectorXd phi(nrows);
        for (Eigen::Index i = 0; i < nrows; ++i) phi[i] = rows[i][k];
        Eigen::Index peak_at = 0;
        phi.cwiseAbs().maxCoeff(&peak_at);
        basis.electrodes.push_back({z[peak_at], std::make_shared<SplineMoment>(z, phi)});
    }
    basis.axial_min = z[0];
    basis.axial_max = z[nrows - 1];
    return basis;
}

// ---------------------------------------------------------------------------
// Potential evaluation and well solving
// ---------------------------------------------------------------------------

namespace {

void check_voltages(const ElectrodeBasis& basis, const VectorXd& v) {
    if (v.size() != basis.size())
        throw std::invalid_argument("voltage count does not match electrode count");
}

struct Local {
    double u = 0.0, du = 0.0, d2u = 0.0;  // joules, J/m, J/m^2
};

Local local_potential(const ElectrodeBasis& basis, const VectorXd& v, double z,
                      double charge) {
    Local loc;
    for (int k = 0; k < basis.size(); ++k) {
        const auto& mom = *basis.electrodes[k].moment;
        loc.u += v[k] * mom.value(z);
        loc.du += v[k] * mom.slope(z);
        loc.d2u += v[k] * mom.curvature(z);
    }
    loc.u *= charge;
    loc.du *= charge;
    loc.d2u *= charge;
    return loc;
}

}  // namespace

double potential_at(const ElectrodeBasis& basis, const VectorXd& voltages, double z,
                    double charge) {
    check_voltages(basis, voltages);
    if (z < basis.axial_min || z > basis.axial_max)
        throw std::out_of_range("potential_at: z outside axial range");
    double phi = 0.0;
    for (int k = 0; k < basis.size(); ++k)
        phi += voltages[k] * basis.electrodes[k].moment->value(z);
    return charge * phi;
}

WellSpec find_well(const ElectrodeBasis& basis, const VectorXd& voltages, double guess,
                   double mass, double charge) {
    check_voltages(basis, voltages);
    const double span = basis.axial_max - basis.axial_min;
    const double max_step = 0.05 * span;

    auto newton = [&](double z0) -> double {
        double z = z0;
        for (int i = 0; i < 80; ++i) {
            const Local loc = local_potential(basis, voltages, z, charge);
            if (loc.d2u <= 0.0) return std::nan("");
            double step = -loc.du / loc.d2u;
            step = std::clamp(step, -max_step, max_step);
            z += step;
            if (z < basis.axial_min || z > basis.axial_max) return std::nan("");
            if (std::abs(step) < 1e-14) return z;
        }
        return std::nan("");
    };

    double z = newton(guess);
    if (std::isnan(z)) {
        // Bracket by coarse scan around the guess before giving up.
        double best = guess, best_u = std::numeric_limits<double>::infinity();
        const double lo = std::max(basis.axial_min, guess - 0.1 * span);
        const double hi = std::min(basis.axial_max, guess + 0.1 * span);
        for (int i = 0; i <= 200; ++i) {
            const double zz = lo + (hi - lo) * i / 200.0;
            const double u = potential_at(basis, voltages, zz, charge);
            if (u < best_u) {
                best_u = u;
                best = zz;
            }
        }
        z = newton(best);
    }
    if (std::isnan(z)) throw WellLostError("well lost near z = " + std::to_string(guess * 1e6) + " um");

    const Local loc = local_potential(basis, voltages, z, charge);
    if (loc.d2u <= 0.0)
        throw WellLostError("well lost (non-positive curvature) near z = " +
                            std::to_string(guess * 1e6) + " um");
    return {z, std::sqrt(loc.d2u / mass) / (2.0 * pi)};
}

VectorXd solve_voltages(const ElectrodeBasis& basis, const WellSpec& spec, double mass,
                        double charge, double regularization) {
    const int n = basis.size();
    const double z0 = spec.center;
    if (z0 < basis.electrodes.front().center || z0 > basis.electrodes.back().center)
        throw std::invalid_argument("solve_voltages: center outside electrode span");
    if (!(spec.axial_frequency > 0.0))
        throw std::invalid_argument("solve_voltages: frequency must be positive");

    const double omega = 2.0 * pi * spec.axial_frequency;
    const double target_curvature = mass * omega * omega / charge;  // V/m^2

    MatrixXd constraints(3, n);
    for (int k = 0; k < n; ++k) {
        const auto& mom = *basis.electrodes[k].moment;
        constraints(0, k) = mom.value(z0);
        constraints(1, k) = mom.slope(z0);
        constraints(2, k) = mom.curvature(z0);
    }
    Eigen::Vector3d rhs(0.0, 0.0, target_curvature);

    // Row-scale before regularizing: the three constraints differ by powers of
    // the moment width, and the minimum-norm solution is scale-invariant.
    static const char* names[3] = {"value", "gradient", "curvature"};
    for (int i = 0; i < 3; ++i) {
        const double norm = constraints.row(i).norm();
        if (norm < 1e-300)
            throw std::runtime_error(std::string("solve_voltages: ") + names[i] +
                                     " constraint unreachable (all moments vanish)");
        constraints.row(i) /= norm;
        rhs[i] /= norm;
    }

    const Eigen::Matrix3d gram = constraints * constraints.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gram);
    if (eig.eigenvalues()[0] < 1e-12) {
        std::string bad;
        for (int i = 0; i < 3; ++i)
            if (std::abs(eig.eigenvectors().col(0)[i]) > 0.5)
                bad += std::string(bad.empty() ? "" : ", ") + names[i];
        throw std::runtime_error("solve_voltages: rank-deficient constraints (" + bad + ")");
    }

    const Eigen::Matrix3d damped = gram + regularization * Eigen::Matrix3d::Identity();
    return constraints.transpose() * damped.ldlt().solve(rhs);
}

Waveform make_transport_waveform(const ElectrodeBasis& basis, double z_i, double z_f,
                                 double duration, double sample_interval,
                                 double spec_frequency,
                                 const TransportWaveformOptions& opt) {
    if (!(sample_interval > 0.0))
        throw std::invalid_argument("make_transport_waveform: sample_interval must be positive");
    const double ratio = duration / sample_interval;
    const int ramp_samples = static_cast<int>(std::lround(ratio));
    if (ramp_samples < 2 || std::abs(ratio - ramp_samples) > 1e-9)
        throw std::invalid_argument(
            "make_transport_waveform: duration must be an integer multiple (>= 2) of sample_interval");

    const int pre = static_cast<int>(std::lround(opt.settle_before / sample_interval));
    const int post = static_cast<int>(std::lround(opt.settle_after / sample_interval));
    const int total = pre + ramp_samples + post;

    Waveform wf;
    wf.sample_interval = sample_interval;
    wf.t0 = -pre * sample_interval;
    wf.dac_range = opt.dac_range;
    wf.channels.resize(basis.size(), total);

    for (int m = 0; m < ramp_samples; ++m) {
        const double z = z_i + (z_f - z_i) * m / (ramp_samples - 1.0);
        const VectorXd v =
            solve_voltages(basis, {z, spec_frequency}, opt.mass, opt.charge, opt.regularization);
        wf.channels.col(pre + m) = v;
    }
    for (int m = 0; m < pre; ++m) wf.channels.col(m) = wf.channels.col(pre);
    for (int m = 0; m < post; ++m)
        wf.channels.col(pre + ramp_samples + m) = wf.channels.col(pre + ramp_samples - 1);

    if (wf.channels.cwiseAbs().maxCoeff() > opt.dac_range)
        throw std::runtime_error("make_transport_waveform: voltages exceed DAC range");
    return wf;
}

}  // namespace shuttlelab
