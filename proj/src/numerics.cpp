#include "shuttlelab/numerics.hpp"

#include "shuttlelab/constants.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace shuttlelab {

double erf(double x) { return std::erf(x); }
double erfc(double x) { return std::erfc(x); }

namespace {

// One Newton step on erfc(x) = y. erfc'(x) = -2/sqrt(pi) exp(-x^2).
inline double erfc_newton(double x, double y) {
    const double two_over_sqrt_pi = 1.1283791670955126;
    return x + (std::erfc(x) - y) / (two_over_sqrt_pi * std::exp(-x * x));
}

}  // namespace

double erfc_inv(double y) {
    if (!(y > 0.0 && y < 2.0)) {
        if (y == 0.0) return std::numeric_limits<double>::infinity();
        if (y == 2.0) return -std::numeric_limits<double>::infinity();
        throw std::domain_error("erfc_inv: argument outside (0, 2)");
    }
    if (y > 1.0) return -erfc_inv(2.0 - y);
    if (y == 1.0) return 0.0;

    // Initial guess: central region via a rational map, tail via the
    // asymptotic erfc(x) ~ exp(-x^2)/(x sqrt(pi)).
    double x;
    if (y > 0.1) {
        const double s = 1.0 - y;  // = erf(x)
        const double w = -std::log((1.0 - s) * (1.0 + s));
        x = s * (1.50140941 + w * (0.246640727 + w * (-0.00417768164 + w * 0.000200214257)));
    } else {
        x = std::sqrt(-std::log(y));
        for (int i = 0; i < 2; ++i)
            x = std::sqrt(-std::log(y * x * std::sqrt(pi)));
    }
    // Newton refinement; the correction is quadratically convergent and the
    // exp(-x^2) derivative stays representable for every y above ~1e-280.
    for (int i = 0; i < 4 && x < 25.0; ++i) x = erfc_newton(x, y);
    return x;
}

double erf_inv(double x) { return erfc_inv(1.0 - x); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("normal_quantile: argument outside (0, 1)");
    return -std::sqrt(2.0) * erfc_inv(2.0 * p);
}

double assoc_laguerre(int n, int k, double x) {
    if (n < 0) throw std::domain_error("assoc_laguerre: negative degree");
    if (n == 0) return 1.0;
    double lm1 = 1.0;            // L_0^k
    double l = 1.0 + k - x;      // L_1^k
    for (int i = 1; i < n; ++i) {
        const double lp1 = ((2.0 * i + k + 1.0 - x) * l - (i + k) * lm1) / (i + 1.0);
        lm1 = l;
        l = lp1;
    }
    return l;
}

double laguerre(int n, double x) { return assoc_laguerre(n, 0, x); }

ConfidenceInterval binomial_ci(long successes, long trials, double level) {
    if (trials < 1) throw std::invalid_argument("binomial_ci: trials must be >= 1");
    if (successes < 0 || successes > trials)
        throw std::invalid_argument("binomial_ci: successes outside [0, trials]");
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("binomial_ci: level outside (0, 1)");

    const double z = normal_quantile(0.5 * (1.0 + level));
    const double n = static_cast<double>(trials);
    const double phat = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double halfwidth =
        z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    return {center - halfwidth, center + halfwidth, level};
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt
// ---------------------------------------------------------------------------

namespace {

VectorXd residuals(const ModelFn& model, const VectorXd& p, const FitData& d) {
    VectorXd r(d.x.size());
    for (Eigen::Index i = 0; i < d.x.size(); ++i)
        r[i] = (d.y[i] - model(p, d.x[i])) / d.sigma[i];
    return r;
}

VectorXd clamp_to_box(VectorXd p, const LmOptions& opt) {
    if (opt.lower.size() > 0)
        for (Eigen::Index j = 0; j < p.size(); ++j)
            p[j] = std::min(std::max(p[j], opt.lower[j]), opt.upper[j]);
    return p;
}

}  // namespace

FitResult lm_fit(const ModelFn& model, const VectorXd& initial,
                 const FitData& data, const LmOptions& opt) {
    const Eigen::Index n = initial.size();
    const Eigen::Index m = data.x.size();
    if (data.y.size() != m || data.sigma.size() != m)
        throw std::invalid_argument("lm_fit: data arrays of unequal length");
    if ((data.sigma.array() <= 0.0).any())
        throw std::invalid_argument("lm_fit: all sigma must be positive");
    const bool bounded = opt.lower.size() > 0;
    if (bounded && (opt.lower.size() != n || opt.upper.size() != n))
        throw std::invalid_argument("lm_fit: bounds size mismatch");

    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index j = 0; j < n; ++j)
        if (!bounded || opt.lower[j] < opt.upper[j]) free_idx.push_back(j);
    const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
    if (m < nf) throw std::invalid_argument("lm_fit: fewer points than free parameters");

    VectorXd p = clamp_to_box(initial, opt);
    if (bounded)
        for (Eigen::Index j = 0; j < n; ++j)
            if (opt.lower[j] == opt.upper[j]) p[j] = opt.lower[j];

    // Central-difference step per parameter, pinned to the larger of the
    // current and initial magnitudes so parameters passing through zero
    // keep a sensible scale.
    auto diff_step = [&](const VectorXd& q, Eigen::Index j) {
        const double scale = std::max(std::abs(q[j]), std::abs(initial[j]));
        return opt.jacobian_rel_step * std::max(scale, 1e-12);
    };

    auto jacobian = [&](const VectorXd& q) {
        MatrixXd J(m, nf);
        for (Eigen::Index c = 0; c < nf; ++c) {
            const Eigen::Index j = free_idx[c];
            const double h = diff_step(q, j);
            VectorXd qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            J.col(c) = (residuals(model, qp, data) - residuals(model, qm, data)) / (2.0 * h);
        }
        return J;
    };

    VectorXd r = residuals(model, p, data);
    double cost = r.squaredNorm();
    double lambda = opt.lambda0;
    bool converged = false;
    int iter = 0;
    std::string message;

    for (; iter < opt.max_iterations && nf > 0; ++iter) {
        const MatrixXd J = jacobian(p);
        const MatrixXd JtJ = J.transpose() * J;
        const VectorXd g = J.transpose() * r;

        bool accepted = false;
        VectorXd step_taken = VectorXd::Zero(n);
        for (int grow = 0; grow < 40 && !accepted; ++grow) {
            MatrixXd A = JtJ;
            for (Eigen::Index c = 0; c < nf; ++c)
                A(c, c) += lambda * std::max(JtJ(c, c), 1e-14);
            const VectorXd delta = A.ldlt().solve(-g);
            if (!delta.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            VectorXd trial = p;
            for (Eigen::Index c = 0; c < nf; ++c) trial[free_idx[c]] += delta[c];
            trial = clamp_to_box(trial, opt);
            const VectorXd rt = residuals(model, trial, data);
            const double ct = rt.squaredNorm();
            if (ct <= cost && rt.allFinite()) {
                step_taken = trial - p;
                p = trial;
                r = rt;
                cost = ct;
                lambda = std::max(lambda * 0.3, 1e-14);
                accepted = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) {
            converged = true;  // damping exhausted: no downhill direction left
            break;
        }
        double rel_step = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double scale = std::max({std::abs(p[j]), std::abs(initial[j]), 1e-12});
            rel_step = std::max(rel_step, std::abs(step_taken[j]) / scale);
        }
        if (rel_step < opt.step_tolerance) {
            converged = true;
            ++iter;
            break;
        }
    }
    if (nf == 0) converged = true;
    if (!converged) message = "iteration cap reached without meeting step tolerance";

    // Covariance from the Jacobian at the optimum; SVD pseudo-inverse so a
    // rank-deficient fit reports instead of crashing.
    MatrixXd cov = MatrixXd::Zero(n, n);
    int rank = 0;
    if (nf > 0) {
        const MatrixXd J = jacobian(p);
        Eigen::JacobiSVD<MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const double tol = std::max(m, nf) * svd.singularValues()[0] *
                           std::numeric_limits<double>::epsilon();
        VectorXd inv_s2 = VectorXd::Zero(nf);
        for (Eigen::Index k = 0; k < nf; ++k) {
            if (svd.singularValues()[k] > tol) {
                inv_s2[k] = 1.0 / (svd.singularValues()[k] * svd.singularValues()[k]);
                ++rank;
            }
        }
        const MatrixXd cov_free =
            svd.matrixV() * inv_s2.asDiagonal() * svd.matrixV().transpose();
        for (Eigen::Index a = 0; a < nf; ++a)
            for (Eigen::Index b = 0; b < nf; ++b)
                cov(free_idx[a], free_idx[b]) = cov_free(a, b);
        if (rank < nf)
            message = "rank-deficient Jacobian (rank " + std::to_string(rank) + " of " +
                      std::to_string(nf) + " free parameters)";
    }

    FitResult out;
    out.parameters = p;
    out.covariance = cov;
    out.reduced_chi2 = (m > nf) ? cost / static_cast<double>(m - nf) : 0.0;
    out.iterations = iter;
    out.converged = converged;
    out.jacobian_rank = rank;
    out.message = message;
    return out;
}

// ---------------------------------------------------------------------------
// RK4
// ---------------------------------------------------------------------------

OdeSolution integrate_ode(const DerivFn& f, const VectorXd& initial, double t0,
                          double t1, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integrate_ode: dt must be positive");
    if (t1 < t0) throw std::invalid_argument("integrate_ode: t1 < t0");

    const auto nsteps = static_cast<Eigen::Index>(std::ceil((t1 - t0) / dt - 1e-12));
    OdeSolution sol;
    sol.times.resize(nsteps + 1);
    sol.states.resize(nsteps + 1, initial.size());

    VectorXd y = initial;
    double t = t0;
    sol.times[0] = t;
    sol.states.row(0) = y;
    for (Eigen::Index i = 0; i < nsteps; ++i) {
        const double h = std::min(dt, t1 - t);
        const VectorXd k1 = f(t, y);
        const VectorXd k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        const VectorXd k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        const VectorXd k4 = f(t + h, y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = (i + 1 == nsteps) ? t1 : t0 + (i + 1) * dt;
        if (!y.allFinite())
            throw std::runtime_error("integrate_ode: non-finite state at t = " +
                                     std::to_string(t));
        sol.times[i + 1] = t;
        sol.states.row(i + 1) = y;
    }
    return sol;
}

// ---------------------------------------------------------------------------
// CounterRng
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t CounterRng::next_u64() {
    ++counter_;
    return splitmix64(seed_ + kGolden * counter_);
}

double CounterRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::next_normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * pi * u2;
    cached_normal_ = radius * std::sin(angle);
    have_cached_normal_ = true;
    return radius * std::cos(angle);
}

long CounterRng::next_binomial(long trials, double p) {
    if (trials < 0) throw std::invalid_argument("next_binomial: negative trials");
    long k = 0;
    for (long i = 0; i < trials; ++i)
        if (next_double() < p) ++k;
    return k;
}

std::uint64_t CounterRng::derive(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed + kGolden) ^ splitmix64(stream + 2 * kGolden));
}

}  // namespace shuttlelab
