#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace shuttlelab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

double erf(double x);
double erfc(double x);

// Inverse of erfc on (0, 2); Newton-refined to full double precision.
double erfc_inv(double y);
double erf_inv(double x);

// Quantile of the standard normal distribution.
double normal_quantile(double p);

// Associated Laguerre polynomial L_n^k(x) by the three-term recurrence.
// Valid for any real x, including negative arguments.
double assoc_laguerre(int n, int k, double x);

// Laguerre polynomial L_n(x) = L_n^0(x).
double laguerre(int n, double x);

// ---------------------------------------------------------------------------
// Confidence intervals
// ---------------------------------------------------------------------------

struct ConfidenceInterval {
    double low = 0.0;
    double high = 0.0;
    double level = 0.0;
};

// Wilson score interval for a binomial proportion. Well behaved at 0 and
// full-count successes, which occur at scan edges.
ConfidenceInterval binomial_ci(long successes, long trials, double level);

// ---------------------------------------------------------------------------
// Weighted nonlinear least squares (Levenberg-Marquardt)
// ---------------------------------------------------------------------------

struct FitResult {
    VectorXd parameters;
    MatrixXd covariance;      // from J^T J at the optimum (pseudo-inverse)
    double reduced_chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    int jacobian_rank = 0;    // rank of the weighted Jacobian at the optimum
    std::string message;
};

struct FitData {
    VectorXd x;
    VectorXd y;
    VectorXd sigma;
};

using ModelFn = std::function<double(const VectorXd& params, double x)>;

struct LmOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;     // relative step convergence criterion
    double jacobian_rel_step = 1e-6;   // central-difference relative step
    double lambda0 = 1e-3;             // initial damping
    VectorXd lower;                    // empty = unbounded; lower==upper freezes
    VectorXd upper;
};

// Minimizes sum_i ((y_i - f(p, x_i)) / sigma_i)^2. Deterministic given
// identical inputs. Non-convergence is flagged on the result, not thrown.
FitResult lm_fit(const ModelFn& model, const VectorXd& initial,
                 const FitData& data, const LmOptions& options = {});

// ---------------------------------------------------------------------------
// Fixed-step ODE integration (classic fourth-order Runge-Kutta)
// ---------------------------------------------------------------------------

using DerivFn = std::function<VectorXd(double t, const VectorXd& state)>;

struct OdeSolution {
    VectorXd times;
    MatrixXd states;  // one row per time sample
};

// Integrates from t0 to t1 in fixed steps of dt (the final step is shortened
// to land on t1). Throws if the state turns non-finite, naming the time.
OdeSolution integrate_ode(const DerivFn& derivative, const VectorXd& initial,
                          double t0, double t1, double dt);

// ---------------------------------------------------------------------------
// Counter-based RNG
// ---------------------------------------------------------------------------

// SplitMix64 used as a pure function of (seed, counter): the stream is
// random-access, so per-point substreams can be derived for scan simulation
// without coupling draw order to evaluation order.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();
    double next_double();   // uniform on [0, 1)
    double next_normal();   // standard normal (Box-Muller)
    long next_binomial(long trials, double p);

    // Independent child seed for a tagged substream.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace shuttlelab
