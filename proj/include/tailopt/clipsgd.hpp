#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tailopt/linalg.hpp"
#include "tailopt/rng.hpp"

namespace tailopt {

enum class ScheduleMode { in_expectation, high_probability };
enum class Provenance { theory, manual };
enum class Direction { minimize, maximize };

/// Stepsize and clipping radii of one inner clipped-SGD loop of length K.
///
/// Radii follow tau_k = tau_scale * exp(-tau_rate * (1 + k/2)); a manual
/// schedule has tau_rate = 0 (constant radius). The sequence is generated on
/// demand because theory-driven K can be far too long to store.
struct InnerSchedule {
  double eta = 0.0;
  long K = 0;
  double tau_scale = 0.0;
  double tau_rate = 0.0;
  ScheduleMode mode = ScheduleMode::in_expectation;
  double delta = 0.0;  // failure probability, high_probability mode only
  Provenance provenance = Provenance::manual;

  /// Radius at step k; values that underflow are clamped to the smallest
  /// normal double so every radius stays positive.
  double tau(long k) const;
  /// tau(0..K-1); only sensible for moderate K.
  std::vector<double> taus() const;
  /// Constant eta and tau over K steps; tau may be +inf (no clipping).
  static InnerSchedule manual(double eta, double tau, long K);
  /// Throws ConfigError on a non-positive stepsize, radius or length.
  void validate() const;
};

/// Solves B = max{2, c / (ln B)^2}. For c <= 2 (ln 2)^2 the answer is 2;
/// otherwise u = ln B solves u + 2 ln u = ln c, found by damped fixed-point
/// iteration started left of the root, with bisection as a fallback.
double solve_bk(double c);

/// Clipped-SGD schedule for a mu_hat-strongly convex, ell_hat-smooth
/// subproblem with noise level sigma_hat:
///   eta   = min{1/(400 ell L), ln(B_K) / (mu (K+1))}
///   tau_k = exp(-eta mu (1 + k/2)) R / (120 eta L)
///   B_K   = max{2, mu^2 K^(2(p-1)/p) R^2 / (5400^(2/p) sigma^2 (ln B_K)^2 L^(2(p-1)/p))}
/// with L = 1 in expectation mode and L = ln(4(K+1)/delta) in high-probability
/// mode.
InnerSchedule theory_schedule(double mu_hat, double ell_hat, double sigma_hat, double p, long K,
                              double R_hat, ScheduleMode mode = ScheduleMode::in_expectation,
                              double delta = 0.1);

/// B_K used by `theory_schedule` for the same inputs.
double theory_bk(double mu_hat, double sigma_hat, double p, long K, double R_hat,
                 ScheduleMode mode = ScheduleMode::in_expectation, double delta = 0.1);

/// 2 R^2 max{exp(-K / (400 kappa)), 5400^(2/p) sigma^2 (ln B_K)^2 / (mu^2 K^(2(p-1)/p) R^2)},
/// the in-expectation bound on E||y_K - y*||^2 for the theory schedule.
double expected_residual_bound(double mu_hat, double ell_hat, double sigma_hat, double p, long K,
                               double R_hat);

struct InnerResult {
  Vec y_final;
  std::optional<double> residual_sq;  // ||y_K - y*||^2 when y* was supplied
  long sfo_used = 0;
};

using GradOracle = std::function<Vec(const Vec& y, RngStream& rng)>;
/// Called after every step with the step count k+1 and the new iterate.
using InnerObserver = std::function<void(long step, const Vec& y)>;

/// y_{k+1} = y_k -/+ eta clip(g_k, tau_k) for k = 0..K-1 (minus for
/// minimize, plus for maximize); exactly K oracle calls. Throws NumericalError
/// naming the step when the oracle returns a non-finite vector.
InnerResult clipped_sgd(const GradOracle& oracle, Vec y0, const InnerSchedule& schedule,
                        Direction direction, RngStream& rng, const Vec* y_star = nullptr,
                        const InnerObserver& observer = {});

}  // namespace tailopt
