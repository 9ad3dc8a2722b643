#include "tailopt/clipsgd.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "tailopt/errors.hpp"
#include "tailopt/noise.hpp"

namespace tailopt {

namespace {

double high_prob_log(ScheduleMode mode, long K, double delta) {
  if (mode == ScheduleMode::in_expectation) return 1.0;
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  const double L = std::log(4.0 * (K + 1.0) / delta);
  if (L < 1.0) throw ConfigError("ln(4(K+1)/delta) must be >= 1");
  return L;
}

void check_theory_inputs(double mu_hat, double sigma_hat, double p, long K, double R_hat) {
  if (!(mu_hat > 0.0)) throw ConfigError("mu_hat must be positive");
  if (!(sigma_hat > 0.0)) throw ConfigError("sigma_hat must be positive");
  if (!(p > 1.0 && p <= 2.0)) throw ConfigError("p must lie in (1, 2]");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (!(R_hat > 0.0)) throw ConfigError("R_hat must be positive");
}

}  // namespace

double InnerSchedule::tau(long k) const {
  if (tau_rate == 0.0) return tau_scale;
  const double t = tau_scale * std::exp(-tau_rate * (1.0 + 0.5 * static_cast<double>(k)));
  return std::max(t, std::numeric_limits<double>::min());
}

std::vector<double> InnerSchedule::taus() const {
  std::vector<double> out(static_cast<std::size_t>(K));
  for (long k = 0; k < K; ++k) out[static_cast<std::size_t>(k)] = tau(k);
  return out;
}

InnerSchedule InnerSchedule::manual(double eta, double tau, long K) {
  InnerSchedule s;
  s.eta = eta;
  s.K = K;
  s.tau_scale = tau;
  s.tau_rate = 0.0;
  s.provenance = Provenance::manual;
  s.validate();
  return s;
}

void InnerSchedule::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("inner stepsize must be positive");
  if (K < 1) throw ConfigError("inner schedule needs K >= 1");
  if (!(tau_scale > 0.0)) throw ConfigError("clipping radii must be positive");
  if (!(tau_rate >= 0.0) || !std::isfinite(tau_rate)) throw ConfigError("radius decay must be >= 0");
}

double solve_bk(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("solve_bk needs finite c > 0");
  const double ln2 = std::log(2.0);
  if (c <= 2.0 * ln2 * ln2) return 2.0;

  const double log_c = std::log(c);
  auto residual_ok = [&](double u) {
    const double B = std::exp(u);
    return std::abs(B - std::max(2.0, c / (u * u))) <= 1e-9 * B;
  };

  // u = ln c - 2 ln u, damped with weight u/(u+2); from the left of the root
  // the iterates increase monotonically.
  double u = ln2;
  for (int it = 0; it < 200; ++it) {
    const double mapped = log_c - 2.0 * std::log(u);
    const double next = u + (u / (u + 2.0)) * (mapped - u);
    if (std::abs(next - u) <= 1e-15 * next) {
      u = next;
      break;
    }
    u = next;
  }
  if (residual_ok(u)) return std::exp(u);

  // Fallback: h(u) = u + 2 ln u - ln c is increasing on (ln 2, inf).
  double lo = ln2;
  double hi = std::max(log_c, 1.0) + 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid + 2.0 * std::log(mid) < log_c ? lo : hi) = mid;
  }
  u = 0.5 * (lo + hi);
  if (!residual_ok(u)) throw NumericalError("B_K fixed point did not converge");
  return std::exp(u);
}

double theory_bk(double mu_hat, double sigma_hat, double p, long K, double R_hat,
                 ScheduleMode mode, double delta) {
  check_theory_inputs(mu_hat, sigma_hat, p, K, R_hat);
  const double L = high_prob_log(mode, K, delta);
  const double expo = 2.0 * (p - 1.0) / p;
  const double c = mu_hat * mu_hat * std::pow(double(K), expo) * R_hat * R_hat /
                   (std::pow(5400.0, 2.0 / p) * sigma_hat * sigma_hat * std::pow(L, expo));
  return solve_bk(c);
}

InnerSchedule theory_schedule(double mu_hat, double ell_hat, double sigma_hat, double p, long K,
                              double R_hat, ScheduleMode mode, double delta) {
  if (!(ell_hat > 0.0)) throw ConfigError("ell_hat must be positive");
  const double B = theory_bk(mu_hat, sigma_hat, p, K, R_hat, mode, delta);
  const double L = high_prob_log(mode, K, delta);

  InnerSchedule s;
  s.mode = mode;
  s.delta = mode == ScheduleMode::high_probability ? delta : 0.0;
  s.provenance = Provenance::theory;
  s.eta = std::min(1.0 / (400.0 * ell_hat * L), std::log(B) / (mu_hat * (double(K) + 1.0)));
  s.K = K;
  s.tau_scale = R_hat / (120.0 * s.eta * L);
  s.tau_rate = s.eta * mu_hat;
  return s;
}

double expected_residual_bound(double mu_hat, double ell_hat, double sigma_hat, double p, long K,
                               double R_hat) {
  const double B = theory_bk(mu_hat, sigma_hat, p, K, R_hat);
  const double kappa = ell_hat / mu_hat;
  const double lnB = std::log(B);
  const double noise_term = std::pow(5400.0, 2.0 / p) * sigma_hat * sigma_hat * lnB * lnB /
                            (mu_hat * mu_hat * std::pow(double(K), 2.0 * (p - 1.0) / p) * R_hat *
                             R_hat);
  return 2.0 * R_hat * R_hat * std::max(std::exp(-double(K) / (400.0 * kappa)), noise_term);
}

InnerResult clipped_sgd(const GradOracle& oracle, Vec y0, const InnerSchedule& schedule,
                        Direction direction, RngStream& rng, const Vec* y_star,
                        const InnerObserver& observer) {
  schedule.validate();
  Vec y = std::move(y0);
  const long K = schedule.K;
  for (long k = 0; k < K; ++k) {
    const Vec g = oracle(y, rng);
    if (g.size() != y.size()) throw ConfigError("inner oracle returned a vector of wrong size");
    if (!g.allFinite()) {
      throw NumericalError("non-finite inner gradient at inner step " + std::to_string(k));
    }
    const Vec step = schedule.eta * clip(g, schedule.tau(k));
    if (direction == Direction::maximize) {
      y += step;
    } else {
      y -= step;
    }
    if (observer) observer(k + 1, y);
  }
  InnerResult result;
  if (y_star != nullptr) result.residual_sq = (y - *y_star).squaredNorm();
  result.y_final = std::move(y);
  result.sfo_used = K;
  return result;
}

}  // namespace tailopt
