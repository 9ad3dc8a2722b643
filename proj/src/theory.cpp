#include <cmath>
#include <string>
#include <vector>

#include "tailopt/algorithms.hpp"
#include "tailopt/errors.hpp"

namespace tailopt {

namespace {

long ceil_count(double v, const char* name) {
  if (!std::isfinite(v) || v > 9e18) {
    throw ConfigError(std::string(name) + " = " + std::to_string(v) + " does not fit in a long");
  }
  // Absorb rounding noise such as 100.00000000000001.
  const double nearest = std::round(v);
  const double r = std::abs(v - nearest) <= 1e-9 * std::max(1.0, nearest) ? nearest : std::ceil(v);
  return std::max(1L, static_cast<long>(r));
}

struct Required {
  std::vector<std::string> missing;
  double get(const std::optional<double>& v, const char* name) {
    if (!v || !(*v > 0.0) || !std::isfinite(*v)) {
      missing.emplace_back(name);
      return 1.0;
    }
    return *v;
  }
  void check() const {
    if (missing.empty()) return;
    std::string msg = "missing or non-positive constants:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
};

}  // namespace

Theorem theorem_from_string(std::string_view name) {
  if (name == "thm1") return Theorem::thm1;
  if (name == "thm2") return Theorem::thm2;
  if (name == "thm3") return Theorem::thm3;
  if (name == "thm4") return Theorem::thm4;
  throw ConfigError("unknown theorem '" + std::string(name) + "'");
}

AlgoConfig config_from_theorem(const TheoryConstants& c, double epsilon, double p, Theorem which,
                               double delta, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(p > 1.0 && p <= 2.0)) throw ConfigError("p must lie in (1, 2]");
  const bool high_prob = which == Theorem::thm2 || which == Theorem::thm4;
  if (high_prob && !(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");

  AlgoConfig cfg;
  cfg.seed = seed;
  cfg.report = ReportMode::uniform_random;
  const double q = p / (p - 1.0);
  const double eps = epsilon;
  const ScheduleMode mode = high_prob ? ScheduleMode::high_probability
                                      : ScheduleMode::in_expectation;

  Required req;
  const double ell = req.get(c.ell, "ell");
  const double mu = req.get(c.mu, "mu");
  const double Delta = req.get(c.Delta, "Delta");
  const double R0 = req.get(c.R0, "R0");

  if (which == Theorem::thm1 || which == Theorem::thm2) {
    const double L_f = req.get(c.L_f, "L_f");
    const double L_g = req.get(c.L_g, "L_g");
    const double sigma_f = req.get(c.sigma_f, "sigma_f");
    const double sigma_g = req.get(c.sigma_g, "sigma_g");
    req.check();
    const double kappa = ell / mu;
    const double k3 = std::pow(kappa, 3.0);
    const double sigma = std::max(sigma_f, sigma_g);

    cfg.algo = Algo::n2sba;
    cfg.lambda = std::max({kappa / R0, ell * kappa * kappa / Delta, ell * k3 / eps});
    cfg.T = ceil_count(Delta * ell * k3 / (eps * eps), "T");
    cfg.M = ceil_count(std::pow(ell * k3 * sigma / (eps * eps), q), "M");
    cfg.K = ceil_count(std::pow(ell * k3 * kappa * sigma / (eps * eps), q), "K");
    cfg.eta_x = which == Theorem::thm1 ? eps / (ell * k3)
                                       : std::sqrt(Delta / (ell * k3 * double(cfg.T)));

    const double e4 = 2.0 * std::pow(eps, 4) / (std::pow(ell, 4) * std::pow(kappa, 6));
    const double e2 = eps * eps / (ell * ell * std::pow(kappa, 4));
    const double R_y = c.R_y ? *c.R_y : std::sqrt(4.0 * R0 * R0 + e4 + 32.0 * e2);
    const double R_z = c.R_z ? *c.R_z : std::sqrt(R0 * R0 + e4 + 2.0 * e2);
    const double delta_hat = delta / (4.0 * double(cfg.T));
    const double lam = cfg.lambda;
    cfg.inner_z = theory_schedule(lam * mu, lam * L_g, lam * sigma_g, p, cfg.K, R_z, mode,
                                  delta_hat);
    cfg.inner_y = theory_schedule(lam * mu / 2.0, L_f + lam * L_g, sigma_f + lam * sigma_g, p,
                                  cfg.K, R_y, mode, delta_hat);
    return cfg;
  }

  const double sigma = req.get(c.sigma, "sigma");
  req.check();
  const double kappa = ell / mu;
  cfg.algo = Algo::n2sgda;
  cfg.T = ceil_count(Delta * kappa * ell / (eps * eps), "T");
  cfg.M = ceil_count(std::pow(sigma / eps, q), "M");
  cfg.K = ceil_count(
      kappa + std::pow(ell * ell * sigma * sigma / (mu * mu * eps * eps), p / (2.0 * (p - 1.0))),
      "K");
  cfg.eta_x = which == Theorem::thm3 ? eps / (kappa * ell)
                                     : std::sqrt(Delta / ((kappa + 1.0) * ell * double(cfg.T)));
  const double R_y = c.R_y ? *c.R_y : R0 + 4.0 * eps / ell;
  const double delta_hat = delta / (2.0 * double(cfg.T));
  cfg.inner_y = theory_schedule(mu, ell, sigma, p, cfg.K, R_y, mode, delta_hat);
  return cfg;
}

}  // namespace tailopt
