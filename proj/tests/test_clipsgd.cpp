#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include "oracles.hpp"
#include "tailopt/clipsgd.hpp"
#include "tailopt/errors.hpp"
#include "tailopt/noise.hpp"

using namespace tailopt;

namespace {

double bk_residual(double B, double c) {
  const double l = std::log(B);
  return B - std::max(2.0, c / (l * l));
}

// Quadratic 0.5 mu ||y - y*||^2 with additive noise.
GradOracle quad_oracle(double mu, const Vec& ystar, const NoiseModel& noise) {
  return [=](const Vec& y, RngStream& r) -> Vec {
    Vec g = mu * (y - ystar);
    if (!noise.is_zero()) g += sample(noise, int(y.size()), r);
    return g;
  };
}

}  // namespace

TEST_CASE("solve_bk: lower branch example located by a grid scan") {
  const double B = solve_bk(1.0);
  // Dense scan of |B - max{2, 1/(ln B)^2}| over [2, 3].
  double best = 2.0;
  double best_res = std::abs(bk_residual(2.0, 1.0));
  for (int i = 1; i <= 1000000; ++i) {
    const double b = 2.0 + i * 1e-6;
    const double r = std::abs(bk_residual(b, 1.0));
    if (r < best_res) {
      best_res = r;
      best = b;
    }
  }
  CHECK(B == doctest::Approx(best).epsilon(2e-6));
  CHECK(std::abs(bk_residual(B, 1.0)) <= 1e-9 * B);
}

TEST_CASE("solve_bk: large c against a bisection oracle") {
  const double c = 1e6;
  const double B = solve_bk(c);
  const double ref = oracle::bisect([&](double b) { const double l = std::log(b); return b * l * l - c; }, 2.0, 1e6);
  const double l = std::log(B);
  CHECK(std::abs(B * l * l - c) <= 1e-3);
  CHECK(B == doctest::Approx(ref).epsilon(1e-10));
}

TEST_CASE("solve_bk: boundary of the max and residual over many scales") {
  const double ln2 = std::log(2.0);
  CHECK(solve_bk(2.0 * ln2 * ln2) == 2.0);
  CHECK(solve_bk(0.1) == 2.0);
  for (double c = 1.0; c < 1e30; c *= 7.3) {
    const double B = solve_bk(c);
    CHECK(B >= 2.0);
    CHECK(std::abs(bk_residual(B, c)) <= 1e-9 * B);
  }
  CHECK_THROWS_AS(solve_bk(0.0), ConfigError);
  CHECK_THROWS_AS(solve_bk(-1.0), ConfigError);
}

TEST_CASE("theory_schedule: independent evaluation of the stepsize and radii") {
  const double mu = 1.0, ell = 10.0, sigma = 1.0, p = 2.0, R = 1.0;
  const long K = 10000;
  // B ln(B)^2 = mu^2 K R^2 / (5400 sigma^2) for p = 2.
  const double c = mu * mu * double(K) * R * R / (5400.0 * sigma * sigma);
  const double B = oracle::bisect([&](double b) { const double l = std::log(b); return b * l * l - c; }, 2.0, 100.0);
  const double eta = std::min(1.0 / (400.0 * ell), std::log(B) / (mu * (K + 1.0)));
  const InnerSchedule s = theory_schedule(mu, ell, sigma, p, K, R);
  CHECK(theory_bk(mu, sigma, p, K, R) == doctest::Approx(B).epsilon(1e-10));
  CHECK(s.eta == doctest::Approx(eta).epsilon(1e-10));
  CHECK(s.K == K);
  CHECK(s.provenance == Provenance::theory);
  for (long k : {0L, 1L, 100L, 5000L, 9999L}) {
    const double tau = std::exp(-eta * mu * (1.0 + k / 2.0)) * R / (120.0 * eta);
    CHECK(s.tau(k) == doctest::Approx(tau).epsilon(1e-9));
  }
}

TEST_CASE("theory_schedule: high-probability mode divides by the log factor") {
  const double mu = 2.0, ell = 5.0, sigma = 0.5, p = 1.5, R = 3.0, delta = 0.05;
  const long K = 2000;
  const double L = std::log(4.0 * (K + 1.0) / delta);
  const double expo = 2.0 * (p - 1.0) / p;
  const double c = mu * mu * std::pow(double(K), expo) * R * R /
                   (std::pow(5400.0, 2.0 / p) * sigma * sigma * std::pow(L, expo));
  const double B = std::max(2.0, oracle::bisect([&](double b) { const double l = std::log(b); return b * l * l - c; }, 2.0, 1e9));
  const double eta = std::min(1.0 / (400.0 * ell * L), std::log(B) / (mu * (K + 1.0)));
  const InnerSchedule s = theory_schedule(mu, ell, sigma, p, K, R, ScheduleMode::high_probability, delta);
  CHECK(s.eta == doctest::Approx(eta).epsilon(1e-10));
  CHECK(s.tau(0) == doctest::Approx(std::exp(-eta * mu) * R / (120.0 * eta * L)).epsilon(1e-10));
  CHECK(s.mode == ScheduleMode::high_probability);
}

TEST_CASE("theory_schedule: tiny noise saturates the smoothness branch") {
  const InnerSchedule s = theory_schedule(1.0, 10.0, 1e-12, 2.0, 1000, 1.0);
  CHECK(s.eta == 1.0 / 4000.0);
  CHECK(theory_bk(1.0, 1e-12, 2.0, 1000, 1.0) > 1e10);
}

TEST_CASE("theory_schedule: radii strictly decrease") {
  RngStream r(4, 0);
  for (int i = 0; i < 200; ++i) {
    const double mu = std::pow(10.0, 2.0 * r.uniform() - 1.0);
    const double ell = mu * (1.0 + 100.0 * r.uniform());
    const double sigma = std::pow(10.0, 2.0 * r.uniform() - 1.0);
    const double p = 1.05 + 0.95 * r.uniform();
    const long K = 1 + long(r.below(5000));
    const InnerSchedule s = theory_schedule(mu, ell, sigma, p, K, 1.0 + r.uniform());
    double prev = std::numeric_limits<double>::infinity();
    for (long k = 0; k < std::min(K, 500L); ++k) {
      CHECK(s.tau(k) > 0.0);
      CHECK(s.tau(k) < prev);
      prev = s.tau(k);
    }
  }
}

TEST_CASE("theory_schedule: invalid inputs") {
  CHECK_THROWS_AS(theory_schedule(0.0, 1.0, 1.0, 2.0, 10, 1.0), ConfigError);
  CHECK_THROWS_AS(theory_schedule(1.0, 1.0, 0.0, 2.0, 10, 1.0), ConfigError);
  CHECK_THROWS_AS(theory_schedule(1.0, 1.0, 1.0, 1.0, 10, 1.0), ConfigError);
  CHECK_THROWS_AS(theory_schedule(1.0, 1.0, 1.0, 2.0, 0, 1.0), ConfigError);
  CHECK_THROWS_AS(theory_schedule(1.0, 1.0, 1.0, 2.0, 10, 1.0, ScheduleMode::high_probability, 1.5),
                  ConfigError);
}

TEST_CASE("expected_residual_bound: literal evaluation") {
  const double mu = 1.0, ell = 10.0, sigma = 2.0, p = 1.4, R = 5.0;
  const long K = 10000;
  const double B = theory_bk(mu, sigma, p, K, R);
  const double lb = std::log(B);
  const double noise = std::pow(5400.0, 2.0 / p) * sigma * sigma * lb * lb /
                       (mu * mu * std::pow(double(K), 2.0 * (p - 1.0) / p) * R * R);
  const double expect = 2.0 * R * R * std::max(std::exp(-double(K) / 4000.0), noise);
  CHECK(expected_residual_bound(mu, ell, sigma, p, K, R) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("manual schedule: constant radius and validation") {
  const InnerSchedule s = InnerSchedule::manual(0.1, 3.0, 5);
  CHECK(s.taus() == std::vector<double>(5, 3.0));
  CHECK(s.provenance == Provenance::manual);
  CHECK(InnerSchedule::manual(0.1, std::numeric_limits<double>::infinity(), 2).tau(1) ==
        std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(InnerSchedule::manual(0.0, 1.0, 5), ConfigError);
  CHECK_THROWS_AS(InnerSchedule::manual(0.1, 0.0, 5), ConfigError);
  CHECK_THROWS_AS(InnerSchedule::manual(0.1, 1.0, 0), ConfigError);
}

TEST_CASE("clipped_sgd: one exact step on an isotropic quadratic") {
  Vec ystar(3);
  ystar << 1.0, -2.0, 4.0;
  RngStream r(1, 0);
  const auto res = clipped_sgd(quad_oracle(2.0, ystar, NoiseModel::none()), Vec::Zero(3),
                               InnerSchedule::manual(0.5, 1e6, 1), Direction::minimize, r, &ystar);
  CHECK((res.y_final - ystar).norm() <= 1e-15);
  CHECK(*res.residual_sq <= 1e-30);
  CHECK(res.sfo_used == 1);
}

TEST_CASE("clipped_sgd: displacement bound and SFO count under heavy tails") {
  const NoiseModel m = NoiseModel::make(NoiseKind::shifted_pareto, 1.5, 1.0, 1.4);
  const Vec ystar = Vec::Constant(5, 3.0);
  const InnerSchedule s = theory_schedule(1.0, 10.0, m.declared_sigma(5), 1.4, 3000, 10.0);
  long calls = 0;
  const GradOracle base = quad_oracle(1.0, ystar, m);
  const GradOracle counting = [&](const Vec& y, RngStream& rr) { ++calls; return base(y, rr); };
  Vec prev = Vec::Zero(5);
  long steps = 0;
  bool bounded = true;
  RngStream r(2, 0);
  const auto res = clipped_sgd(counting, Vec::Zero(5), s, Direction::minimize, r, nullptr,
                               [&](long k, const Vec& y) {
                                 bounded = bounded && (y - prev).norm() <= s.eta * s.tau(k - 1) * (1.0 + 1e-12);
                                 prev = y;
                                 steps = k;
                               });
  CHECK(bounded);
  CHECK(calls == 3000);
  CHECK(steps == 3000);
  CHECK(res.sfo_used == 3000);
  CHECK(!res.residual_sq.has_value());
}

TEST_CASE("clipped_sgd: noiseless residual never increases for eta <= 1/ell") {
  Mat H = Mat::Zero(4, 4);
  H.diagonal() << 1.0, 3.0, 6.0, 10.0;
  Vec ystar(4);
  ystar << 1.0, 2.0, 3.0, 4.0;
  const GradOracle o = [&](const Vec& y, RngStream&) -> Vec { return H * (y - ystar); };
  double prev = ystar.norm();
  bool monotone = true;
  RngStream r(0, 0);
  clipped_sgd(o, Vec::Zero(4), InnerSchedule::manual(0.1, 2.0, 500), Direction::minimize, r, nullptr,
              [&](long, const Vec& y) {
                const double d = (y - ystar).norm();
                monotone = monotone && d <= prev * (1.0 + 1e-15);
                prev = d;
              });
  CHECK(monotone);
  CHECK(prev < 1e-6);
}

TEST_CASE("clipped_sgd: ascent on f equals descent on -f bit for bit") {
  const NoiseModel m = NoiseModel::make(NoiseKind::shifted_pareto, 1.8, 1.0, 1.5);
  const Vec ystar = Vec::Constant(3, -1.0);
  const GradOracle down = quad_oracle(1.5, ystar, m);
  const GradOracle up = [&](const Vec& y, RngStream& rr) -> Vec { return -down(y, rr); };
  const InnerSchedule s = InnerSchedule::manual(0.05, 1.0, 400);
  RngStream r1(7, 7);
  RngStream r2(7, 7);
  const auto a = clipped_sgd(down, Vec::Ones(3), s, Direction::minimize, r1);
  const auto b = clipped_sgd(up, Vec::Ones(3), s, Direction::maximize, r2);
  CHECK(a.y_final == b.y_final);
  CHECK(r1 == r2);
}

TEST_CASE("clipped_sgd: deterministic given the stream") {
  const NoiseModel m = NoiseModel::make(NoiseKind::student_t, 3.0, 1.0, 1.5);
  const GradOracle o = quad_oracle(1.0, Vec::Zero(4), m);
  RngStream r1(9, 1);
  RngStream r2(9, 1);
  const InnerSchedule s = InnerSchedule::manual(0.1, 5.0, 100);
  CHECK(clipped_sgd(o, Vec::Ones(4), s, Direction::minimize, r1).y_final ==
        clipped_sgd(o, Vec::Ones(4), s, Direction::minimize, r2).y_final);
}

TEST_CASE("clipped_sgd: non-finite oracle output names the step") {
  long calls = 0;
  const GradOracle o = [&](const Vec& y, RngStream&) -> Vec {
    Vec g = y;
    if (++calls == 4) g[0] = std::numeric_limits<double>::quiet_NaN();
    return g;
  };
  RngStream r(0, 0);
  try {
    clipped_sgd(o, Vec::Ones(2), InnerSchedule::manual(0.1, 1.0, 10), Direction::minimize, r);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step 3") != std::string::npos);
  }
}
