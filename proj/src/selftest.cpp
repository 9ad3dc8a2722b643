#include <cmath>
#include <functional>
#include <ostream>
#include <string>

#include "tailopt/clipsgd.hpp"
#include "tailopt/errors.hpp"
#include "tailopt/harness.hpp"

namespace tailopt {

namespace {

struct Check {
  const char* name;
  std::function<std::string()> body;  // empty string on success
};

std::string clip_properties() {
  RngStream rng(1, 0);
  for (int i = 0; i < 2000; ++i) {
    Vec v(4);
    for (int j = 0; j < 4; ++j) v[j] = 10.0 * rng.normal();
    const double tau = 20.0 * rng.uniform();
    const Vec c = clip(v, tau);
    if (c.norm() > std::min(v.norm(), tau) * (1.0 + 1e-12)) return "clipped norm too large";
    if (std::abs(c.dot(v) - c.norm() * v.norm()) > 1e-9 * v.squaredNorm()) {
      return "direction not preserved";
    }
  }
  if (clip(Vec::Zero(3), 5.0).norm() != 0.0) return "clip(0) != 0";
  return {};
}

std::string rng_reproducible() {
  RngStream a(7, 3);
  RngStream b(7, 3);
  for (int i = 0; i < 1000; ++i) {
    if (a.next_u64() != b.next_u64()) return "identical streams diverged";
  }
  RngStream c(7, 4);
  if (RngStream(7, 3).next_u64() == c.next_u64()) return "distinct streams collided";
  return {};
}

std::string pareto_mean() {
  const NoiseModel m = NoiseModel::make(NoiseKind::shifted_pareto, 2.5, 1.0, 2.0);
  RngStream rng(11, 0);
  const long n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (long i = 0; i < n; ++i) {
    const double v = sample(m, 1, rng)[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  if (std::abs(mean) > 4.0 * se) return "sample mean " + std::to_string(mean);
  return {};
}

std::string game_gradients() {
  const auto game = make_two_player_game(5);
  RngStream rng(5, 1);
  Vec x(30);
  Vec y(30);
  for (int i = 0; i < 30; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
  }
  const double h = 1e-6 * (1.0 + x.norm());
  const BlockGrad g = game->grad_f(x, y);
  for (int i = 0; i < 30; ++i) {
    Vec e = Vec::Zero(30);
    e[i] = h;
    const double fd = (game->f(x + e, y) - game->f(x - e, y)) / (2.0 * h);
    if (std::abs(fd - g.x[i]) > 1e-5 * (1.0 + std::abs(g.x[i]))) return "x-gradient mismatch";
  }
  if (game->grad_f_y(x, game->y_star(x)).norm() > 1e-10) return "y* is not stationary";
  return {};
}

std::string hypergradient_quadratic() {
  const auto q = make_quadratic_bilevel(3, 5, 5);
  RngStream rng(3, 2);
  Vec x(5);
  for (int i = 0; i < 5; ++i) x[i] = rng.normal();
  const double err = (hypergradient(*q, x) - q->grad_phi(x)).norm();
  if (err > 1e-10 * (1.0 + q->grad_phi(x).norm())) return "implicit and direct forms differ";
  return {};
}

std::string bk_residual() {
  for (double c : {1.0, 10.0, 1e3, 1e6, 1e12}) {
    const double B = solve_bk(c);
    const double lb = std::log(B);
    if (std::abs(B - std::max(2.0, c / (lb * lb))) > 1e-9 * B) return "residual at c=" + std::to_string(c);
  }
  return {};
}

std::string run_accounting() {
  ExperimentSpec spec;
  spec.problem = Json{{"kind", "two_player_game"}, {"seed", 1}, {"dim", 6}};
  spec.noise_f = NoiseModel::make(NoiseKind::shifted_pareto, 1.5, 1.0, 1.4);
  spec.n_runs = 2;
  spec.algorithms = {
      Json{{"algo", "n2sgda"}, {"eta_x", 0.01}, {"T", 20}, {"K", 3}, {"M", 2}, {"eta_y", 0.05}, {"tau_y", 5.0}},
      Json{{"algo", "sgda"}, {"eta_x", 0.001}, {"T", 20}, {"eta_y", 0.01}}};
  const ExperimentResult a = run_experiment(spec);
  const ExperimentResult b = run_experiment(spec);
  for (std::size_t g = 0; g < a.grid.size(); ++g) {
    const AlgoConfig& cfg = a.grid[g].point.cfg;
    for (std::size_t r = 0; r < a.grid[g].runs.size(); ++r) {
      const RunTrace& ta = a.grid[g].runs[r];
      const RunTrace& tb = b.grid[g].runs[r];
      if (!ta.diverged && ta.sfo_total != cfg.planned_sfo()) return "SFO total differs from budget";
      if (ta.x_final != tb.x_final) return "repeated run is not identical";
    }
  }
  return {};
}

}  // namespace

int run_selftest(std::ostream& log) {
  const Check checks[] = {
      {"clip_properties", clip_properties},
      {"rng_reproducible", rng_reproducible},
      {"pareto_zero_mean", pareto_mean},
      {"game_gradients", game_gradients},
      {"hypergradient_quadratic", hypergradient_quadratic},
      {"bk_fixed_point", bk_residual},
      {"run_determinism_and_sfo", run_accounting},
  };
  int failed = 0;
  for (const Check& c : checks) {
    std::string msg;
    try {
      msg = c.body();
    } catch (const std::exception& e) {
      msg = std::string("exception: ") + e.what();
    }
    if (msg.empty()) {
      log << "PASS " << c.name << '\n';
    } else {
      log << "FAIL " << c.name << ": " << msg << '\n';
      ++failed;
    }
  }
  return failed;
}

}  // namespace tailopt
