#include "tailopt/algorithms.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tailopt/errors.hpp"
#include "tailopt/noise.hpp"

namespace tailopt {

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kDivergenceNorm = 1e12;

using GradNormFn = std::function<double(const Vec&)>;
using StepFn = std::function<void(long t, Vec& x, long& sfo)>;
using ResidualFn =
    std::function<std::pair<std::optional<double>, std::optional<double>>(const Vec& x_prev)>;

Vec outer_update(const Vec& x, const Vec& g, const AlgoConfig& cfg, RunTrace& trace) {
  if (!g.allFinite()) throw NumericalError("non-finite outer gradient");
  if (!cfg.normalize_outer) return x - cfg.eta_x * g;
  const double n = g.norm();
  if (n == 0.0) {
    ++trace.zero_steps;
    return x;
  }
  return x - (cfg.eta_x / n) * g;
}

void check_iterate(const Vec& v, const char* name) {
  if (!v.allFinite()) throw NumericalError(std::string("non-finite ") + name);
}

// Shared outer loop: metrics, divergence, reported iterate and SFO totals.
RunTrace drive(const AlgoConfig& cfg, const MetricOptions& metrics, Vec x, const RngStream& rng,
               const GradNormFn& grad_norm, const StepFn& step, const ResidualFn& residuals,
               RunTrace& trace) {
  if (metrics.cadence < 1) throw ConfigError("metric cadence must be >= 1");
  const long planned = cfg.planned_steps();
  const long per_step = cfg.sfo_per_step();
  const bool baseline = is_baseline(cfg.algo);
  const auto start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };

  RngStream report_rng = rng.fork("report");
  const long report_index = cfg.report == ReportMode::uniform_random
                                ? static_cast<long>(report_rng.below(std::uint64_t(planned)))
                                : -1;
  bool report_taken = false;
  if (report_index == 0) {
    trace.x_report = x;
    trace.report_t = 0;
    report_taken = true;
  }

  long sfo = 0;
  long t = 0;
  Vec last_finite = x;
  double best = std::numeric_limits<double>::infinity();
  Vec best_x = x;
  long best_t = 0;

  try {
    trace.initial_grad_norm = grad_norm(x);
    best = trace.initial_grad_norm;
    for (; t < planned; ++t) {
      const Vec x_prev = x;
      step(t, x, sfo);
      const long tt = t + 1;
      if (!x.allFinite()) throw NumericalError("non-finite iterate x");
      if (x.norm() > kDivergenceNorm) throw NumericalError("||x|| exceeded 1e12");
      last_finite = x;
      trace.steps = tt;
      if (tt == report_index) {
        trace.x_report = x;
        trace.report_t = tt;
        report_taken = true;
      }
      if (tt % metrics.cadence == 0 || tt == planned) {
        TraceRow row;
        row.t = tt;
        row.sfo = sfo;
        row.grad_norm = grad_norm(x);
        if (metrics.residuals && residuals) {
          auto [ry, rz] = residuals(x_prev);
          row.res_y = ry;
          row.res_z = rz;
        }
        if (metrics.keep_x) row.x = x;
        row.wall = elapsed();
        if (row.grad_norm < best) {
          best = row.grad_norm;
          best_x = x;
          best_t = tt;
        }
        trace.rows.push_back(std::move(row));
      }
    }
  } catch (const NumericalError& e) {
    const std::string reason = "outer step " + std::to_string(t) + ": " + e.what();
    if (!baseline && metrics.throw_on_failure) throw NumericalError(reason);
    trace.diverged = true;
    trace.numerical_failure = !baseline;
    trace.diverge_reason = reason;
    TraceRow row;
    row.t = t + 1;
    row.sfo = (t + 1) * per_step;
    row.diverged = true;
    row.wall = elapsed();
    trace.rows.push_back(std::move(row));
    sfo = row.sfo;
  }

  trace.sfo_total = sfo;
  trace.x_final = trace.diverged ? last_finite : x;
  switch (cfg.report) {
    case ReportMode::last:
      trace.x_report = trace.x_final;
      trace.report_t = trace.steps;
      break;
    case ReportMode::uniform_random:
      if (!report_taken) {
        trace.x_report = last_finite;
        trace.report_t = trace.steps;
      }
      break;
    case ReportMode::best_metric:
      trace.x_report = best_x;
      trace.report_t = best_t;
      break;
  }
  if (!trace.diverged && sfo != cfg.planned_sfo()) {
    throw std::logic_error("SFO count " + std::to_string(sfo) + " differs from planned " +
                           std::to_string(cfg.planned_sfo()));
  }
  return std::move(trace);
}

void check_dims(int expected_x, int expected_y, const Vec& x0, const Vec& y0) {
  if (x0.size() != expected_x) throw ConfigError("x0 has wrong dimension");
  if (y0.size() != expected_y) throw ConfigError("y0 has wrong dimension");
}

GradNormFn minimax_grad_norm(const MinimaxProblem& prob) {
  return [&prob](const Vec& x) { return phi_and_grad(prob, x).second.norm(); };
}

}  // namespace

std::string_view to_string(Algo algo) {
  switch (algo) {
    case Algo::n2sba: return "n2sba";
    case Algo::n2sgda: return "n2sgda";
    case Algo::sgda: return "sgda";
    case Algo::sgdmax: return "sgdmax";
    case Algo::clipped_sgdmax: return "clipped_sgdmax";
  }
  return "unknown";
}

Algo algo_from_string(std::string_view name) {
  for (Algo a : {Algo::n2sba, Algo::n2sgda, Algo::sgda, Algo::sgdmax, Algo::clipped_sgdmax}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(ReportMode mode) {
  switch (mode) {
    case ReportMode::last: return "last";
    case ReportMode::uniform_random: return "uniform_random";
    case ReportMode::best_metric: return "best_metric";
  }
  return "unknown";
}

ReportMode report_mode_from_string(std::string_view name) {
  for (ReportMode m : {ReportMode::last, ReportMode::uniform_random, ReportMode::best_metric}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown report mode '" + std::string(name) + "'");
}

bool is_baseline(Algo algo) {
  return algo == Algo::sgda || algo == Algo::sgdmax || algo == Algo::clipped_sgdmax;
}

bool is_bilevel(Algo algo) { return algo == Algo::n2sba; }

void AlgoConfig::validate() const {
  if (!(eta_x > 0.0) || !std::isfinite(eta_x)) throw ConfigError("eta_x must be positive");
  if (T < 1) throw ConfigError("T must be >= 1");
  if (K < 1) throw ConfigError("K must be >= 1");
  if (M < 1) throw ConfigError("M must be >= 1");
  if (K > 1'000'000'000'000L || M > 1'000'000'000'000L) {
    throw ConfigError("K and M must be <= 1e12");
  }
  inner_y.validate();
  if (algo != Algo::sgda && inner_y.K != K) throw ConfigError("inner_y length must equal K");
  if (algo == Algo::n2sba) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
    if (!inner_z) throw ConfigError("n2sba needs an inner_z schedule");
    inner_z->validate();
    if (inner_z->K != K) throw ConfigError("inner_z length must equal K");
  }
  if (!(tau_x > 0.0)) throw ConfigError("tau_x must be positive");
  if (sfo_budget && *sfo_budget < sfo_per_step()) {
    throw ConfigError("sfo_budget is smaller than one outer step");
  }
  if (double(planned_steps()) * double(sfo_per_step()) > 9e18) {
    throw ConfigError("planned SFO count does not fit in 64 bits");
  }
}

long AlgoConfig::sfo_per_step() const {
  switch (algo) {
    case Algo::n2sba: return 3 * K + 3 * M;
    case Algo::n2sgda: return K + M;
    case Algo::sgda: return 2;
    case Algo::sgdmax:
    case Algo::clipped_sgdmax: return K + 1;
  }
  return 0;
}

long AlgoConfig::planned_steps() const {
  if (!sfo_budget) return T;
  return std::min(T, *sfo_budget / sfo_per_step());
}

RunTrace run_n2sba(const BilevelProblem& prob, const AlgoConfig& cfg, const Vec& x0,
                   const Vec& y0, const MetricOptions& metrics, const RngStream& rng,
                   const RunHooks& hooks) {
  if (cfg.algo != Algo::n2sba) throw ConfigError("run_n2sba needs algo = n2sba");
  cfg.validate();
  check_dims(prob.dim_x(), prob.dim_y(), x0, y0);
  const BilevelConstants& c = prob.constants();
  if (c.L_f && c.mu && cfg.lambda < 2.0 * *c.L_f / *c.mu) {
    throw ConfigError("lambda must be >= 2 L_f / mu = " + std::to_string(2.0 * *c.L_f / *c.mu));
  }

  const double lam = cfg.lambda;
  RngStream s_inner_z = rng.fork("inner_z");
  RngStream s_inner_f = rng.fork("inner_f");
  RngStream s_inner_g = rng.fork("inner_g");
  RngStream s_outer_f = rng.fork("outer_f");
  RngStream s_outer_g = rng.fork("outer_g");
  Vec y = y0;
  Vec z = y0;
  RunTrace trace;

  const StepFn step = [&](long t, Vec& x, long& sfo) {
    const Vec y_start = y;
    const Vec z_start = z;
    const GradOracle z_oracle = [&](const Vec& v, RngStream& r) {
      return Vec(lam * prob.noisy_grad_g_y(x, v, r));
    };
    z = clipped_sgd(z_oracle, std::move(z), *cfg.inner_z, Direction::minimize, s_inner_z).y_final;
    const GradOracle y_oracle = [&](const Vec& v, RngStream& r) {
      return Vec(prob.noisy_grad_f_y(x, v, r) + lam * prob.noisy_grad_g_y(x, v, s_inner_g));
    };
    y = clipped_sgd(y_oracle, std::move(y), cfg.inner_y, Direction::minimize, s_inner_f).y_final;
    sfo += 3 * cfg.K;
    check_iterate(z, "inner iterate z");
    check_iterate(y, "inner iterate y");
    if (hooks.on_inner_done) hooks.on_inner_done(t, y_start, y, &z_start, &z);

    const Vec& zz = hooks.force_y_equals_z ? y : z;
    Vec g = Vec::Zero(x.size());
    for (long i = 0; i < cfg.M; ++i) {
      g += prob.noisy_grad_f_x(x, y, s_outer_f);
      RngStream zeta = s_outer_g;
      const Vec gy = prob.noisy_grad_g_x(x, y, s_outer_g);
      const Vec gz = prob.noisy_grad_g_x(x, zz, zeta);
      g += lam * (gy - gz);
    }
    g /= double(cfg.M);
    sfo += 3 * cfg.M;
    Vec next = outer_update(x, g, cfg, trace);
    if (hooks.on_outer) hooks.on_outer(t, x, g, next);
    x = std::move(next);
  };

  const ResidualFn residuals = [&](const Vec& x_prev) {
    return std::make_pair(std::optional<double>((y - prob.y_star_lambda(x_prev, lam)).norm()),
                          std::optional<double>((z - prob.y_star(x_prev)).norm()));
  };
  const GradNormFn grad_norm = [&prob](const Vec& x) { return hypergradient(prob, x).norm(); };
  return drive(cfg, metrics, x0, rng, grad_norm, step, residuals, trace);
}

RunTrace run_n2sgda(const MinimaxProblem& prob, const AlgoConfig& cfg, const Vec& x0,
                    const Vec& y0, const MetricOptions& metrics, const RngStream& rng,
                    const RunHooks& hooks) {
  if (cfg.algo != Algo::n2sgda) throw ConfigError("run_n2sgda needs algo = n2sgda");
  cfg.validate();
  check_dims(prob.dim_x(), prob.dim_y(), x0, y0);

  RngStream s_inner = rng.fork("inner");
  RngStream s_outer_f = rng.fork("outer_f");
  Vec y = y0;
  RunTrace trace;

  const StepFn step = [&](long t, Vec& x, long& sfo) {
    const Vec y_start = y;
    const GradOracle oracle = [&](const Vec& v, RngStream& r) {
      return prob.noisy_grad_f_y(x, v, r);
    };
    y = clipped_sgd(oracle, std::move(y), cfg.inner_y, Direction::maximize, s_inner).y_final;
    sfo += cfg.K;
    check_iterate(y, "inner iterate y");
    if (hooks.on_inner_done) hooks.on_inner_done(t, y_start, y, nullptr, nullptr);

    Vec g = Vec::Zero(x.size());
    for (long i = 0; i < cfg.M; ++i) g += prob.noisy_grad_f_x(x, y, s_outer_f);
    g /= double(cfg.M);
    sfo += cfg.M;
    Vec next = outer_update(x, g, cfg, trace);
    if (hooks.on_outer) hooks.on_outer(t, x, g, next);
    x = std::move(next);
  };

  const ResidualFn residuals = [&](const Vec& x_prev) {
    return std::make_pair(std::optional<double>((y - prob.y_star(x_prev)).norm()),
                          std::optional<double>());
  };
  return drive(cfg, metrics, x0, rng, minimax_grad_norm(prob), step, residuals, trace);
}

RunTrace run_baseline(const MinimaxProblem& prob, const AlgoConfig& cfg, const Vec& x0,
                      const Vec& y0, const MetricOptions& metrics, const RngStream& rng,
                      const RunHooks& hooks) {
  if (!is_baseline(cfg.algo)) throw ConfigError("run_baseline needs sgda, sgdmax or clipped_sgdmax");
  cfg.validate();
  check_dims(prob.dim_x(), prob.dim_y(), x0, y0);

  RngStream s_inner = rng.fork("inner");
  RngStream s_outer_f = rng.fork("outer_f");
  Vec y = y0;
  RunTrace trace;
  const InnerSchedule unclipped =
      InnerSchedule::manual(cfg.inner_y.eta, std::numeric_limits<double>::infinity(), cfg.K);

  StepFn step;
  if (cfg.algo == Algo::sgda) {
    step = [&](long t, Vec& x, long& sfo) {
      const Vec y_start = y;
      const Vec gx = prob.noisy_grad_f_x(x, y, s_outer_f);
      const Vec gy = prob.noisy_grad_f_y(x, y, s_inner);
      sfo += 2;
      Vec next = x - cfg.eta_x * gx;
      y += cfg.inner_y.eta * gy;
      check_iterate(y, "iterate y");
      if (hooks.on_inner_done) hooks.on_inner_done(t, y_start, y, nullptr, nullptr);
      if (hooks.on_outer) hooks.on_outer(t, x, gx, next);
      x = std::move(next);
    };
  } else {
    const bool clipped = cfg.algo == Algo::clipped_sgdmax;
    step = [&, clipped](long t, Vec& x, long& sfo) {
      const Vec y_start = y;
      const GradOracle oracle = [&](const Vec& v, RngStream& r) {
        return prob.noisy_grad_f_y(x, v, r);
      };
      y = clipped_sgd(oracle, std::move(y), clipped ? cfg.inner_y : unclipped,
                      Direction::maximize, s_inner)
              .y_final;
      check_iterate(y, "inner iterate y");
      if (hooks.on_inner_done) hooks.on_inner_done(t, y_start, y, nullptr, nullptr);
      Vec gx = prob.noisy_grad_f_x(x, y, s_outer_f);
      sfo += cfg.K + 1;
      if (clipped) gx = clip(gx, cfg.tau_x);
      Vec next = x - cfg.eta_x * gx;
      if (hooks.on_outer) hooks.on_outer(t, x, gx, next);
      x = std::move(next);
    };
  }

  const ResidualFn residuals = [&](const Vec& x_prev) {
    return std::make_pair(std::optional<double>((y - prob.y_star(x_prev)).norm()),
                          std::optional<double>());
  };
  return drive(cfg, metrics, x0, rng, minimax_grad_norm(prob), step, residuals, trace);
}

}  // namespace tailopt
