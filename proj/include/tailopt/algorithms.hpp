#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tailopt/clipsgd.hpp"
#include "tailopt/linalg.hpp"
#include "tailopt/problems.hpp"
#include "tailopt/rng.hpp"

namespace tailopt {

enum class Algo { n2sba, n2sgda, sgda, sgdmax, clipped_sgdmax };
enum class ReportMode { last, uniform_random, best_metric };

std::string_view to_string(Algo algo);
Algo algo_from_string(std::string_view name);
std::string_view to_string(ReportMode mode);
ReportMode report_mode_from_string(std::string_view name);

bool is_baseline(Algo algo);
bool is_bilevel(Algo algo);

/// Parameters of one optimizer run.
///
/// `inner_y` is the y-loop of every method: the penalty loop of n2sba, the
/// ascent loop of n2sgda, sgdmax and clipped_sgdmax, and for sgda only its
/// stepsize is used. `inner_z` is the lower-level loop of n2sba. Schedule
/// lengths must equal K.
struct AlgoConfig {
  Algo algo = Algo::n2sgda;
  double eta_x = 0.0;
  long T = 0;
  long K = 1;
  long M = 1;
  double lambda = 0.0;
  InnerSchedule inner_y;
  std::optional<InnerSchedule> inner_z;
  double tau_x = std::numeric_limits<double>::infinity();  // clipped_sgdmax outer radius
  bool normalize_outer = true;  // n2sba / n2sgda; false gives the unnormalized ablation
  std::uint64_t seed = 0;
  ReportMode report = ReportMode::uniform_random;
  std::optional<long> sfo_budget;  // stop before the next step would exceed it

  /// Throws ConfigError on inconsistent or non-positive parameters.
  void validate() const;
  /// n2sba 3K + 3M, n2sgda K + M, sgda 2, sgdmax and clipped_sgdmax K + 1.
  long sfo_per_step() const;
  /// T, or fewer steps when the SFO budget binds.
  long planned_steps() const;
  long planned_sfo() const { return planned_steps() * sfo_per_step(); }
};

struct MetricOptions {
  long cadence = 1;        // record every cadence-th outer step and the last one
  bool residuals = true;   // inner residuals against exact y*, y*_lambda
  bool keep_x = false;     // store x_t in each recorded row
  bool throw_on_failure = true;  // n2sba / n2sgda: NumericalError instead of a flagged trace
};

struct TraceRow {
  long t = 0;
  long sfo = 0;  // cumulative after step t
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> res_y;
  std::optional<double> res_z;
  double wall = 0.0;
  bool diverged = false;
  std::optional<Vec> x;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  double initial_grad_norm = 0.0;
  Vec x_final;
  Vec x_report;
  long report_t = 0;
  bool diverged = false;
  bool numerical_failure = false;  // a non-baseline arm hit a numerical error
  std::string diverge_reason;
  long zero_steps = 0;  // outer steps skipped because g = 0
  long steps = 0;
  long sfo_total = 0;
};

struct RunHooks {
  /// After the inner loops of outer step t (0-based): start and end of y, and
  /// of z for n2sba (null otherwise).
  std::function<void(long t, const Vec& y0, const Vec& yK, const Vec* z0, const Vec* zK)>
      on_inner_done;
  /// After every outer update.
  std::function<void(long t, const Vec& x, const Vec& g, const Vec& x_next)> on_outer;
  /// n2sba: use z = y in the outer gradient, so the penalty terms cancel.
  bool force_y_equals_z = false;
};

/// Nested normalized stochastic bilevel approximation. Per outer step t:
///   z <- z - eta_z clip(lambda grad_y G(x, z; zeta), tau_k)             (K steps)
///   y <- y - eta_y clip(grad_y F(x, y; xi') + lambda grad_y G(x, y; zeta'), tau'_k)
///   g = mean_i [grad_x F(x, y; xi_i) + lambda (grad_x G(x, y; zeta_i) - grad_x G(x, z; zeta_i))]
///   x <- x - eta_x g / ||g||
/// with y and z warm-started across steps and zeta_i shared by both G terms.
RunTrace run_n2sba(const BilevelProblem& prob, const AlgoConfig& cfg, const Vec& x0,
                   const Vec& y0, const MetricOptions& metrics, const RngStream& rng,
                   const RunHooks& hooks = {});

/// Nested normalized stochastic gradient descent ascent: K clipped ascent
/// steps on y, then a normalized descent step on the M-sample x-gradient.
RunTrace run_n2sgda(const MinimaxProblem& prob, const AlgoConfig& cfg, const Vec& x0,
                    const Vec& y0, const MetricOptions& metrics, const RngStream& rng,
                    const RunHooks& hooks = {});

/// sgda, sgdmax or clipped_sgdmax. Divergence is flagged in the trace and the
/// run stops; it never throws for numerical reasons.
RunTrace run_baseline(const MinimaxProblem& prob, const AlgoConfig& cfg, const Vec& x0,
                      const Vec& y0, const MetricOptions& metrics, const RngStream& rng,
                      const RunHooks& hooks = {});

// ---------------------------------------------------------------------------
// Theorem-driven configurations
// ---------------------------------------------------------------------------

enum class Theorem { thm1, thm2, thm3, thm4 };
Theorem theorem_from_string(std::string_view name);

/// Problem constants used by the schedules. thm1/thm2 need ell, mu, L_f, L_g,
/// sigma_f, sigma_g, Delta and R0; thm3/thm4 need ell, mu, sigma, Delta and R0.
/// R_y and R_z override the theorem's inner radii.
struct TheoryConstants {
  std::optional<double> ell;
  std::optional<double> mu;
  std::optional<double> sigma;
  std::optional<double> sigma_f;
  std::optional<double> sigma_g;
  std::optional<double> L_f;
  std::optional<double> L_g;
  std::optional<double> Delta;
  std::optional<double> R0;
  std::optional<double> R_y;
  std::optional<double> R_z;
};

/// Parameter schedule of the given theorem with all hidden constants equal
/// to 1. Counts are rounded up. Throws ConfigError naming every missing or
/// non-positive constant, and when a count does not fit in a long.
AlgoConfig config_from_theorem(const TheoryConstants& c, double epsilon, double p, Theorem which,
                               double delta = 0.1, std::uint64_t seed = 0);

}  // namespace tailopt
