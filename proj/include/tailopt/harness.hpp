#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tailopt/algorithms.hpp"
#include "tailopt/noise.hpp"
#include "tailopt/problems.hpp"

namespace tailopt {

/// Parsed experiment file. See docs/config_schema.md for the format.
struct ExperimentSpec {
  Json problem;  // generator parameters, or {"instance": {...}}
  NoiseModel noise_f;
  NoiseModel noise_g;
  int n_runs = 20;
  std::uint64_t seed = 0;
  std::optional<long> cadence;     // default: 1 for T <= 1e4, else ceil(T / 1e4)
  std::optional<long> sfo_budget;  // shared by every arm unless an arm sets its own
  int workers = 1;
  bool residuals = true;
  double x0_scale = 1.0;           // x0 ~ N(0, x0_scale^2 I); y0 = 0
  std::vector<Json> algorithms;    // raw entries, grids not yet expanded
};

ExperimentSpec parse_experiment_spec(const Json& j);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// One concrete configuration obtained by expanding an algorithm entry.
struct GridPoint {
  std::string label;  // entry label, defaults to the algorithm name
  int grid_id = 0;    // index within the entry's Cartesian product
  AlgoConfig cfg;
  Json params;        // the expanded scalar values
};

/// Cartesian product of every list-valued field of each entry, last listed
/// field varying fastest. Each point is validated.
std::vector<GridPoint> expand_grid(const ExperimentSpec& spec);

/// The problem instance with the experiment's noise attached. Exactly one pointer
/// is set.
struct ProblemInstance {
  std::shared_ptr<BilevelProblem> bilevel;
  std::shared_ptr<MinimaxProblem> minimax;
  int dim_x() const;
  int dim_y() const;
  Json to_json() const;
};

ProblemInstance build_problem(const ExperimentSpec& spec);
NoiseModel noise_from_json(const Json& j);
Json noise_to_json(const NoiseModel& m);

/// Run r of grid point g draws from RngStream(seed, hash_combine(g, r)); the
/// initial point depends on r only, so every arm of run r starts at the same
/// x0.
RngStream run_stream(std::uint64_t seed, int grid_id, int run);
Vec initial_x(std::uint64_t seed, int run, int dim, double scale);

RunTrace execute_run(const ProblemInstance& problem, const GridPoint& point, int run,
                     const ExperimentSpec& spec);

struct GridResult {
  GridPoint point;
  std::vector<RunTrace> runs;
  double score = 0.0;  // mean final grad norm; +inf if any run diverged
  int divergence_count = 0;
};

struct ExperimentResult {
  Json instance;
  std::vector<GridResult> grid;
  bool numerical_failure = false;  // some non-baseline run failed
  std::vector<std::filesystem::path> files;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // no files when empty
  int workers = 0;                               // 0: use the experiment's value
};

/// Validates everything, then executes |grid| * n_runs runs on a worker pool.
/// With an output directory it writes instance.json, raw/<label>_g<id>_r<run>.csv
/// and aggregate/<label>_g<id>.csv, each atomically.
ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& opts = {});

struct AggregateRow {
  std::string algo;
  int grid_id = 0;
  long t = 0;
  long sfo_calls = 0;
  std::optional<double> mean;
  std::optional<double> median;
  std::optional<double> std;  // population standard deviation
  int divergence_count = 0;
};

/// Statistics per recorded t over the runs that have not diverged by t.
std::vector<AggregateRow> aggregate(const std::string& label, int grid_id,
                                    const std::vector<RunTrace>& runs);

inline constexpr const char* kRawHeader =
    "run_id,algo,grid_id,t,sfo_calls,grad_norm_true,inner_residual_y,inner_residual_z,diverged,"
    "wall_time_s";
inline constexpr const char* kAggregateHeader =
    "algo,grid_id,t,sfo_calls,grad_norm_true_mean,grad_norm_true_median,grad_norm_true_std,"
    "divergence_count";

std::string raw_csv(const std::string& label, int grid_id, int run, const RunTrace& trace);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

/// Writes to a temporary sibling, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

struct GridChoice {
  std::string label;
  std::optional<int> grid_id;  // empty: no stable configuration
  double score = 0.0;
  Json params;
};

/// Best grid point per label: lowest score, first listed on ties.
std::vector<GridChoice> select_best(const ExperimentResult& result);

/// Runs the quick invariant suite; writes one line per check to `log`.
/// Returns the number of failed checks.
int run_selftest(std::ostream& log);

}  // namespace tailopt
