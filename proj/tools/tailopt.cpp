// Command-line front end: run, grid, validate, selftest.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tailopt/errors.hpp"
#include "tailopt/harness.hpp"

using namespace tailopt;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNumericalFailure = 2;

struct Common {
  std::string spec_path;
  std::string out;
  int workers = 0;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool with_out) {
  cmd->add_option("spec", c.spec_path, "experiment spec (JSON)")->required();
  if (with_out) cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "worker threads (overrides TAILOPT_WORKERS)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "override the experiment's master seed");
}

ExperimentSpec load(const Common& c) {
  ExperimentSpec spec = load_experiment_spec(c.spec_path);
  if (c.seed) spec.seed = *c.seed;
  if (const char* env = std::getenv("TAILOPT_WORKERS")) {
    try {
      const int w = std::stoi(env);
      if (w < 1) throw std::invalid_argument("non-positive");
      spec.workers = w;
    } catch (const std::exception&) {
      throw ConfigError(std::string("TAILOPT_WORKERS must be a positive integer, got '") + env + "'");
    }
  }
  if (c.workers > 0) spec.workers = c.workers;
  return spec;
}

RunOptions options(const Common& c) {
  RunOptions o;
  if (!c.out.empty()) o.out_dir = c.out;
  return o;
}

void print_scores(const ExperimentResult& res) {
  for (const GridResult& gr : res.grid) {
    std::printf("%-16s grid %-3d score %-12.6g diverged %d/%zu\n", gr.point.label.c_str(),
                gr.point.grid_id, gr.score, gr.divergence_count, gr.runs.size());
  }
}

int cmd_run(const Common& c) {
  const ExperimentSpec spec = load(c);
  const ExperimentResult res = run_experiment(spec, options(c));
  print_scores(res);
  if (!c.out.empty()) std::printf("wrote %zu files to %s\n", res.files.size(), c.out.c_str());
  if (res.numerical_failure) {
    std::fprintf(stderr, "numerical failure in a non-baseline arm\n");
    return kNumericalFailure;
  }
  return kOk;
}

int cmd_grid(const Common& c) {
  const ExperimentSpec spec = load(c);
  const ExperimentResult res = run_experiment(spec, options(c));
  print_scores(res);
  Json best = Json::array();
  bool unstable = false;
  for (const GridChoice& ch : select_best(res)) {
    if (ch.grid_id) {
      std::printf("best %-16s grid %d score %.6g params %s\n", ch.label.c_str(), *ch.grid_id,
                  ch.score, ch.params.dump().c_str());
      best.push_back({{"label", ch.label}, {"grid_id", *ch.grid_id}, {"score", ch.score},
                      {"params", ch.params}});
    } else {
      std::printf("best %-16s no stable configuration\n", ch.label.c_str());
      best.push_back({{"label", ch.label}, {"grid_id", nullptr}, {"result", "no stable configuration"}});
      unstable = true;
    }
  }
  if (!c.out.empty()) write_atomic(std::filesystem::path(c.out) / "grid_best.json", best.dump(2) + "\n");
  return unstable ? kNumericalFailure : kOk;
}

int cmd_validate(const Common& c) {
  const ExperimentSpec spec = load(c);
  const ProblemInstance problem = build_problem(spec);
  const std::vector<GridPoint> points = expand_grid(spec);
  for (const GridPoint& gp : points) {
    const bool bilevel = is_bilevel(gp.cfg.algo);
    if (bilevel != bool(problem.bilevel)) {
      throw ConfigError(gp.label + ": algorithm does not match the problem type");
    }
    std::printf("%-16s grid %-3d steps %-8ld sfo/run %ld\n", gp.label.c_str(), gp.grid_id,
                gp.cfg.planned_steps(), gp.cfg.planned_sfo());
  }
  std::printf("ok: %zu grid points x %d runs\n", points.size(), spec.n_runs);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heavy-tailed stochastic bilevel and minimax optimization experiments"};
  app.require_subcommand(1);

  Common run_opts;
  Common grid_opts;
  Common validate_opts;
  auto* run = app.add_subcommand("run", "execute every grid point of a spec");
  add_common(run, run_opts, true);
  auto* grid = app.add_subcommand("grid", "run a spec and pick the best grid point per arm");
  add_common(grid, grid_opts, true);
  auto* validate = app.add_subcommand("validate", "check a spec without running it");
  add_common(validate, validate_opts, false);
  auto* selftest = app.add_subcommand("selftest", "run the quick invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*grid) return cmd_grid(grid_opts);
    if (*validate) return cmd_validate(validate_opts);
    if (*selftest) return run_selftest(std::cout) == 0 ? kOk : kNumericalFailure;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
  return kOk;
}
