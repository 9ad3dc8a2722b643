#include "tailopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "tailopt/errors.hpp"

namespace tailopt {

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

long default_cadence(long planned) {
  constexpr long kMaxRows = 10000;
  if (planned <= kMaxRows) return 1;
  return (planned + kMaxRows - 1) / kMaxRows;
}

std::string file_stem(const std::string& label, int grid_id) {
  return label + "_g" + std::to_string(grid_id);
}

}  // namespace

RngStream run_stream(std::uint64_t seed, int grid_id, int run) {
  return RngStream(seed, hash_combine(std::uint64_t(grid_id), std::uint64_t(run)));
}

Vec initial_x(std::uint64_t seed, int run, int dim, double scale) {
  RngStream rng = RngStream(seed, hash_string("initial_point")).fork(std::uint64_t(run));
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = scale * rng.normal();
  return x;
}

RunTrace execute_run(const ProblemInstance& problem, const GridPoint& point, int run,
                     const ExperimentSpec& spec) {
  const AlgoConfig& cfg = point.cfg;
  MetricOptions metrics;
  metrics.cadence = spec.cadence ? *spec.cadence : default_cadence(cfg.planned_steps());
  metrics.residuals = spec.residuals;
  metrics.throw_on_failure = false;
  const Vec x0 = initial_x(spec.seed, run, problem.dim_x(), spec.x0_scale);
  const Vec y0 = Vec::Zero(problem.dim_y());
  const RngStream rng = run_stream(spec.seed, point.grid_id, run);
  if (cfg.algo == Algo::n2sba) {
    if (!problem.bilevel) throw ConfigError("n2sba needs a bilevel problem");
    return run_n2sba(*problem.bilevel, cfg, x0, y0, metrics, rng);
  }
  if (!problem.minimax) throw ConfigError(std::string(to_string(cfg.algo)) + " needs a minimax problem");
  if (cfg.algo == Algo::n2sgda) return run_n2sgda(*problem.minimax, cfg, x0, y0, metrics, rng);
  return run_baseline(*problem.minimax, cfg, x0, y0, metrics, rng);
}

std::string raw_csv(const std::string& label, int grid_id, int run, const RunTrace& trace) {
  std::string out = kRawHeader;
  out += '\n';
  for (const TraceRow& r : trace.rows) {
    out += std::to_string(run) + ',' + label + ',' + std::to_string(grid_id) + ',' +
           std::to_string(r.t) + ',' + std::to_string(r.sfo) + ',' +
           (r.diverged ? std::string() : fmt(r.grad_norm)) + ',' + fmt(r.res_y) + ',' +
           fmt(r.res_z) + ',' + (r.diverged ? '1' : '0') + ',' + fmt(r.wall) + '\n';
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::string& label, int grid_id,
                                    const std::vector<RunTrace>& runs) {
  std::map<long, long> sfo_at;
  std::vector<long> diverged_at(runs.size(), -1);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const TraceRow& r : runs[i].rows) {
      if (r.diverged) {
        diverged_at[i] = r.t;
      } else {
        sfo_at.emplace(r.t, r.sfo);
      }
    }
  }
  if (sfo_at.empty()) {
    for (const RunTrace& tr : runs)
      for (const TraceRow& r : tr.rows) sfo_at.emplace(r.t, r.sfo);
  }

  std::vector<AggregateRow> out;
  out.reserve(sfo_at.size());
  std::vector<std::size_t> cursor(runs.size(), 0);
  for (const auto& [t, sfo] : sfo_at) {
    AggregateRow row;
    row.algo = label;
    row.grid_id = grid_id;
    row.t = t;
    row.sfo_calls = sfo;
    std::vector<double> values;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (diverged_at[i] >= 0 && diverged_at[i] <= t) {
        ++row.divergence_count;
        continue;
      }
      const auto& rows = runs[i].rows;
      std::size_t& c = cursor[i];
      while (c < rows.size() && rows[c].t < t) ++c;
      if (c < rows.size() && rows[c].t == t && !rows[c].diverged) values.push_back(rows[c].grad_norm);
    }
    if (!values.empty()) {
      const double n = double(values.size());
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      std::sort(values.begin(), values.end());
      const std::size_t m = values.size() / 2;
      row.mean = mean;
      row.median = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
      row.std = std::sqrt(var / n);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = kAggregateHeader;
  out += '\n';
  for (const AggregateRow& r : rows) {
    out += r.algo + ',' + std::to_string(r.grid_id) + ',' + std::to_string(r.t) + ',' +
           std::to_string(r.sfo_calls) + ',' + fmt(r.mean) + ',' + fmt(r.median) + ',' +
           fmt(r.std) + ',' + std::to_string(r.divergence_count) + '\n';
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ConfigError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const RunOptions& opts) {
  const ProblemInstance problem = build_problem(spec);
  std::vector<GridPoint> points = expand_grid(spec);
  for (const GridPoint& gp : points) {
    const bool bilevel = is_bilevel(gp.cfg.algo);
    if (bilevel && !problem.bilevel) throw ConfigError(gp.label + ": n2sba needs a bilevel problem");
    if (!bilevel && !problem.minimax) {
      throw ConfigError(gp.label + ": " + std::string(to_string(gp.cfg.algo)) +
                        " needs a minimax problem");
    }
    if (bilevel) {
      const BilevelConstants& c = problem.bilevel->constants();
      if (c.L_f && c.mu && gp.cfg.lambda < 2.0 * *c.L_f / *c.mu) {
        throw ConfigError(gp.label + ": lambda must be >= 2 L_f / mu = " +
                          std::to_string(2.0 * *c.L_f / *c.mu));
      }
    }
  }

  ExperimentResult result;
  result.instance = problem.to_json();
  result.grid.resize(points.size());
  for (std::size_t g = 0; g < points.size(); ++g) {
    result.grid[g].point = points[g];
    result.grid[g].runs.resize(std::size_t(spec.n_runs));
  }

  const std::size_t n_tasks = points.size() * std::size_t(spec.n_runs);
  const int workers = std::max(1, opts.workers > 0 ? opts.workers : spec.workers);
  std::vector<std::exception_ptr> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task = next++; task < n_tasks; task = next++) {
      const std::size_t g = task / std::size_t(spec.n_runs);
      const int r = static_cast<int>(task % std::size_t(spec.n_runs));
      try {
        result.grid[g].runs[std::size_t(r)] = execute_run(problem, points[g], r, spec);
      } catch (...) {
        errors[task] = std::current_exception();
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(std::size_t(workers), n_tasks));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (GridResult& gr : result.grid) {
    double total = 0.0;
    for (const RunTrace& tr : gr.runs) {
      if (tr.numerical_failure) result.numerical_failure = true;
      if (tr.diverged || tr.rows.empty()) {
        ++gr.divergence_count;
        total = std::numeric_limits<double>::infinity();
      } else {
        total += tr.rows.back().grad_norm;
      }
    }
    gr.score = total / double(gr.runs.size());
  }

  if (opts.out_dir) {
    const std::filesystem::path& dir = *opts.out_dir;
    std::filesystem::create_directories(dir);
    const auto instance_path = dir / "instance.json";
    write_atomic(instance_path, result.instance.dump(2) + "\n");
    result.files.push_back(instance_path);
    for (const GridResult& gr : result.grid) {
      const std::string stem = file_stem(gr.point.label, gr.point.grid_id);
      for (int r = 0; r < spec.n_runs; ++r) {
        const auto path = dir / "raw" / (stem + "_r" + std::to_string(r) + ".csv");
        write_atomic(path, raw_csv(gr.point.label, gr.point.grid_id, r, gr.runs[std::size_t(r)]));
        result.files.push_back(path);
      }
      const auto agg_path = dir / "aggregate" / (stem + ".csv");
      write_atomic(agg_path, aggregate_csv(aggregate(gr.point.label, gr.point.grid_id, gr.runs)));
      result.files.push_back(agg_path);
    }
  }
  return result;
}

std::vector<GridChoice> select_best(const ExperimentResult& result) {
  std::vector<GridChoice> out;
  std::map<std::string, std::size_t> index;
  for (const GridResult& gr : result.grid) {
    auto [it, inserted] = index.emplace(gr.point.label, out.size());
    if (inserted) {
      GridChoice c;
      c.label = gr.point.label;
      c.score = std::numeric_limits<double>::infinity();
      out.push_back(std::move(c));
    }
    GridChoice& c = out[it->second];
    if (std::isfinite(gr.score) && (!c.grid_id || gr.score < c.score)) {
      c.grid_id = gr.point.grid_id;
      c.score = gr.score;
      c.params = gr.point.params;
    }
  }
  return out;
}

}  // namespace tailopt
