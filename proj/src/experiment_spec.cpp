#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "tailopt/errors.hpp"
#include "tailopt/harness.hpp"

namespace tailopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fields that may hold a list of values; the product iterates them in this
// order with the last one varying fastest.
const std::vector<std::string> kGridFields = {"eta_x", "eta_y", "tau_y", "eta_z", "tau_z",
                                              "lambda", "tau_x", "K", "M", "T", "sfo_budget"};
const std::set<std::string> kEntryFields = {"algo",   "label",  "eta_x",     "eta_y",
                                            "tau_y",  "eta_z",  "tau_z",     "lambda",
                                            "tau_x",  "K",      "M",         "T",
                                            "sfo_budget", "normalize_outer", "report", "theory"};
const std::set<std::string> kSpecFields = {"problem", "noise",     "n_runs",   "seed",
                                           "cadence", "sfo_budget", "workers", "residuals",
                                           "x0_scale", "algorithms"};

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

// Numbers, or the strings "inf" / "infinity" for unbounded radii.
double as_real(const Json& v, const std::string& name) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return kInf;
  }
  throw ConfigError("field '" + name + "' must be a number");
}

long as_count(const Json& v, const std::string& name) {
  const double d = as_real(v, name);
  if (!(d >= 1.0) || d > 9e18 || std::floor(d) != d) {
    throw ConfigError("field '" + name + "' must be a positive integer");
  }
  return static_cast<long>(d);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

TheoryConstants theory_constants_from_json(const Json& j) {
  static const std::set<std::string> allowed = {"ell", "mu", "sigma", "sigma_f", "sigma_g",
                                                "L_f", "L_g", "Delta", "R0", "R_y", "R_z"};
  reject_unknown(j, allowed, "theory.constants");
  TheoryConstants c;
  auto opt = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k)) return std::nullopt;
    return as_real(j.at(k), k);
  };
  c.ell = opt("ell");
  c.mu = opt("mu");
  c.sigma = opt("sigma");
  c.sigma_f = opt("sigma_f");
  c.sigma_g = opt("sigma_g");
  c.L_f = opt("L_f");
  c.L_g = opt("L_g");
  c.Delta = opt("Delta");
  c.R0 = opt("R0");
  c.R_y = opt("R_y");
  c.R_z = opt("R_z");
  return c;
}

AlgoConfig config_from_point(const Json& p, const ExperimentSpec& spec) {
  AlgoConfig cfg;
  const Algo algo = algo_from_string(p.at("algo").get<std::string>());
  if (p.contains("theory")) {
    const Json& th = p.at("theory");
    reject_unknown(th, {"theorem", "epsilon", "p", "delta", "constants"}, "theory");
    if (!th.contains("theorem") || !th.contains("epsilon") || !th.contains("p")) {
      throw ConfigError("theory needs theorem, epsilon and p");
    }
    cfg = config_from_theorem(theory_constants_from_json(th.value("constants", Json::object())),
                              as_real(th.at("epsilon"), "epsilon"), as_real(th.at("p"), "p"),
                              theorem_from_string(th.at("theorem").get<std::string>()),
                              th.contains("delta") ? as_real(th.at("delta"), "delta") : 0.1);
    if (cfg.algo != algo) throw ConfigError("theorem does not match algo");
  } else {
    cfg.algo = algo;
    if (!p.contains("eta_x") || !p.contains("T")) throw ConfigError("algorithm needs eta_x and T");
    cfg.eta_x = as_real(p.at("eta_x"), "eta_x");
    cfg.T = as_count(p.at("T"), "T");
    cfg.K = p.contains("K") ? as_count(p.at("K"), "K") : 1;
    cfg.M = p.contains("M") ? as_count(p.at("M"), "M") : 1;
    if (!p.contains("eta_y")) throw ConfigError("algorithm needs eta_y");
    const double eta_y = as_real(p.at("eta_y"), "eta_y");
    const double tau_y = p.contains("tau_y") ? as_real(p.at("tau_y"), "tau_y") : kInf;
    cfg.inner_y = InnerSchedule::manual(eta_y, tau_y, cfg.K);
    if (algo == Algo::n2sba) {
      if (!p.contains("lambda")) throw ConfigError("n2sba needs lambda");
      cfg.lambda = as_real(p.at("lambda"), "lambda");
      const double eta_z = p.contains("eta_z") ? as_real(p.at("eta_z"), "eta_z") : eta_y;
      const double tau_z = p.contains("tau_z") ? as_real(p.at("tau_z"), "tau_z") : kInf;
      cfg.inner_z = InnerSchedule::manual(eta_z, tau_z, cfg.K);
    }
    if (p.contains("tau_x")) cfg.tau_x = as_real(p.at("tau_x"), "tau_x");
  }
  cfg.seed = spec.seed;
  cfg.normalize_outer = get_or<bool>(p, "normalize_outer", true);
  cfg.report = report_mode_from_string(get_or<std::string>(p, "report", "uniform_random"));
  if (p.contains("sfo_budget")) {
    cfg.sfo_budget = as_count(p.at("sfo_budget"), "sfo_budget");
  } else {
    cfg.sfo_budget = spec.sfo_budget;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

NoiseModel noise_from_json(const Json& j) {
  reject_unknown(j, {"kind", "shape", "scale", "p", "sigma"}, "noise");
  const NoiseKind kind = noise_kind_from_string(get_or<std::string>(j, "kind", "gaussian"));
  const double shape = j.contains("shape") ? as_real(j.at("shape"), "shape") : 0.0;
  const double scale = j.contains("scale") ? as_real(j.at("scale"), "scale") : 0.0;
  double p = 2.0;
  if (j.contains("p")) {
    p = as_real(j.at("p"), "p");
  } else if (kind != NoiseKind::gaussian) {
    p = std::min(2.0, 0.5 * (1.0 + shape));
  }
  NoiseModel m = NoiseModel::make(kind, shape, scale, p);
  if (j.contains("sigma")) {
    const double declared = as_real(j.at("sigma"), "sigma");
    if (declared < m.sigma) throw ConfigError("declared sigma is below the certified bound");
    m.sigma = declared;
  }
  return m;
}

Json noise_to_json(const NoiseModel& m) {
  return Json{{"kind", std::string(to_string(m.kind))},
              {"shape", m.shape},
              {"scale", m.scale},
              {"p", m.p},
              {"sigma", m.sigma}};
}

ExperimentSpec parse_experiment_spec(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment spec must be an object");
  reject_unknown(j, kSpecFields, "experiment spec");
  ExperimentSpec spec;
  if (!j.contains("problem") || !j.at("problem").is_object()) {
    throw ConfigError("experiment spec needs a problem object");
  }
  spec.problem = j.at("problem");
  if (j.contains("noise")) {
    const Json& n = j.at("noise");
    reject_unknown(n, {"f", "g"}, "noise");
    if (n.contains("f")) spec.noise_f = noise_from_json(n.at("f"));
    if (n.contains("g")) spec.noise_g = noise_from_json(n.at("g"));
  }
  spec.n_runs = get_or<int>(j, "n_runs", 20);
  if (spec.n_runs < 1) throw ConfigError("n_runs must be >= 1");
  spec.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("cadence")) spec.cadence = as_count(j.at("cadence"), "cadence");
  if (j.contains("sfo_budget")) spec.sfo_budget = as_count(j.at("sfo_budget"), "sfo_budget");
  spec.workers = get_or<int>(j, "workers", 1);
  if (spec.workers < 1) throw ConfigError("workers must be >= 1");
  spec.residuals = get_or<bool>(j, "residuals", true);
  spec.x0_scale = j.contains("x0_scale") ? as_real(j.at("x0_scale"), "x0_scale") : 1.0;
  if (!(spec.x0_scale >= 0.0) || !std::isfinite(spec.x0_scale)) {
    throw ConfigError("x0_scale must be finite and >= 0");
  }
  if (!j.contains("algorithms") || !j.at("algorithms").is_array() || j.at("algorithms").empty()) {
    throw ConfigError("experiment spec needs a non-empty algorithms list");
  }
  std::set<std::string> labels;
  for (const Json& a : j.at("algorithms")) {
    if (!a.is_object() || !a.contains("algo")) throw ConfigError("algorithm entries need 'algo'");
    reject_unknown(a, kEntryFields, "algorithm entry");
    const std::string label = get_or<std::string>(a, "label", a.at("algo").get<std::string>());
    if (label.empty() || label.find_first_of(",/\\ \n") != std::string::npos) {
      throw ConfigError("label '" + label + "' must be non-empty without commas, slashes or spaces");
    }
    if (!labels.insert(label).second) throw ConfigError("duplicate algorithm label '" + label + "'");
    spec.algorithms.push_back(a);
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file " + path.string());
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError("spec file " + path.string() + ": " + e.what());
  }
  return parse_experiment_spec(j);
}

std::vector<GridPoint> expand_grid(const ExperimentSpec& spec) {
  std::vector<GridPoint> out;
  for (const Json& entry : spec.algorithms) {
    const std::string label = get_or<std::string>(entry, "label", entry.at("algo").get<std::string>());
    std::vector<std::pair<std::string, Json>> lists;
    for (const auto& f : kGridFields) {
      if (entry.contains(f) && entry.at(f).is_array()) {
        if (entry.at(f).empty()) throw ConfigError("grid field '" + f + "' is empty");
        lists.emplace_back(f, entry.at(f));
      }
    }
    std::size_t total = 1;
    for (const auto& l : lists) total *= l.second.size();
    for (std::size_t idx = 0; idx < total; ++idx) {
      Json point = entry;
      std::size_t rem = idx;
      for (std::size_t li = lists.size(); li-- > 0;) {
        const std::size_t n = lists[li].second.size();
        point[lists[li].first] = lists[li].second[rem % n];
        rem /= n;
      }
      GridPoint gp;
      gp.label = label;
      gp.grid_id = static_cast<int>(idx);
      try {
        gp.cfg = config_from_point(point, spec);
      } catch (const ConfigError& e) {
        throw ConfigError(label + " grid point " + std::to_string(idx) + ": " + e.what());
      }
      point.erase("label");
      gp.params = point;
      out.push_back(std::move(gp));
    }
  }
  return out;
}

int ProblemInstance::dim_x() const { return bilevel ? bilevel->dim_x() : minimax->dim_x(); }
int ProblemInstance::dim_y() const { return bilevel ? bilevel->dim_y() : minimax->dim_y(); }

Json ProblemInstance::to_json() const {
  if (bilevel) {
    return Json{{"problem", bilevel->to_json()},
                {"noise", {{"f", noise_to_json(bilevel->noise_f())},
                           {"g", noise_to_json(bilevel->noise_g())}}}};
  }
  return Json{{"problem", minimax->to_json()},
              {"noise", {{"f", noise_to_json(minimax->noise_f())}}}};
}

ProblemInstance build_problem(const ExperimentSpec& spec) {
  const Json& p = spec.problem;
  ProblemInstance inst;
  try {
    if (p.contains("instance")) {
      const Json& ij = p.at("instance");
      const std::string kind = ij.at("kind").get<std::string>();
      if (kind == "quadratic_bilevel" || kind == "learnable_reg") {
        inst.bilevel = bilevel_from_json(ij);
      } else {
        inst.minimax = minimax_from_json(ij);
      }
    } else {
      const std::string kind = get_or<std::string>(p, "kind", "");
      const auto seed = get_or<std::uint64_t>(p, "seed", 0);
      if (kind == "two_player_game") {
        reject_unknown(p, {"kind", "seed", "m1", "m2", "dim"}, "problem");
        inst.minimax = make_two_player_game(seed, get_or<double>(p, "m1", 1.0),
                                            get_or<double>(p, "m2", 1.0), get_or<int>(p, "dim", 30));
      } else if (kind == "separable_game") {
        reject_unknown(p, {"kind", "dim_x", "dim_y", "mu", "center"}, "problem");
        const int dy = get_or<int>(p, "dim_y", 5);
        if (dy <= 0) throw ConfigError("dim_y must be positive");
        const Vec center = p.contains("center") ? vector_from_json(p.at("center")) : Vec(Vec::Zero(dy));
        inst.minimax = std::make_shared<SeparableGame>(center, get_or<int>(p, "dim_x", 5),
                                                       get_or<double>(p, "mu", 1.0));
      } else if (kind == "quadratic_bilevel") {
        reject_unknown(p, {"kind", "seed", "dim_x", "dim_y", "q_shift"}, "problem");
        inst.bilevel = make_quadratic_bilevel(seed, get_or<int>(p, "dim_x", 5),
                                              get_or<int>(p, "dim_y", 5),
                                              get_or<double>(p, "q_shift", 0.5));
      } else if (kind == "learnable_reg") {
        reject_unknown(p, {"kind", "seed", "dim", "n_train", "n_val"}, "problem");
        inst.bilevel = make_learnable_reg(seed, get_or<int>(p, "dim", 10),
                                          get_or<int>(p, "n_train", 60),
                                          get_or<int>(p, "n_val", 200));
      } else {
        throw ConfigError("unknown problem kind '" + kind + "'");
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
  if (inst.bilevel) {
    inst.bilevel->set_noise(spec.noise_f, spec.noise_g);
  } else {
    inst.minimax->set_noise(spec.noise_f);
  }
  return inst;
}

}  // namespace tailopt
