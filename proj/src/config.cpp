#include "brw/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace brw {

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Validate: return "validate";
    case ExperimentKind::Reduce: return "reduce";
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::EstimateCm: return "estimate-cm";
    case ExperimentKind::TestTheorem: return "test-theorem";
    case ExperimentKind::Diagnose: return "diagnose";
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_kind(std::string_view name) {
  for (auto k : {ExperimentKind::Validate, ExperimentKind::Reduce, ExperimentKind::Simulate,
                 ExperimentKind::EstimateCm, ExperimentKind::TestTheorem, ExperimentKind::Diagnose})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
  std::ostringstream os;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i) os << "\n";
    if (errors[i].line > 0) os << "line " << errors[i].line << ": ";
    os << errors[i].field << ": " << errors[i].message;
  }
  return os.str();
}

int line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

class Reader {
 public:
  std::vector<FieldError> errors;

  void fail(const YAML::Node& at, const std::string& field, const std::string& message) {
    errors.push_back({at ? line_of(at) : 0, field, message});
  }
  void fail(int line, const std::string& field, const std::string& message) {
    errors.push_back({line, field, message});
  }

  // Reports keys of `map` that are not in `allowed`.
  void check_keys(const YAML::Node& map, const std::string& prefix,
                  std::initializer_list<std::string_view> allowed) {
    for (auto it = map.begin(); it != map.end(); ++it) {
      const std::string key = it->first.Scalar();
      bool known = false;
      for (auto a : allowed) known = known || a == key;
      if (!known) fail(it->first, prefix + key, "unknown key");
    }
  }

  // Sets `out` only when the section exists and is a mapping.
  bool section(const YAML::Node& root, const std::string& name, YAML::Node& out) {
    const YAML::Node node = root[name];
    if (!node) return false;
    if (!node.IsMap()) {
      fail(node, name, "expected a mapping");
      return false;
    }
    out = node;
    return true;
  }

  std::optional<double> number(const YAML::Node& node, const std::string& field) {
    if (!node) return std::nullopt;
    if (!node.IsScalar()) {
      fail(node, field, "expected a number");
      return std::nullopt;
    }
    try {
      const double x = node.as<double>();
      if (!std::isfinite(x)) {
        fail(node, field, "must be finite");
        return std::nullopt;
      }
      return x;
    } catch (const YAML::Exception&) {
      fail(node, field, "expected a number, got '" + node.Scalar() + "'");
      return std::nullopt;
    }
  }

  std::optional<std::uint64_t> count(const YAML::Node& node, const std::string& field) {
    if (!node) return std::nullopt;
    if (!node.IsScalar()) {
      fail(node, field, "expected a nonnegative integer");
      return std::nullopt;
    }
    try {
      const long long v = node.as<long long>();
      if (v < 0) {
        fail(node, field, "must be nonnegative");
        return std::nullopt;
      }
      return std::uint64_t(v);
    } catch (const YAML::Exception&) {
      fail(node, field, "expected a nonnegative integer, got '" + node.Scalar() + "'");
      return std::nullopt;
    }
  }

  std::optional<std::string> text(const YAML::Node& node, const std::string& field) {
    if (!node) return std::nullopt;
    if (!node.IsScalar()) {
      fail(node, field, "expected a string");
      return std::nullopt;
    }
    return node.Scalar();
  }

  std::optional<double> required_number(const YAML::Node& parent, const std::string& key,
                                        const std::string& field) {
    const YAML::Node node = parent[key];
    if (!node) {
      fail(parent, field, "missing required key");
      return std::nullopt;
    }
    return number(node, field);
  }
};

std::optional<OffspringLaw> read_law(Reader& rd, const YAML::Node& law) {
  rd.check_keys(law, "law.", {"family", "count", "parameters", "atoms"});
  const YAML::Node family_node = law["family"];
  if (!family_node) {
    rd.fail(law, "law.family", "missing required key");
    return std::nullopt;
  }
  const auto family = rd.text(family_node, "law.family");
  if (!family) return std::nullopt;

  try {
    if (*family == "explicit") {
      for (const char* k : {"count", "parameters"})
        if (law[k]) rd.fail(law[k], std::string("law.") + k, "not used by explicit laws");
      const YAML::Node atoms = law["atoms"];
      if (!atoms) {
        rd.fail(law, "law.atoms", "missing required key");
        return std::nullopt;
      }
      if (!atoms.IsSequence()) {
        rd.fail(atoms, "law.atoms", "expected a list of {p, children}");
        return std::nullopt;
      }
      std::vector<Atom> parsed;
      bool ok = true;
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        const YAML::Node a = atoms[i];
        const std::string field = "law.atoms[" + std::to_string(i) + "]";
        if (!a.IsMap()) {
          rd.fail(a, field, "expected {p, children}");
          ok = false;
          continue;
        }
        rd.check_keys(a, field + ".", {"p", "children"});
        Atom atom;
        const auto p = rd.required_number(a, "p", field + ".p");
        ok = ok && p.has_value();
        if (p) atom.probability = *p;
        const YAML::Node ch = a["children"];
        if (ch && !ch.IsSequence()) {
          rd.fail(ch, field + ".children", "expected a list of numbers");
          ok = false;
        } else if (ch) {
          for (std::size_t j = 0; j < ch.size(); ++j) {
            const auto x = rd.number(ch[j], field + ".children[" + std::to_string(j) + "]");
            ok = ok && x.has_value();
            if (x) atom.children.push_back(*x);
          }
        }
        parsed.push_back(std::move(atom));
      }
      if (!ok) return std::nullopt;
      try {
        return OffspringLaw::explicit_atoms(std::move(parsed));
      } catch (const InvalidLaw& e) {
        rd.fail(atoms, "law.atoms", e.what());
        return std::nullopt;
      }
    }

    if (law["atoms"]) rd.fail(law["atoms"], "law.atoms", "only used by explicit laws");
    const YAML::Node count_node = law["count"];
    std::optional<CountLaw> count;
    if (!count_node) {
      rd.fail(law, "law.count", "missing required key");
    } else if (!count_node.IsMap() || count_node.size() != 1) {
      rd.fail(count_node, "law.count", "expected {deterministic: k} or {poisson: lambda}");
    } else {
      rd.check_keys(count_node, "law.count.", {"deterministic", "poisson"});
      if (const auto k = rd.count(count_node["deterministic"], "law.count.deterministic")) {
        if (*k > 1'000'000) {
          rd.fail(count_node, "law.count.deterministic", "unreasonably large");
        } else {
          count = DeterministicCount{std::uint32_t(*k)};
        }
      }
      if (const auto lambda = rd.number(count_node["poisson"], "law.count.poisson")) {
        if (*lambda < 0.0) {
          rd.fail(count_node["poisson"], "law.count.poisson", "must be nonnegative");
        } else {
          count = PoissonCount{*lambda};
        }
      }
    }

    const YAML::Node params = law["parameters"];
    if (!params) {
      rd.fail(law, "law.parameters", "missing required key");
      return std::nullopt;
    }
    if (!params.IsMap()) {
      rd.fail(params, "law.parameters", "expected a mapping");
      return std::nullopt;
    }
    std::optional<DisplacementFamily> disp;
    if (*family == "gaussian") {
      rd.check_keys(params, "law.parameters.", {"mean", "variance"});
      const auto mean = rd.required_number(params, "mean", "law.parameters.mean");
      const auto var = rd.required_number(params, "variance", "law.parameters.variance");
      if (mean && var) disp = Gaussian{*mean, *var};
    } else if (*family == "two-point") {
      rd.check_keys(params, "law.parameters.", {"a", "b", "p"});
      const auto a = rd.required_number(params, "a", "law.parameters.a");
      const auto b = rd.required_number(params, "b", "law.parameters.b");
      const auto p = rd.required_number(params, "p", "law.parameters.p");
      if (a && b && p) disp = TwoPoint{*a, *b, *p};
    } else if (*family == "uniform") {
      rd.check_keys(params, "law.parameters.", {"lo", "hi"});
      const auto lo = rd.required_number(params, "lo", "law.parameters.lo");
      const auto hi = rd.required_number(params, "hi", "law.parameters.hi");
      if (lo && hi) disp = UniformInterval{*lo, *hi};
    } else {
      rd.fail(family_node, "law.family",
              "unknown family '" + *family + "' (gaussian | two-point | uniform | explicit)");
      return std::nullopt;
    }
    if (!count || !disp) return std::nullopt;
    try {
      return OffspringLaw::iid(*count, *disp);
    } catch (const InvalidLaw& e) {
      rd.fail(params, "law.parameters", e.what());
      return std::nullopt;
    }
  } catch (const YAML::Exception& e) {
    rd.fail(law, "law", e.what());
    return std::nullopt;
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<FieldError> errors)
    : Error(join_errors(errors)), errors_(std::move(errors)) {}

ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides) {
  ExperimentConfig cfg;
  cfg.source = std::string(text);
  Reader rd;

  YAML::Node root;
  try {
    root = YAML::Load(cfg.source);
  } catch (const YAML::ParserException& e) {
    throw ConfigError({{e.mark.line + 1, "document", e.msg}});
  }
  if (!root || root.IsNull()) throw ConfigError({{0, "document", "empty configuration"}});
  if (!root.IsMap()) throw ConfigError({{line_of(root), "document", "expected a mapping"}});
  rd.check_keys(root, "", {"law", "sim", "experiment"});

  // law
  YAML::Node law;
  if (rd.section(root, "law", law)) {
    if (auto parsed = read_law(rd, law)) cfg.law = std::move(*parsed);
  } else if (!root["law"]) {
    rd.fail(root, "law", "missing required section");
  }

  // sim
  YAML::Node sim;
  int n_line = 0;
  bool n_given = false;
  const bool has_sim = rd.section(root, "sim", sim);
  if (has_sim) {
    rd.check_keys(sim, "sim.",
                  {"n", "barrier", "eps_record", "kappa", "max_generation", "max_pop", "seed"});
    if (auto v = rd.count(sim["n"], "sim.n")) {
      cfg.sim.measure_n = *v;
      n_given = true;
      n_line = line_of(sim["n"]);
    }
    if (auto v = rd.number(sim["barrier"], "sim.barrier")) cfg.sim.barrier = *v;
    if (auto v = rd.number(sim["eps_record"], "sim.eps_record")) cfg.sim.eps_record = *v;
    if (auto v = rd.number(sim["kappa"], "sim.kappa")) cfg.sim.kappa = *v;
    if (auto v = rd.count(sim["max_generation"], "sim.max_generation")) cfg.sim.max_generation = *v;
    if (auto v = rd.count(sim["max_pop"], "sim.max_pop")) cfg.sim.max_pop = *v;
    if (auto v = rd.count(sim["seed"], "sim.seed")) cfg.sim.seed = *v;
  }

  // experiment
  YAML::Node ex;
  std::optional<ExperimentKind> kind;
  int kind_line = 0;
  const bool has_ex = rd.section(root, "experiment", ex);
  if (has_ex) {
    rd.check_keys(ex, "experiment.",
                  {"kind", "replicas", "workers", "out", "tol", "window", "pool_size", "bootstrap",
                   "measure_points", "fit_fraction"});
    if (auto name = rd.text(ex["kind"], "experiment.kind")) {
      kind_line = line_of(ex["kind"]);
      kind = parse_kind(*name);
      if (!kind) rd.fail(ex["kind"], "experiment.kind", "unknown kind '" + *name + "'");
    }
    if (auto v = rd.count(ex["replicas"], "experiment.replicas")) cfg.replicas = *v;
    if (auto v = rd.count(ex["workers"], "experiment.workers")) cfg.workers = unsigned(*v);
    if (auto v = rd.text(ex["out"], "experiment.out")) cfg.out_dir = *v;
    if (auto v = rd.number(ex["tol"], "experiment.tol")) cfg.tol = *v;
    if (const YAML::Node w = ex["window"]) {
      if (!w.IsSequence() || w.size() != 2) {
        rd.fail(w, "experiment.window", "expected [x_lo, x_hi]");
      } else {
        const auto lo = rd.number(w[0], "experiment.window[0]");
        const auto hi = rd.number(w[1], "experiment.window[1]");
        if (lo && hi) {
          cfg.window_lo = *lo;
          cfg.window_hi = *hi;
          if (!(*lo < *hi)) rd.fail(w, "experiment.window", "requires x_lo < x_hi");
        }
      }
    }
    if (auto v = rd.count(ex["pool_size"], "experiment.pool_size")) cfg.pool_size = *v;
    if (auto v = rd.count(ex["bootstrap"], "experiment.bootstrap")) cfg.bootstrap = *v;
    if (const YAML::Node mp = ex["measure_points"]) {
      if (!mp.IsSequence()) {
        rd.fail(mp, "experiment.measure_points", "expected a list of generations");
      } else {
        for (std::size_t i = 0; i < mp.size(); ++i)
          if (auto v = rd.count(mp[i], "experiment.measure_points[" + std::to_string(i) + "]"))
            cfg.measure_points.push_back(*v);
      }
    }
    if (auto v = rd.number(ex["fit_fraction"], "experiment.fit_fraction")) {
      cfg.fit_fraction = *v;
      if (!(*v > 0.0 && *v < 1.0))
        rd.fail(ex["fit_fraction"], "experiment.fit_fraction", "must lie strictly between 0 and 1");
    }
  }

  // Command-line overrides.
  if (overrides.kind) {
    if (kind && *kind != *overrides.kind)
      rd.fail(kind_line, "experiment.kind",
              "document says '" + std::string(to_string(*kind)) + "' but command is '" +
                  std::string(to_string(*overrides.kind)) + "'");
    kind = overrides.kind;
  }
  if (overrides.seed) cfg.sim.seed = *overrides.seed;
  if (overrides.replicas) cfg.replicas = *overrides.replicas;
  if (overrides.workers) cfg.workers = *overrides.workers;
  if (overrides.n) {
    cfg.sim.measure_n = *overrides.n;
    n_given = true;
  }
  if (overrides.barrier) cfg.sim.barrier = *overrides.barrier;
  if (overrides.eps_record) cfg.sim.eps_record = *overrides.eps_record;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  cfg.gate = overrides.gate;

  if (!kind) {
    rd.fail(has_ex ? line_of(ex) : 0, "experiment.kind", "missing required key");
  } else {
    cfg.kind = *kind;
  }

  // Field-level validation.
  const auto sim_line = [&](const char* key) { return has_sim && sim[key] ? line_of(sim[key]) : 0; };
  if (!(cfg.sim.barrier > 0.0)) rd.fail(sim_line("barrier"), "sim.barrier", "barrier must be positive");
  if (!(cfg.sim.eps_record > 0.0 && cfg.sim.eps_record < 1.0))
    rd.fail(sim_line("eps_record"), "sim.eps_record", "must lie strictly between 0 and 1");
  if (!(cfg.sim.kappa > 0.0)) rd.fail(sim_line("kappa"), "sim.kappa", "must be positive");
  if (cfg.sim.max_pop < 1) rd.fail(sim_line("max_pop"), "sim.max_pop", "must be at least 1");
  if (cfg.replicas < 1)
    rd.fail(has_ex && ex["replicas"] ? line_of(ex["replicas"]) : 0, "experiment.replicas",
            "must be at least 1");
  if (cfg.workers < 1) cfg.workers = 1;
  if (!(cfg.tol > 0.0)) rd.fail(0, "experiment.tol", "must be positive");

  if (kind) {
    switch (*kind) {
      case ExperimentKind::Simulate:
      case ExperimentKind::TestTheorem:
        if (!n_given) rd.fail(has_sim ? line_of(sim) : 0, "sim.n", "missing required key");
        break;
      case ExperimentKind::Diagnose:
        if (cfg.measure_points.empty()) {
          rd.fail(has_ex ? line_of(ex) : 0, "experiment.measure_points", "missing required key");
        } else {
          std::uint64_t top = 0;
          for (auto p : cfg.measure_points) top = std::max(top, p);
          if (!n_given) {
            cfg.sim.measure_n = top;
          } else if (cfg.sim.measure_n < top) {
            rd.fail(n_line, "sim.n", "must be at least the largest measure point");
          }
        }
        break;
      case ExperimentKind::EstimateCm:
        if (cfg.pool_size < 1) rd.fail(0, "experiment.pool_size", "must be at least 1");
        break;
      default:
        break;
    }
  }
  if (cfg.sim.measure_n < 1) rd.fail(n_line, "sim.n", "must be at least 1");
  if (cfg.sim.max_generation <= cfg.sim.measure_n)
    rd.fail(sim_line("max_generation"), "sim.max_generation", "must exceed n");

  if (!rd.errors.empty()) throw ConfigError(std::move(rd.errors));
  return cfg;
}

}  // namespace brw
