#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "doctest.h"
#include "brw/config.hpp"
#include "brw/errors.hpp"
#include "brw/experiment.hpp"
#include "brw/report.hpp"

using namespace brw;
namespace fs = std::filesystem;

namespace {

const char* kCanonicalLaw = R"(law:
  family: gaussian
  count: {deterministic: 2}
  parameters: {mean: 1.3862943611198906, variance: 1.3862943611198906}
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("brw_unit_" + name);
  fs::remove_all(p);
  return p;
}

bool has_error(const ConfigError& e, const std::string& field, int line = -1) {
  for (const auto& fe : e.errors())
    if (fe.field.find(field) != std::string::npos && (line < 0 || fe.line == line)) return true;
  return false;
}

}  // namespace

TEST_CASE("parse_config: minimal document fills defaults") {
  const std::string doc = std::string(kCanonicalLaw) + R"(sim:
  n: 256
  seed: 1
experiment:
  kind: simulate
  replicas: 100
)";
  const auto cfg = parse_config(doc);
  CHECK(cfg.kind == ExperimentKind::Simulate);
  CHECK(cfg.sim.measure_n == 256);
  CHECK(cfg.sim.barrier == 14.0);
  CHECK(cfg.sim.eps_record == 1e-3);
  CHECK(cfg.sim.kappa == 10.0);
  CHECK(cfg.sim.seed == 1);
  CHECK(cfg.replicas == 100);
  CHECK(law_moments(cfg.law).boundary_ok);
}

TEST_CASE("parse_config: field errors") {
  SUBCASE("negative barrier names the field") {
    const std::string doc = std::string(kCanonicalLaw) +
                            "sim: {n: 10, barrier: -2}\nexperiment: {kind: simulate}\n";
    try {
      parse_config(doc);
      FAIL("accepted");
    } catch (const ConfigError& e) {
      CHECK(has_error(e, "barrier", 5));
    }
  }
  SUBCASE("explicit atoms must sum to one") {
    const std::string doc = R"(law:
  family: explicit
  atoms:
    - {p: 0.5, children: [0.0]}
    - {p: 0.4, children: [1.0, 2.0]}
experiment: {kind: validate}
)";
    try {
      parse_config(doc);
      FAIL("accepted");
    } catch (const ConfigError& e) {
      REQUIRE(e.errors().size() == 1);
      CHECK(std::string(e.what()).find("1e-12") != std::string::npos);
    }
  }
  SUBCASE("unknown keys, type mismatches and missing keys are all reported") {
    const std::string doc = std::string(kCanonicalLaw) + R"(sim:
  barrier: 12
  colour: blue
experiment:
  kind: simulate
  replicas: lots
)";
    try {
      parse_config(doc);
      FAIL("accepted");
    } catch (const ConfigError& e) {
      CHECK(has_error(e, "sim.colour", 7));
      CHECK(has_error(e, "experiment.replicas", 10));
      CHECK(has_error(e, "sim.n"));
      CHECK(e.errors().size() == 3);
    }
  }
  SUBCASE("unknown family") {
    const std::string doc =
        "law: {family: cauchy, count: {deterministic: 2}, parameters: {}}\nexperiment: {kind: validate}\n";
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
  }
  SUBCASE("missing kind") {
    CHECK_THROWS_AS(parse_config(std::string(kCanonicalLaw)), ConfigError);
  }
  SUBCASE("malformed YAML") {
    CHECK_THROWS_AS(parse_config("law: [unclosed\n"), ConfigError);
  }
}

TEST_CASE("parse_config: overrides") {
  ConfigOverrides ov;
  ov.kind = ExperimentKind::Diagnose;
  ov.seed = 42;
  ov.barrier = 9.5;
  const std::string doc = std::string(kCanonicalLaw) + "experiment: {measure_points: [64, 16]}\n";
  const auto cfg = parse_config(doc, ov);
  CHECK(cfg.kind == ExperimentKind::Diagnose);
  CHECK(cfg.sim.seed == 42);
  CHECK(cfg.sim.barrier == 9.5);
  CHECK(cfg.sim.measure_n == 64);

  ConfigOverrides clash;
  clash.kind = ExperimentKind::Reduce;
  CHECK_THROWS_AS(parse_config(std::string(kCanonicalLaw) + "experiment: {kind: validate}\n", clash),
                  ConfigError);
}

TEST_CASE("CSV replica table") {
  SUBCASE("empty table is the header only") {
    CHECK(emit_csv({}, 10) ==
          "replica_id,seed,survived,n,Z_n,M_centered,R_centered,r_settled,truncated_mass\n");
  }
  SUBCASE("extinct replica leaves M and R empty") {
    ReplicaOutcome dead;
    dead.r_settled = true;
    const std::vector<CsvReplica> rows{{0, 17, &dead}};
    const std::string csv = emit_csv(rows, 8);
    CHECK(csv.substr(csv.find('\n') + 1) == "0,17,false,8,0,,,true,0\n");
  }
  SUBCASE("reals carry 17 significant digits") {
    ReplicaOutcome r;
    r.survived = true;
    r.Z_hat = 0.1;
    r.M_centered = -1.0 / 3.0;
    r.R_centered = 2.0;
    const std::vector<CsvReplica> rows{{3, 5, &r}};
    const std::string csv = emit_csv(rows, 4);
    CHECK(csv.find("0.10000000000000001,-0.33333333333333331,2,") != std::string::npos);
  }
}

TEST_CASE("JSON report round trip") {
  FitReport r;
  r.provenance = {"0123456789abcdef", 77, "0.1.0"};
  r.kind = "test-theorem";
  r.c_M = TailFit{0.1 + 0.2, 3.0, 8.0, -1.0 / 3.0, 1e-17, 812};
  r.c_star = Estimate{std::nextafter(1.0, 2.0), 2.0 / 3.0};
  r.c_prime_mle = Estimate{0.2, 0.01};
  r.c_prime_formula = std::numbers::pi;
  GofReport g;
  g.ks_W = {0.0123, 0.5};
  g.ks_L = {0.02, 1e-300};
  g.indep = {0.05, 0.7};
  g.indep_chi2 = 12.5;
  g.n_used = 5000;
  g.n_dropped = 3;
  r.gof = g;
  r.ais_ratio_summary = {{256, 0.61, 0.6776607516031050, 200, 1}};
  r.as_ratio_series = {{100, 0.7, 0.4, 50, 0}, {10000, 0.55, 0.9, 50, 0}};
  r.details["theta"] = 1.1774100225154747;

  const std::string text = emit_json(r);
  CHECK(text.find("0.30000000000000004") != std::string::npos);
  const FitReport back = parse_json_report(text);
  CHECK(back.provenance.config_hash == r.provenance.config_hash);
  CHECK(back.provenance.master_seed == 77);
  CHECK(back.c_M->c_hat == r.c_M->c_hat);
  CHECK(back.c_M->slope == r.c_M->slope);
  CHECK(back.c_M->std_error == r.c_M->std_error);
  CHECK(back.c_M->n_tail == 812);
  CHECK(back.c_star->value == r.c_star->value);
  CHECK(back.c_star->std_error == r.c_star->std_error);
  CHECK(*back.c_prime_formula == *r.c_prime_formula);
  CHECK(back.gof->ks_L.p_value == 1e-300);
  CHECK(back.gof->indep_chi2 == 12.5);
  CHECK(back.ais_ratio_summary[0].target == r.ais_ratio_summary[0].target);
  CHECK(back.as_ratio_series.size() == 2);
  CHECK(back.details["theta"].get<double>() == 1.1774100225154747);
  CHECK(emit_json(back) == text);

  FitReport empty;
  empty.kind = "validate";
  const FitReport e2 = parse_json_report(emit_json(empty));
  CHECK_FALSE(e2.c_M.has_value());
  CHECK_FALSE(e2.gof.has_value());
  CHECK_THROWS_AS(parse_json_report("{\"kind\": 1}"), IoError);
}

TEST_CASE("json writer") {
  nlohmann::ordered_json j = {{"a", 1.0}, {"b", NAN}, {"c", {1, 2}}, {"d", "x\"y"}};
  CHECK(dump_json(j, -1) == R"({"a":1.0,"b":null,"c":[1,2],"d":"x\"y"})");
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("run_experiment: reduce") {
  const fs::path dir = scratch("reduce");
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::Reduce;
  cfg.law = OffspringLaw::iid(DeterministicCount{2}, Gaussian{0.0, 1.0});
  cfg.out_dir = dir.string();
  const auto res = run_experiment(cfg);
  CHECK(res.report.details["theta_star"].get<double>() == doctest::Approx(1.1774100).epsilon(1e-7));
  CHECK(res.report.details["shift"].get<double>() == doctest::Approx(1.3862944).epsilon(1e-7));
  CHECK(res.gate_passed);
  const auto back = parse_json_report(read_file(dir / "report.json"));
  CHECK(back.kind == "reduce");
  fs::remove_all(dir);
}

TEST_CASE("run_experiment: simulate output is independent of workers") {
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::Simulate;
  cfg.sim.measure_n = 20;
  cfg.sim.barrier = 7.0;
  cfg.sim.seed = 5;
  cfg.replicas = 4;
  std::string csv[2], json[2];
  const unsigned workers[2] = {1, 4};
  for (int k = 0; k < 2; ++k) {
    const fs::path dir = scratch("sim" + std::to_string(workers[k]));
    cfg.workers = workers[k];
    cfg.out_dir = dir.string();
    run_experiment(cfg);
    csv[k] = read_file(dir / "replicas.csv");
    json[k] = read_file(dir / "report.json");
    fs::remove_all(dir);
  }
  CHECK(csv[0] == csv[1]);
  CHECK(json[0] == json[1]);
  CHECK(std::count(csv[0].begin(), csv[0].end(), '\n') == 5);
}

TEST_CASE("run_experiment: test-theorem populates the goodness-of-fit report") {
  const fs::path dir = scratch("theorem");
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::TestTheorem;
  cfg.sim.measure_n = 8;
  cfg.sim.barrier = 7.0;
  cfg.replicas = 600;
  cfg.pool_size = 0;
  cfg.out_dir = dir.string();
  const auto res = run_experiment(cfg);
  REQUIRE(res.report.gof.has_value());
  const auto& g = *res.report.gof;
  CHECK(g.n_used >= 100);
  for (const auto& t : {g.ks_W, g.ks_L, g.indep}) {
    CHECK(t.statistic >= 0.0);
    CHECK(t.statistic <= 1.0);
    CHECK(t.p_value >= 0.0);
    CHECK(t.p_value <= 1.0);
  }
  CHECK(res.report.c_star->value > 0.0);
  CHECK(res.report.c_prime_mle->value > 0.0);
  fs::remove_all(dir);
}

TEST_CASE("run_experiment: errors name the replica") {
  const fs::path dir = scratch("overflow");
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::Simulate;
  cfg.sim.measure_n = 20;
  cfg.sim.max_pop = 50;
  cfg.replicas = 2;
  cfg.out_dir = dir.string();
  try {
    run_experiment(cfg);
    FAIL("expected an overflow");
  } catch (const ReplicaError& e) {
    CHECK(std::string(e.what()).find("replica 0") != std::string::npos);
  }
  fs::remove_all(dir);
}
