#pragma once

// Experiment configuration documents.
//
// A configuration is a YAML document with three sections:
//
//   law:
//     family: gaussian            # gaussian | two-point | uniform | explicit
//     count: {deterministic: 2}   # or {poisson: 1.5}
//     parameters: {mean: 1.3862943611198906, variance: 1.3862943611198906}
//     atoms:                      # explicit laws only
//       - {p: 1.0, children: [0.0, 0.6931471805599453]}
//   sim:
//     n: 256
//     barrier: 14
//     eps_record: 1.0e-3
//     kappa: 10
//     max_generation: 100000
//     max_pop: 20000000
//     seed: 1
//   experiment:
//     kind: simulate              # validate | reduce | simulate | estimate-cm
//                                 # | test-theorem | diagnose
//     replicas: 100
//     workers: 1
//     out: results
//     tol: 1.0e-9                 # boundary tolerance (validate, reduce)
//     window: [3, 8]              # tail window for c_M
//     pool_size: 10000            # R_0 samples (estimate-cm, test-theorem)
//     bootstrap: 200
//     measure_points: [256, 4096] # diagnose
//     fit_fraction: 0.5           # test-theorem: share of replicas used to fit
//
// Unknown keys are errors. Parameters by family:
//   gaussian: mean, variance;  two-point: a, b, p;  uniform: lo, hi.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "brw/engine.hpp"
#include "brw/errors.hpp"
#include "brw/laws.hpp"

namespace brw {

enum class ExperimentKind { Validate, Reduce, Simulate, EstimateCm, TestTheorem, Diagnose };

std::string_view to_string(ExperimentKind kind);
std::optional<ExperimentKind> parse_kind(std::string_view name);

struct ExperimentConfig {
  OffspringLaw law = canonical_law();
  SimConfig sim;
  ExperimentKind kind = ExperimentKind::Simulate;
  std::uint64_t replicas = 1;
  unsigned workers = 1;
  std::string out_dir = ".";
  double tol = kDefaultBoundaryTol;
  double window_lo = 3.0;
  double window_hi = 8.0;
  std::uint64_t pool_size = 10000;
  std::uint64_t bootstrap = 200;
  std::vector<std::uint64_t> measure_points;
  double fit_fraction = 0.5;
  bool gate = false;
  std::string source;  // the document text, hashed into report provenance
};

/// Command-line values; they take precedence over the document and are
/// validated with it.
struct ConfigOverrides {
  std::optional<ExperimentKind> kind;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> replicas;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> n;
  std::optional<double> barrier;
  std::optional<double> eps_record;
  std::optional<std::string> out_dir;
  bool gate = false;
};

struct FieldError {
  int line = 0;  // 1-based; 0 when not tied to a line
  std::string field;
  std::string message;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<FieldError> errors);
  [[nodiscard]] const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

/// Parses and validates a document. Throws ConfigError carrying every
/// field-level diagnostic found.
ExperimentConfig parse_config(std::string_view text, const ConfigOverrides& overrides = {});

}  // namespace brw
