#pragma once

// Runs one configured experiment end to end and writes its outputs.

#include <iosfwd>
#include <string>

#include "brw/config.hpp"
#include "brw/report.hpp"

namespace brw {

struct ExperimentResult {
  FitReport report;
  bool gate_passed = true;
  std::string gate_reason;
};

/// Canonical text of the settings that determine the results (not the worker
/// count or output directory); its hash is the report's config_hash.
std::string canonical_config(const ExperimentConfig& cfg);

/// Dispatches on cfg.kind. Output files in cfg.out_dir:
///   replicas.csv  simulate, test-theorem, diagnose (rows streamed in index order)
///   r0_pool.csv   estimate-cm, test-theorem with pool_size > 0
///   report.json   always, written last
/// `log` receives short progress lines when non-null.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

}  // namespace brw
