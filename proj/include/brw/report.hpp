#pragma once

// Serialized experiment output: the replica CSV table and the JSON summary.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "brw/engine.hpp"
#include "brw/stats.hpp"

namespace brw {

inline constexpr std::string_view kVersion = "0.1.0";

struct Provenance {
  std::string config_hash;  // FNV-1a 64, hex
  std::uint64_t master_seed = 0;
  std::string version{kVersion};
};

struct AisSummary {
  std::uint64_t n = 0;
  double median = 0.0;
  double target = 0.0;
  std::uint64_t count = 0;
  std::uint64_t dropped = 0;
};

struct AsPoint {
  std::uint64_t n = 0;
  double median = 0.0;
  double frac_within = 0.0;  // share with |R_n/log n - 1/2| <= 0.25
  std::uint64_t count = 0;
  std::uint64_t dropped = 0;
};

struct FitReport {
  Provenance provenance;
  std::string kind;
  std::optional<TailFit> c_M;
  std::optional<Estimate> c_star;
  std::optional<Estimate> c_prime_mle;
  std::optional<double> c_prime_formula;
  std::optional<GofReport> gof;
  std::vector<AisSummary> ais_ratio_summary;
  std::vector<AsPoint> as_ratio_series;
  nlohmann::ordered_json details = nlohmann::ordered_json::object();  // kind-specific
};

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);

/// Writes `value` with every number at 17 significant digits. Non-finite
/// numbers become null.
std::string dump_json(const nlohmann::ordered_json& value, int indent = 2);

nlohmann::ordered_json to_json(const FitReport& report);
/// Inverse of to_json. Throws IoError on malformed input.
FitReport report_from_json(const nlohmann::ordered_json& doc);

std::string emit_json(const FitReport& report);
FitReport parse_json_report(std::string_view text);

// Replica table.
inline constexpr std::string_view kCsvHeader =
    "replica_id,seed,survived,n,Z_n,M_centered,R_centered,r_settled,truncated_mass";

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, std::uint64_t replica_id, std::uint64_t seed,
                   std::uint64_t n, const ReplicaOutcome& outcome);

struct CsvReplica {
  std::uint64_t replica_id;
  std::uint64_t seed;
  const ReplicaOutcome* outcome;
};

/// Header plus one row per replica.
std::string emit_csv(std::span<const CsvReplica> rows, std::uint64_t n);

/// Formats a double with 17 significant digits; empty for non-finite values.
std::string format_real(double x);

}  // namespace brw
