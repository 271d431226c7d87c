#include "brw/report.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "brw/errors.hpp"

namespace brw {

using nlohmann::ordered_json;

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_real(double x) {
  if (!std::isfinite(x)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

void dump_into(std::string& out, const ordered_json& v, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(std::size_t(indent * d), ' ');
  };
  switch (v.type()) {
    case ordered_json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += ordered_json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump_into(out, it.value(), indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case ordered_json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        newline(depth + 1);
        dump_into(out, v[i], indent, depth + 1);
      }
      newline(depth);
      out += ']';
      return;
    }
    case ordered_json::value_t::number_float: {
      const double x = v.get<double>();
      if (!std::isfinite(x)) {
        out += "null";
        return;
      }
      std::string s = format_real(x);
      // Keep the float type visible so the document re-parses as a real.
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      out += s;
      return;
    }
    default:
      out += v.dump();
  }
}

ordered_json real(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

double get_real(const ordered_json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

ordered_json test_json(const TestResult& t) {
  return ordered_json{{"statistic", real(t.statistic)}, {"p_value", real(t.p_value)}};
}

TestResult test_from(const ordered_json& j) {
  return {get_real(j.at("statistic")), get_real(j.at("p_value"))};
}

ordered_json estimate_json(const std::optional<Estimate>& e) {
  if (!e) return nullptr;
  return ordered_json{{"estimate", real(e->value)}, {"stderr", real(e->std_error)}};
}

std::optional<Estimate> estimate_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return Estimate{get_real(j.at("estimate")), get_real(j.at("stderr"))};
}

}  // namespace

std::string dump_json(const ordered_json& value, int indent) {
  std::string out;
  dump_into(out, value, indent, 0);
  return out;
}

ordered_json to_json(const FitReport& r) {
  ordered_json doc;
  doc["provenance"] = {{"config_hash", r.provenance.config_hash},
                       {"master_seed", r.provenance.master_seed},
                       {"version", r.provenance.version}};
  doc["kind"] = r.kind;
  if (r.c_M) {
    const auto& t = *r.c_M;
    doc["c_M"] = {{"c_hat", real(t.c_hat)},
                  {"window", {real(t.x_lo), real(t.x_hi)}},
                  {"slope", real(t.slope)},
                  {"stderr", real(t.std_error)},
                  {"n_tail", t.n_tail}};
  } else {
    doc["c_M"] = nullptr;
  }
  doc["c_star"] = estimate_json(r.c_star);
  doc["c_prime_mle"] = estimate_json(r.c_prime_mle);
  doc["c_prime_formula"] = r.c_prime_formula ? real(*r.c_prime_formula) : ordered_json(nullptr);
  if (r.gof) {
    const auto& g = *r.gof;
    doc["gof"] = {{"ks_W", test_json(g.ks_W)},     {"ks_L", test_json(g.ks_L)},
                  {"indep", test_json(g.indep)},   {"indep_chi2", real(g.indep_chi2)},
                  {"n_used", g.n_used},            {"n_dropped", g.n_dropped}};
  } else {
    doc["gof"] = nullptr;
  }
  doc["ais_ratio_summary"] = ordered_json::array();
  for (const auto& a : r.ais_ratio_summary)
    doc["ais_ratio_summary"].push_back({{"n", a.n},
                                        {"median", real(a.median)},
                                        {"target", real(a.target)},
                                        {"count", a.count},
                                        {"dropped", a.dropped}});
  doc["as_ratio_series"] = ordered_json::array();
  for (const auto& a : r.as_ratio_series)
    doc["as_ratio_series"].push_back({{"n", a.n},
                                      {"median", real(a.median)},
                                      {"frac_within", real(a.frac_within)},
                                      {"count", a.count},
                                      {"dropped", a.dropped}});
  doc["details"] = r.details;
  return doc;
}

FitReport report_from_json(const ordered_json& doc) {
  try {
    FitReport r;
    const auto& p = doc.at("provenance");
    r.provenance.config_hash = p.at("config_hash").get<std::string>();
    r.provenance.master_seed = p.at("master_seed").get<std::uint64_t>();
    r.provenance.version = p.at("version").get<std::string>();
    r.kind = doc.at("kind").get<std::string>();
    if (const auto& c = doc.at("c_M"); !c.is_null()) {
      TailFit t;
      t.c_hat = get_real(c.at("c_hat"));
      t.x_lo = get_real(c.at("window").at(0));
      t.x_hi = get_real(c.at("window").at(1));
      t.slope = get_real(c.at("slope"));
      t.std_error = get_real(c.at("stderr"));
      t.n_tail = c.at("n_tail").get<std::uint64_t>();
      r.c_M = t;
    }
    r.c_star = estimate_from(doc.at("c_star"));
    r.c_prime_mle = estimate_from(doc.at("c_prime_mle"));
    if (const auto& c = doc.at("c_prime_formula"); !c.is_null()) r.c_prime_formula = get_real(c);
    if (const auto& g = doc.at("gof"); !g.is_null()) {
      GofReport gof;
      gof.ks_W = test_from(g.at("ks_W"));
      gof.ks_L = test_from(g.at("ks_L"));
      gof.indep = test_from(g.at("indep"));
      gof.indep_chi2 = get_real(g.at("indep_chi2"));
      gof.n_used = g.at("n_used").get<std::uint64_t>();
      gof.n_dropped = g.at("n_dropped").get<std::uint64_t>();
      r.gof = gof;
    }
    for (const auto& a : doc.at("ais_ratio_summary"))
      r.ais_ratio_summary.push_back({a.at("n").get<std::uint64_t>(), get_real(a.at("median")),
                                     get_real(a.at("target")), a.at("count").get<std::uint64_t>(),
                                     a.at("dropped").get<std::uint64_t>()});
    for (const auto& a : doc.at("as_ratio_series"))
      r.as_ratio_series.push_back({a.at("n").get<std::uint64_t>(), get_real(a.at("median")),
                                   get_real(a.at("frac_within")), a.at("count").get<std::uint64_t>(),
                                   a.at("dropped").get<std::uint64_t>()});
    if (doc.contains("details")) r.details = doc.at("details");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
}

std::string emit_json(const FitReport& report) { return dump_json(to_json(report)) + "\n"; }

FitReport parse_json_report(std::string_view text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return report_from_json(doc);
}

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_row(std::ostream& out, std::uint64_t replica_id, std::uint64_t seed,
                   std::uint64_t n, const ReplicaOutcome& o) {
  out << replica_id << ',' << seed << ',' << (o.survived ? "true" : "false") << ',' << n << ','
      << format_real(o.Z_hat) << ',' << format_real(o.M_centered) << ','
      << format_real(o.R_centered) << ',' << (o.r_settled ? "true" : "false") << ','
      << format_real(o.truncated_mass) << '\n';
  if (!out) throw IoError("failed writing replica table");
}

std::string emit_csv(std::span<const CsvReplica> rows, std::uint64_t n) {
  std::ostringstream os;
  write_csv_header(os);
  for (const auto& r : rows) write_csv_row(os, r.replica_id, r.seed, n, *r.outcome);
  return os.str();
}

}  // namespace brw
