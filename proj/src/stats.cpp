#include "brw/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>

#include "brw/errors.hpp"
#include "brw/summation.hpp"

namespace brw {

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.18) {
    // Jacobi-theta form, fast for small lambda.
    const double a = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int j = 1; j <= 20; ++j) {
      const double k = 2.0 * j - 1.0;
      cdf += std::exp(-k * k * a);
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double q = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    q += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

TestResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw EmptyInput("ks_statistic: no samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = double(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, (double(i) + 1.0) / n - f, f - double(i) / n});
  }
  return {d, kolmogorov_survival(std::sqrt(n) * d)};
}

TestResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw EmptyInput("ks_two_sample: both samples must be nonempty");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= t) ++i;
    while (j < y.size() && y[j] <= t) ++j;
    d = std::max(d, std::fabs(double(i) / double(x.size()) - double(j) / double(y.size())));
  }
  const double ne = double(x.size()) * double(y.size()) / double(x.size() + y.size());
  return {d, kolmogorov_survival(std::sqrt(ne) * d)};
}

double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-std::log(alpha / 2.0) / 2.0);
  return c * std::sqrt(double(n + m) / (double(n) * double(m)));
}

namespace {

struct TailPoint {
  double c_hat;
  double slope;
};

// counts[j] = #{samples <= -grid[j]}; all counts must be positive.
TailPoint fit_tail(std::span<const double> grid, std::span<const std::uint64_t> counts, double n) {
  double log_c = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double g = double(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double y = std::log(double(counts[j]) / n);
    log_c += grid[j] + y;
    sx += grid[j];
    sy += y;
    sxx += grid[j] * grid[j];
    sxy += grid[j] * y;
  }
  const double slope = (g * sxy - sx * sy) / (g * sxx - sx * sx);
  return {std::exp(log_c / g), slope};
}

}  // namespace

TailFit estimate_cM(std::span<const double> pool, double x_lo, double x_hi,
                    const TailFitOptions& options) {
  if (!(x_lo < x_hi)) throw InsufficientTail("estimate_cM: window requires x_lo < x_hi");
  if (options.grid_points < 2) throw InsufficientTail("estimate_cM: need at least 2 grid points");
  std::vector<double> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = double(sorted.size());

  std::vector<double> grid(options.grid_points);
  for (std::size_t j = 0; j < grid.size(); ++j)
    grid[j] = x_lo + (x_hi - x_lo) * double(j) / double(grid.size() - 1);

  auto count_below = [&sorted](double level) {
    return std::uint64_t(std::upper_bound(sorted.begin(), sorted.end(), level) - sorted.begin());
  };
  std::vector<std::uint64_t> counts(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) counts[j] = count_below(-grid[j]);

  TailFit fit;
  fit.x_lo = x_lo;
  fit.x_hi = x_hi;
  fit.n_tail = counts.front();
  if (fit.n_tail < options.min_tail)
    throw InsufficientTail("estimate_cM: " + std::to_string(fit.n_tail) +
                           " samples below -x_lo, need " + std::to_string(options.min_tail));
  if (counts.back() == 0)
    throw InsufficientTail("estimate_cM: no samples below -x_hi");

  const TailPoint point = fit_tail(grid, counts, n);
  fit.c_hat = point.c_hat;
  fit.slope = point.slope;

  // Bootstrap. Each sample is reduced to its depth: the number of grid
  // thresholds it lies below. A resample's counts are then a suffix sum of
  // the depth histogram.
  std::vector<std::size_t> depth(sorted.size(), 0);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    std::size_t d = 0;
    while (d < grid.size() && sorted[i] <= -grid[d]) ++d;
    depth[i] = d;
  }
  RandomStream rng(derive_seed(options.seed, stream_tag::kBootstrap));
  std::vector<std::uint64_t> hist(grid.size() + 1);
  std::vector<std::uint64_t> boot_counts(grid.size());
  CompensatedSum s1, s2;
  std::size_t used = 0;
  for (std::size_t b = 0; b < options.bootstrap; ++b) {
    std::fill(hist.begin(), hist.end(), 0);
    for (std::size_t i = 0; i < sorted.size(); ++i) ++hist[depth[rng.index(sorted.size())]];
    std::uint64_t acc = 0;
    for (std::size_t j = grid.size(); j-- > 0;) {
      acc += hist[j + 1];
      boot_counts[j] = acc;
    }
    if (boot_counts.back() == 0) continue;
    const double c = fit_tail(grid, boot_counts, n).c_hat;
    s1 += c;
    s2 += c * c;
    ++used;
  }
  if (used > 1) {
    const double mean = s1.value() / double(used);
    const double var = (s2.value() - double(used) * mean * mean) / double(used - 1);
    fit.std_error = std::sqrt(std::max(var, 0.0));
  }
  return fit;
}

Estimate mle_gumbel_scale(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw EmptyInput("mle_gumbel_scale: no pairs");
  CompensatedSum total;
  for (const auto& [z, x] : pairs) {
    if (!(z > 0.0)) throw NonpositiveZ("mle_gumbel_scale: every Z must be positive");
    if (!std::isfinite(x)) throw EmptyInput("mle_gumbel_scale: X must be finite");
    total += z * std::exp(x);
  }
  const double n = double(pairs.size());
  const double c = n / total.value();
  return {c, c / std::sqrt(n)};
}

double derive_cprime(double c_M, double sigma2) {
  if (!(sigma2 > 0.0)) throw NonpositiveSigma2("derive_cprime: sigma2 must be positive");
  return std::sqrt(2.0 / (std::numbers::pi * sigma2)) * c_M;
}

TestResult quadrant_chi_square(std::span<const double> u, std::span<const double> v) {
  const std::size_t n = u.size();
  if (n == 0 || v.size() != n) throw EmptyInput("quadrant_chi_square: need paired samples");
  // Rank-based quartile bins so each margin is as balanced as ties allow.
  auto quartiles = [n](std::span<const double> x) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<int> bin(n);
    for (std::size_t r = 0; r < n; ++r) bin[order[r]] = int((4 * r) / n);
    return bin;
  };
  const auto bu = quartiles(u);
  const auto bv = quartiles(v);
  std::array<std::array<double, 4>, 4> table{};
  std::array<double, 4> rows{}, cols{};
  for (std::size_t i = 0; i < n; ++i) {
    table[bu[i]][bv[i]] += 1.0;
    rows[bu[i]] += 1.0;
    cols[bv[i]] += 1.0;
  }
  double chi2 = 0.0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const double expected = rows[r] * cols[c] / double(n);
      if (expected > 0.0) chi2 += (table[r][c] - expected) * (table[r][c] - expected) / expected;
    }
  const boost::math::chi_squared dist(9.0);
  return {chi2, boost::math::cdf(boost::math::complement(dist, chi2))};
}

GofReport pit_independence_test(std::span<const ReplicaOutcome> replicas, double c_star,
                                double c_prime) {
  if (!(c_star > 0.0) || !(c_prime > 0.0))
    throw TooFewSurvivors("pit_independence_test: constants must be positive");
  GofReport report;
  std::vector<double> u, v;
  for (const auto& r : replicas) {
    if (!r.survived) continue;
    if (!(r.Z_hat > 0.0) || !std::isfinite(r.M_centered) || !std::isfinite(r.R_centered)) {
      ++report.n_dropped;
      continue;
    }
    u.push_back(std::exp(-c_star * r.Z_hat * std::exp(r.M_centered)));
    v.push_back(std::exp(-c_prime * r.Z_hat * std::exp(r.R_centered)));
  }
  report.n_used = u.size();
  if (u.size() < 100)
    throw TooFewSurvivors("pit_independence_test: " + std::to_string(u.size()) +
                          " usable survivors, need 100");
  const auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
  report.ks_W = ks_statistic(u, uniform);
  report.ks_L = ks_statistic(v, uniform);
  const TestResult chi = quadrant_chi_square(u, v);
  report.indep_chi2 = chi.statistic;
  report.indep = {std::sqrt(chi.statistic / (3.0 * double(u.size()))), chi.p_value};
  return report;
}

Diagnostics diagnostics(std::span<const std::vector<GenStats>> trajectories,
                        std::span<const std::uint64_t> measure_points) {
  Diagnostics out;
  std::vector<std::vector<double>> suffix;
  suffix.reserve(trajectories.size());
  for (const auto& t : trajectories) suffix.push_back(suffix_minima(t));

  for (std::uint64_t n : measure_points) {
    SeriesPoint ais{n, {}, 0};
    SeriesPoint as{n, {}, 0};
    for (std::size_t r = 0; r < trajectories.size(); ++r) {
      const auto& t = trajectories[r];
      if (n >= t.size() || t[n].pop == 0) {
        ++ais.dropped;
        ++as.dropped;
        continue;
      }
      if (t[n].Z > 0.0) {
        ais.values.push_back(std::sqrt(double(n)) * t[n].W / t[n].Z);
      } else {
        ++ais.dropped;
      }
      const double rn = suffix[r][n];
      if (n >= 2 && std::isfinite(rn)) {
        as.values.push_back(rn / std::log(double(n)));
      } else {
        ++as.dropped;
      }
    }
    out.ais.push_back(std::move(ais));
    out.as.push_back(std::move(as));
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + std::ptrdiff_t(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + std::ptrdiff_t(mid));
  return 0.5 * (lo + hi);
}

}  // namespace brw
