#pragma once

// Estimators and goodness-of-fit tests for the limit laws of M_n, R_n and the
// martingales W_n, Z_n.

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "brw/engine.hpp"

namespace brw {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// P(K > lambda) for the limiting Kolmogorov distribution.
double kolmogorov_survival(double lambda);

/// One-sample Kolmogorov-Smirnov test. D is evaluated at the jump points of
/// the empirical CDF; the p-value is the asymptotic one, Q(sqrt(N) D).
/// Throws EmptyInput.
TestResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Two-sample Kolmogorov-Smirnov; p-value from Q(sqrt(nm/(n+m)) D).
TestResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Rejection threshold for the two-sample D at level alpha:
/// sqrt(-ln(alpha/2)/2) * sqrt((n+m)/(nm)).
double ks_two_sample_critical(std::size_t n, std::size_t m, double alpha);

struct TailFit {
  double c_hat = 0.0;
  double x_lo = 3.0;
  double x_hi = 8.0;
  double slope = 0.0;
  double std_error = 0.0;
  std::uint64_t n_tail = 0;
};

struct TailFitOptions {
  std::size_t grid_points = 21;
  std::size_t bootstrap = 200;
  std::size_t min_tail = 200;
  std::uint64_t seed = 1;
};

/// Fits P(R_0 <= -x) ~ c e^{-x} over [x_lo, x_hi]: c_hat is the geometric mean
/// of e^x P_hat(R_0 <= -x) over an even grid, slope the least-squares slope of
/// log P_hat against x, stderr a nonparametric bootstrap of c_hat.
/// Throws InsufficientTail.
TailFit estimate_cM(std::span<const double> pool, double x_lo, double x_hi,
                    const TailFitOptions& options = {});

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// MLE of c under f(x | Z) = c Z e^x exp(-c Z e^x): c_hat = N / sum Z_i e^{X_i},
/// stderr c_hat / sqrt(N). Throws EmptyInput or NonpositiveZ.
Estimate mle_gumbel_scale(std::span<const std::pair<double, double>> pairs);

/// sqrt(2 / (pi sigma2)) * c_M. Throws NonpositiveSigma2.
double derive_cprime(double c_M, double sigma2);

struct GofReport {
  TestResult ks_W;
  TestResult ks_L;
  TestResult indep;         // statistic: Cramer's V of the 4x4 table
  double indep_chi2 = 0.0;  // raw chi-square, 9 degrees of freedom
  std::uint64_t n_used = 0;
  std::uint64_t n_dropped = 0;  // survivors with Z_n <= 0
};

/// Chi-square test of independence on a 4x4 table of rank quartiles.
/// Returns the chi-square value in `statistic`, p-value with 9 degrees of freedom.
TestResult quadrant_chi_square(std::span<const double> u, std::span<const double> v);

/// PIT coordinates U = exp(-c_* Z e^W), V = exp(-c' Z e^L) of the survivors,
/// KS against uniform for each, and the quadrant independence test.
/// Throws TooFewSurvivors below 100 usable replicas.
GofReport pit_independence_test(std::span<const ReplicaOutcome> replicas, double c_star,
                                double c_prime);

struct SeriesPoint {
  std::uint64_t n = 0;
  std::vector<double> values;
  std::uint64_t dropped = 0;
};

struct Diagnostics {
  std::vector<SeriesPoint> ais;  // n^{1/2} W_n / Z_n
  std::vector<SeriesPoint> as;   // R_n / log n
};

/// Per-trajectory ratios at each requested n. Entries with Z_n <= 0 (ais) or
/// n < 2 and non-finite R_n (as) are dropped and counted.
Diagnostics diagnostics(std::span<const std::vector<GenStats>> trajectories,
                        std::span<const std::uint64_t> measure_points);

double median(std::vector<double> values);

}  // namespace brw
