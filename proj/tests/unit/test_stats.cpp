#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "brw/errors.hpp"
#include "brw/random.hpp"
#include "brw/stats.hpp"

using namespace brw;

namespace {

const auto kUniform = [](double x) { return std::clamp(x, 0.0, 1.0); };

// O(N^2) supremum: for every jump point compare both one-sided limits,
// counting sample multiplicities directly.
double brute_force_ks(const std::vector<double>& xs, const std::function<double(double)>& cdf) {
  const double n = double(xs.size());
  double d = 0.0;
  for (double x : xs) {
    double below = 0, at_or_below = 0;
    for (double y : xs) {
      below += y < x;
      at_or_below += y <= x;
    }
    d = std::max({d, std::abs(at_or_below / n - cdf(x)), std::abs(below / n - cdf(x))});
  }
  return d;
}

// Draws from the exact conditional law P(X >= x | Z) = exp(-c Z e^x).
double draw_gumbel(RandomStream& rng, double c, double z) {
  return std::log(-std::log(rng.uniform()) / (c * z));
}

std::vector<ReplicaOutcome> exact_triples(std::uint64_t seed, std::size_t n, double c_star,
                                          double c_prime) {
  RandomStream rng(seed);
  std::vector<ReplicaOutcome> out(n);
  for (auto& r : out) {
    r.survived = true;
    r.Z_hat = std::exp(rng.normal());  // any positive law
    r.M_centered = draw_gumbel(rng, c_star, r.Z_hat);
    r.R_centered = draw_gumbel(rng, c_prime, r.Z_hat);
    r.r_settled = true;
  }
  return out;
}

}  // namespace

TEST_CASE("kolmogorov_survival") {
  CHECK(kolmogorov_survival(0.0) == 1.0);
  CHECK(kolmogorov_survival(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-9));
  CHECK(kolmogorov_survival(1.3580986393225505) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(kolmogorov_survival(1.6276236115189293) == doctest::Approx(0.01).epsilon(1e-6));
  // Both evaluation branches meet continuously.
  CHECK(kolmogorov_survival(1.18 - 1e-12) == doctest::Approx(kolmogorov_survival(1.18)).epsilon(1e-10));
  CHECK(kolmogorov_survival(10.0) < 1e-80);
}

TEST_CASE("ks_statistic") {
  SUBCASE("single point") {
    const std::vector<double> xs{0.5};
    CHECK(ks_statistic(xs, kUniform).statistic == doctest::Approx(0.5));
  }
  SUBCASE("aligned staircase") {
    const int N = 250;
    std::vector<double> xs;
    for (int i = 1; i <= N; ++i) xs.push_back(double(i) / N);
    CHECK(ks_statistic(xs, kUniform).statistic == doctest::Approx(1.0 / N).epsilon(1e-12));
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, kUniform), EmptyInput);
  }
  SUBCASE("matches a brute-force scan") {
    RandomStream rng(31);
    for (int N : {1, 2, 7, 100, 1000}) {
      std::vector<double> xs;
      for (int i = 0; i < N; ++i) xs.push_back(std::round(rng.uniform() * 40) / 40);  // ties
      const auto normal_cdf = [](double x) { return 0.5 * std::erfc(-(x - 0.4) / std::sqrt(2.0)); };
      CAPTURE(N);
      CHECK(ks_statistic(xs, kUniform).statistic ==
            doctest::Approx(brute_force_ks(xs, kUniform)).epsilon(1e-14));
      CHECK(ks_statistic(xs, normal_cdf).statistic ==
            doctest::Approx(brute_force_ks(xs, normal_cdf)).epsilon(1e-14));
    }
  }
  SUBCASE("p-value is the asymptotic series") {
    RandomStream rng(2);
    std::vector<double> xs(400);
    for (auto& x : xs) x = rng.uniform();
    const auto t = ks_statistic(xs, kUniform);
    CHECK(t.p_value == doctest::Approx(kolmogorov_survival(std::sqrt(400.0) * t.statistic)));
  }
}

TEST_CASE("two-sample KS") {
  const std::vector<double> a{1, 2, 3, 4}, b{1, 2, 3, 4};
  CHECK(ks_two_sample(a, b).statistic == 0.0);
  const std::vector<double> c{10, 11, 12};
  CHECK(ks_two_sample(a, c).statistic == 1.0);
  CHECK(ks_two_sample_critical(2000, 2000, 0.01) ==
        doctest::Approx(std::sqrt(-std::log(0.005) / 2) * std::sqrt(4000.0 / 4e6)));
}

TEST_CASE("estimate_cM on synthetic exponential tails") {
  std::mt19937_64 gen(12345);
  std::exponential_distribution<double> expo(1.0);
  const std::size_t N = 100000;
  SUBCASE("P(R <= -x) = e^{-x}") {
    std::vector<double> pool(N);
    for (auto& r : pool) r = -expo(gen);
    const auto fit = estimate_cM(pool, 3.0, 8.0);
    CHECK(std::abs(fit.c_hat - 1.0) <= 3 * fit.std_error);
    CHECK(fit.slope >= -1.1);
    CHECK(fit.slope <= -0.9);
    CHECK(fit.x_lo == 3.0);
    CHECK(fit.x_hi == 8.0);
    std::uint64_t beyond = 0;
    for (double r : pool) beyond += r <= -3.0;
    CHECK(fit.n_tail == beyond);
  }
  SUBCASE("P(R <= -x) = 2 e^{-x} for x >= ln 2") {
    std::vector<double> pool(N);
    for (auto& r : pool) r = -(expo(gen) + std::numbers::ln2);
    const auto fit = estimate_cM(pool, 3.0, 8.0);
    CHECK(std::abs(fit.c_hat - 2.0) <= 3 * fit.std_error);
  }
  SUBCASE("deterministic given the bootstrap seed") {
    std::vector<double> pool(20000);
    for (auto& r : pool) r = -expo(gen);
    const auto a = estimate_cM(pool, 2.0, 5.0), b = estimate_cM(pool, 2.0, 5.0);
    CHECK(a.std_error == b.std_error);
    CHECK(a.c_hat == b.c_hat);
  }
  SUBCASE("all zeros") {
    const std::vector<double> pool(1000, 0.0);
    CHECK_THROWS_AS(estimate_cM(pool, 3.0, 8.0), InsufficientTail);
  }
}

TEST_CASE("mle_gumbel_scale") {
  SUBCASE("single pair") {
    const std::vector<std::pair<double, double>> p{{1.0, 0.0}};
    CHECK(mle_gumbel_scale(p).value == 1.0);
  }
  SUBCASE("two pairs") {
    const double l2 = std::numbers::ln2;
    const std::vector<std::pair<double, double>> p{{1.0, l2}, {1.0, l2}};
    CHECK(mle_gumbel_scale(p).value == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(mle_gumbel_scale(std::vector<std::pair<double, double>>{}), EmptyInput);
    const std::vector<std::pair<double, double>> bad{{0.0, 1.0}};
    CHECK_THROWS_AS(mle_gumbel_scale(bad), NonpositiveZ);
  }
  SUBCASE("synthetic recovery of c0 = 3") {
    RandomStream rng(17);
    const std::size_t N = 100000;
    std::vector<std::pair<double, double>> p(N);
    for (auto& [z, x] : p) {
      z = 1.0;
      x = draw_gumbel(rng, 3.0, z);
    }
    const auto e = mle_gumbel_scale(p);
    CHECK(std::abs(e.value - 3.0) <= 3 * e.value / std::sqrt(double(N)));
    CHECK(e.std_error == doctest::Approx(e.value / std::sqrt(double(N))));
  }
  SUBCASE("scaling Z by lambda scales c_hat by 1/lambda") {
    RandomStream rng(3);
    std::vector<std::pair<double, double>> p(500), q;
    for (auto& [z, x] : p) {
      z = std::exp(rng.normal());
      x = rng.normal();
    }
    const double lambda = 4.0;  // power of two keeps the products exact
    for (auto [z, x] : p) q.emplace_back(lambda * z, x);
    CHECK(mle_gumbel_scale(q).value == doctest::Approx(mle_gumbel_scale(p).value / lambda).epsilon(1e-15));
  }
}

TEST_CASE("derive_cprime") {
  // The joint limit's constant is sqrt(2 / (pi sigma^2)) c_M.
  const double s2 = 2 * std::numbers::ln2;
  CHECK(derive_cprime(1.0, s2) == doctest::Approx(std::sqrt(1.0 / (std::numbers::pi * std::numbers::ln2))));
  CHECK(derive_cprime(1.0, s2) == doctest::Approx(0.6777).epsilon(1e-4));
  CHECK(derive_cprime(0.37, 2.0 / std::numbers::pi) == doctest::Approx(0.37).epsilon(1e-15));
  CHECK(derive_cprime(0.0, s2) == 0.0);
  CHECK_THROWS_AS(derive_cprime(1.0, 0.0), NonpositiveSigma2);
}

TEST_CASE("quadrant chi-square") {
  RandomStream rng(5);
  std::vector<double> u(4000), v(4000);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = rng.uniform();
    v[i] = rng.uniform();
  }
  CHECK(quadrant_chi_square(u, v).p_value > 1e-4);
  CHECK(quadrant_chi_square(u, u).p_value < 1e-12);
  // Perfect dependence fills the diagonal: chi2 = 3 N.
  CHECK(quadrant_chi_square(u, u).statistic == doctest::Approx(3.0 * double(u.size())));
}

TEST_CASE("pit_independence_test") {
  const double c_star = 0.8, c_prime = 0.3;
  SUBCASE("exact triples pass in at least 18 of 20 seeds") {
    int passes = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto reps = exact_triples(derive_seed(100, s), 10000, c_star, c_prime);
      const auto g = pit_independence_test(reps, c_star, c_prime);
      passes += g.ks_W.p_value > 0.01 && g.ks_L.p_value > 0.01 && g.indep.p_value > 0.01;
      CHECK(g.n_used == 10000);
      CHECK(g.indep.statistic >= 0.0);
      CHECK(g.indep.statistic <= 1.0);
    }
    CHECK(passes >= 18);
  }
  SUBCASE("misspecified c_star is rejected") {
    const auto reps = exact_triples(7, 10000, c_star, c_prime);
    CHECK(pit_independence_test(reps, 2 * c_star, c_prime).ks_W.p_value < 0.01);
  }
  SUBCASE("degenerate U = 1/2") {
    std::vector<ReplicaOutcome> reps(200);
    RandomStream rng(1);
    for (auto& r : reps) {
      r.survived = true;
      r.Z_hat = 1.0 + rng.uniform();
      r.M_centered = std::log(std::numbers::ln2 / (c_star * r.Z_hat));
      r.R_centered = draw_gumbel(rng, c_prime, r.Z_hat);
    }
    const auto g = pit_independence_test(reps, c_star, c_prime);
    CHECK(g.ks_W.statistic == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(g.ks_W.p_value < 0.01);
  }
  SUBCASE("extinct and Z <= 0 replicas are filtered") {
    auto reps = exact_triples(9, 150, c_star, c_prime);
    reps[0].survived = false;
    reps[1].Z_hat = -0.5;
    const auto g = pit_independence_test(reps, c_star, c_prime);
    CHECK(g.n_used == 148);
    CHECK(g.n_dropped == 1);
  }
  SUBCASE("too few survivors") {
    const auto reps = exact_triples(9, 99, c_star, c_prime);
    CHECK_THROWS_AS(pit_independence_test(reps, c_star, c_prime), TooFewSurvivors);
  }
}

TEST_CASE("diagnostics") {
  SUBCASE("staircase closed form") {
    const double l2 = std::numbers::ln2;
    std::vector<GenStats> traj;
    for (std::uint64_t n = 0; n <= 64; ++n)
      traj.push_back({n, n * l2, 1.0, n * l2, std::uint64_t(1) << std::min<std::uint64_t>(n, 62), 0.0});
    const std::vector<std::vector<GenStats>> trajs{traj};
    const std::vector<std::uint64_t> points{4, 16, 64};
    const auto d = diagnostics(trajs, points);
    REQUIRE(d.ais.size() == 3);
    for (const auto& s : d.ais) {
      REQUIRE(s.values.size() == 1);
      CHECK(s.values[0] == doctest::Approx(1.0 / (std::sqrt(double(s.n)) * l2)).epsilon(1e-14));
    }
    REQUIRE(d.as.size() == 3);
    for (const auto& s : d.as)
      CHECK(s.values[0] == doctest::Approx(s.n * l2 / std::log(double(s.n))).epsilon(1e-14));
  }
  SUBCASE("nonpositive Z and n < 2 are dropped") {
    std::vector<GenStats> traj{{0, 0.0, 1.0, 0.0, 1, 0.0}, {1, -1.0, 1.0, -0.5, 2, 0.0},
                               {2, -1.5, 1.0, 0.2, 2, 0.0}};
    const std::vector<std::vector<GenStats>> trajs{traj};
    const std::vector<std::uint64_t> points{1, 2};
    const auto d = diagnostics(trajs, points);
    CHECK(d.ais[0].values.empty());
    CHECK(d.ais[0].dropped == 1);
    CHECK(d.ais[1].values.size() == 1);
    CHECK(d.as[0].values.empty());
    CHECK(d.as[1].values.size() == 1);
  }
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}
