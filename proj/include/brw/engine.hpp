#pragma once

// Generation-by-generation evolution of a branching random walk with
// upper-barrier truncation, plus samplers for the after-n minimum R_n and the
// all-time minimum R_0.

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "brw/laws.hpp"
#include "brw/random.hpp"

namespace brw {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct SimConfig {
  double barrier = 14.0;       // B
  std::uint64_t measure_n = 256;
  double eps_record = 1e-3;
  double kappa = 10.0;
  std::uint64_t max_generation = 100000;
  std::uint64_t max_pop = 20'000'000;
  std::uint64_t seed = 1;

  /// Throws InvalidConfig naming the offending field.
  void validate() const;
};

/// Which level the barrier hangs from.
///  - GenerationMin: kill V > M_k + B. Used while the population is evolved
///    towards the measurement generation.
///  - Record: kill V > record + B. Used once only the future minimum matters
///    (R-phase, R_0 sampling): a particle y above the record beats it with
///    probability of order e^{-y}.
enum class BarrierAnchor { GenerationMin, Record };

/// Particles of one generation stored as a multiset: `positions[i]` occurs
/// `counts[i]` times. Deterministic laws keep identical particles merged.
struct Population {
  std::uint64_t generation = 0;
  std::vector<double> positions;
  std::vector<std::uint64_t> counts;
  double record = 0.0;          // running minimum since the current phase began
  double truncated_mass = 0.0;  // cumulative sum of e^{-V} over killed particles
  BarrierAnchor anchor = BarrierAnchor::GenerationMin;
  // sum_alive e^{-(V - alive_level)}, kept current by Stepper::step.
  double alive_mass = 1.0;
  double alive_level = 0.0;

  static Population root(double at = 0.0);
  [[nodiscard]] std::uint64_t size() const;
  [[nodiscard]] bool extinct() const { return positions.empty(); }
  /// sum over alive particles of e^{-(V - level)}, from the cached mass.
  [[nodiscard]] double residual(double level) const;
  /// Recomputes the cached alive mass from the positions.
  void refresh_mass();
};

struct GenStats {
  std::uint64_t n = 0;
  double M = kInf;  // min position, +inf if extinct
  double W = 0.0;   // sum e^{-V}
  double Z = 0.0;   // sum V e^{-V}
  std::uint64_t pop = 0;
  double truncated_mass = 0.0;
};

GenStats stats_of(const Population& pop);

/// Reusable scratch space for `step`; one per worker.
class Stepper {
 public:
  Stepper(const OffspringLaw& law, const SimConfig& cfg) : law_(law), cfg_(cfg) {}

  /// Every particle reproduces independently. Statistics are taken on the full
  /// offspring set; the barrier is applied afterwards and the killed e^{-V}
  /// mass is added to `pop.truncated_mass`. Throws PopulationOverflow when
  /// the offspring count exceeds `cfg.max_pop`.
  GenStats step(Population& pop, RandomStream& rng);

 private:
  const OffspringLaw& law_;
  const SimConfig& cfg_;
  std::vector<double> next_pos_;
  std::vector<std::uint64_t> next_cnt_;
  std::vector<double> children_;
  std::vector<std::size_t> order_;
};

GenStats step(Population& pop, const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng);

struct ReplicaOutcome {
  bool survived = false;
  double Z_hat = 0.0;        // Z_n at measure_n
  double M_centered = kInf;  // M_n - 3/2 log n
  double R_centered = kInf;  // R_n - 1/2 log n
  bool r_settled = false;
  std::uint64_t settle_generation = 0;
  double truncated_mass = 0.0;
  std::vector<GenStats> gen_stats;  // generations 0..last simulated
};

/// Evolves to cfg.measure_n, then keeps stepping with the barrier anchored at
/// the post-n record rho until kappa * sum_alive e^{-(V - rho)} <= eps_record,
/// extinction, or cfg.max_generation.
ReplicaOutcome run_trajectory(const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng,
                              bool keep_trajectory = true);

struct R0Sample {
  double value = 0.0;        // record, always <= 0
  double certificate = 0.0;  // final kappa-free residual sum_alive e^{-(V - record)}
  double truncated_mass = 0.0;
  bool settled = false;
  std::uint64_t generations = 0;
};

/// All-time minimum of a walk started from one particle at 0.
R0Sample sample_r0(const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng);

struct R0Pool {
  std::vector<double> samples;
  std::vector<double> residual_bounds;
  std::uint64_t unsettled = 0;

  [[nodiscard]] bool empty() const { return samples.empty(); }
  [[nodiscard]] std::size_t size() const { return samples.size(); }
};

/// R_n = min_{|u|=n} (V(u) + R_0^{(u)}) with independent R_0 copies drawn from
/// `pool`. +inf on extinction. Throws EmptyPool.
double two_stage_rn(const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng,
                    const R0Pool& pool);

/// min_{k >= n} M_k over a recorded trajectory, for every n; entry k of the
/// result corresponds to gen_stats[k].
std::vector<double> suffix_minima(std::span<const GenStats> trajectory);

// Parallel drivers. Replica i always uses RandomStream(derive_seed(seed, i)),
// so results do not depend on `workers`. Exceptions from a replica are
// rethrown with the replica index attached.

/// Called in replica-index order as results become available.
using ReplicaSink = std::function<void(std::uint64_t index, std::uint64_t seed,
                                       const ReplicaOutcome& outcome)>;

std::vector<ReplicaOutcome> run_replicas(const OffspringLaw& law, const SimConfig& cfg,
                                         std::uint64_t replicas, unsigned workers,
                                         bool keep_trajectory = false,
                                         const ReplicaSink& sink = {});

R0Pool build_r0_pool(const OffspringLaw& law, const SimConfig& cfg, std::uint64_t count,
                     unsigned workers);

/// Runs `task(i)` for i in [0, count) on `workers` threads. Indices are handed
/// out from a shared counter; the first exception is rethrown.
void parallel_for(std::uint64_t count, unsigned workers,
                  const std::function<void(std::uint64_t)>& task);

}  // namespace brw
