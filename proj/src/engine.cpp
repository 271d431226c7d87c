#include "brw/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "brw/errors.hpp"
#include "brw/summation.hpp"

namespace brw {

void SimConfig::validate() const {
  if (!(barrier > 0.0) || !std::isfinite(barrier)) throw InvalidConfig("barrier: must be positive");
  if (measure_n < 1) throw InvalidConfig("measure_n: must be at least 1");
  if (!(eps_record > 0.0 && eps_record < 1.0))
    throw InvalidConfig("eps_record: must lie strictly between 0 and 1");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InvalidConfig("kappa: must be positive");
  if (max_generation <= measure_n)
    throw InvalidConfig("max_generation: must exceed measure_n");
  if (max_pop < 1) throw InvalidConfig("max_pop: must be at least 1");
}

Population Population::root(double at) {
  Population p;
  p.positions = {at};
  p.counts = {1};
  p.record = at;
  p.alive_level = at;
  return p;
}

std::uint64_t Population::size() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

double Population::residual(double level) const {
  if (positions.empty()) return 0.0;
  return alive_mass * std::exp(alive_level - level);
}

void Population::refresh_mass() {
  alive_level = positions.empty() ? 0.0 : *std::min_element(positions.begin(), positions.end());
  CompensatedSum s;
  for (std::size_t i = 0; i < positions.size(); ++i)
    s += double(counts[i]) * std::exp(-(positions[i] - alive_level));
  alive_mass = s.value();
}

GenStats stats_of(const Population& pop) {
  GenStats g;
  g.n = pop.generation;
  g.truncated_mass = pop.truncated_mass;
  CompensatedSum w, z;
  for (std::size_t i = 0; i < pop.positions.size(); ++i) {
    const double x = pop.positions[i];
    const double k = double(pop.counts[i]);
    const double e = std::exp(-x);
    g.M = std::min(g.M, x);
    w += k * e;
    z += k * x * e;
    g.pop += pop.counts[i];
  }
  g.W = w.value();
  g.Z = z.value();
  return g;
}

GenStats Stepper::step(Population& pop, RandomStream& rng) {
  next_pos_.clear();
  next_cnt_.clear();
  std::uint64_t total = 0;
  auto overflow = [this](std::uint64_t count) {
    if (count > cfg_.max_pop)
      throw PopulationOverflow("offspring count exceeds max_pop = " +
                               std::to_string(cfg_.max_pop));
  };

  const auto* iid = std::get_if<IidBranch>(&law_.form());
  const auto* gauss = iid ? std::get_if<Gaussian>(&iid->displacement) : nullptr;
  const auto* fixed = iid ? std::get_if<DeterministicCount>(&iid->count) : nullptr;

  if (gauss != nullptr && fixed != nullptr) {
    // Hot path: fixed branching with Gaussian steps.
    const double mean = gauss->mean;
    const double sd = std::sqrt(gauss->variance);
    const std::uint32_t k = fixed->k;
    total = pop.size() * k;
    overflow(total);
    next_pos_.reserve(total);
    for (std::size_t i = 0; i < pop.positions.size(); ++i) {
      const double x = pop.positions[i] + mean;
      for (std::uint64_t r = 0; r < pop.counts[i]; ++r)
        for (std::uint32_t c = 0; c < k; ++c) next_pos_.push_back(x + sd * rng.normal());
    }
    next_cnt_.assign(next_pos_.size(), 1);
  } else if (iid != nullptr) {
    for (std::size_t i = 0; i < pop.positions.size(); ++i) {
      for (std::uint64_t r = 0; r < pop.counts[i]; ++r) {
        children_.clear();
        law_.sample(rng, children_);
        total += children_.size();
        overflow(total);
        for (double c : children_) next_pos_.push_back(pop.positions[i] + c);
      }
    }
    next_cnt_.assign(next_pos_.size(), 1);
  } else {
    // Explicit law: split each cluster of k identical parents multinomially
    // over the atoms; the children of one atom stay merged.
    const auto& atoms = std::get<ExplicitLaw>(law_.form()).atoms;
    for (std::size_t i = 0; i < pop.positions.size(); ++i) {
      std::uint64_t remaining = pop.counts[i];
      double mass_left = 1.0;
      for (std::size_t j = 0; j < atoms.size() && remaining > 0; ++j) {
        std::uint64_t kj = remaining;
        if (j + 1 < atoms.size()) {
          const double p = std::clamp(atoms[j].probability / mass_left, 0.0, 1.0);
          kj = remaining == 1 ? std::uint64_t(rng.uniform() < p) : rng.binomial(remaining, p);
          mass_left -= atoms[j].probability;
        }
        remaining -= kj;
        if (kj == 0) continue;
        total += kj * atoms[j].children.size();
        overflow(total);
        for (double c : atoms[j].children) {
          next_pos_.push_back(pop.positions[i] + c);
          next_cnt_.push_back(kj);
        }
      }
    }
    // Merge coincident positions.
    order_.resize(next_pos_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(),
              [this](std::size_t a, std::size_t b) { return next_pos_[a] < next_pos_[b]; });
    std::vector<double> merged_pos;
    std::vector<std::uint64_t> merged_cnt;
    merged_pos.reserve(order_.size());
    merged_cnt.reserve(order_.size());
    for (std::size_t idx : order_) {
      if (!merged_pos.empty() && merged_pos.back() == next_pos_[idx]) {
        merged_cnt.back() += next_cnt_[idx];
      } else {
        merged_pos.push_back(next_pos_[idx]);
        merged_cnt.push_back(next_cnt_[idx]);
      }
    }
    next_pos_.swap(merged_pos);
    next_cnt_.swap(merged_cnt);
  }

  pop.generation += 1;
  GenStats g;
  g.n = pop.generation;
  g.pop = total;
  if (next_pos_.empty()) {
    pop.positions.clear();
    pop.counts.clear();
    pop.alive_mass = 0.0;
    g.truncated_mass = pop.truncated_mass;
    return g;
  }

  g.M = *std::min_element(next_pos_.begin(), next_pos_.end());
  pop.record = std::min(pop.record, g.M);
  const double level = pop.anchor == BarrierAnchor::Record ? pop.record : g.M;
  const double cutoff = level + cfg_.barrier;

  // Weights are taken relative to M so that none of them underflows; each
  // particle costs a single exp. Partial sums run over short blocks and are
  // folded into compensated totals.
  CompensatedSum w, z, alive, killed;
  pop.positions.clear();
  pop.counts.clear();
  constexpr std::size_t kBlock = 128;
  const std::size_t total_n = next_pos_.size();
  for (std::size_t start = 0; start < total_n; start += kBlock) {
    const std::size_t stop = std::min(total_n, start + kBlock);
    double bw = 0.0, bz = 0.0, balive = 0.0, bkilled = 0.0;
    for (std::size_t i = start; i < stop; ++i) {
      const double x = next_pos_[i];
      const double ke = double(next_cnt_[i]) * std::exp(g.M - x);
      bw += ke;
      bz += x * ke;
      if (x <= cutoff) {
        pop.positions.push_back(x);
        pop.counts.push_back(next_cnt_[i]);
        balive += ke;
      } else {
        bkilled += ke;
      }
    }
    w += bw;
    z += bz;
    alive += balive;
    killed += bkilled;
  }
  const double scale = std::exp(-g.M);
  g.W = w.value() * scale;
  g.Z = z.value() * scale;
  pop.alive_mass = alive.value();
  pop.alive_level = g.M;
  pop.truncated_mass += killed.value() * scale;
  g.truncated_mass = pop.truncated_mass;
  return g;
}

GenStats step(Population& pop, const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng) {
  Stepper stepper(law, cfg);
  return stepper.step(pop, rng);
}

ReplicaOutcome run_trajectory(const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng,
                              bool keep_trajectory) {
  cfg.validate();
  Stepper stepper(law, cfg);
  Population pop = Population::root(0.0);
  ReplicaOutcome out;
  if (keep_trajectory) out.gen_stats.push_back(stats_of(pop));

  const std::uint64_t n = cfg.measure_n;
  GenStats at_n;
  while (pop.generation < n && !pop.extinct()) {
    at_n = stepper.step(pop, rng);
    if (keep_trajectory) out.gen_stats.push_back(at_n);
  }
  out.truncated_mass = pop.truncated_mass;
  if (pop.extinct()) {
    out.survived = false;
    out.r_settled = true;
    out.settle_generation = pop.generation;
    return out;
  }

  const double log_n = std::log(double(n));
  out.survived = true;
  out.Z_hat = at_n.Z;
  out.M_centered = at_n.M - 1.5 * log_n;

  pop.anchor = BarrierAnchor::Record;
  pop.record = at_n.M;
  for (;;) {
    if (pop.extinct() || cfg.kappa * pop.residual(pop.record) <= cfg.eps_record) {
      out.r_settled = true;
      break;
    }
    if (pop.generation >= cfg.max_generation) break;
    const GenStats g = stepper.step(pop, rng);
    if (keep_trajectory) out.gen_stats.push_back(g);
  }
  out.settle_generation = pop.generation;
  out.R_centered = pop.record - 0.5 * log_n;
  out.truncated_mass = pop.truncated_mass;
  return out;
}

R0Sample sample_r0(const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng) {
  cfg.validate();
  Stepper stepper(law, cfg);
  Population pop = Population::root(0.0);
  pop.anchor = BarrierAnchor::Record;
  R0Sample out;
  for (;;) {
    const double residual = pop.residual(pop.record);
    if (pop.extinct() || cfg.kappa * residual <= cfg.eps_record) {
      out.settled = true;
      out.certificate = residual;
      break;
    }
    if (pop.generation >= cfg.max_generation) {
      out.certificate = residual;
      break;
    }
    stepper.step(pop, rng);
  }
  out.value = pop.record;
  out.truncated_mass = pop.truncated_mass;
  out.generations = pop.generation;
  return out;
}

double two_stage_rn(const OffspringLaw& law, const SimConfig& cfg, RandomStream& rng,
                    const R0Pool& pool) {
  if (pool.empty()) throw EmptyPool("two_stage_rn: R0 pool is empty");
  cfg.validate();
  Stepper stepper(law, cfg);
  Population pop = Population::root(0.0);
  while (pop.generation < cfg.measure_n && !pop.extinct()) stepper.step(pop, rng);
  double best = kInf;
  for (std::size_t i = 0; i < pop.positions.size(); ++i)
    for (std::uint64_t r = 0; r < pop.counts[i]; ++r)
      best = std::min(best, pop.positions[i] + pool.samples[rng.index(pool.size())]);
  return best;
}

std::vector<double> suffix_minima(std::span<const GenStats> trajectory) {
  std::vector<double> out(trajectory.size(), kInf);
  double running = kInf;
  for (std::size_t i = trajectory.size(); i-- > 0;) {
    running = std::min(running, trajectory[i].M);
    out[i] = running;
  }
  return out;
}

void parallel_for(std::uint64_t count, unsigned workers,
                  const std::function<void(std::uint64_t)>& task) {
  workers = std::max(1u, workers);
  std::atomic<std::uint64_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::uint64_t first_index = ~std::uint64_t{0};

  auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (i < first_index) {
          first_index = i;
          first_error = std::current_exception();
        }
        next.store(count);
        return;
      }
    }
  };

  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<ReplicaOutcome> run_replicas(const OffspringLaw& law, const SimConfig& cfg,
                                         std::uint64_t replicas, unsigned workers,
                                         bool keep_trajectory, const ReplicaSink& sink) {
  cfg.validate();
  std::vector<ReplicaOutcome> results(replicas);
  std::vector<char> done(replicas, 0);
  std::uint64_t next_emit = 0;
  std::mutex emit_mu;

  parallel_for(replicas, workers, [&](std::uint64_t i) {
    const std::uint64_t seed = derive_seed(cfg.seed, i);
    RandomStream rng(seed);
    try {
      results[i] = run_trajectory(law, cfg, rng, keep_trajectory);
    } catch (const std::exception& e) {
      throw ReplicaError(i, e.what());
    }
    std::lock_guard lock(emit_mu);
    done[i] = 1;
    while (next_emit < replicas && done[next_emit]) {
      if (sink) sink(next_emit, derive_seed(cfg.seed, next_emit), results[next_emit]);
      ++next_emit;
    }
  });
  return results;
}

R0Pool build_r0_pool(const OffspringLaw& law, const SimConfig& cfg, std::uint64_t count,
                     unsigned workers) {
  std::vector<R0Sample> draws(count);
  parallel_for(count, workers, [&](std::uint64_t i) {
    RandomStream rng(derive_seed(cfg.seed, stream_tag::kR0Pool + i));
    try {
      draws[i] = sample_r0(law, cfg, rng);
    } catch (const std::exception& e) {
      throw ReplicaError(i, e.what());
    }
  });
  R0Pool pool;
  pool.samples.reserve(count);
  pool.residual_bounds.reserve(count);
  for (const auto& d : draws) {
    pool.samples.push_back(d.value);
    pool.residual_bounds.push_back(d.certificate);
    if (!d.settled) ++pool.unsettled;
  }
  return pool;
}

}  // namespace brw
