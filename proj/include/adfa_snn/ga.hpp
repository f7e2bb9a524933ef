#pragma once

// Real-coded genetic algorithm over PRFS coefficients (p_k, q_k).
//
// Each generation the two fittest individuals are crossed over and mutated;
// the child replaces the least fit non-elite. Fitness is a pure function of
// the coefficients, so each individual is evaluated once and the best
// fitness can never decrease.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adfa_snn/backward_fn.hpp"
#include "adfa_snn/parallel.hpp"
#include "adfa_snn/rng.hpp"

namespace adfa {

struct GaConfig {
  std::size_t population = 10;
  std::size_t generations = 20;
  std::size_t elite_count = 2;
  std::size_t fitness_epochs = 1;
  double mutation_rate = 0.2;
  double mutation_sigma = 0.1;
  std::uint64_t seed = 1;
  std::size_t k = 4;
  double omega = 0.01;
  double m = 1.0;
  std::size_t threads = 1;

  void validate() const {
    if (population < 3) throw ConfigError("ga.population must be >= 3");
    if (elite_count < 2 || elite_count >= population) throw ConfigError("ga.elite_count must be in [2, population)");
    if (generations < 1) throw ConfigError("ga.generations must be >= 1");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ConfigError("ga.mutation_rate must be in [0, 1]");
    if (!(mutation_sigma >= 0.0)) throw ConfigError("ga.mutation_sigma must be >= 0");
    if (k < 1) throw ConfigError("ga.k must be >= 1");
    if (!(omega > 0.0)) throw ConfigError("ga.omega must be > 0");
    if (!(m >= 0.0)) throw ConfigError("ga.m must be >= 0");
  }
};

// Uniform crossover: each coefficient position is taken from a or b with
// equal probability. The child keeps a's omega and shift.
inline Prfs crossover(const Prfs& a, const Prfs& b, std::uint64_t seed) {
  if (a.k() != b.k() || a.q.size() != b.q.size()) throw DimensionError("crossover: parents differ in k");
  if (a.omega != b.omega) throw ConfigError("crossover: parents differ in omega");
  Engine eng = make_engine(seed, {stream::kGa, 1});
  Prfs child = a;
  for (std::size_t i = 0; i < child.p.size(); ++i) {
    if (uniform01(eng) < 0.5) child.p[i] = b.p[i];
    if (uniform01(eng) < 0.5) child.q[i] = b.q[i];
  }
  if (child == a) return child;
  normalize(child);
  return child;
}

// Adds N(0, sigma^2) noise to each coefficient with probability `rate`, then
// renormalizes. Untouched specs are returned bit-exact.
inline Prfs mutate(const Prfs& spec, double rate, double sigma, std::uint64_t seed) {
  Engine eng = make_engine(seed, {stream::kGa, 2});
  Prfs out = spec;
  bool changed = false;
  auto touch = [&](double& v) {
    if (uniform01(eng) < rate) {
      v += sigma * normal01(eng);
      changed = true;
    }
  };
  for (auto& v : out.p) touch(v);
  for (auto& v : out.q) touch(v);
  out.m = std::abs(out.m);
  if (changed) {
    if (coefficient_l1(out) == 0.0) return spec;
    normalize(out);
  }
  return out;
}

inline Prfs mutate(const Prfs& spec, const GaConfig& cfg, std::uint64_t seed) {
  return mutate(spec, cfg.mutation_rate, cfg.mutation_sigma, seed);
}

struct GaGeneration {
  std::size_t generation = 0;
  std::vector<std::size_t> ids;
  std::vector<double> fitness;
  std::size_t best_id = 0;
  double best_fitness = 0.0;
  Prfs best;

  double median() const {
    std::vector<double> f = fitness;
    std::sort(f.begin(), f.end());
    const std::size_t n = f.size();
    return n % 2 ? f[n / 2] : 0.5 * (f[n / 2 - 1] + f[n / 2]);
  }
};

struct GaRecord {
  std::vector<GaGeneration> generations;
  std::vector<std::string> log;  // failed evaluations

  // generation,individual_id,fitness
  std::string to_csv() const {
    std::ostringstream os;
    os << "generation,individual_id,fitness\n";
    os.setf(std::ios::fixed);
    os.precision(6);
    for (const auto& g : generations) {
      for (std::size_t i = 0; i < g.ids.size(); ++i) os << g.generation << ',' << g.ids[i] << ',' << g.fitness[i] << '\n';
    }
    return os.str();
  }

  std::string best_snapshots() const {
    std::string s;
    for (const auto& g : generations) {
      s += "# generation " + std::to_string(g.generation) + " best individual " + std::to_string(g.best_id) +
           " fitness " + format_double(g.best_fitness) + "\n";
      s += to_text(g.best, "gen" + std::to_string(g.generation) + ".backward.");
    }
    return s;
  }
};

struct GaResult {
  Prfs best;
  double best_fitness = 0.0;
  GaRecord record;
};

using FitnessFn = std::function<double(const Prfs&)>;

inline GaResult evolve(const GaConfig& cfg, const FitnessFn& fitness) {
  cfg.validate();
  struct Member {
    Prfs spec;
    double fitness = 0.0;
    std::size_t id = 0;
  };
  GaRecord rec;
  auto safe_fitness = [&](const Prfs& s, std::string& err) {
    try {
      const double f = fitness(s);
      if (std::isfinite(f)) return f;
      err = "non-finite fitness";
    } catch (const std::exception& e) {
      err = e.what();
    }
    return 0.0;
  };

  std::vector<Member> pop(cfg.population);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    pop[i].spec = sample_prfs(derive_seed(cfg.seed, {stream::kGa, 0, i}), cfg.k, cfg.omega, cfg.m);
    pop[i].id = i;
  }
  std::vector<std::string> errors(pop.size());
  parallel_for(pop.size(), cfg.threads, [&](std::size_t i) { pop[i].fitness = safe_fitness(pop[i].spec, errors[i]); });
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!errors[i].empty()) rec.log.push_back("individual " + std::to_string(i) + ": " + errors[i]);
  }
  std::size_t next_id = pop.size();

  // Indices sorted by fitness descending; ties keep the lower index first.
  auto ranking = [&] {
    std::vector<std::size_t> r(pop.size());
    std::iota(r.begin(), r.end(), std::size_t{0});
    std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return pop[a].fitness > pop[b].fitness; });
    return r;
  };

  for (std::size_t g = 0; g < cfg.generations; ++g) {
    const auto rank = ranking();
    GaGeneration gen;
    gen.generation = g;
    for (const auto& m : pop) {
      gen.ids.push_back(m.id);
      gen.fitness.push_back(m.fitness);
    }
    gen.best_id = pop[rank[0]].id;
    gen.best_fitness = pop[rank[0]].fitness;
    gen.best = pop[rank[0]].spec;
    rec.generations.push_back(std::move(gen));
    if (g + 1 == cfg.generations) break;

    const std::uint64_t gseed = derive_seed(cfg.seed, {stream::kGa, 1, g});
    Prfs child = crossover(pop[rank[0]].spec, pop[rank[1]].spec, gseed);
    child = mutate(child, cfg, gseed);
    // Least fit outside the elite set; the last in ranking order.
    const std::size_t worst = rank.back();
    Member m{child, 0.0, next_id++};
    std::string err;
    m.fitness = safe_fitness(m.spec, err);
    if (!err.empty()) rec.log.push_back("individual " + std::to_string(m.id) + ": " + err);
    pop[worst] = std::move(m);
  }

  const auto rank = ranking();
  return {pop[rank[0]].spec, pop[rank[0]].fitness, std::move(rec)};
}

}  // namespace adfa
