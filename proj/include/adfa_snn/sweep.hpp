#pragma once

// Batch experiments: Cartesian grid sweeps over config keys, the
// correlation-binned feasibility study and the width order-of-magnitude scan.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "adfa_snn/backward_fn.hpp"
#include "adfa_snn/config.hpp"
#include "adfa_snn/ga.hpp"
#include "adfa_snn/parallel.hpp"
#include "adfa_snn/trainer.hpp"

namespace adfa {

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

// "key:v1,v2,..."  |  "key:lin:start:stop:step"  |  "key:log:lo:hi:count"
inline SweepAxis parse_axis(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("sweep axis '" + spec + "': expected key:values");
  SweepAxis ax;
  ax.key = text::trim(spec.substr(0, colon));
  const std::string rest = spec.substr(colon + 1);
  const auto parts = text::split(rest, ':');
  if (parts.size() == 4 && parts[0] == "lin") {
    const double a = text::parse_double(ax.key, parts[1]);
    const double b = text::parse_double(ax.key, parts[2]);
    const double st = text::parse_double(ax.key, parts[3]);
    if (!(st > 0.0) || b < a) throw ConfigError("sweep axis " + ax.key + ": bad linear range");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / st + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) ax.values.push_back(format_double(a + st * static_cast<double>(i)));
  } else if (parts.size() == 4 && parts[0] == "log") {
    const double a = text::parse_double(ax.key, parts[1]);
    const double b = text::parse_double(ax.key, parts[2]);
    const auto n = text::parse_uint(ax.key, parts[3]);
    if (!(a > 0.0) || !(b >= a) || n < 1) throw ConfigError("sweep axis " + ax.key + ": bad log range");
    for (std::uint64_t i = 0; i < n; ++i) {
      const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      ax.values.push_back(format_double(a * std::pow(b / a, f)));
    }
  } else {
    for (const auto& v : text::split(rest, ',')) {
      if (!v.empty()) ax.values.push_back(v);
    }
  }
  if (ax.values.empty()) throw ConfigError("sweep axis " + ax.key + ": no values");
  return ax;
}

struct SweepSpec {
  std::vector<SweepAxis> axes;
  std::size_t trials = 5;
  Config base;
  std::string out_dir;  // empty: nothing persisted
  std::size_t threads = 1;

  void validate() const {
    if (axes.empty()) throw ConfigError("sweep needs at least one axis");
    if (trials < 1) throw ConfigError("sweep.trials must be >= 1");
    for (const auto& ax : axes) {
      for (const auto& v : ax.values) {
        Config c = base;
        c.set(ax.key, v);
        c.validate();
      }
    }
  }

  std::size_t point_count() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }

  // Axis values of point `index`, last axis fastest.
  std::vector<std::string> point(std::size_t index) const {
    std::vector<std::string> v(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      v[a] = axes[a].values[index % axes[a].values.size()];
      index /= axes[a].values.size();
    }
    return v;
  }
};

// Reads sweep.axis1, sweep.axis2, ... in numeric order.
inline SweepSpec sweep_from_config(const Config& cfg) {
  SweepSpec s;
  s.base = cfg;
  std::map<std::uint64_t, std::string> axes;
  for (const auto& [k, v] : cfg.values()) {
    if (k.rfind("sweep.axis", 0) == 0) axes[text::parse_uint(k, k.substr(10))] = v;
  }
  for (const auto& [i, v] : axes) s.axes.push_back(parse_axis(v));
  s.trials = cfg.positive("sweep.trials");
  s.threads = cfg.positive("sweep.threads");
  return s;
}

struct Stats {
  std::size_t n = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
};

inline Stats summarize(std::vector<double> v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.min = v.front();
  s.max = v.back();
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

struct PointResult {
  std::vector<std::string> values;
  std::vector<double> accuracies;  // successful trials
  std::vector<std::string> failures;
  Stats stats;
};

// Returns the final test accuracy of one configured run.
using TrialRunner = std::function<double(const Config&)>;

// Config for trial `t`: network and training seeds derived from the base seeds.
inline Config trial_config(const Config& base, std::size_t trial) {
  Config c = base;
  c.set("net.seed", std::to_string(derive_seed(base.uinteger("net.seed"), {stream::kTrial, trial}) >> 1));
  c.set("train.seed", std::to_string(derive_seed(base.uinteger("train.seed"), {stream::kTrial, trial}) >> 1));
  return c;
}

// Loads each distinct dataset configuration once and trains on it.
class TrainingRunner {
 public:
  double operator()(const Config& cfg) {
    const LoadedData& data = dataset(cfg);
    NetworkState net = init_network(cfg.topology(), cfg.init());
    TrainConfig tc = cfg.train();
    tc.threads = 1;
    return train(net, data.train, data.test, tc).final_test_acc();
  }

  const LoadedData& dataset(const Config& cfg) {
    const std::string key = cfg.data_dir() + "|" + cfg.get("data.train_limit") + "|" + cfg.get("data.test_limit") +
                            "|" + cfg.get("data.input_mean");
    std::lock_guard lock(mu_);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, std::make_shared<LoadedData>(load_data(cfg))).first;
    return *it->second;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<LoadedData>> cache_;
};

inline TrialRunner training_runner() {
  auto r = std::make_shared<TrainingRunner>();
  return [r](const Config& c) { return (*r)(c); };
}

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  os << body;
}

inline std::string fixed6(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

struct SweepResult {
  std::vector<PointResult> points;
  std::string fingerprint;

  // axis columns..., trials, failures, mean, min, max
  std::string to_csv(const SweepSpec& spec) const {
    std::string s;
    for (const auto& a : spec.axes) s += a.key + ",";
    s += "trials,failures,mean_acc,min_acc,max_acc\n";
    for (const auto& p : points) {
      for (const auto& v : p.values) s += v + ",";
      s += std::to_string(p.accuracies.size()) + "," + std::to_string(p.failures.size()) + "," +
           detail::fixed6(p.stats.mean) + "," + detail::fixed6(p.stats.min) + "," + detail::fixed6(p.stats.max) + "\n";
    }
    return s;
  }

  // Mean accuracy matrix for 2-axis sweeps: rows follow axis 1, columns axis 2.
  std::string heatmap_csv(const SweepSpec& spec) const {
    if (spec.axes.size() != 2) return {};
    const auto& a1 = spec.axes[0];
    const auto& a2 = spec.axes[1];
    std::string s = a1.key + "\\" + a2.key;
    for (const auto& v : a2.values) s += "," + v;
    s += "\n";
    for (std::size_t i = 0; i < a1.values.size(); ++i) {
      s += a1.values[i];
      for (std::size_t j = 0; j < a2.values.size(); ++j) s += "," + detail::fixed6(points[i * a2.values.size() + j].stats.mean);
      s += "\n";
    }
    return s;
  }
};

// Runs every grid point `trials` times. Points share no state, so they may run
// in any order or in parallel; each point is persisted to its own file.
inline SweepResult run_sweep(const SweepSpec& spec, const TrialRunner& runner) {
  spec.validate();
  SweepResult res;
  res.fingerprint = spec.base.fingerprint();
  res.points.resize(spec.point_count());
  namespace fs = std::filesystem;
  parallel_for(res.points.size(), spec.threads, [&](std::size_t idx) {
    PointResult& pr = res.points[idx];
    pr.values = spec.point(idx);
    Config point_cfg = spec.base;
    for (std::size_t a = 0; a < spec.axes.size(); ++a) point_cfg.set(spec.axes[a].key, pr.values[a]);
    std::string csv = "trial,test_acc,error\n";
    for (std::size_t t = 0; t < spec.trials; ++t) {
      try {
        const double acc = runner(trial_config(point_cfg, t));
        pr.accuracies.push_back(acc);
        csv += std::to_string(t) + "," + detail::fixed6(acc) + ",\n";
      } catch (const std::exception& e) {
        pr.failures.push_back(e.what());
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        csv += std::to_string(t) + ",," + msg + "\n";
      }
    }
    pr.stats = summarize(pr.accuracies);
    if (!spec.out_dir.empty()) {
      detail::write_file(fs::path(spec.out_dir) / "points" / ("point-" + std::to_string(idx) + ".csv"), csv);
    }
  });
  if (!spec.out_dir.empty()) {
    const fs::path dir(spec.out_dir);
    detail::write_file(dir / ("sweep-" + res.fingerprint + ".csv"), res.to_csv(spec));
    if (spec.axes.size() == 2) detail::write_file(dir / ("heatmap-" + res.fingerprint + ".csv"), res.heatmap_csv(spec));
  }
  return res;
}

// ---- correlation histogram ---------------------------------------------------

struct EtaSample {
  std::uint64_t seed = 0;
  Prfs spec;
  double eta = 0.0;
};

// Draws n PRFS at `omega` and correlates each with the LIF surrogate.
inline std::vector<EtaSample> sample_etas(std::size_t n, std::uint64_t seed, std::size_t k, double omega, double m,
                                          const LifParams& lif, const CorrelationConfig& cc) {
  const auto nodes = quadrature_nodes(cc);
  const auto ref = centered_samples(LifSurrogate{lif}, cc, nodes);
  std::vector<EtaSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].seed = derive_seed(seed, {stream::kPrfs, i});
    out[i].spec = sample_prfs(out[i].seed, k, omega, m);
    out[i].eta = correlation(centered_samples(out[i].spec, cc, nodes), ref, cc);
  }
  return out;
}

// bin_lo,bin_hi,count,density over `bins` equal bins spanning [-1, 1].
inline std::string eta_histogram_csv(const std::vector<EtaSample>& samples, std::size_t bins) {
  std::vector<double> edges(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(bins);
  std::vector<double> etas;
  for (const auto& s : samples) etas.push_back(s.eta);
  const auto b = bin_etas(etas, edges);
  const double width = 2.0 / static_cast<double>(bins);
  std::string out = "bin_lo,bin_hi,count,density\n";
  for (std::size_t i = 0; i < bins; ++i) {
    const double dens = static_cast<double>(b.members[i].size()) / (static_cast<double>(samples.size()) * width);
    out += detail::fixed6(edges[i]) + "," + detail::fixed6(edges[i + 1]) + "," + std::to_string(b.members[i].size()) +
           "," + detail::fixed6(dens) + "\n";
  }
  return out;
}

// ---- correlation-binned feasibility ----------------------------------------------

struct BinOutcome {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t available = 0;  // PRFS samples that fell in the bin
  bool sparse = false;        // fewer than requested
  std::vector<double> etas;   // of the selected functions
  std::map<std::string, std::vector<double>> accuracies;  // by mechanism name
};

struct EtaBinnedResult {
  std::vector<BinOutcome> bins;
  std::size_t overflow = 0;

  // bin_lo,bin_hi,mechanism,available,selected,mean,min,max,median,sparse
  std::string to_csv() const {
    std::string s = "bin_lo,bin_hi,mechanism,available,selected,mean_acc,min_acc,max_acc,median_acc,sparse\n";
    for (const auto& b : bins) {
      for (const auto& [mech, acc] : b.accuracies) {
        const auto st = summarize(acc);
        s += detail::fixed6(b.lo) + "," + detail::fixed6(b.hi) + "," + mech + "," + std::to_string(b.available) + "," +
             std::to_string(b.etas.size()) + "," + detail::fixed6(st.mean) + "," + detail::fixed6(st.min) + "," +
             detail::fixed6(st.max) + "," + detail::fixed6(st.median) + "," + (b.sparse ? "1" : "0") + "\n";
      }
    }
    return s;
  }
};

// Samples PRFS, bins them by correlation with the surrogate derivative, picks
// `per_bin` per bin at random and trains each with every mechanism in `mechanisms`.
inline EtaBinnedResult eta_binned_experiment(const Config& base, const std::vector<Mechanism>& mechanisms,
                                             const TrialRunner& runner) {
  const auto samples = sample_etas(base.positive("eta.samples"), base.uinteger("eta.seed"), base.positive("eta.k"),
                                   base.num("eta.omega"), base.num("eta.m"), base.lif(), base.correlation());
  std::vector<double> etas;
  for (const auto& s : samples) etas.push_back(s.eta);
  const auto bins = bin_etas(etas, base.list("eta.edges"));
  const std::size_t per_bin = base.positive("eta.per_bin");
  EtaBinnedResult res;
  res.overflow = bins.overflow.size();
  Engine pick = make_engine(base.uinteger("eta.seed"), {stream::kSelect});
  for (std::size_t b = 0; b < bins.bin_count(); ++b) {
    BinOutcome bo;
    bo.lo = bins.edges[b];
    bo.hi = bins.edges[b + 1];
    std::vector<std::size_t> members = bins.members[b];
    bo.available = members.size();
    bo.sparse = members.size() < per_bin;
    // Partial Fisher-Yates: the first `take` entries become the selection.
    const std::size_t take = std::min(per_bin, members.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform01(pick) * static_cast<double>(members.size() - i));
      std::swap(members[i], members[std::min(j, members.size() - 1)]);
    }
    for (std::size_t i = 0; i < take; ++i) bo.etas.push_back(samples[members[i]].eta);
    for (auto mech : mechanisms) {
      auto& accs = bo.accuracies[to_string(mech)];
      for (std::size_t i = 0; i < take; ++i) {
        Config c = trial_config(base, i);
        c.merge(to_fields(samples[members[i]].spec, "backward."));
        c.set("train.mechanism", to_string(mech));
        c.set("train.allow_g_override", "true");
        try {
          accs.push_back(runner(c));
        } catch (const std::exception&) {
          accs.push_back(0.0);
        }
      }
    }
    res.bins.push_back(std::move(bo));
  }
  return res;
}

// ---- width order-of-magnitude scan -------------------------------------------------

struct MagnitudePoint {
  int exponent = 0;
  double value = 0.0;
  double eta = 0.0;
  bool eta_defined = true;
  Stats accuracy;
  std::vector<double> accuracies;
};

// Gaussian: c = 10^e (height/center from backward.*); Opto: omega = 10^e.
inline BackwardFnSpec magnitude_spec(const std::string& family, double value, const Config& base) {
  if (family == "gaussian") {
    Gaussian g;
    if (base.get("backward.family") == "gaussian") g = std::get<Gaussian>(base.backward());
    g.c = value;
    return g;
  }
  if (family == "opto") {
    Opto o;
    if (base.get("backward.family") == "opto") o = std::get<Opto>(base.backward());
    o.omega = value;
    return o;
  }
  throw ConfigError("scan.family must be gaussian or opto");
}

inline std::vector<MagnitudePoint> width_magnitude_scan(const Config& base, const TrialRunner& runner,
                                                        std::size_t trials) {
  const std::string family = base.get("scan.family");
  const auto cc = base.correlation();
  const BackwardFnSpec ref = LifSurrogate{base.lif()};
  std::vector<MagnitudePoint> out;
  for (double e : base.list("scan.exponents")) {
    MagnitudePoint mp;
    mp.exponent = static_cast<int>(std::lround(e));
    mp.value = std::pow(10.0, e);
    const auto spec = magnitude_spec(family, mp.value, base);
    try {
      mp.eta = correlation(spec, ref, cc);
    } catch (const UndefinedCorrelation&) {
      mp.eta_defined = false;
    }
    for (std::size_t t = 0; t < trials; ++t) {
      Config c = trial_config(base, t);
      c.merge(to_fields(spec, "backward."));
      c.set("train.mechanism", "adfa");
      try {
        mp.accuracies.push_back(runner(c));
      } catch (const std::exception&) {
        mp.accuracies.push_back(0.0);
      }
    }
    mp.accuracy = summarize(mp.accuracies);
    out.push_back(std::move(mp));
  }
  return out;
}

inline std::string magnitude_csv(const std::vector<MagnitudePoint>& pts) {
  std::string s = "exponent,value,eta,mean_acc,min_acc,max_acc\n";
  for (const auto& p : pts) {
    s += std::to_string(p.exponent) + "," + format_double(p.value) + "," + (p.eta_defined ? detail::fixed6(p.eta) : "nan") +
         "," + detail::fixed6(p.accuracy.mean) + "," + detail::fixed6(p.accuracy.min) + "," +
         detail::fixed6(p.accuracy.max) + "\n";
  }
  return s;
}

// ---- GA wiring -------------------------------------------------------------------

inline GaConfig ga_config(const Config& c) {
  GaConfig g;
  g.population = c.positive("ga.population");
  g.generations = c.positive("ga.generations");
  g.elite_count = c.positive("ga.elite_count");
  g.fitness_epochs = c.positive("ga.fitness_epochs");
  g.mutation_rate = c.num("ga.mutation_rate");
  g.mutation_sigma = c.num("ga.mutation_sigma");
  g.seed = c.uinteger("ga.seed");
  g.k = c.positive("ga.k");
  g.omega = c.num("ga.omega");
  g.m = c.num("ga.m");
  g.threads = c.positive("train.threads");
  g.validate();
  return g;
}

// Fitness = test accuracy after ga.fitness_epochs of aDFA training. Every
// evaluation starts from the same network initialization (net.seed).
inline FitnessFn training_fitness(const Config& base, const TrialRunner& runner) {
  return [base, runner](const Prfs& spec) {
    Config c = base;
    c.merge(to_fields(spec, "backward."));
    c.set("train.mechanism", "adfa");
    c.set("train.epochs", base.get("ga.fitness_epochs"));
    return runner(c);
  };
}

}  // namespace adfa
