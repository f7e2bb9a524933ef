#pragma once

// Flat dotted-key configuration (`lif.dt=0.25`), presets, fingerprints and
// run manifests.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adfa_snn/backward_fn.hpp"
#include "adfa_snn/dataset.hpp"
#include "adfa_snn/error.hpp"
#include "adfa_snn/text.hpp"
#include "adfa_snn/topology.hpp"
#include "adfa_snn/trainer.hpp"

namespace adfa {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kDataDirEnv = "ADFA_DATA_DIR";

// Every recognized key with its `paper` preset value. backward.* and
// sweep.axis* keys are validated separately.
inline const std::map<std::string, std::string>& config_defaults() {
  static const std::map<std::string, std::string> d{
      {"data.dir", ""},
      {"data.train_limit", "0"},
      {"data.test_limit", "0"},
      {"data.input_mean", "8"},
      {"net.dims", "784,1000,10"},
      {"net.seed", "1"},
      {"init.v_mean", "8"},
      {"init.v_second", "164"},
      {"init.alpha", "0.066"},
      {"init.bias", "0.8"},
      {"init.gamma", "0.0338"},
      {"lif.h_th", "0.4"},
      {"lif.dt", "0.25"},
      {"lif.t_ref", "1"},
      {"lif.tau", "20"},
      {"train.mechanism", "adfa"},
      {"train.epochs", "20"},
      {"train.batch_size", "100"},
      {"train.interval_ms", "100"},
      {"train.settle_ms", "20"},
      {"train.lr", "auto"},
      {"train.seed", "1"},
      {"train.shuffle", "true"},
      {"train.threads", "1"},
      {"train.allow_g_override", "false"},
      {"backward.family", "opto"},
      {"ga.population", "10"},
      {"ga.generations", "20"},
      {"ga.elite_count", "2"},
      {"ga.fitness_epochs", "1"},
      {"ga.mutation_rate", "0.2"},
      {"ga.mutation_sigma", "0.1"},
      {"ga.seed", "1"},
      {"ga.k", "4"},
      {"ga.omega", "0.01"},
      {"ga.m", "1"},
      {"eta.samples", "10000"},
      {"eta.omega", "0.01"},
      {"eta.k", "4"},
      {"eta.m", "1"},
      {"eta.seed", "1"},
      {"eta.edges", "-0.6,-0.4,-0.2,0,0.2,0.4,0.6"},
      {"eta.hist_bins", "24"},
      {"eta.per_bin", "5"},
      {"corr.lo", "-100"},
      {"corr.hi", "100"},
      {"corr.step", "0.01"},
      {"sweep.trials", "5"},
      {"sweep.threads", "1"},
      {"scan.family", "gaussian"},
      {"scan.exponents", "-2,-1,0,1,2"},
  };
  return d;
}

// Base learning rate for train.lr=auto, from a desk-preset grid (2 epochs,
// lr in {0.03, 0.1, 0.3, 1, 3}). f' is an order of magnitude smaller than the
// opto/gaussian/prfs functions, hence the split. aDFA with f' is the DFA rule and
// takes its rate.
inline double default_lr(Mechanism m, const BackwardFnSpec& g) {
  switch (m) {
    case Mechanism::kBP: return 1.0;
    case Mechanism::kFA: return 1.0;
    case Mechanism::kDFA: return 1.0;
    case Mechanism::kADFA: return std::holds_alternative<LifSurrogate>(g) ? 1.0 : 0.1;
  }
  return 0.1;
}

inline const std::map<std::string, std::map<std::string, std::string>>& preset_overrides() {
  static const std::map<std::string, std::map<std::string, std::string>> p{
      {"paper", {}},
      {"desk",
       {{"net.dims", "784,100,10"}, {"data.train_limit", "10000"}, {"data.test_limit", "2000"}, {"train.epochs", "5"}}},
  };
  return p;
}

class Config {
 public:
  Config() : values_(config_defaults()) {
    values_["backward.omega"] = "0.1";
    values_["backward.theta"] = "150";
  }

  static Config preset(const std::string& name) {
    const auto it = preset_overrides().find(name);
    if (it == preset_overrides().end()) throw ConfigError("unknown preset '" + name + "' (paper|desk)");
    Config c;
    c.merge(it->second);
    return c;
  }

  static std::vector<std::string> preset_names() {
    std::vector<std::string> n;
    for (const auto& [k, v] : preset_overrides()) n.push_back(k);
    return n;
  }

  // Applies overrides; switching backward.family drops the old family's parameters.
  void merge(const std::map<std::string, std::string>& overrides) {
    const auto fam = overrides.find("backward.family");
    if (fam != overrides.end() && fam->second != values_.at("backward.family")) {
      for (auto it = values_.begin(); it != values_.end();) {
        if (it->first.rfind("backward.", 0) == 0 && it->first != "backward.family") {
          it = values_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (const auto& [k, v] : overrides) values_[k] = v;
    check_keys();
  }

  void merge_text(const std::string& body, const std::string& origin) { merge(text::parse_lines(body, origin)); }

  void set(const std::string& key, const std::string& value) { merge({{key, value}}); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }
  double num(const std::string& key) const { return text::parse_double(key, get(key)); }
  std::int64_t integer(const std::string& key) const { return text::parse_int(key, get(key)); }
  std::uint64_t uinteger(const std::string& key) const { return text::parse_uint(key, get(key)); }
  bool flag(const std::string& key) const { return text::parse_bool(key, get(key)); }
  std::vector<double> list(const std::string& key) const { return text::parse_list(key, get(key)); }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string to_text() const {
    std::string s;
    for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
    return s;
  }

  // Stable hash of the resolved tree. Keys that cannot change results
  // (data location, worker counts) are left out.
  std::string fingerprint() const {
    std::string s;
    for (const auto& [k, v] : values_) {
      if (k == "data.dir" || k == "train.threads" || k == "sweep.threads") continue;
      s += k + "=" + v + "\n";
    }
    return text::fnv1a_hex(s);
  }

  // ---- typed views ----------------------------------------------------------

  LifParams lif() const {
    LifParams p;
    p.h_th = num("lif.h_th");
    p.dt = num("lif.dt");
    p.t_ref = num("lif.t_ref");
    p.tau = num("lif.tau");
    p.validate();
    return p;
  }

  NetworkTopology topology() const {
    NetworkTopology t;
    t.layer_dims.clear();
    for (double d : list("net.dims")) {
      if (!(d >= 1.0) || d != std::floor(d)) throw ConfigError("net.dims: entries must be positive integers");
      t.layer_dims.push_back(static_cast<std::size_t>(d));
    }
    t.seed = uinteger("net.seed");
    t.validate();
    return t;
  }

  InitStats init() const {
    InitStats s;
    s.v_mean = num("init.v_mean");
    s.v_second = num("init.v_second");
    s.alpha = num("init.alpha");
    s.bias_init = num("init.bias");
    s.gamma = num("init.gamma");
    s.validate();
    return s;
  }

  BackwardFnSpec backward() const { return from_fields(values_, "backward.", lif()); }

  TrainConfig train() const {
    TrainConfig c;
    c.mechanism = parse_mechanism(get("train.mechanism"));
    c.lif = lif();
    c.backward = backward();
    c.allow_g_override = flag("train.allow_g_override");
    // BP, FA and DFA use the surrogate derivative unless the override is on.
    if (c.mechanism != Mechanism::kADFA && !c.allow_g_override) c.backward = LifSurrogate{c.lif};
    c.epochs = positive("train.epochs", true);
    c.batch_size = positive("train.batch_size");
    c.interval_ms = num("train.interval_ms");
    c.settle_ms = num("train.settle_ms");
    c.lr_base = get("train.lr") == "auto" ? default_lr(c.mechanism, c.backward) : num("train.lr");
    c.seed = uinteger("train.seed");
    c.shuffle = flag("train.shuffle");
    c.threads = positive("train.threads");
    c.validate();
    return c;
  }

  CorrelationConfig correlation() const {
    CorrelationConfig c;
    c.lo = num("corr.lo");
    c.hi = num("corr.hi");
    c.step = num("corr.step");
    c.validate();
    return c;
  }

  // data.dir, falling back to $ADFA_DATA_DIR.
  std::string data_dir() const {
    std::string d = get("data.dir");
    if (d.empty()) {
      if (const char* env = std::getenv(kDataDirEnv)) d = env;
    }
    return d;
  }

  std::size_t positive(const std::string& key, bool allow_zero = false) const {
    const auto v = integer(key);
    if (v < (allow_zero ? 0 : 1)) throw ConfigError(key + " must be " + (allow_zero ? ">= 0" : ">= 1"));
    return static_cast<std::size_t>(v);
  }

  // Parses every view once so that bad values fail up front with the key name.
  void validate() const {
    check_keys();
    (void)topology();
    (void)init();
    (void)train();
    (void)correlation();
    (void)num("data.input_mean");
    (void)uinteger("data.train_limit");
    (void)uinteger("data.test_limit");
  }

 private:
  void check_keys() const {
    const auto& known = config_defaults();
    const auto fam_it = values_.find("backward.family");
    const std::string fam = fam_it == values_.end() ? "" : fam_it->second;
    std::set<std::string> fam_keys;
    if (!fam.empty()) {
      for (const auto& k : family_keys(fam)) fam_keys.insert("backward." + k);
    }
    for (const auto& [k, v] : values_) {
      if (known.count(k) || fam_keys.count(k)) continue;
      if (k.rfind("sweep.axis", 0) == 0 && k.size() > 10) continue;
      if (k.rfind("backward.", 0) == 0) {
        throw ConfigError("unknown config key '" + k + "' for backward.family=" + fam);
      }
      throw ConfigError("unknown config key '" + k + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

struct LoadedData {
  Dataset train;
  Dataset test;
  double scale = 1.0;
  double train_second_moment = 0.0;
};

// Loads both splits from data_dir(), truncates per the limits and scales by
// the train-split factor.
inline LoadedData load_data(const Config& cfg) {
  const std::string dir = cfg.data_dir();
  if (dir.empty()) {
    throw DataError(std::string("no dataset directory: pass --data-dir or set ") + kDataDirEnv);
  }
  const auto paths = idx_paths(dir);
  Dataset train = load_idx(paths.train_images, paths.train_labels, Split::kTrain).head(cfg.uinteger("data.train_limit"));
  Dataset test = load_idx(paths.test_images, paths.test_labels, Split::kTest).head(cfg.uinteger("data.test_limit"));
  auto s = scale_inputs(std::move(train), std::move(test), cfg.num("data.input_mean"));
  return {std::move(s.train), std::move(s.test), s.factor, s.train_second_moment};
}

// ---- manifests --------------------------------------------------------------

struct RunManifest {
  std::string command;
  Config config;
  std::string out_dir;
  std::string created;
  std::map<std::string, std::string> args;   // command arguments that are not config keys
  std::map<std::string, std::string> extra;  // timings and other run facts, never read back as config

  std::string to_text() const {
    std::string s;
    s += "manifest.command=" + command + "\n";
    s += "manifest.version=" + std::string(kVersion) + "\n";
    s += "manifest.created=" + created + "\n";
    s += "manifest.fingerprint=" + config.fingerprint() + "\n";
    s += "manifest.out_dir=" + out_dir + "\n";
    for (const auto& [k, v] : args) s += "manifest.arg." + k + "=" + v + "\n";
    for (const auto& [k, v] : extra) s += "manifest.info." + k + "=" + v + "\n";
    s += config.to_text();
    return s;
  }

  static RunManifest from_text(const std::string& body, const std::string& origin) {
    auto kv = text::parse_lines(body, origin);
    RunManifest m;
    std::map<std::string, std::string> cfg;
    for (const auto& [k, v] : kv) {
      if (k.rfind("manifest.", 0) == 0) {
        if (k == "manifest.command") m.command = v;
        else if (k == "manifest.out_dir") m.out_dir = v;
        else if (k == "manifest.created") m.created = v;
        else if (k.rfind("manifest.arg.", 0) == 0) m.args[k.substr(13)] = v;
        else if (k.rfind("manifest.info.", 0) == 0) m.extra[k.substr(14)] = v;
        continue;
      }
      cfg[k] = v;
    }
    if (m.command.empty()) throw ConfigError(origin + ": manifest has no manifest.command");
    m.config.merge(cfg);
    return m;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace adfa
