// adfa_snn: command-line front end for training, evaluation, GA search and sweeps.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "adfa_snn/adfa_snn.hpp"

namespace fs = std::filesystem;
using namespace adfa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Invocation {
  std::string command;
  Config config;
  std::map<std::string, std::string> args;
  std::string out_dir;
};

void write_text(const fs::path& p, const std::string& body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw DataError("cannot write " + p.string());
  os << body;
}

std::string arg(const Invocation& inv, const std::string& key, const std::string& fallback = "") {
  const auto it = inv.args.find(key);
  return it == inv.args.end() ? fallback : it->second;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void write_manifest(const Invocation& inv, const std::map<std::string, std::string>& info) {
  if (inv.out_dir.empty()) return;
  RunManifest m;
  m.command = inv.command;
  m.config = inv.config;
  m.out_dir = inv.out_dir;
  m.created = utc_timestamp();
  m.args = inv.args;
  m.extra = info;
  write_text(fs::path(inv.out_dir) / "manifest.txt", m.to_text());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// "lif" | "config" | "prfs:seed=N" | "<family>:key=value;key=value"
BackwardFnSpec parse_named_spec(const std::string& s, const Config& cfg) {
  const auto colon = s.find(':');
  const std::string fam = text::trim(s.substr(0, colon));
  if (fam == "config") return cfg.backward();
  std::map<std::string, std::string> kv;
  if (colon != std::string::npos) {
    for (const auto& item : text::split(s.substr(colon + 1), ';')) {
      if (text::trim(item).empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("spec '" + s + "': expected key=value, got '" + item + "'");
      kv[text::trim(item.substr(0, eq))] = text::trim(item.substr(eq + 1));
    }
  }
  if (fam == "prfs" && kv.count("seed")) {
    const auto seed = text::parse_uint("seed", kv["seed"]);
    const auto k = kv.count("k") ? text::parse_uint("k", kv["k"]) : cfg.uinteger("eta.k");
    const double omega = kv.count("omega") ? text::parse_double("omega", kv["omega"]) : cfg.num("eta.omega");
    const double m = kv.count("m") ? text::parse_double("m", kv["m"]) : cfg.num("eta.m");
    return sample_prfs(seed, k, omega, m);
  }
  std::map<std::string, std::string> fields{{"g.family", fam}};
  for (const auto& [k, v] : kv) fields["g." + k] = v;
  return from_fields(fields, "g.", cfg.lif());
}

// ---- commands ------------------------------------------------------------------------

int cmd_train(const Invocation& inv) {
  const Config& cfg = inv.config;
  const TrainConfig tc = cfg.train();
  const auto t_load = std::chrono::steady_clock::now();
  const LoadedData data = load_data(cfg);
  const double load_ms = elapsed_ms(t_load);
  NetworkState net = init_network(cfg.topology(), cfg.init());
  const auto fb_before = checksum(net.feedback);
  std::map<std::string, std::string> info{{"load_ms", fmt(load_ms)},
                                          {"input_scale", format_double(data.scale)},
                                          {"input_second_moment", format_double(data.train_second_moment)}};
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec = train(net, data.train, data.test, tc, [&](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << " train_acc " << fmt(e.train_acc) << " test_acc " << fmt(e.test_acc)
              << " wall_ms " << fmt(e.wall_ms) << std::endl;
    info["epoch" + std::to_string(e.epoch) + "_wall_ms"] = fmt(e.wall_ms);
  });
  info["train_wall_ms"] = fmt(elapsed_ms(t0));
  if (checksum(net.feedback) != fb_before) throw NumericError("feedback matrices changed during training");
  rec.fingerprint = cfg.fingerprint();
  if (!inv.out_dir.empty()) {
    const fs::path out(inv.out_dir);
    write_text(out / "train.csv", rec.to_csv());
    if (arg(inv, "save_checkpoint") == "true") save_checkpoint(net, (out / "network.bin").string());
    write_manifest(inv, info);
  }
  std::cout << "final test_acc " << fmt(rec.final_test_acc()) << " fingerprint " << rec.fingerprint << std::endl;
  return kExitOk;
}

int cmd_eval(const Invocation& inv) {
  const Config& cfg = inv.config;
  const std::string ckpt = arg(inv, "checkpoint");
  if (ckpt.empty()) throw ConfigError("eval needs --checkpoint");
  const NetworkState net = load_checkpoint(ckpt);
  const LoadedData data = load_data(cfg);
  const TrainConfig tc = cfg.train();
  const double train_acc = evaluate(net, data.train, tc);
  const double test_acc = evaluate(net, data.test, tc);
  if (!inv.out_dir.empty()) {
    std::string csv = "split,samples,accuracy\n";
    csv += "train," + std::to_string(data.train.size()) + "," + fmt(train_acc) + "\n";
    csv += "test," + std::to_string(data.test.size()) + "," + fmt(test_acc) + "\n";
    write_text(fs::path(inv.out_dir) / "eval.csv", csv);
    write_manifest(inv, {});
  }
  std::cout << "train_acc " << fmt(train_acc) << " test_acc " << fmt(test_acc) << std::endl;
  return kExitOk;
}

int cmd_ga(const Invocation& inv) {
  const Config& cfg = inv.config;
  const GaConfig gc = ga_config(cfg);
  Config base = cfg;
  base.set("train.threads", "1");  // parallelism lives across individuals
  const auto t0 = std::chrono::steady_clock::now();
  const GaResult res = evolve(gc, training_fitness(base, training_runner()));
  for (const auto& g : res.record.generations) {
    std::cout << "generation " << g.generation << " best " << fmt(g.best_fitness) << " median " << fmt(g.median())
              << std::endl;
  }
  for (const auto& l : res.record.log) std::cerr << "ga: " << l << "\n";
  if (!inv.out_dir.empty()) {
    const fs::path out(inv.out_dir);
    write_text(out / "ga.csv", res.record.to_csv());
    write_text(out / "ga_best.txt", res.record.best_snapshots());
    write_text(out / "best.txt", to_text(res.best, "backward."));
    write_manifest(inv, {{"wall_ms", fmt(elapsed_ms(t0))}});
  }
  std::cout << "best fitness " << fmt(res.best_fitness) << std::endl;
  return kExitOk;
}

std::vector<Mechanism> parse_mechanisms(const std::string& s) {
  std::vector<Mechanism> out;
  for (const auto& m : text::split(s, ',')) {
    if (!text::trim(m).empty()) out.push_back(parse_mechanism(text::trim(m)));
  }
  if (out.empty()) throw ConfigError("--mechanisms: empty list");
  return out;
}

int cmd_sweep(const Invocation& inv) {
  const Config& cfg = inv.config;
  const std::string kind = arg(inv, "kind", "grid");
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out(inv.out_dir);
  if (kind == "grid") {
    SweepSpec spec = sweep_from_config(cfg);
    spec.out_dir = inv.out_dir;
    spec.base.set("train.threads", "1");
    const auto res = run_sweep(spec, training_runner());
    std::cout << res.to_csv(spec);
  } else if (kind == "eta-bins") {
    const auto res = eta_binned_experiment(cfg, parse_mechanisms(arg(inv, "mechanisms", "adfa,bp")), training_runner());
    std::cout << res.to_csv();
    if (!inv.out_dir.empty()) write_text(out / ("eta_bins-" + cfg.fingerprint() + ".csv"), res.to_csv());
  } else if (kind == "width") {
    const auto pts = width_magnitude_scan(cfg, training_runner(), cfg.positive("sweep.trials"));
    std::cout << magnitude_csv(pts);
    if (!inv.out_dir.empty()) write_text(out / ("width-" + cfg.fingerprint() + ".csv"), magnitude_csv(pts));
  } else {
    throw ConfigError("--kind must be grid, eta-bins or width");
  }
  write_manifest(inv, {{"wall_ms", fmt(elapsed_ms(t0))}});
  return kExitOk;
}

int cmd_eta_hist(const Invocation& inv) {
  const Config& cfg = inv.config;
  const auto samples = sample_etas(cfg.positive("eta.samples"), cfg.uinteger("eta.seed"), cfg.positive("eta.k"),
                                   cfg.num("eta.omega"), cfg.num("eta.m"), cfg.lif(), cfg.correlation());
  const std::string hist = eta_histogram_csv(samples, cfg.positive("eta.hist_bins"));
  double lo = samples.front().eta, hi = lo;
  for (const auto& s : samples) {
    lo = std::min(lo, s.eta);
    hi = std::max(hi, s.eta);
  }
  if (!inv.out_dir.empty()) {
    std::string all = "index,seed,eta\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
      all += std::to_string(i) + "," + std::to_string(samples[i].seed) + "," + format_double(samples[i].eta) + "\n";
    }
    write_text(fs::path(inv.out_dir) / "eta_hist.csv", hist);
    write_text(fs::path(inv.out_dir) / "eta_samples.csv", all);
    write_manifest(inv, {});
  }
  std::cout << hist << "eta min " << fmt(lo) << " max " << fmt(hi) << std::endl;
  return kExitOk;
}

int cmd_corr(const Invocation& inv) {
  const Config& cfg = inv.config;
  const auto g = parse_named_spec(arg(inv, "g", "config"), cfg);
  const auto ref = parse_named_spec(arg(inv, "ref", "lif"), cfg);
  const double eta = correlation(g, ref, cfg.correlation());
  if (!inv.out_dir.empty()) {
    write_text(fs::path(inv.out_dir) / "corr.csv", "g,ref,eta\n" + family_name(g) + "," + family_name(ref) + "," +
                                                       format_double(eta) + "\n");
    write_manifest(inv, {});
  }
  std::cout << "eta " << format_double(eta) << std::endl;
  return kExitOk;
}

int dispatch(const Invocation& inv) {
  inv.config.validate();
  if (inv.command == "train") return cmd_train(inv);
  if (inv.command == "eval") return cmd_eval(inv);
  if (inv.command == "ga") return cmd_ga(inv);
  if (inv.command == "sweep") return cmd_sweep(inv);
  if (inv.command == "eta-hist") return cmd_eta_hist(inv);
  if (inv.command == "corr") return cmd_corr(inv);
  throw ConfigError("unknown command '" + inv.command + "'");
}

// Shared flags: config sources and overrides, applied in order
// preset < --config file < named flags < --set.
struct CommonFlags {
  std::string preset = "paper";
  std::vector<std::string> config_files;
  std::vector<std::string> sets;
  std::string data_dir;
  std::string out;
  int threads = 0;
  std::map<std::string, std::string> named;  // filled by per-command flags
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--preset", f.preset, "Base preset (paper|desk)")->capture_default_str();
  app->add_option("--config", f.config_files, "Config file(s) of key=value lines");
  app->add_option("--set", f.sets, "Override one key, e.g. --set lif.dt=0.5");
  app->add_option("--data-dir", f.data_dir, std::string("Directory with MNIST-style IDX files (or $") + kDataDirEnv + ")");
  app->add_option("--out", f.out, "Output directory for CSVs and the manifest");
  app->add_option("--threads", f.threads, "Worker threads");
}

Config resolve(const CommonFlags& f) {
  Config c = Config::preset(f.preset);
  for (const auto& file : f.config_files) c.merge_text(text::read_file(file), file);
  if (!f.data_dir.empty()) c.set("data.dir", f.data_dir);
  if (f.threads > 0) {
    c.set("train.threads", std::to_string(f.threads));
    c.set("sweep.threads", std::to_string(f.threads));
  }
  // backward.family first so that its parameters land after the switch.
  const auto fam = f.named.find("backward.family");
  if (fam != f.named.end()) c.set(fam->first, fam->second);
  for (const auto& [k, v] : f.named) {
    if (k != "backward.family") c.set(k, v);
  }
  std::map<std::string, std::string> sets;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    const std::string k = text::trim(s.substr(0, eq));
    if (k == "backward.family") c.set(k, text::trim(s.substr(eq + 1)));
    else sets[k] = text::trim(s.substr(eq + 1));
  }
  c.merge(sets);
  // An explicit non-surrogate g with bp/fa/dfa is the g-override experiment and must be asked for.
  const bool explicit_g = fam != f.named.end() || sets.count("backward.family") ||
                          std::any_of(f.sets.begin(), f.sets.end(),
                                      [](const std::string& s) { return s.rfind("backward.family", 0) == 0; });
  if (explicit_g && c.get("train.mechanism") != "adfa" && c.get("backward.family") != "lif" &&
      !c.flag("train.allow_g_override")) {
    throw ConfigError("backward.family=" + c.get("backward.family") + " with train.mechanism=" +
                      c.get("train.mechanism") + " requires --allow-g-override");
  }
  return c;
}

void require_data(const Config& c, const char* command) {
  if (c.data_dir().empty()) {
    throw ConfigError(std::string(command) + ": no dataset directory; pass --data-dir or set " + kDataDirEnv);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking network training with DFA-family learning rules"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags f;
  std::map<std::string, std::string> args;

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a network and report per-epoch accuracy");
  add_common(train_cmd, f);
  std::string mechanism, backward, omega, theta, center, width, height, dims, epochs, lr, gamma;
  bool allow_override = false, save_ckpt = false;
  auto add_training_flags = [&](CLI::App* c) {
    c->add_option("--mechanism", mechanism, "bp|fa|dfa|adfa");
    c->add_option("--backward", backward, "Backward function family: lif|prfs|gaussian|opto");
    c->add_option("--omega", omega, "Opto or PRFS omega");
    c->add_option("--theta", theta, "Opto phase");
    c->add_option("--height", height, "Gaussian height a");
    c->add_option("--center", center, "Gaussian center b");
    c->add_option("--width", width, "Gaussian width c");
    c->add_option("--dims", dims, "Layer sizes, e.g. 784,100,10");
    c->add_option("--epochs", epochs, "Training epochs");
    c->add_option("--lr", lr, "Base learning rate or 'auto'");
    c->add_option("--gamma", gamma, "Feedback scale");
    c->add_flag("--allow-g-override", allow_override, "Permit a non-surrogate g with bp/fa/dfa");
  };
  add_training_flags(train_cmd);
  train_cmd->add_flag("--save-checkpoint", save_ckpt, "Write network.bin to the output directory");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved network");
  add_common(eval_cmd, f);
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "Network file written by train --save-checkpoint")->required();

  auto* ga_cmd = app.add_subcommand("ga", "Evolve PRFS coefficients with a genetic algorithm");
  add_common(ga_cmd, f);
  std::string population, generations;
  ga_cmd->add_option("--population", population, "Population size");
  ga_cmd->add_option("--generations", generations, "Generations");
  ga_cmd->add_option("--dims", dims, "Layer sizes");
  ga_cmd->add_option("--gamma", gamma, "Feedback scale");

  auto* sweep_cmd = app.add_subcommand("sweep", "Grid sweep, correlation-binned study or width scan");
  add_common(sweep_cmd, f);
  std::string kind = "grid", mechanisms = "adfa,bp", trials;
  std::vector<std::string> axes;
  sweep_cmd->add_option("--kind", kind, "grid|eta-bins|width")->capture_default_str();
  sweep_cmd->add_option("--axis", axes, "key:v1,v2 | key:lin:start:stop:step | key:log:lo:hi:count");
  sweep_cmd->add_option("--trials", trials, "Trials per point");
  sweep_cmd->add_option("--mechanisms", mechanisms, "Mechanisms for --kind eta-bins")->capture_default_str();
  add_training_flags(sweep_cmd);

  auto* hist_cmd = app.add_subcommand("eta-hist", "Histogram of PRFS correlation with the surrogate derivative");
  add_common(hist_cmd, f);
  std::string samples;
  hist_cmd->add_option("--samples", samples, "Number of PRFS draws");

  auto* corr_cmd = app.add_subcommand("corr", "Correlation between two backward functions");
  add_common(corr_cmd, f);
  std::string g_spec = "config", ref_spec = "lif";
  corr_cmd->add_option("--g", g_spec, "Spec: lif | config | prfs:seed=N | opto:omega=0.1;theta=150 | ...")
      ->capture_default_str();
  corr_cmd->add_option("--ref", ref_spec, "Reference spec")->capture_default_str();

  auto* rerun_cmd = app.add_subcommand("rerun", "Re-execute a run from its manifest");
  std::string manifest_path, rerun_out, rerun_data;
  rerun_cmd->add_option("manifest", manifest_path, "manifest.txt")->required();
  rerun_cmd->add_option("--out", rerun_out, "Output directory (default: the original one)");
  rerun_cmd->add_option("--data-dir", rerun_data, "Override the dataset directory");

  auto* presets_cmd = app.add_subcommand("presets", "Print a resolved preset");
  std::string preset_name = "paper";
  presets_cmd->add_option("name", preset_name, "paper|desk")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    Invocation inv;
    if (*presets_cmd) {
      std::cout << Config::preset(preset_name).to_text();
      return kExitOk;
    }
    if (*rerun_cmd) {
      const RunManifest m = RunManifest::from_text(text::read_file(manifest_path), manifest_path);
      inv.command = m.command;
      inv.config = m.config;
      inv.args = m.args;
      inv.out_dir = rerun_out.empty() ? m.out_dir : rerun_out;
      if (!rerun_data.empty()) inv.config.set("data.dir", rerun_data);
      if (inv.command != "corr" && inv.command != "eta-hist") require_data(inv.config, "rerun");
      return dispatch(inv);
    }

    auto put = [&](const std::string& key, const std::string& v) {
      if (!v.empty()) f.named[key] = v;
    };
    put("train.mechanism", mechanism);
    put("backward.family", backward);
    put("backward.omega", omega);
    put("backward.theta", theta);
    put("backward.a", height);
    put("backward.b", center);
    put("backward.c", width);
    put("net.dims", dims);
    put("train.epochs", epochs);
    put("train.lr", lr);
    put("init.gamma", gamma);
    put("ga.population", population);
    put("ga.generations", generations);
    put("sweep.trials", trials);
    put("eta.samples", samples);
    if (allow_override) f.named["train.allow_g_override"] = "true";
    for (std::size_t i = 0; i < axes.size(); ++i) f.named["sweep.axis" + std::to_string(i + 1)] = axes[i];

    for (auto* sub : app.get_subcommands()) inv.command = sub->get_name();
    inv.config = resolve(f);
    inv.out_dir = f.out;
    if (inv.command == "train" && save_ckpt) inv.args["save_checkpoint"] = "true";
    if (inv.command == "eval") inv.args["checkpoint"] = fs::absolute(checkpoint).string();
    if (inv.command == "sweep") {
      inv.args["kind"] = kind;
      if (kind == "eta-bins") inv.args["mechanisms"] = mechanisms;
    }
    if (inv.command == "corr") {
      inv.args["g"] = g_spec;
      inv.args["ref"] = ref_spec;
    }
    if (inv.command != "corr" && inv.command != "eta-hist") require_data(inv.config, inv.command.c_str());
    if (!inv.out_dir.empty()) inv.out_dir = fs::absolute(inv.out_dir).string();
    return dispatch(inv);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
