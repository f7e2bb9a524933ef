// Acceptance runner: one PASS/FAIL/SKIP line per criterion.
//
//   adfa_acceptance [--only 1,2,...] [--data-dir DIR] [--fmnist-dir DIR] [--cli PATH] [--work DIR]
//
// Exit status is 1 if any selected criterion fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adfa_snn/adfa_snn.hpp"

using namespace adfa;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kFail;
  std::string detail;
};

struct Options {
  std::set<int> only;
  std::string data_dir;
  std::string fmnist_dir;
  std::string cli;
  fs::path work;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

Outcome pass(std::string d) { return {Status::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::kSkip, std::move(d)}; }

void progress(const std::string& s) {
  std::cerr << "  .. " << s << std::endl;
}

Config desk(const Options& o) {
  Config c = Config::preset("desk");
  c.set("data.dir", o.data_dir);
  return c;
}

std::uint64_t state_hash(const NetworkState& net) {
  std::vector<Matrix> all = net.weights;
  for (const auto& b : net.biases) all.push_back(b);
  return checksum(all);
}

// ---- 1 ----------------------------------------------------------------------

Outcome c1_oracle(const Options& o) {
  if (o.data_dir.empty()) return skip("no MNIST directory");
  Config base = desk(o);
  base.set("train.epochs", "3");
  const LoadedData data = load_data(base);

  auto run = [&](const std::string& mech, const std::string& fam) {
    Config c = base;
    c.set("train.mechanism", mech);
    c.set("backward.family", fam);
    NetworkState net = init_network(c.topology(), c.init());
    TrainConfig tc = c.train();
    std::vector<std::uint64_t> traj;
    for (std::size_t ep = 0; ep < tc.epochs; ++ep) {
      train_epoch(net, data.train, tc, ep, [&](const NetworkState& n) { traj.push_back(state_hash(n)); });
      progress(mech + " epoch " + std::to_string(ep + 1));
    }
    return std::make_pair(traj, net);
  };
  const auto [ta, na] = run("adfa", "lif");
  const auto [td, nd] = run("dfa", "lif");
  if (ta.size() != td.size() || ta.empty()) return fail("trajectory lengths differ");
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i] != td[i]) return fail("trajectories diverge at minibatch " + std::to_string(i + 1));
  }
  for (std::size_t l = 0; l < na.weights.size(); ++l) {
    if (na.weights[l] != nd.weights[l] || na.biases[l] != nd.biases[l]) return fail("final weights differ");
  }
  return pass(std::to_string(ta.size()) + " minibatch states identical over 3 epochs");
}

// ---- 2 ----------------------------------------------------------------------

Outcome c2_lif(const Options&) {
  const LifParams p;
  const double v = 4.0;
  // h_n = v (1 - (1-q)^n): smallest n with h_n >= h_th.
  const int expect_first = static_cast<int>(std::ceil(std::log(1.0 - p.h_th / v) / std::log(1.0 - p.leak())));
  LayerState s(1);
  const Vector drive = Vector::Constant(1, v);
  std::vector<int> spikes;
  std::vector<double> h;
  std::vector<int> pinned;
  for (int t = 1; t <= 100; ++t) {
    auto [ns, sv] = integrate_step(s, drive, p);
    s = std::move(ns);
    if (sv[0]) spikes.push_back(t);
    h.push_back(s.membrane[0]);
    pinned.push_back(s.refractory_remaining[0]);
  }
  if (expect_first != 9) return fail("geometric recursion gives " + std::to_string(expect_first));
  if (spikes.empty() || spikes[0] != 9) return fail("first spike at " + (spikes.empty() ? "none" : std::to_string(spikes[0])));
  // After each spike: exactly 4 silent pinned steps with h = 0, then integration resumes from 0.
  for (int sp : spikes) {
    if (sp + 5 > 100) break;
    for (int k = 1; k <= 4; ++k) {
      const int t = sp + k;
      if (std::find(spikes.begin(), spikes.end(), t) != spikes.end() || h[t - 1] != 0.0) {
        return fail("neuron active " + std::to_string(k) + " steps after spike at " + std::to_string(sp));
      }
    }
    if (!(h[sp + 5 - 1] > 0.0)) return fail("integration did not resume 5 steps after spike " + std::to_string(sp));
  }
  for (std::size_t i = 1; i < spikes.size(); ++i) {
    if (spikes[i] - spikes[i - 1] != 4 + 9) return fail("interspike interval " + std::to_string(spikes[i] - spikes[i - 1]));
  }
  return pass("first spike step 9, " + std::to_string(spikes.size()) + " spikes each followed by 4 pinned steps");
}

// ---- 3 ----------------------------------------------------------------------

Outcome c3_surrogate(const Options&) {
  // 30-digit evaluation of the surrogate at a = 0.8 (h_th 0.4, t_ref 1, tau 20).
  const double ref = 0.1131697478985070183287679;
  const double got = eval(LifSurrogate{}, 0.8);
  if (!(std::abs(got - ref) <= 1e-9)) return fail("f'(0.8) = " + fmt(got, 15));
  for (int i = 0; i <= 100000; ++i) {
    const double a = -100.0 + 100.4 * i / 100000.0;
    if (eval(LifSurrogate{}, std::min(a, 0.4)) != 0.0) return fail("f'(" + fmt(a, 6) + ") != 0");
  }
  if (eval(LifSurrogate{}, 0.4) != 0.0) return fail("f'(0.4) != 0");
  return pass("f'(0.8) = " + fmt(got, 12) + ", |err| = " + fmt(std::abs(got - ref), 15) + "; zero on [-100, 0.4]");
}

// ---- 4 ----------------------------------------------------------------------

Outcome c4_eta(const Options&) {
  const CorrelationConfig cc;
  const double self = correlation(LifSurrogate{}, LifSurrogate{}, cc);
  if (!(std::abs(self - 1.0) <= 1e-9)) return fail("eta(f', f') = " + fmt(self, 12));

  const auto nodes = quadrature_nodes(cc);
  const auto ref = centered_samples(LifSurrogate{}, cc, nodes);
  double worst = 0.0;
  Engine eng = make_engine(20240611, {});
  for (int i = 0; i < 100; ++i) {
    const Prfs g = sample_prfs(derive_seed(77, {static_cast<std::uint64_t>(i)}), 4, 0.01);
    const double a = 0.1 + 9.9 * uniform01(eng);
    const double b = -5.0 + 10.0 * uniform01(eng);
    auto vals = detail::sample_fn(g, nodes);
    const double e0 = correlation(centered_values(vals, cc), ref, cc);
    for (auto& y : vals) y = a * y + b;
    const double e1 = correlation(centered_values(vals, cc), ref, cc);
    worst = std::max(worst, std::abs(e1 - e0));
  }
  if (!(worst <= 1e-6)) return fail("affine invariance error " + fmt(worst, 9));

  const auto s = sample_etas(10000, 1, 4, 0.01, 1.0, LifParams{}, cc);
  double lo = 1.0, hi = -1.0;
  const std::size_t nb = 24;
  std::vector<std::size_t> hist(nb, 0);
  for (const auto& e : s) {
    lo = std::min(lo, e.eta);
    hi = std::max(hi, e.eta);
    const auto k = std::min<std::size_t>(nb - 1, static_cast<std::size_t>((e.eta + 1.0) / 2.0 * nb));
    ++hist[k];
  }
  // Unimodal up to sampling noise: moving away from the mode, no bin may exceed
  // the running minimum by more than 3 Poisson standard deviations.
  const std::size_t mode = static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  bool unimodal = true;
  auto walk = [&](int dir) {
    double run_min = static_cast<double>(hist[mode]);
    for (int i = static_cast<int>(mode) + dir; i >= 0 && i < static_cast<int>(nb); i += dir) {
      const double c = static_cast<double>(hist[static_cast<std::size_t>(i)]);
      if (c > run_min + 3.0 * std::sqrt(std::max(1.0, run_min))) unimodal = false;
      run_min = std::min(run_min, c);
    }
  };
  walk(-1);
  walk(+1);
  std::string h;
  for (auto c : hist) h += std::to_string(c) + " ";
  const std::string d = "self " + fmt(self, 12) + ", affine max err " + fmt(worst, 10) + ", eta range [" + fmt(lo, 3) +
                        ", " + fmt(hi, 3) + "], histogram " + h;
  if (!(lo < -0.5 && hi > 0.5)) return fail("range too narrow: " + d);
  if (!unimodal) return fail("histogram not unimodal: " + d);
  return pass(d);
}

// ---- 5 ----------------------------------------------------------------------

Outcome c5_desk(const Options& o) {
  if (o.data_dir.empty()) return skip("no MNIST directory");
  Config c = desk(o);
  c.set("data.train_limit", "0");
  c.set("data.test_limit", "0");
  c.set("train.mechanism", "adfa");
  c.merge({{"backward.family", "opto"}, {"backward.omega", "0.1"}, {"backward.theta", "150"}});
  c.set("init.gamma", "0.03");
  c.set("train.epochs", "5");
  const LoadedData data = load_data(c);
  NetworkState net = init_network(c.topology(), c.init());
  const auto rec = train(net, data.train, data.test, c.train(),
                         [](const EpochRecord& e) { progress("epoch " + std::to_string(e.epoch) + " test " + fmt(e.test_acc)); });
  const double acc = rec.final_test_acc();
  const std::string d = "test accuracy " + fmt(100 * acc, 2) + "% (gate 93%)";
  return acc >= 0.93 ? pass(d) : fail(d);
}

// ---- 6 ----------------------------------------------------------------------

Outcome c6_full_scale(const Options& o) {
  if (o.data_dir.empty()) return skip("no MNIST directory");
  struct Case {
    std::string name, dir;
    std::map<std::string, std::string> set;
    double target, tol;
  };
  std::vector<Case> cases{
      {"mnist opto", o.data_dir, {{"backward.family", "opto"}, {"backward.omega", "0.1"}, {"backward.theta", "150"}}, 0.9810, 0.005},
      {"mnist gaussian", o.data_dir, {{"backward.family", "gaussian"}, {"backward.b", "0.4"}, {"backward.c", "13"}}, 0.9766, 0.005},
      {"fmnist opto", o.fmnist_dir, {{"backward.family", "opto"}, {"backward.omega", "0.1"}, {"backward.theta", "160"}}, 0.8734, 0.010},
  };
  std::string d;
  bool ok = true, missing = false;
  for (const auto& cs : cases) {
    if (cs.dir.empty()) {
      d += cs.name + ": no dataset; ";
      missing = true;
      continue;
    }
    Config c = Config::preset("paper");
    c.set("data.dir", cs.dir);
    c.merge(cs.set);
    const double acc = training_runner()(c);
    const bool hit = std::abs(acc - cs.target) <= cs.tol;
    ok = ok && hit;
    d += cs.name + " " + fmt(100 * acc, 2) + "% (target " + fmt(100 * cs.target, 2) + "+-" + fmt(100 * cs.tol, 1) + "); ";
    progress(d);
  }
  if (!ok) return fail(d);
  return missing ? skip(d) : pass(d);
}

// ---- 7 ----------------------------------------------------------------------

Outcome c7_bins(const Options& o) {
  if (o.data_dir.empty()) return skip("no MNIST directory");
  const Config c = desk(o);
  const auto res = eta_binned_experiment(c, {Mechanism::kADFA, Mechanism::kBP}, training_runner());
  std::vector<double> above, below;
  bool bp_ok = true;
  std::string d;
  for (const auto& b : res.bins) {
    if (b.etas.empty()) {
      d += "[" + fmt(b.lo, 1) + "," + fmt(b.hi, 1) + ") empty; ";
      continue;
    }
    const auto& ad = b.accuracies.at("adfa");
    const auto& bp = b.accuracies.at("bp");
    auto& dst = b.hi <= -0.2 + 1e-12 ? below : above;
    dst.insert(dst.end(), ad.begin(), ad.end());
    const double bp_mean = summarize(bp).mean;
    bp_ok = bp_ok && bp_mean < 0.90;
    d += "[" + fmt(b.lo, 1) + "," + fmt(b.hi, 1) + ") n=" + std::to_string(b.etas.size()) + " adfa " +
         fmt(100 * summarize(ad).mean, 1) + "% bp " + fmt(100 * bp_mean, 1) + "%; ";
  }
  if (above.empty() || below.empty()) return fail("a side of eta=-0.2 has no samples: " + d);
  const double gap = summarize(above).mean - summarize(below).mean;
  d += "gap " + fmt(100 * gap, 1) + " pp";
  if (!(gap >= 0.05)) return fail(d);
  if (!bp_ok) return fail("bp mean >= 90% in some bin: " + d);
  return pass(d);
}

// ---- 8 ----------------------------------------------------------------------

Outcome c8_dt(const Options& o) {
  if (o.data_dir.empty()) return skip("no MNIST directory");
  const std::vector<std::string> dts{"0.25", "0.5", "1", "2"};
  auto runner = training_runner();
  bool ok = true;
  std::string d;
  double adfa_at_1 = 0.0;
  for (const auto* mech : {"bp", "fa", "dfa", "adfa"}) {
    std::map<std::string, double> acc;
    for (const auto& dt : dts) {
      Config c = desk(o);
      c.set("train.mechanism", mech);
      c.set("lif.dt", dt);
      acc[dt] = runner(c);
      progress(std::string(mech) + " dt " + dt + " " + fmt(acc[dt]));
    }
    const double fine = std::min(acc["0.25"], acc["0.5"]);
    const bool drop = acc["1"] < fine && acc["2"] < fine;
    ok = ok && drop;
    if (std::string(mech) == "adfa") adfa_at_1 = acc["1"];
    d += std::string(mech) + " ";
    for (const auto& dt : dts) d += fmt(100 * acc[dt], 1) + (dt == "2" ? "" : "/");
    d += drop ? "; " : " (no drop); ";
  }
  d += "adfa at 1 ms " + fmt(100 * adfa_at_1, 1) + "% (gate 85%)";
  if (!ok || !(adfa_at_1 > 0.85)) return fail(d);
  return pass(d);
}

// ---- 9 ----------------------------------------------------------------------

Outcome c9_ga(const Options& o) {
  if (o.data_dir.empty()) return skip("no MNIST directory");
  Config c = desk(o);
  c.set("ga.population", "6");
  c.set("ga.generations", "5");
  const auto res = evolve(ga_config(c), training_fitness(c, training_runner()));
  const auto& gens = res.record.generations;
  std::string d = "best per generation";
  bool mono = true;
  for (std::size_t g = 0; g < gens.size(); ++g) {
    d += " " + fmt(gens[g].best_fitness);
    if (g > 0 && gens[g].best_fitness < gens[g - 1].best_fitness) mono = false;
  }
  if (gens.size() != 5) return fail("expected 5 generations: " + d);
  if (!mono || gens.back().best_fitness < gens.front().best_fitness) return fail(d);
  return pass(d);
}

// ---- 10 ---------------------------------------------------------------------

void write_idx(const fs::path& dir, const std::string& stem_img, const std::string& stem_lab, std::size_t n,
               std::uint64_t seed) {
  auto be = [](std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  Engine eng = make_engine(seed, {});
  std::ofstream im(dir / stem_img, std::ios::binary), lb(dir / stem_lab, std::ios::binary);
  be(im, 0x803);
  be(im, static_cast<std::uint32_t>(n));
  be(im, 28);
  be(im, 28);
  be(lb, 0x801);
  be(lb, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char label = static_cast<unsigned char>(i % 10);
    for (int px = 0; px < 784; ++px) {
      // class-dependent band of bright rows plus noise
      const bool band = (px / 28) / 3 == label;
      const double v = (band ? 200.0 : 0.0) + 40.0 * uniform01(eng);
      const char c = static_cast<char>(static_cast<unsigned char>(std::min(255.0, v)));
      im.write(&c, 1);
    }
    lb.write(reinterpret_cast<const char*>(&label), 1);
  }
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

int sh(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

Outcome c10_rerun(const Options& o) {
  if (o.cli.empty() || !fs::exists(o.cli)) return skip("command-line tool not found");
  const fs::path root = o.work / "c10";
  fs::remove_all(root);
  const fs::path data = root / "data";
  fs::create_directories(data);
  write_idx(data, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", 200, 1);
  write_idx(data, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", 60, 2);
  const std::string cli = o.cli;
  const std::string dd = " --data-dir " + data.string();
  const std::string small = " --threads 1 --set net.dims=784,20,10 --set train.epochs=2 --set train.batch_size=20";
  struct Cmd {
    std::string name, args;
  };
  const std::vector<Cmd> cmds{
      {"train", "train" + dd + small + " --save-checkpoint"},
      {"eval", "eval" + dd + small + " --checkpoint " + (root / "train" / "a" / "network.bin").string()},
      {"ga", "ga" + dd + small + " --population 3 --generations 2"},
      {"sweep", "sweep" + dd + small + " --axis lif.dt:0.25,0.5 --axis init.gamma:0.01,0.1 --trials 2"},
      {"eta-bins", "sweep --kind eta-bins" + dd + small + " --set eta.samples=200 --set eta.per_bin=1"},
      {"width", "sweep --kind width" + dd + small + " --set scan.exponents=-1,0"},
      {"eta-hist", "eta-hist --samples 300"},
      {"corr", "corr --g prfs:seed=5 --ref lif"},
  };
  std::string d;
  for (const auto& c : cmds) {
    const fs::path a = root / c.name / "a", b = root / c.name / "b";
    if (sh(cli + " " + c.args + " --out " + a.string()) != 0) return fail(c.name + ": command failed");
    if (sh(cli + " rerun " + (a / "manifest.txt").string() + " --out " + b.string()) != 0) {
      return fail(c.name + ": rerun failed");
    }
    const auto fa = csv_files(a), fb = csv_files(b);
    if (fa.empty()) return fail(c.name + ": no CSV output");
    if (fa != fb) {
      std::string which;
      for (const auto& [k, v] : fa) {
        if (!fb.count(k) || fb.at(k) != v) which += k + " ";
      }
      return fail(c.name + ": CSVs differ " + which);
    }
    d += c.name + "(" + std::to_string(fa.size()) + ") ";
  }
  fs::remove_all(root);
  return pass("byte-identical CSVs after rerun: " + d);
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  if (const char* e = std::getenv(kDataDirEnv)) o.data_dir = e;
  if (const char* e = std::getenv("ADFA_FMNIST_DIR")) o.fmnist_dir = e;
#ifdef ADFA_CLI_PATH
  o.cli = ADFA_CLI_PATH;
#endif
  o.work = fs::temp_directory_path() / "adfa_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::cerr << a << " needs a value\n";
        std::exit(2);
      }
      return argv[++i];
    };
    if (a == "--only") {
      for (const auto& t : text::split(next(), ',')) o.only.insert(std::stoi(t));
    } else if (a == "--data-dir") {
      o.data_dir = next();
    } else if (a == "--fmnist-dir") {
      o.fmnist_dir = next();
    } else if (a == "--cli") {
      o.cli = next();
    } else if (a == "--work") {
      o.work = next();
    } else {
      std::cerr << "unknown argument " << a << "\n";
      return 2;
    }
  }
  if (!o.data_dir.empty() && !fs::exists(idx_paths(o.data_dir).train_images)) o.data_dir.clear();
  if (!o.fmnist_dir.empty() && !fs::exists(idx_paths(o.fmnist_dir).train_images)) o.fmnist_dir.clear();

  const std::vector<std::pair<int, std::function<Outcome(const Options&)>>> all{
      {1, c1_oracle}, {2, c2_lif},  {3, c3_surrogate}, {4, c4_eta}, {5, c5_desk},
      {6, c6_full_scale},  {7, c7_bins}, {8, c8_dt},        {9, c9_ga},  {10, c10_rerun},
  };
  int failures = 0;
  for (const auto& [n, fn] : all) {
    if (!o.only.empty() && !o.only.count(n)) continue;
    Outcome r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = fn(o);
    } catch (const std::exception& e) {
      r = fail(std::string("exception: ") + e.what());
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = r.status == Status::kPass ? "PASS" : r.status == Status::kFail ? "FAIL" : "SKIP";
    failures += r.status == Status::kFail;
    std::cout << "criterion " << n << ": " << tag << " (" << fmt(sec, 1) << " s) " << r.detail << std::endl;
  }
  return failures ? 1 : 0;
}
