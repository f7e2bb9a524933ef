#pragma once

// Timed forward simulation and the four error-transport rules.
//
// Each sample is presented for interval_ms: the first settle_ms only let the
// network settle, the remaining steps are recorded and drive learning. Per
// recorded step t and weight layer l (output layer L-1):
//
//   e(t)       = output_spikes(t) - onehot(target)
//   e_{L-1}(t) = e(t) (.) g(a_{L-1}(t))
//   BP:        e_l = (W_{l+1}^T e_{l+1}) (.) g(a_l)
//   FA:        e_l = (C_l e_{l+1})       (.) g(a_l)     C_l: layer-to-layer feedback
//   DFA/aDFA:  e_l = (B_l e)             (.) g(a_l)     B_l: direct feedback
//
//   dW_l = -lr_l * sum_batch sum_t e_l(t) x_l(t)^T,  lr_l = lr_base / fan_in(l)
//
// BP, FA and DFA use the LIF surrogate derivative as g unless explicitly overridden.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adfa_snn/backward_fn.hpp"
#include "adfa_snn/dataset.hpp"
#include "adfa_snn/error.hpp"
#include "adfa_snn/lif.hpp"
#include "adfa_snn/parallel.hpp"
#include "adfa_snn/rng.hpp"
#include "adfa_snn/topology.hpp"

namespace adfa {

enum class Mechanism { kBP, kFA, kDFA, kADFA };

inline std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kBP: return "bp";
    case Mechanism::kFA: return "fa";
    case Mechanism::kDFA: return "dfa";
    case Mechanism::kADFA: return "adfa";
  }
  return "?";
}

inline Mechanism parse_mechanism(const std::string& s) {
  if (s == "bp") return Mechanism::kBP;
  if (s == "fa") return Mechanism::kFA;
  if (s == "dfa") return Mechanism::kDFA;
  if (s == "adfa") return Mechanism::kADFA;
  throw ConfigError("train.mechanism: unknown mechanism '" + s + "' (bp|fa|dfa|adfa)");
}

struct TrainConfig {
  Mechanism mechanism = Mechanism::kADFA;
  BackwardFnSpec backward = Opto{};
  bool allow_g_override = false;
  LifParams lif;
  std::size_t epochs = 20;
  std::size_t batch_size = 100;
  double interval_ms = 100.0;
  double settle_ms = 20.0;
  double lr_base = 0.1;
  std::uint64_t seed = 1;
  bool shuffle = true;
  std::size_t threads = 1;

  std::size_t total_steps() const { return lif.steps_for(interval_ms); }
  std::size_t settle_steps() const { return lif.steps_for(settle_ms); }
  std::size_t train_steps() const { return total_steps() - settle_steps(); }

  void validate() const {
    lif.validate();
    if (!(settle_ms >= 0.0) || !(settle_ms < interval_ms)) throw ConfigError("train.settle_ms must be in [0, interval_ms)");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(lr_base >= 0.0) || !std::isfinite(lr_base)) throw ConfigError("train.lr must be finite and >= 0");
    if (train_steps() < 1) throw ConfigError("training window shorter than one time step");
    adfa::validate(backward);
    if (mechanism != Mechanism::kADFA && !allow_g_override &&
        !std::holds_alternative<LifSurrogate>(backward)) {
      throw ConfigError("backward.family=" + family_name(backward) + " with train.mechanism=" + to_string(mechanism) +
                        " requires train.allow_g_override=true (--allow-g-override)");
    }
  }
};

// Recorded activity of one weight layer during the training window.
struct LayerTrace {
  std::vector<Vector> drive;        // a_l(t); a single entry when the drive is static
  std::vector<SpikeVector> spikes;  // output spikes per recorded step
  bool static_drive = false;

  const Vector& drive_at(std::size_t t) const { return static_drive ? drive.front() : drive[t]; }
};

struct ForwardTrace {
  Vector input;                      // presynaptic activity of layer 0, identical every step
  std::vector<LayerTrace> layers;    // one per weight layer
  std::vector<std::size_t> output_counts;  // output spikes over the whole interval
  std::size_t total_steps = 0;
  std::size_t recorded_steps = 0;
};

// Per-step output error e(t) and the per-layer errors e_l(t) (layers[l][t]).
struct ErrorSignal {
  std::vector<Vector> output;
  std::vector<std::vector<Vector>> layers;
};

namespace detail {

inline void check_input(const NetworkState& net, const Vector& input) {
  detail::require_dims(static_cast<std::size_t>(input.size()), net.dims.front(), "forward input");
  if (!input.allFinite()) throw NumericError("forward input contains non-finite values");
}

// Runs `total` steps; `on_step(step, layer, drive, spikes)` sees every layer update.
template <class OnStep>
void simulate(const NetworkState& net, const Vector& input, const LifParams& lif, std::size_t total, OnStep&& on_step) {
  const std::size_t L = net.weights.size();
  std::vector<LayerState> states;
  std::vector<SpikeVector> spikes;
  std::vector<Vector> drives(L);
  states.reserve(L);
  for (std::size_t l = 0; l < L; ++l) {
    states.emplace_back(net.dims[l + 1]);
    spikes.emplace_back(net.dims[l + 1]);
  }
  drives[0] = layer_drive(net.weights[0], net.biases[0], input);
  for (std::size_t step = 0; step < total; ++step) {
    for (std::size_t l = 0; l < L; ++l) {
      if (l > 0) layer_drive_into(net.weights[l], net.biases[l], spikes[l - 1], drives[l]);
      integrate_in_place(states[l],
                         std::span<const double>(drives[l].data(), static_cast<std::size_t>(drives[l].size())), lif,
                         spikes[l]);
      on_step(step, l, drives[l], spikes[l]);
    }
  }
}

}  // namespace detail

// Simulates one sample; the settle window runs but is not recorded.
inline ForwardTrace forward_sample(const NetworkState& net, const Vector& input, const TrainConfig& cfg) {
  detail::check_input(net, input);
  const std::size_t L = net.weights.size();
  ForwardTrace tr;
  tr.input = input;
  tr.total_steps = cfg.total_steps();
  const std::size_t settle = cfg.settle_steps();
  tr.recorded_steps = tr.total_steps - settle;
  tr.layers.resize(L);
  tr.output_counts.assign(net.dims.back(), 0);
  for (std::size_t l = 0; l < L; ++l) {
    tr.layers[l].static_drive = (l == 0);
    tr.layers[l].spikes.reserve(tr.recorded_steps);
    if (l > 0) tr.layers[l].drive.reserve(tr.recorded_steps);
  }
  detail::simulate(net, input, cfg.lif, tr.total_steps,
                   [&](std::size_t step, std::size_t l, const Vector& drive, const SpikeVector& s) {
                     if (l == L - 1) {
                       for (std::size_t i = 0; i < s.size(); ++i) tr.output_counts[i] += s.bits[i];
                     }
                     if (step < settle) return;
                     auto& lt = tr.layers[l];
                     if (lt.static_drive) {
                       if (lt.drive.empty()) lt.drive.push_back(drive);
                     } else {
                       lt.drive.push_back(drive);
                     }
                     lt.spikes.push_back(s);
                   });
  return tr;
}

// Output spike counts over the whole interval, no recording.
inline std::vector<std::size_t> output_counts(const NetworkState& net, const Vector& input, const TrainConfig& cfg) {
  detail::check_input(net, input);
  const std::size_t L = net.weights.size();
  std::vector<std::size_t> counts(net.dims.back(), 0);
  detail::simulate(net, input, cfg.lif, cfg.total_steps(),
                   [&](std::size_t, std::size_t l, const Vector&, const SpikeVector& s) {
                     if (l != L - 1) return;
                     for (std::size_t i = 0; i < s.size(); ++i) counts[i] += s.bits[i];
                   });
  return counts;
}

// Most active output neuron; ties go to the lowest index.
inline std::size_t decode_output(const std::vector<std::size_t>& counts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] > counts[best]) best = i;
  }
  return best;
}

inline std::size_t decode_output(const ForwardTrace& trace) { return decode_output(trace.output_counts); }

// e(t) = output_spikes(t) - onehot(target) for each recorded step.
inline std::vector<Vector> output_error(const ForwardTrace& trace, std::size_t target) {
  if (trace.layers.empty()) throw DimensionError("output_error: empty trace");
  const auto& out = trace.layers.back();
  const std::size_t n = trace.output_counts.size();
  if (target >= n) {
    throw ConfigError("output_error: label " + std::to_string(target) + " out of range for " + std::to_string(n) +
                      " outputs");
  }
  std::vector<Vector> e;
  e.reserve(out.spikes.size());
  for (const auto& s : out.spikes) {
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = static_cast<double>(s.bits[i]);
    v[static_cast<Eigen::Index>(target)] -= 1.0;
    e.push_back(std::move(v));
  }
  return e;
}

namespace detail {

inline Vector apply_g(const BackwardFnSpec& g, const Vector& a) {
  Vector out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = eval_unchecked(g, a[i]);
  return out;
}

// y = M * x, skipping zero entries of x (errors are mostly zero).
inline void sparse_matvec(const Matrix& m, const Vector& x, Vector& y) {
  y.setZero(m.rows());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    for (Eigen::Index i = 0; i < m.rows(); ++i) y[i] += m(i, j) * xj;
  }
}

// y = M^T * x, skipping zero entries of x.
inline void sparse_matvec_t(const Matrix& m, const Vector& x, Vector& y) {
  y.setZero(m.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    y += xi * m.row(i).transpose();
  }
}

}  // namespace detail

// The effective backward function for a configuration.
inline BackwardFnSpec effective_backward(const TrainConfig& cfg) { return cfg.backward; }

inline std::vector<std::vector<Vector>> backward_errors(Mechanism mechanism, const ForwardTrace& trace,
                                                        const std::vector<Vector>& e, const NetworkState& net,
                                                        const BackwardFnSpec& g) {
  const std::size_t L = net.weights.size();
  if (trace.layers.size() != L) throw DimensionError("backward_errors: trace/network layer mismatch");
  const std::size_t T = trace.recorded_steps;
  detail::require_dims(e.size(), T, "backward_errors error steps");
  if (mechanism != Mechanism::kBP && L > 1) {
    const auto& fb = mechanism == Mechanism::kFA ? net.feedback_chain : net.feedback;
    if (fb.size() != L - 1) {
      throw ConfigError("backward_errors: mechanism " + to_string(mechanism) + " needs feedback matrices");
    }
  }
  std::vector<std::vector<Vector>> out(L, std::vector<Vector>(T));
  // g of a static drive is the same at every step.
  std::vector<std::optional<Vector>> static_g(L);
  for (std::size_t l = 0; l < L; ++l) {
    if (trace.layers[l].static_drive) static_g[l] = detail::apply_g(g, trace.layers[l].drive.front());
  }
  auto g_at = [&](std::size_t l, std::size_t t) -> Vector {
    if (static_g[l]) return *static_g[l];
    return detail::apply_g(g, trace.layers[l].drive_at(t));
  };
  Vector projected;
  for (std::size_t t = 0; t < T; ++t) {
    detail::require_dims(static_cast<std::size_t>(e[t].size()), net.dims.back(), "backward_errors e(t)");
    out[L - 1][t] = e[t].cwiseProduct(g_at(L - 1, t));
    for (std::size_t l = L - 1; l-- > 0;) {
      switch (mechanism) {
        case Mechanism::kBP:
          detail::sparse_matvec_t(net.weights[l + 1], out[l + 1][t], projected);
          break;
        case Mechanism::kFA:
          detail::sparse_matvec(net.feedback_chain[l], out[l + 1][t], projected);
          break;
        case Mechanism::kDFA:
        case Mechanism::kADFA:
          detail::sparse_matvec(net.feedback[l], e[t], projected);
          break;
      }
      out[l][t] = projected.cwiseProduct(g_at(l, t));
    }
  }
  return out;
}

// Per-sample weight-gradient partial sums, sum_t e_l(t) x_l(t)^T and sum_t e_l(t).
// Layer 0 sees a static input, so its partial is kept factored as
// (sum_t e_0(t)) x^T.
struct SampleGradient {
  Vector input;
  std::vector<Vector> error_sum;  // per layer
  std::vector<Matrix> weight;     // per layer; weight[0] unused
};

inline SampleGradient sample_gradient(const ForwardTrace& trace, const std::vector<std::vector<Vector>>& errors,
                                      const NetworkState& net) {
  const std::size_t L = net.weights.size();
  SampleGradient sg;
  sg.input = trace.input;
  sg.error_sum.resize(L);
  sg.weight.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto rows = static_cast<Eigen::Index>(net.dims[l + 1]);
    sg.error_sum[l] = Vector::Zero(rows);
    if (l > 0) sg.weight[l] = Matrix::Zero(rows, static_cast<Eigen::Index>(net.dims[l]));
    for (std::size_t t = 0; t < errors[l].size(); ++t) {
      const Vector& el = errors[l][t];
      if (!el.allFinite()) {
        throw NumericError("non-finite gradient at layer " + std::to_string(l) + ", step " + std::to_string(t));
      }
      sg.error_sum[l] += el;
      if (l == 0) continue;
      const SpikeVector& pre = trace.layers[l - 1].spikes[t];
      for (std::size_t j = 0; j < pre.size(); ++j) {
        if (!pre.bits[j]) continue;
        sg.weight[l].col(static_cast<Eigen::Index>(j)) += el;
      }
    }
  }
  return sg;
}

// Minibatch accumulator. Samples are added in a fixed order and the update is
// applied once per batch, so results do not depend on how per-sample work was scheduled.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(const NetworkState& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      dw_.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
      db_.push_back(Vector::Zero(net.biases[l].size()));
    }
  }

  void add(const SampleGradient& sg) {
    for (std::size_t l = 0; l < dw_.size(); ++l) {
      if (l == 0) {
        dw_[0].noalias() += sg.error_sum[0] * sg.input.transpose();
      } else {
        dw_[l] += sg.weight[l];
      }
      db_[l] += sg.error_sum[l];
    }
    ++count_;
  }

  std::size_t count() const { return count_; }

  // W_l -= lr_l * acc_l, lr_l = lr_base / fan_in(l); then resets.
  void apply(NetworkState& net, double lr_base) {
    for (std::size_t l = 0; l < dw_.size(); ++l) {
      const double lr = learning_rate(net, l, lr_base);
      if (!dw_[l].allFinite() || !db_[l].allFinite()) {
        throw NumericError("non-finite accumulated gradient at layer " + std::to_string(l));
      }
      net.weights[l] -= lr * dw_[l];
      net.biases[l] -= lr * db_[l];
      dw_[l].setZero();
      db_[l].setZero();
    }
    count_ = 0;
  }

  static double learning_rate(const NetworkState& net, std::size_t layer, double lr_base) {
    return lr_base / static_cast<double>(net.dims[layer]);
  }

  const Matrix& weight_sum(std::size_t l) const { return dw_[l]; }
  const Vector& bias_sum(std::size_t l) const { return db_[l]; }

 private:
  std::vector<Matrix> dw_;
  std::vector<Vector> db_;
  std::size_t count_ = 0;
};

// Applies one minibatch of aligned traces and per-layer errors.
inline void accumulate_and_apply(NetworkState& net, const std::vector<ForwardTrace>& traces,
                                 const std::vector<std::vector<std::vector<Vector>>>& errors, double lr_base) {
  detail::require_dims(errors.size(), traces.size(), "accumulate_and_apply batch");
  GradientAccumulator acc(net);
  for (std::size_t i = 0; i < traces.size(); ++i) acc.add(sample_gradient(traces[i], errors[i], net));
  acc.apply(net, lr_base);
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_acc = 0.0;  // online accuracy over the epoch's training presentations
  double test_acc = 0.0;
  double wall_ms = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  std::string fingerprint;

  double final_test_acc() const { return epochs.empty() ? 0.0 : epochs.back().test_acc; }

  // epoch,train_acc,test_acc. Wall-clock times are kept out of the CSV so
  // reruns are byte-identical; they go to the run manifest.
  std::string to_csv() const {
    std::ostringstream os;
    os << "epoch,train_acc,test_acc\n";
    os.setf(std::ios::fixed);
    os.precision(6);
    for (const auto& e : epochs) os << e.epoch << ',' << e.train_acc << ',' << e.test_acc << '\n';
    return os.str();
  }
};

inline double evaluate(const NetworkState& net, const Dataset& data, const TrainConfig& cfg) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  std::vector<std::uint8_t> correct(data.size(), 0);
  parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
    correct[i] = decode_output(output_counts(net, data.images[i], cfg)) == data.labels[i];
  });
  const auto hits = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!shuffle) return order;
  Engine eng = make_engine(seed, {stream::kShuffle, epoch});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(eng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  return order;
}

struct TrainOutcome {
  double train_acc = 0.0;
};

using BatchCallback = std::function<void(const NetworkState&)>;

// One pass over `data` in minibatches; `on_batch` sees the network after each update.
inline TrainOutcome train_epoch(NetworkState& net, const Dataset& data, const TrainConfig& cfg, std::size_t epoch,
                                const BatchCallback& on_batch = {}) {
  const auto order = epoch_order(data.size(), cfg.seed, epoch, cfg.shuffle);
  const BackwardFnSpec g = effective_backward(cfg);
  GradientAccumulator acc(net);
  std::size_t hits = 0;
  const std::size_t wave = std::max<std::size_t>(1, cfg.threads);
  std::vector<SampleGradient> grads(std::min(wave, cfg.batch_size));
  std::vector<std::uint8_t> correct(grads.size());
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    for (std::size_t w = start; w < end; w += grads.size()) {
      const std::size_t n = std::min(grads.size(), end - w);
      parallel_for(n, cfg.threads, [&](std::size_t k) {
        const std::size_t idx = order[w + k];
        const ForwardTrace tr = forward_sample(net, data.images[idx], cfg);
        correct[k] = decode_output(tr) == data.labels[idx];
        const auto e = output_error(tr, data.labels[idx]);
        const auto errs = backward_errors(cfg.mechanism, tr, e, net, g);
        grads[k] = sample_gradient(tr, errs, net);
      });
      for (std::size_t k = 0; k < n; ++k) {
        acc.add(grads[k]);
        hits += correct[k];
      }
    }
    acc.apply(net, cfg.lr_base);
    if (on_batch) on_batch(net);
  }
  return {static_cast<double>(hits) / static_cast<double>(data.size())};
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains for cfg.epochs, evaluating on `test` after every epoch.
inline RunRecord train(NetworkState& net, const Dataset& train_set, const Dataset& test_set, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {}) {
  cfg.validate();
  net.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (test_set.empty()) throw DataError("train: empty test set");
  detail::require_dims(train_set.input_dim(), net.dims.front(), "train input dimension");
  RunRecord rec;
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord er;
    er.epoch = ep + 1;
    er.train_acc = train_epoch(net, train_set, cfg, ep).train_acc;
    er.test_acc = evaluate(net, test_set, cfg);
    er.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
  }
  return rec;
}

}  // namespace adfa
