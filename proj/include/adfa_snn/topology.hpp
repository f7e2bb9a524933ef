#pragma once

// Network shapes, statistical initialization of forward weights and fixed
// random feedback matrices, and the binary checkpoint format.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adfa_snn/error.hpp"
#include "adfa_snn/lif.hpp"
#include "adfa_snn/rng.hpp"

namespace adfa {

struct NetworkTopology {
  std::vector<std::size_t> layer_dims{784, 1000, 10};
  std::uint64_t seed = 1;

  void validate() const {
    if (layer_dims.size() < 2) throw ConfigError("net.dims needs at least 2 layers");
    for (auto d : layer_dims) {
      if (d < 1) throw ConfigError("net.dims entries must be >= 1");
    }
  }
  std::size_t weight_layers() const { return layer_dims.size() - 1; }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
};

struct InitStats {
  double v_mean = 8.0;      // desired mean of a neuron's input drive
  double v_second = 164.0;  // desired second moment of the drive
  double alpha = 0.066;
  double bias_init = 0.8;
  double gamma = 0.0338;  // feedback scale

  void validate() const {
    if (!(v_second > 0.0)) throw ConfigError("init.v_second must be > 0");
    if (!(v_mean > 0.0)) throw ConfigError("init.v_mean must be > 0");
    if (!(alpha > 0.0)) throw ConfigError("init.alpha must be > 0");
    if (!(gamma >= 0.0)) throw ConfigError("init.gamma must be >= 0");
  }
};

// Target moments for a weight matrix with `fan_in` presynaptic neurons.
struct WeightMoments {
  double mean = 0.0;
  double second = 0.0;
  double stddev = 0.0;
};

inline WeightMoments weight_moments(std::size_t fan_in, const InitStats& s) {
  const double n = static_cast<double>(fan_in);
  const double vm = s.v_mean;
  const double vs = s.v_second;
  const double a = s.alpha;
  WeightMoments m;
  m.mean = (vm - 0.8) / (a * n * vm);
  m.second = (vs + a * a * (n - n * n) * m.mean * m.mean * vm * vm - 1.6 * a * n * vm * m.mean - 0.64) /
             (a * a * n * vs);
  const double var = m.second - m.mean * m.mean;
  if (!(var >= 0.0) || !std::isfinite(var)) {
    throw ConfigError("degenerate init statistics: second moment " + std::to_string(m.second) +
                      " below squared mean " + std::to_string(m.mean * m.mean) + " for fan-in " +
                      std::to_string(fan_in));
  }
  m.stddev = std::sqrt(var);
  return m;
}

// Uniform samples with the given mean and standard deviation, row-major fill.
inline Matrix sample_uniform_matrix(std::size_t rows, std::size_t cols, const WeightMoments& m, Engine& eng) {
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const double spread = 2.0 * std::sqrt(3.0) * m.stddev;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = m.mean + spread * (uniform01(eng) - 0.5);
  }
  return out;
}

struct NetworkState {
  std::vector<std::size_t> dims;
  std::vector<Matrix> weights;   // weights[l]: dims[l+1] x dims[l]
  std::vector<Vector> biases;    // biases[l]: dims[l+1]
  std::vector<Matrix> feedback;  // direct feedback, feedback[l]: dims[l+1] x dims.back(), hidden layers only
  std::vector<Matrix> feedback_chain;  // layer-to-layer feedback, feedback_chain[l]: dims[l+1] x dims[l+2]

  std::size_t weight_layers() const { return weights.size(); }
  std::size_t hidden_layers() const { return weights.empty() ? 0 : weights.size() - 1; }

  void validate() const {
    if (dims.size() < 2) throw DimensionError("network needs at least 2 layers");
    const std::size_t L = dims.size() - 1;
    if (weights.size() != L || biases.size() != L) throw DimensionError("network: weight/bias count mismatch");
    for (std::size_t l = 0; l < L; ++l) {
      if (static_cast<std::size_t>(weights[l].rows()) != dims[l + 1] ||
          static_cast<std::size_t>(weights[l].cols()) != dims[l]) {
        throw DimensionError("network: weights[" + std::to_string(l) + "] shape mismatch");
      }
      detail::require_dims(static_cast<std::size_t>(biases[l].size()), dims[l + 1], "network bias");
    }
    if (!feedback.empty() && feedback.size() != L - 1) throw DimensionError("network: feedback count mismatch");
    for (std::size_t l = 0; l < feedback.size(); ++l) {
      if (static_cast<std::size_t>(feedback[l].rows()) != dims[l + 1] ||
          static_cast<std::size_t>(feedback[l].cols()) != dims.back()) {
        throw DimensionError("network: feedback[" + std::to_string(l) + "] shape mismatch");
      }
    }
    if (!feedback_chain.empty() && feedback_chain.size() != L - 1) {
      throw DimensionError("network: chain feedback count mismatch");
    }
    for (std::size_t l = 0; l < feedback_chain.size(); ++l) {
      if (static_cast<std::size_t>(feedback_chain[l].rows()) != dims[l + 1] ||
          static_cast<std::size_t>(feedback_chain[l].cols()) != dims[l + 2]) {
        throw DimensionError("network: chain feedback[" + std::to_string(l) + "] shape mismatch");
      }
    }
  }
};

// W_l ~ uniform with the target moments for fan-in dims[l]; biases constant.
inline void init_weights(const NetworkTopology& topo, const InitStats& stats, std::vector<Matrix>& weights,
                         std::vector<Vector>& biases) {
  topo.validate();
  stats.validate();
  const auto& d = topo.layer_dims;
  weights.clear();
  biases.clear();
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    const WeightMoments m = weight_moments(d[l], stats);
    Engine eng = make_engine(topo.seed, {stream::kWeights, l});
    weights.push_back(sample_uniform_matrix(d[l + 1], d[l], m, eng));
    biases.push_back(Vector::Constant(static_cast<Eigen::Index>(d[l + 1]), stats.bias_init));
  }
}

// For hidden layer l (output dims[l+1]) with D downstream weight layers:
//   B_l = gamma^D * F_{l+1} * ... * F_{L-1},  F_m ~ uniform with W_m's target moments, shape dims[m] x dims[m+1].
// The chain (layer-to-layer) feedback uses gamma * F_{l+1} from the same draw.
inline void init_feedback(const NetworkTopology& topo, const InitStats& stats, std::vector<Matrix>& feedback,
                          std::vector<Matrix>& chain) {
  topo.validate();
  stats.validate();
  const auto& d = topo.layer_dims;
  const std::size_t L = d.size() - 1;
  feedback.clear();
  chain.clear();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    Matrix product;
    for (std::size_t m = l + 1; m < L; ++m) {
      Engine eng = make_engine(topo.seed, {stream::kFeedback, l, m});
      Matrix factor = sample_uniform_matrix(d[m], d[m + 1], weight_moments(d[m], stats), eng);
      if (m == l + 1) {
        chain.push_back(stats.gamma * factor);
        product = std::move(factor);
      } else {
        product = (product * factor).eval();
      }
    }
    const double scale = std::pow(stats.gamma, static_cast<double>(L - 1 - l));
    feedback.push_back(scale * product);
  }
}

inline NetworkState init_network(const NetworkTopology& topo, const InitStats& stats) {
  NetworkState net;
  net.dims = topo.layer_dims;
  init_weights(topo, stats, net.weights, net.biases);
  init_feedback(topo, stats, net.feedback, net.feedback_chain);
  return net;
}

// FNV-1a over the raw bytes of a set of matrices.
inline std::uint64_t checksum(const std::vector<Matrix>& mats) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& m : mats) {
    const auto* p = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Checkpoint layout (little-endian):
//   "ADFASNN1" | u32 layer_count | u64 dims[layer_count]
//   per weight layer: f64 W (row-major) | f64 b
//   u32 feedback_count | per hidden layer: f64 B (row-major, dims[l+1] x dims.back())
//   u32 chain_count    | per hidden layer: f64 B (row-major, dims[l+1] x dims[l+2])
namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(path + ": truncated checkpoint at byte " + std::to_string(static_cast<long long>(is.tellg())));
  return v;
}

inline void put_block(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void get_block(std::istream& is, double* p, std::size_t n, const std::string& path) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw DataError(path + ": truncated checkpoint payload");
}

}  // namespace detail

inline void save_checkpoint(const NetworkState& net, const std::string& path) {
  net.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open checkpoint for writing: " + path);
  os.write("ADFASNN1", 8);
  detail::put(os, static_cast<std::uint32_t>(net.dims.size()));
  for (auto d : net.dims) detail::put(os, static_cast<std::uint64_t>(d));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    detail::put_block(os, net.weights[l].data(), static_cast<std::size_t>(net.weights[l].size()));
    detail::put_block(os, net.biases[l].data(), static_cast<std::size_t>(net.biases[l].size()));
  }
  detail::put(os, static_cast<std::uint32_t>(net.feedback.size()));
  for (const auto& b : net.feedback) detail::put_block(os, b.data(), static_cast<std::size_t>(b.size()));
  detail::put(os, static_cast<std::uint32_t>(net.feedback_chain.size()));
  for (const auto& b : net.feedback_chain) detail::put_block(os, b.data(), static_cast<std::size_t>(b.size()));
  if (!os) throw DataError("failed writing checkpoint: " + path);
}

inline NetworkState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "ADFASNN1", 8) != 0) throw DataError(path + ": bad checkpoint magic");
  NetworkState net;
  const auto layers = detail::get<std::uint32_t>(is, path);
  if (layers < 2 || layers > 64) throw DataError(path + ": implausible layer count");
  for (std::uint32_t i = 0; i < layers; ++i) net.dims.push_back(static_cast<std::size_t>(detail::get<std::uint64_t>(is, path)));
  const auto& d = net.dims;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    Matrix w(static_cast<Eigen::Index>(d[l + 1]), static_cast<Eigen::Index>(d[l]));
    Vector b(static_cast<Eigen::Index>(d[l + 1]));
    detail::get_block(is, w.data(), static_cast<std::size_t>(w.size()), path);
    detail::get_block(is, b.data(), static_cast<std::size_t>(b.size()), path);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  const auto nfb = detail::get<std::uint32_t>(is, path);
  if (nfb != 0 && nfb != d.size() - 2) throw DataError(path + ": feedback count mismatch");
  for (std::size_t l = 0; l < nfb; ++l) {
    Matrix b(static_cast<Eigen::Index>(d[l + 1]), static_cast<Eigen::Index>(d.back()));
    detail::get_block(is, b.data(), static_cast<std::size_t>(b.size()), path);
    net.feedback.push_back(std::move(b));
  }
  const auto nch = detail::get<std::uint32_t>(is, path);
  if (nch != 0 && nch != d.size() - 2) throw DataError(path + ": chain feedback count mismatch");
  for (std::size_t l = 0; l < nch; ++l) {
    Matrix b(static_cast<Eigen::Index>(d[l + 1]), static_cast<Eigen::Index>(d[l + 2]));
    detail::get_block(is, b.data(), static_cast<std::size_t>(b.size()), path);
    net.feedback_chain.push_back(std::move(b));
  }
  net.validate();
  return net;
}

}  // namespace adfa
