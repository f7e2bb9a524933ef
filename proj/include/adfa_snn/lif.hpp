#pragma once

// Clock-driven leaky integrate-and-fire layers.
//
// Per step, for a neuron that is not refractory:
//   h <- (1 - dt/tau) * h + (dt/tau) * v
//   if h >= h_th: emit a spike, h <- 0, pin for refractory_steps() steps
// A refractory neuron keeps h = 0, ignores its drive and decrements its counter.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "adfa_snn/error.hpp"

namespace adfa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LifParams {
  double h_th = 0.4;   // firing threshold
  double dt = 0.25;    // ms
  double t_ref = 1.0;  // ms
  double tau = 20.0;   // ms

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("lif.dt must be > 0");
    if (!(tau > 0.0)) throw ConfigError("lif.tau must be > 0");
    if (!(dt / tau <= 1.0)) throw ConfigError("lif.dt / lif.tau must lie in (0, 1]");
    if (!(t_ref >= 0.0)) throw ConfigError("lif.t_ref must be >= 0");
    if (!(h_th > 0.0)) throw ConfigError("lif.h_th must be > 0");
  }

  double leak() const { return dt / tau; }

  // floor(t_ref / dt) pinned steps after a spike; zero once t_ref <= dt,
  // i.e. a step as long as the refractory time leaves no refractory period.
  int refractory_steps() const {
    if (t_ref <= dt) return 0;
    return static_cast<int>(std::floor(t_ref / dt + 1e-9));
  }

  // Number of steps needed to cover a duration in ms.
  std::size_t steps_for(double ms) const {
    return static_cast<std::size_t>(std::llround(ms / dt));
  }

  bool operator==(const LifParams&) const = default;
};

// Binary spike vector, one byte per neuron.
struct SpikeVector {
  std::vector<std::uint8_t> bits;

  SpikeVector() = default;
  explicit SpikeVector(std::size_t n) : bits(n, 0) {}

  std::size_t size() const { return bits.size(); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  std::size_t count() const {
    std::size_t c = 0;
    for (auto b : bits) c += b;
    return c;
  }
  bool operator==(const SpikeVector&) const = default;
};

struct LayerState {
  Vector membrane;
  std::vector<int> refractory_remaining;

  LayerState() = default;
  explicit LayerState(std::size_t n) : membrane(Vector::Zero(static_cast<Eigen::Index>(n))), refractory_remaining(n, 0) {}

  std::size_t size() const { return refractory_remaining.size(); }
  void reset() {
    membrane.setZero();
    std::fill(refractory_remaining.begin(), refractory_remaining.end(), 0);
  }
  bool operator==(const LayerState& o) const {
    return membrane == o.membrane && refractory_remaining == o.refractory_remaining;
  }
};

// Advances `state` one step under `drive`, writing spikes into `out`.
// Accumulate, then compare, then reset; refractory neurons stay pinned at 0.
inline void integrate_in_place(LayerState& state, std::span<const double> drive, const LifParams& params,
                               SpikeVector& out) {
  const std::size_t n = state.size();
  detail::require_dims(drive.size(), n, "integrate_step drive");
  if (out.size() != n) out.bits.assign(n, 0);
  const double q = params.leak();
  const double keep = 1.0 - q;
  const int pin = params.refractory_steps();
  double* h = state.membrane.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = drive[i];
    if (!std::isfinite(v)) {
      throw NumericError("integrate_step: non-finite drive at neuron " + std::to_string(i));
    }
    if (state.refractory_remaining[i] > 0) {
      --state.refractory_remaining[i];
      h[i] = 0.0;
      out.bits[i] = 0;
      continue;
    }
    const double acc = keep * h[i] + q * v;
    if (acc >= params.h_th) {
      out.bits[i] = 1;
      h[i] = 0.0;
      state.refractory_remaining[i] = pin;
    } else {
      out.bits[i] = 0;
      h[i] = acc;
    }
  }
}

inline std::pair<LayerState, SpikeVector> integrate_step(LayerState state, std::span<const double> drive,
                                                         const LifParams& params) {
  SpikeVector spikes(state.size());
  integrate_in_place(state, drive, params, spikes);
  return {std::move(state), std::move(spikes)};
}

inline std::pair<LayerState, SpikeVector> integrate_step(LayerState state, const Vector& drive,
                                                         const LifParams& params) {
  return integrate_step(std::move(state), std::span<const double>(drive.data(), static_cast<std::size_t>(drive.size())),
                        params);
}

// v = W * presyn + b
inline Vector layer_drive(const Matrix& weights, const Vector& bias, const Vector& presyn) {
  detail::require_dims(static_cast<std::size_t>(presyn.size()), static_cast<std::size_t>(weights.cols()),
                       "layer_drive presyn");
  detail::require_dims(static_cast<std::size_t>(bias.size()), static_cast<std::size_t>(weights.rows()),
                       "layer_drive bias");
  return weights * presyn + bias;
}

// Binary presynaptic activity: sums the columns of the active inputs, in index order.
inline void layer_drive_into(const Matrix& weights, const Vector& bias, const SpikeVector& presyn, Vector& out) {
  detail::require_dims(presyn.size(), static_cast<std::size_t>(weights.cols()), "layer_drive presyn");
  detail::require_dims(static_cast<std::size_t>(bias.size()), static_cast<std::size_t>(weights.rows()),
                       "layer_drive bias");
  out = bias;
  const Eigen::Index rows = weights.rows();
  for (std::size_t j = 0; j < presyn.size(); ++j) {
    if (!presyn.bits[j]) continue;
    const auto col = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < rows; ++i) out[i] += weights(i, col);
  }
}

inline Vector layer_drive(const Matrix& weights, const Vector& bias, const SpikeVector& presyn) {
  Vector out;
  layer_drive_into(weights, bias, presyn, out);
  return out;
}

}  // namespace adfa
