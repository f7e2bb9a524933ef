#pragma once

// Backward functions g(a) that modulate projected errors, and the
// functional correlation between two of them over an interval.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "adfa_snn/error.hpp"
#include "adfa_snn/lif.hpp"
#include "adfa_snn/rng.hpp"
#include "adfa_snn/text.hpp"

namespace adfa {

// Smooth approximation of the derivative of the LIF rate response.
struct LifSurrogate {
  LifParams params;
  bool operator==(const LifSurrogate&) const = default;
};

// Positive random Fourier series:
//   g(a) = |m| + sum_k p_k sin(omega k pi a) + q_k cos(omega k pi a)
struct Prfs {
  double omega = 0.01;
  double m = 1.0;
  std::vector<double> p;
  std::vector<double> q;

  std::size_t k() const { return p.size(); }
  bool operator==(const Prfs&) const = default;
};

struct Gaussian {
  double a = 1.0;   // height
  double b = 0.4;   // center
  double c = 10.0;  // RMS width
  bool operator==(const Gaussian&) const = default;
};

// cos^2(omega a + theta)
struct Opto {
  double omega = 0.1;
  double theta = 150.0;
  bool operator==(const Opto&) const = default;
};

using BackwardFnSpec = std::variant<LifSurrogate, Prfs, Gaussian, Opto>;

inline double eval_lif_surrogate(const LifParams& lp, double a) {
  const double h = lp.h_th;
  if (a <= h) return 0.0;
  const double denom_log = lp.t_ref + lp.tau * std::log(a / (a - h));
  return h * lp.t_ref * lp.tau / (a * (a - h) * denom_log * denom_log);
}

inline double eval_prfs(const Prfs& g, double a) {
  double s = std::abs(g.m);
  const double base = g.omega * std::numbers::pi * a;
  for (std::size_t i = 0; i < g.p.size(); ++i) {
    const double x = base * static_cast<double>(i + 1);
    s += g.p[i] * std::sin(x) + g.q[i] * std::cos(x);
  }
  return s;
}

inline double eval_unchecked(const BackwardFnSpec& spec, double a) {
  return std::visit(
      [a](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LifSurrogate>) {
          return eval_lif_surrogate(g.params, a);
        } else if constexpr (std::is_same_v<T, Prfs>) {
          return eval_prfs(g, a);
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          const double d = a - g.b;
          return g.a * std::exp(-d * d / (2.0 * g.c * g.c));
        } else {
          const double c = std::cos(g.omega * a + g.theta);
          return c * c;
        }
      },
      spec);
}

inline double eval(const BackwardFnSpec& spec, double a) {
  if (!std::isfinite(a)) throw NumericError("backward function evaluated at non-finite input");
  return eval_unchecked(spec, a);
}

inline std::string family_name(const BackwardFnSpec& spec) {
  static const char* names[] = {"lif", "prfs", "gaussian", "opto"};
  return names[spec.index()];
}

inline void validate(const BackwardFnSpec& spec) {
  std::visit(
      [](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LifSurrogate>) {
          g.params.validate();
        } else if constexpr (std::is_same_v<T, Prfs>) {
          if (g.p.empty() || g.p.size() != g.q.size()) throw ConfigError("prfs: p and q must be non-empty and equal length");
          if (!(g.omega > 0.0)) throw ConfigError("prfs: omega must be > 0");
          if (!(g.m >= 0.0)) throw ConfigError("prfs: m must be >= 0");
          for (double v : g.p) if (!std::isfinite(v)) throw ConfigError("prfs: non-finite coefficient");
          for (double v : g.q) if (!std::isfinite(v)) throw ConfigError("prfs: non-finite coefficient");
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          if (!(g.a > 0.0) || !(g.c > 0.0)) throw ConfigError("gaussian: a and c must be > 0");
        } else {
          if (!std::isfinite(g.omega) || !std::isfinite(g.theta)) throw ConfigError("opto: non-finite parameter");
        }
      },
      spec);
}

// Scales coefficients so sum(|p_k| + |q_k|) == 1. All-zero input is left alone.
inline void normalize(Prfs& g) {
  double z = 0.0;
  for (double v : g.p) z += std::abs(v);
  for (double v : g.q) z += std::abs(v);
  if (z == 0.0) return;
  for (double& v : g.p) v /= z;
  for (double& v : g.q) v /= z;
}

inline double coefficient_l1(const Prfs& g) {
  double z = 0.0;
  for (double v : g.p) z += std::abs(v);
  for (double v : g.q) z += std::abs(v);
  return z;
}

// p_k, q_k ~ U[-1, 1], then normalized; shift m defaults to 1 so g >= 0 everywhere.
inline Prfs sample_prfs(std::uint64_t seed, std::size_t k, double omega, double m = 1.0) {
  if (k < 1) throw ConfigError("prfs: k must be >= 1");
  if (!(omega > 0.0)) throw ConfigError("prfs: omega must be > 0");
  Engine eng = make_engine(seed, {stream::kPrfs});
  Prfs g;
  g.omega = omega;
  g.m = m;
  g.p.resize(k);
  g.q.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    g.p[i] = uniform(eng, -1.0, 1.0);
    g.q[i] = uniform(eng, -1.0, 1.0);
  }
  normalize(g);
  return g;
}

struct CorrelationConfig {
  double lo = -100.0;
  double hi = 100.0;
  double step = 0.01;

  void validate() const {
    if (!(lo < hi)) throw ConfigError("correlation: lo must be < hi");
    if (!(step > 0.0)) throw ConfigError("correlation: step must be > 0");
  }
  // Number of intervals; the last node lands on hi.
  std::size_t intervals() const { return static_cast<std::size_t>(std::llround((hi - lo) / step)); }
};

// Quadrature nodes x_i = (lo*n + (hi-lo)*i) / n. With integral-valued bounds
// and step = 1/N the numerator is exact, so nodes that coincide with a decimal
// such as h_th = 0.4 round to the same double and hit f' on its zero branch
// rather than just right of its singularity.
inline std::vector<double> quadrature_nodes(const CorrelationConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.intervals();
  if (n < 2) throw ConfigError("correlation: interval must span at least two steps");
  std::vector<double> x(n + 1);
  const double nd = static_cast<double>(n);
  const double width = cfg.hi - cfg.lo;
  for (std::size_t i = 0; i <= n; ++i) x[i] = (cfg.lo * nd + width * static_cast<double>(i)) / nd;
  return x;
}

namespace detail {

inline double trapezoid(const std::vector<double>& y, double h) {
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  s += 0.5 * (y.front() + y.back());
  return s * h;
}

inline std::vector<double> sample_fn(const BackwardFnSpec& g, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = eval_unchecked(g, x[i]);
  return y;
}

// Centers y in place by its interval mean; returns the centered L2 norm squared.
inline double center(std::vector<double>& y, double h, double width) {
  const double mean = trapezoid(y, h) / width;
  for (double& v : y) v -= mean;
  std::vector<double> sq(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) sq[i] = y[i] * y[i];
  return trapezoid(sq, h);
}

}  // namespace detail

// Reference samples are reusable across many correlation() calls.
struct CenteredSamples {
  std::vector<double> values;
  double norm2 = 0.0;
};

// `values` are samples at quadrature_nodes(cfg).
inline CenteredSamples centered_values(std::vector<double> values, const CorrelationConfig& cfg,
                                       const std::string& what = "function") {
  if (values.size() < 3) throw DimensionError("correlation: too few samples");
  const double h = (cfg.hi - cfg.lo) / static_cast<double>(values.size() - 1);
  CenteredSamples s;
  s.values = std::move(values);
  s.norm2 = detail::center(s.values, h, cfg.hi - cfg.lo);
  if (!(s.norm2 > 1e-300) || !std::isfinite(s.norm2)) {
    throw UndefinedCorrelation("undefined correlation: " + what + " has zero centered variance over the interval");
  }
  return s;
}

inline CenteredSamples centered_samples(const BackwardFnSpec& g, const CorrelationConfig& cfg,
                                        const std::vector<double>& nodes) {
  return centered_values(detail::sample_fn(g, nodes), cfg, family_name(g));
}

inline double correlation(const CenteredSamples& a, const CenteredSamples& b, const CorrelationConfig& cfg) {
  detail::require_dims(b.values.size(), a.values.size(), "correlation samples");
  const double h = (cfg.hi - cfg.lo) / static_cast<double>(a.values.size() - 1);
  std::vector<double> prod(a.values.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = a.values[i] * b.values[i];
  const double eta = detail::trapezoid(prod, h) / (std::sqrt(a.norm2) * std::sqrt(b.norm2));
  return std::clamp(eta, -1.0, 1.0);
}

// Centered cross-correlation normalized by the centered L2 norms (trapezoid rule).
inline double correlation(const BackwardFnSpec& g, const BackwardFnSpec& reference, const CorrelationConfig& cfg = {}) {
  const auto nodes = quadrature_nodes(cfg);
  const auto a = centered_samples(g, cfg, nodes);
  const auto b = centered_samples(reference, cfg, nodes);
  return correlation(a, b, cfg);
}

// Bins are [edges[i], edges[i+1]) except the last, which is closed; a value on
// an interior edge goes to the upper bin. Values outside fall into overflow.
struct CorrelationBins {
  std::vector<double> edges;
  std::vector<std::vector<std::size_t>> members;  // indices into the input list
  std::vector<std::vector<double>> etas;
  std::vector<std::size_t> overflow;

  std::size_t bin_count() const { return members.size(); }
  std::size_t total() const {
    std::size_t t = overflow.size();
    for (const auto& m : members) t += m.size();
    return t;
  }
};

inline std::ptrdiff_t bin_index(const std::vector<double>& edges, double eta) {
  if (edges.size() < 2) return -1;
  if (eta < edges.front() || eta > edges.back()) return -1;
  if (eta == edges.back()) return static_cast<std::ptrdiff_t>(edges.size()) - 2;
  const auto it = std::upper_bound(edges.begin(), edges.end(), eta);
  return static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
}

inline CorrelationBins bin_etas(const std::vector<double>& etas, const std::vector<double>& edges) {
  if (edges.size() < 2) throw ConfigError("bins need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw ConfigError("bin edges must be strictly increasing");
  }
  CorrelationBins out;
  out.edges = edges;
  out.members.resize(edges.size() - 1);
  out.etas.resize(edges.size() - 1);
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const auto b = bin_index(edges, etas[i]);
    if (b < 0) {
      out.overflow.push_back(i);
    } else {
      out.members[static_cast<std::size_t>(b)].push_back(i);
      out.etas[static_cast<std::size_t>(b)].push_back(etas[i]);
    }
  }
  return out;
}

inline CorrelationBins bin_by_correlation(const std::vector<Prfs>& specs, const BackwardFnSpec& reference,
                                          const std::vector<double>& edges, const CorrelationConfig& cfg = {}) {
  const auto nodes = quadrature_nodes(cfg);
  const auto ref = centered_samples(reference, cfg, nodes);
  std::vector<double> etas;
  etas.reserve(specs.size());
  for (const auto& s : specs) etas.push_back(correlation(centered_samples(s, cfg, nodes), ref, cfg));
  return bin_etas(etas, edges);
}

// ---- structured text --------------------------------------------------------
//
// One `key=value` per line under a prefix, e.g.
//   backward.family=prfs
//   backward.omega=0.01
//   backward.p=0.1,-0.2,0.05,0.15

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

inline std::map<std::string, std::string> to_fields(const BackwardFnSpec& spec, const std::string& prefix) {
  std::map<std::string, std::string> f;
  f[prefix + "family"] = family_name(spec);
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, LifSurrogate>) {
          f[prefix + "h_th"] = format_double(g.params.h_th);
          f[prefix + "t_ref"] = format_double(g.params.t_ref);
          f[prefix + "tau"] = format_double(g.params.tau);
        } else if constexpr (std::is_same_v<T, Prfs>) {
          f[prefix + "omega"] = format_double(g.omega);
          f[prefix + "m"] = format_double(g.m);
          f[prefix + "p"] = format_list(g.p);
          f[prefix + "q"] = format_list(g.q);
        } else if constexpr (std::is_same_v<T, Gaussian>) {
          f[prefix + "a"] = format_double(g.a);
          f[prefix + "b"] = format_double(g.b);
          f[prefix + "c"] = format_double(g.c);
        } else {
          f[prefix + "omega"] = format_double(g.omega);
          f[prefix + "theta"] = format_double(g.theta);
        }
      },
      spec);
  return f;
}

inline std::string to_text(const BackwardFnSpec& spec, const std::string& prefix = "backward.") {
  std::string out;
  for (const auto& [k, v] : to_fields(spec, prefix)) out += k + "=" + v + "\n";
  return out;
}

// Keys of each family, relative to the prefix.
inline const std::vector<std::string>& family_keys(const std::string& family) {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"lif", {"h_th", "t_ref", "tau"}},
      {"prfs", {"omega", "m", "p", "q"}},
      {"gaussian", {"a", "b", "c"}},
      {"opto", {"omega", "theta"}},
  };
  const auto it = keys.find(family);
  if (it == keys.end()) throw ConfigError("unknown backward family '" + family + "' (lif|prfs|gaussian|opto)");
  return it->second;
}

// Builds a spec from `prefix`-keyed fields. Missing parameters take the
// family defaults; LifSurrogate defaults to `lif`.
inline BackwardFnSpec from_fields(const std::map<std::string, std::string>& f, const std::string& prefix,
                                  const LifParams& lif = {}) {
  auto get = [&](const std::string& k) -> const std::string* {
    const auto it = f.find(prefix + k);
    return it == f.end() ? nullptr : &it->second;
  };
  auto num = [&](const std::string& k, double dflt) {
    const auto* v = get(k);
    return v ? text::parse_double(prefix + k, *v) : dflt;
  };
  const auto* fam = get("family");
  if (!fam) throw ConfigError(prefix + "family is required");
  const auto& known = family_keys(*fam);
  for (auto it = f.lower_bound(prefix); it != f.end() && it->first.rfind(prefix, 0) == 0; ++it) {
    const std::string k = it->first.substr(prefix.size());
    if (k != "family" && std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError("unknown key " + it->first + " for family " + *fam);
    }
  }
  BackwardFnSpec out;
  if (*fam == "lif") {
    LifSurrogate g{lif};
    g.params.h_th = num("h_th", lif.h_th);
    g.params.t_ref = num("t_ref", lif.t_ref);
    g.params.tau = num("tau", lif.tau);
    out = g;
  } else if (*fam == "prfs") {
    Prfs g;
    g.omega = num("omega", g.omega);
    g.m = num("m", g.m);
    if (const auto* p = get("p")) g.p = text::parse_list(prefix + "p", *p);
    if (const auto* q = get("q")) g.q = text::parse_list(prefix + "q", *q);
    out = g;
  } else if (*fam == "gaussian") {
    Gaussian g;
    g.a = num("a", g.a);
    g.b = num("b", g.b);
    g.c = num("c", g.c);
    out = g;
  } else if (*fam == "opto") {
    Opto g;
    g.omega = num("omega", g.omega);
    g.theta = num("theta", g.theta);
    out = g;
  }
  validate(out);
  return out;
}

inline BackwardFnSpec from_text(const std::string& body, const std::string& prefix = "backward.") {
  return from_fields(text::parse_lines(body, "backward spec"), prefix);
}

}  // namespace adfa
