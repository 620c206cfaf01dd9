#pragma once

// Small differentiable predictors with closed-form forward, loss and
// gradient. Parameters are a flat vector of doubles; gradients come from
// manual backprop and are checked against central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "maxfl/math.hpp"
#include "maxfl/rng.hpp"

namespace maxfl {

using ModelParams = std::vector<double>;

// Sample store backing one split of one client (or a whole pool).
// features is row-major n x dim; targets holds the class label (as a double)
// for classification or the regression target. ids are pool-global sample
// ids used to verify partition disjointness.
struct SampleSet {
  std::vector<double> features;
  std::vector<double> targets;
  std::vector<std::uint64_t> ids;
  std::size_t n = 0;
  std::size_t dim = 0;

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  void push_back(std::span<const double> x, double y, std::uint64_t id) {
    features.insert(features.end(), x.begin(), x.end());
    targets.push_back(y);
    ids.push_back(id);
    ++n;
  }
};

enum class ModelKind {
  ScalarQuadratic,   // one parameter w, per-sample loss (w - y)^2
  LinearRegression,  // weights + bias, mean squared error
  SoftmaxRegression, // one linear layer, softmax cross-entropy
  Mlp,               // ReLU hidden layers, softmax cross-entropy
};

struct ModelSpec {
  ModelKind kind = ModelKind::ScalarQuadratic;
  // Layer widths. LinearRegression: [in]; SoftmaxRegression: [in, classes];
  // Mlp: [in, hidden..., classes].
  std::vector<int> layer_sizes;

  static ModelSpec scalar_quadratic() { return {ModelKind::ScalarQuadratic, {}}; }
  static ModelSpec linear_regression(int dim) {
    return {ModelKind::LinearRegression, {dim}};
  }
  static ModelSpec softmax_regression(int dim, int classes) {
    return {ModelKind::SoftmaxRegression, {dim, classes}};
  }
  static ModelSpec mlp(std::vector<int> layers) {
    if (layers.size() < 2) throw ConfigError("mlp needs at least [input, classes] layer sizes");
    return {ModelKind::Mlp, std::move(layers)};
  }

  bool is_classification() const {
    return kind == ModelKind::SoftmaxRegression || kind == ModelKind::Mlp;
  }
  int input_dim() const {
    return kind == ModelKind::ScalarQuadratic ? 0 : layer_sizes.front();
  }
  int n_classes() const { return is_classification() ? layer_sizes.back() : 0; }

  std::size_t param_count() const {
    switch (kind) {
      case ModelKind::ScalarQuadratic:
        return 1;
      case ModelKind::LinearRegression:
        return static_cast<std::size_t>(layer_sizes[0]) + 1;
      case ModelKind::SoftmaxRegression:
      case ModelKind::Mlp: {
        std::size_t d = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
          d += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
        }
        return d;
      }
    }
    return 0;
  }
};

/// Zero init for the closed-form models; uniform(-a, a) with
/// a = sqrt(6/(fan_in+fan_out)) for Mlp weights, zero biases.
inline ModelParams init_params(const ModelSpec& spec, RngStream& rng) {
  ModelParams w(spec.param_count(), 0.0);
  if (spec.kind != ModelKind::Mlp) return w;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (int i = 0; i < fan_in * fan_out; ++i) {
      w[off + i] = (2.0 * rng.next_double() - 1.0) * a;
    }
    off += static_cast<std::size_t>(fan_in) * fan_out + fan_out;  // biases stay 0
  }
  return w;
}

namespace detail {

inline void check_batch(const ModelSpec& spec, const ModelParams& params,
                        const SampleSet& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ConfigError("empty batch");
  if (params.size() != spec.param_count()) {
    throw ConfigError("parameter vector has dimension " + std::to_string(params.size()) +
                      ", model expects " + std::to_string(spec.param_count()));
  }
  if (spec.kind != ModelKind::ScalarQuadratic &&
      data.dim != static_cast<std::size_t>(spec.input_dim())) {
    throw ConfigError("sample dimension " + std::to_string(data.dim) +
                      " does not match model input " + std::to_string(spec.input_dim()));
  }
}

// Forward pass for the layered models. Returns all activations; hidden
// layers are ReLU, the last layer stays linear (logits).
inline void layered_forward(const ModelSpec& spec, const ModelParams& params,
                            std::span<const double> x,
                            std::vector<std::vector<double>>& acts) {
  const auto& ls = spec.layer_sizes;
  acts.resize(ls.size());
  acts[0].assign(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
    const int in = ls[l], out = ls[l + 1];
    acts[l + 1].assign(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double s = 0.0;
      const double* wrow = params.data() + off + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) s += wrow[i] * acts[l][i];
      s += params[off + static_cast<std::size_t>(in) * out + o];
      const bool hidden = (l + 2 < ls.size());
      acts[l + 1][o] = hidden ? std::max(0.0, s) : s;
    }
    off += static_cast<std::size_t>(in) * out + out;
  }
}

/// log(sum exp(z)) via the max shift.
inline double log_sum_exp(std::span<const double> z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace detail

/// Mean loss over the given rows: squared error for the scalar/regression
/// models, softmax cross-entropy (log-sum-exp form) for the classifiers.
inline double loss(const ModelSpec& spec, const ModelParams& params, const SampleSet& data,
                   std::span<const std::size_t> rows) {
  detail::check_batch(spec, params, data, rows);
  double acc = 0.0;
  switch (spec.kind) {
    case ModelKind::ScalarQuadratic: {
      for (std::size_t r : rows) {
        const double d = params[0] - data.targets[r];
        acc += d * d;
      }
      break;
    }
    case ModelKind::LinearRegression: {
      const int in = spec.layer_sizes[0];
      for (std::size_t r : rows) {
        const auto x = data.row(r);
        double pred = params[in];
        for (int i = 0; i < in; ++i) pred += params[i] * x[i];
        const double d = pred - data.targets[r];
        acc += d * d;
      }
      break;
    }
    case ModelKind::SoftmaxRegression:
    case ModelKind::Mlp: {
      std::vector<std::vector<double>> acts;
      for (std::size_t r : rows) {
        detail::layered_forward(spec, params, data.row(r), acts);
        const auto& logits = acts.back();
        const int y = static_cast<int>(data.targets[r]);
        acc += detail::log_sum_exp(logits) - logits[y];
      }
      break;
    }
  }
  return acc / static_cast<double>(rows.size());
}

/// Analytic gradient of loss() over the same rows, via manual backprop.
inline ModelParams grad(const ModelSpec& spec, const ModelParams& params, const SampleSet& data,
                        std::span<const std::size_t> rows) {
  detail::check_batch(spec, params, data, rows);
  ModelParams g(params.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(rows.size());
  switch (spec.kind) {
    case ModelKind::ScalarQuadratic: {
      for (std::size_t r : rows) g[0] += 2.0 * (params[0] - data.targets[r]);
      break;
    }
    case ModelKind::LinearRegression: {
      const int in = spec.layer_sizes[0];
      for (std::size_t r : rows) {
        const auto x = data.row(r);
        double pred = params[in];
        for (int i = 0; i < in; ++i) pred += params[i] * x[i];
        const double d = 2.0 * (pred - data.targets[r]);
        for (int i = 0; i < in; ++i) g[i] += d * x[i];
        g[in] += d;
      }
      break;
    }
    case ModelKind::SoftmaxRegression:
    case ModelKind::Mlp: {
      const auto& ls = spec.layer_sizes;
      std::vector<std::vector<double>> acts;
      std::vector<double> delta, delta_prev;
      // layer parameter offsets
      std::vector<std::size_t> offs(ls.size() - 1);
      std::size_t off = 0;
      for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
        offs[l] = off;
        off += static_cast<std::size_t>(ls[l]) * ls[l + 1] + ls[l + 1];
      }
      for (std::size_t r : rows) {
        detail::layered_forward(spec, params, data.row(r), acts);
        const auto& logits = acts.back();
        const int y = static_cast<int>(data.targets[r]);
        // dL/dlogits = softmax - onehot
        const double lse = detail::log_sum_exp(logits);
        delta.resize(logits.size());
        for (std::size_t c = 0; c < logits.size(); ++c) {
          delta[c] = std::exp(logits[c] - lse) - (static_cast<int>(c) == y ? 1.0 : 0.0);
        }
        for (std::size_t l = ls.size() - 1; l-- > 0;) {
          const int in = ls[l], out = ls[l + 1];
          double* gw = g.data() + offs[l];
          double* gb = gw + static_cast<std::size_t>(in) * out;
          for (int o = 0; o < out; ++o) {
            for (int i = 0; i < in; ++i) gw[static_cast<std::size_t>(o) * in + i] += delta[o] * acts[l][i];
            gb[o] += delta[o];
          }
          if (l == 0) break;
          // back through the ReLU of layer l
          const double* wmat = params.data() + offs[l];
          delta_prev.assign(in, 0.0);
          for (int i = 0; i < in; ++i) {
            if (acts[l][i] <= 0.0) continue;  // ReLU gate
            double s = 0.0;
            for (int o = 0; o < out; ++o) s += wmat[static_cast<std::size_t>(o) * in + i] * delta[o];
            delta_prev[i] = s;
          }
          delta.swap(delta_prev);
        }
      }
      break;
    }
  }
  scale(g, inv_b);
  return g;
}

// Full-split overloads.
namespace detail {
inline std::vector<std::size_t> all_rows(const SampleSet& d) {
  std::vector<std::size_t> r(d.n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}
}  // namespace detail

inline double loss(const ModelSpec& spec, const ModelParams& params, const SampleSet& data) {
  return loss(spec, params, data, detail::all_rows(data));
}
inline ModelParams grad(const ModelSpec& spec, const ModelParams& params, const SampleSet& data) {
  return grad(spec, params, data, detail::all_rows(data));
}

/// Smallest |pre-activation| over all hidden ReLU units and rows, +inf for
/// models without hidden layers. Central differences are invalid within ~h
/// of a kink, so finite-difference oracles should reject states where this
/// falls below a safe multiple of their step.
inline double min_hidden_preactivation(const ModelSpec& spec, const ModelParams& params,
                                        const SampleSet& data,
                                        std::span<const std::size_t> rows) {
  double lo = std::numeric_limits<double>::infinity();
  if (spec.kind != ModelKind::Mlp || spec.layer_sizes.size() < 3) return lo;
  const auto& ls = spec.layer_sizes;
  for (std::size_t r : rows) {
    std::vector<double> cur(data.row(r).begin(), data.row(r).end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 2 < ls.size(); ++l) {
      const int in = ls[l], out = ls[l + 1];
      std::vector<double> nxt(out);
      for (int o = 0; o < out; ++o) {
        double s = params[off + static_cast<std::size_t>(in) * out + o];
        const double* wrow = params.data() + off + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) s += wrow[i] * cur[i];
        lo = std::min(lo, std::abs(s));
        nxt[o] = std::max(0.0, s);
      }
      off += static_cast<std::size_t>(in) * out + out;
      cur = std::move(nxt);
    }
  }
  return lo;
}

/// Central-difference check of grad(): max over coordinates of
/// |analytic - fd| / max(1, |analytic|).
inline double fd_check(const ModelSpec& spec, const ModelParams& params, const SampleSet& data,
                       std::span<const std::size_t> rows, double h) {
  if (!(h > 0.0 && h <= 1e-2)) throw ConfigError("fd_check step h must be in (0, 1e-2]");
  const ModelParams g = grad(spec, params, data, rows);
  ModelParams p = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double up = loss(spec, p, data, rows);
    p[i] = saved - h;
    const double dn = loss(spec, p, data, rows);
    p[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    const double err = std::abs(g[i] - fd) / std::max(1.0, std::abs(g[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Fraction of argmax-correct predictions over the whole split;
/// ties break toward the lowest class index.
inline double accuracy(const ModelSpec& spec, const ModelParams& params, const SampleSet& data) {
  if (!spec.is_classification()) {
    throw ConfigError("accuracy is only defined for classification models");
  }
  if (data.n == 0) throw ConfigError("empty sample set");
  std::vector<std::vector<double>> acts;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.n; ++r) {
    detail::layered_forward(spec, params, data.row(r), acts);
    const auto& logits = acts.back();
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
      if (logits[c] > logits[best]) best = c;  // strict: ties keep lowest index
    }
    if (static_cast<int>(best) == static_cast<int>(data.targets[r])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.n);
}

}  // namespace maxfl
