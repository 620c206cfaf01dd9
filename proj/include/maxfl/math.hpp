#pragma once

// Sigmoid weighting math shared by every module: the appeal indicator,
// the two aggregation-weight formulas, and numerically careful helpers.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace maxfl {

// Raised on invalid configuration or mismatched dimensions.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Raised on malformed input files (IDX, TOML, CSV paths).
class IngestError : public std::runtime_error {
 public:
  explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Logistic function 1/(1+exp(-x)), evaluated through exp(-|x|) so it is
/// stable for |x| up to the exp underflow limit (~745).
inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Which formula maps an appeal gap to an aggregation weight. The gradient
// of the sigmoid objective gives sigma(gap)*(1-sigma(gap)); the raw form
// sigma(gap) is kept as an ablation switch.
enum class WeightMode {
  SigmoidDerivative,
  RawSigmoid,
};

/// Aggregation weight q(gap). SigmoidDerivative is computed from exp(-|gap|)
/// as a product of the two logistic branches, which makes q(x) == q(-x)
/// bit-exact and pins the maximum 0.25 at gap 0.
inline double weight_from_gap(double gap, WeightMode mode) {
  if (mode == WeightMode::RawSigmoid) {
    return sigmoid(gap);
  }
  const double e = std::exp(-std::abs(gap));
  const double s_hi = 1.0 / (1.0 + e);  // sigma(|gap|)
  const double s_lo = e / (1.0 + e);    // sigma(-|gap|)
  return s_hi * s_lo;
}

/// Strict appeal indicator: the model appeals iff loss < rho.
inline bool appeals(double loss, double rho) { return loss < rho; }

// Neumaier-compensated accumulator. Used wherever the spec demands an
// order-fixed, reproducible reduction.
class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// ---- flat-vector helpers -------------------------------------------------

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::span<double> v, double alpha) {
  for (double& x : v) x *= alpha;
}

}  // namespace maxfl
