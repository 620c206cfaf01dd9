#pragma once

// One-dimensional mean-estimation toolkit: the relaxed objective
// v(w) = (1/K) sum_k h((w - theta_hat_k)^2) for two or three clients, its
// stationary-point structure, and Monte-Carlo appeal estimates for the
// FedAvg mean versus a sigmoid-objective local minimum.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "maxfl/math.hpp"
#include "maxfl/rng.hpp"

namespace maxfl {

struct MeanEstProblem {
  std::vector<double> theta;      // true means theta_k
  std::vector<double> theta_hat;  // empirical means
  double gamma2 = 1.0;            // variance of the empirical means, nu^2/N

  std::size_t k() const { return theta_hat.size(); }

  // ((theta_2 - theta_1)/2)^2, defined for two clients.
  double gamma_g2() const {
    const double d = (theta[1] - theta[0]) / 2.0;
    return d * d;
  }
  // Empirical half-gap (theta_hat_j - theta_hat_i)/2 with i=argmin, j=argmax.
  double gamma_hat_g() const {
    const auto [lo, hi] = std::minmax_element(theta_hat.begin(), theta_hat.end());
    return (*hi - *lo) / 2.0;
  }
};

enum class SurrogateKind { Sigmoid, Softplus, Relu };

namespace detail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double surrogate(double x, SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::Sigmoid: return sigmoid(x);
    case SurrogateKind::Softplus: return softplus(x);
    case SurrogateKind::Relu: return std::max(0.0, x);
  }
  return 0.0;
}

inline double surrogate_deriv(double x, SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::Sigmoid: return weight_from_gap(x, WeightMode::SigmoidDerivative);
    case SurrogateKind::Softplus: return sigmoid(x);
    case SurrogateKind::Relu: return x > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace detail

/// v(w) = (1/K) sum_k h((w - theta_hat_k)^2).
inline double objective_v(const MeanEstProblem& p, double w, SurrogateKind kind) {
  double s = 0.0;
  for (double th : p.theta_hat) {
    const double d = w - th;
    s += detail::surrogate(d * d, kind);
  }
  return s / static_cast<double>(p.k());
}

/// dv/dw = (2/K) sum_k h'((w - theta_hat_k)^2) (w - theta_hat_k).
inline double grad_v(const MeanEstProblem& p, double w, SurrogateKind kind) {
  double s = 0.0;
  for (double th : p.theta_hat) {
    const double d = w - th;
    s += detail::surrogate_deriv(d * d, kind) * d;
  }
  return 2.0 * s / static_cast<double>(p.k());
}

/// Second derivative for the sigmoid surrogate:
/// (2/K) sum_k [ f(u_k) u_k + q(u_k) ] with u_k = (w - theta_hat_k)^2,
/// q(x) = sigma(x)(1-sigma(x)), f(x) = 2 q(x) (1 - 2 sigma(x)).
inline double hessian_v(const MeanEstProblem& p, double w) {
  double s = 0.0;
  for (double th : p.theta_hat) {
    const double d = w - th;
    const double u = d * d;
    const double sig = sigmoid(u);
    const double q = weight_from_gap(u, WeightMode::SigmoidDerivative);
    const double f = 2.0 * q * (1.0 - 2.0 * sig);
    s += f * u + q;
  }
  return 2.0 * s / static_cast<double>(p.k());
}

enum class StationaryType { Minimum, Maximum };

struct StationaryPoint {
  double w = 0.0;
  StationaryType type = StationaryType::Minimum;
};

/// All stationary points of v, located on a dense grid over
/// [min theta_hat - 3, max theta_hat + 3] at step 1e-3 with bisection
/// refinement of each sign change to |grad| <= 1e-10, classified by the
/// hessian sign (sigmoid) or a second difference (other surrogates).
inline std::vector<StationaryPoint> find_local_minima(const MeanEstProblem& p,
                                                      SurrogateKind kind) {
  const auto [lo_it, hi_it] = std::minmax_element(p.theta_hat.begin(), p.theta_hat.end());
  const double lo = *lo_it - 3.0;
  const double hi = *hi_it + 3.0;
  constexpr double kStep = 1e-3;
  const std::size_t n = static_cast<std::size_t>(std::ceil((hi - lo) / kStep));

  auto g = [&](double w) { return grad_v(p, w, kind); };

  std::vector<double> roots;
  double w_prev = lo;
  double g_prev = g(lo);
  for (std::size_t i = 1; i <= n; ++i) {
    const double w_cur = std::min(lo + static_cast<double>(i) * kStep, hi);
    const double g_cur = g(w_cur);
    if (g_prev == 0.0) {
      roots.push_back(w_prev);
    } else if ((g_prev < 0.0) != (g_cur < 0.0) && g_cur != 0.0) {
      // bisect [w_prev, w_cur] all the way to bracket collapse; this leaves
      // |grad| far below the 1e-10 target and resolves roots that hug a
      // band edge to machine precision
      double a = w_prev, b = w_cur, ga = g_prev;
      double mid = 0.5 * (a + b);
      for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (a + b);
        if (mid == a || mid == b) break;
        const double gm = g(mid);
        if (gm == 0.0) break;
        if ((gm < 0.0) == (ga < 0.0)) {
          a = mid;
          ga = gm;
        } else {
          b = mid;
        }
      }
      roots.push_back(mid);
    }
    w_prev = w_cur;
    g_prev = g_cur;
  }
  if (g_prev == 0.0) roots.push_back(w_prev);

  // Dedup near-identical roots from adjacent brackets.
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(),
                          [](double a, double b) { return std::abs(a - b) < 1e-9; }),
              roots.end());

  std::vector<StationaryPoint> out;
  out.reserve(roots.size());
  for (double r : roots) {
    double curvature;
    if (kind == SurrogateKind::Sigmoid) {
      curvature = hessian_v(p, r);
    } else {
      constexpr double d = 1e-4;
      curvature = objective_v(p, r - d, kind) - 2.0 * objective_v(p, r, kind) +
                  objective_v(p, r + d, kind);
    }
    out.push_back({r, curvature >= 0.0 ? StationaryType::Minimum : StationaryType::Maximum});
  }
  return out;
}

/// The minimum used by the MaxFL estimator: lowest objective value,
/// ties broken toward the lowest w.
inline double select_minimum(const MeanEstProblem& p, SurrogateKind kind) {
  const auto pts = find_local_minima(p, kind);
  bool have = false;
  double best_w = 0.0, best_v = 0.0;
  for (const auto& sp : pts) {
    if (sp.type != StationaryType::Minimum) continue;
    const double v = objective_v(p, sp.w, kind);
    if (!have || v < best_v || (v == best_v && sp.w < best_w)) {
      have = true;
      best_w = sp.w;
      best_v = v;
    }
  }
  if (!have) {
    // Cannot happen for these surrogates (grad < 0 left of min theta_hat and
    // > 0 right of max theta_hat), but keep a deterministic fallback.
    return p.theta_hat.empty() ? 0.0 : p.theta_hat.front();
  }
  return best_w;
}

enum class Estimator { FedAvgMean, MaxFlMinimum, ReluSurrogate };

inline std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::FedAvgMean: return "fedavg_mean";
    case Estimator::MaxFlMinimum: return "maxfl_minimum";
    case Estimator::ReluSurrogate: return "maxfl_relu";
  }
  return "?";
}

struct AppealEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t trials = 0;
};

namespace detail {

inline double estimate_w(Estimator est, const MeanEstProblem& p) {
  switch (est) {
    case Estimator::FedAvgMean: {
      double s = 0.0;
      for (double th : p.theta_hat) s += th;
      return s / static_cast<double>(p.k());
    }
    case Estimator::MaxFlMinimum:
      return select_minimum(p, SurrogateKind::Sigmoid);
    case Estimator::ReluSurrogate:
      return select_minimum(p, SurrogateKind::Relu);
  }
  return 0.0;
}

// One trial: sample empirical means, place the estimator's model, and
// return the fraction of clients with (w - theta_k)^2 < (hat - theta_k)^2.
template <typename PerTrial>
AppealEstimate mc_appeal(Estimator est, const std::vector<double>& theta, double gamma2,
                         std::size_t trials, std::uint64_t seed, PerTrial&& per_trial) {
  const double gamma = std::sqrt(gamma2);
  std::vector<double> vals(trials);
  MeanEstProblem p;
  p.theta = theta;
  p.gamma2 = gamma2;
  p.theta_hat.resize(theta.size());
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng(seed, {t, 0, Purpose::MeanEst});
    for (std::size_t k = 0; k < theta.size(); ++k) {
      p.theta_hat[k] = theta[k] + gamma * rng.next_gaussian();
    }
    const double w = estimate_w(est, p);
    double hit = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double dw = w - theta[k];
      const double dh = p.theta_hat[k] - theta[k];
      if (dw * dw < dh * dh) hit += 1.0;
    }
    vals[t] = hit / static_cast<double>(theta.size());
    per_trial(t, p, w);
  }
  NeumaierSum sum;
  for (double v : vals) sum.add(v);
  const double mean = sum.value() / static_cast<double>(trials);
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  const double se =
      trials > 1 ? std::sqrt(var / static_cast<double>(trials - 1) / static_cast<double>(trials))
                 : 0.0;
  return {mean, se, trials};
}

}  // namespace detail

/// Monte-Carlo expected appeal of an estimator over `trials` independent
/// draws of the empirical means.
inline AppealEstimate expected_appeal(Estimator est, const std::vector<double>& theta,
                                      double gamma2, std::size_t trials, std::uint64_t seed) {
  return detail::mc_appeal(est, theta, gamma2, trials, seed,
                           [](std::size_t, const MeanEstProblem&, double) {});
}

/// Analytic bound the estimator is compared against: Lemma-style upper
/// bound 2 exp(-gamma_G^2 / 5 gamma^2) for the mean estimators, and the
/// (1/16) exp(-1/gamma^2) lower bound for the sigmoid minimum.
inline double appeal_bound(Estimator est, double gamma_g2, double gamma2) {
  if (est == Estimator::MaxFlMinimum) return std::exp(-1.0 / gamma2) / 16.0;
  return 2.0 * std::exp(-gamma_g2 / (5.0 * gamma2));
}

struct ThreeClientReport {
  AppealEstimate fedavg;
  AppealEstimate maxfl;
  std::array<double, 3> fedavg_client_appeal{};  // per-client appeal rates
  std::array<double, 3> maxfl_client_appeal{};
  int close_i = -1, close_j = -1;          // indices of the closest pair
  double close_midpoint_fraction = 0.0;    // maxfl minimum within 3 gamma of the
                                           // closest pair's empirical midpoint
  std::string label;                       // all_close / all_far / two_close_one_far
};

/// Evaluates one three-client configuration with both estimators and
/// reports which clients each one satisfies.
inline ThreeClientReport three_client_cases(const std::array<double, 3>& theta, double gamma2,
                                            std::size_t trials, std::uint64_t seed) {
  ThreeClientReport rep;
  const std::vector<double> th(theta.begin(), theta.end());
  const double gamma = std::sqrt(gamma2);

  // closest pair by true means
  double best = std::abs(theta[1] - theta[0]);
  rep.close_i = 0;
  rep.close_j = 1;
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const double d = std::abs(theta[b] - theta[a]);
      if (d < best) {
        best = d;
        rep.close_i = a;
        rep.close_j = b;
      }
    }
  }
  double far = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) far = std::max(far, std::abs(theta[b] - theta[a]));
  }
  if (far <= 2.0 * gamma) {
    rep.label = "all_close";
  } else if (best > 2.0 * gamma) {
    rep.label = "all_far";
  } else {
    rep.label = "two_close_one_far";
  }

  std::array<double, 3> fed_hits{}, max_hits{};
  std::size_t near_mid = 0;
  auto count_clients = [&](std::array<double, 3>& hits, const MeanEstProblem& p, double w) {
    for (int k = 0; k < 3; ++k) {
      const double dw = w - p.theta[k];
      const double dh = p.theta_hat[k] - p.theta[k];
      if (dw * dw < dh * dh) hits[k] += 1.0;
    }
  };
  rep.fedavg = detail::mc_appeal(
      Estimator::FedAvgMean, th, gamma2, trials, seed,
      [&](std::size_t, const MeanEstProblem& p, double w) { count_clients(fed_hits, p, w); });
  rep.maxfl = detail::mc_appeal(Estimator::MaxFlMinimum, th, gamma2, trials, seed,
                                [&](std::size_t, const MeanEstProblem& p, double w) {
                                  count_clients(max_hits, p, w);
                                  const double mid =
                                      (p.theta_hat[rep.close_i] + p.theta_hat[rep.close_j]) / 2.0;
                                  if (std::abs(w - mid) <= 3.0 * gamma) ++near_mid;
                                });
  for (int k = 0; k < 3; ++k) {
    rep.fedavg_client_appeal[k] = fed_hits[k] / static_cast<double>(trials);
    rep.maxfl_client_appeal[k] = max_hits[k] / static_cast<double>(trials);
  }
  rep.close_midpoint_fraction = static_cast<double>(near_mid) / static_cast<double>(trials);
  return rep;
}

}  // namespace maxfl
