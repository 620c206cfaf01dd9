#pragma once

// Evaluation quantities: GM-appeal, average and preferred-model test
// accuracy, the empirical-vs-true loss diagnostic, and the weighted
// gradient-norm / dissimilarity diagnostics.

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "maxfl/client.hpp"
#include "maxfl/math.hpp"
#include "maxfl/model.hpp"

namespace maxfl {

// One per-round metrics row. Fractions are in [0,1]; accuracy fields are
// NaN for regression models.
struct RoundRecord {
  int t = 0;
  double gm_appeal_seen = 0.0;
  double gm_appeal_unseen = 0.0;
  double avg_acc_seen = 0.0;
  double avg_acc_unseen = 0.0;
  double pref_acc_seen = 0.0;
  double pref_acc_unseen = 0.0;
  int n_participating = 0;
  int n_eligible = 0;
  bool skipped = false;
  double grad_norm = 0.0;
  double loss_gap = 0.0;
  int n_diverged = 0;
  // heterogeneity diagnostic, not part of the CSV contract
  double dissim_ratio = 0.0;
  double dissim_residual = 0.0;
};

/// Fraction of clients with strict loss < rho_k on the chosen split.
inline double gm_appeal(const ModelParams& w, const std::vector<ClientProfile>& profiles,
                        const ModelSpec& spec, LossBasis basis) {
  if (profiles.empty()) throw ConfigError("gm_appeal: no clients");
  std::size_t hits = 0;
  for (const auto& p : profiles) {
    if (evaluate_appeal(p, spec, w, basis)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(profiles.size());
}

/// Mean test accuracy of w across clients (NaN for regression models).
inline double average_test_accuracy(const ModelParams& w,
                                    const std::vector<ClientProfile>& profiles,
                                    const ModelSpec& spec) {
  if (!spec.is_classification()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& p : profiles) s += accuracy(spec, w, p.data.test);
  return s / static_cast<double>(profiles.size());
}

/// Per client: test accuracy of w (fine-tuned fine_tune_steps first when
/// > 0) if that model appeals on the train basis, else test accuracy of the
/// solo model; returns the mean.
inline double preferred_model_accuracy(const ModelParams& w,
                                       const std::vector<ClientProfile>& profiles,
                                       const ModelSpec& spec, int fine_tune_steps, double eta_l,
                                       std::size_t b, std::uint64_t seed,
                                       std::uint64_t round_tag) {
  if (!spec.is_classification()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const auto& p : profiles) {
    const ModelParams* cand = &w;
    ModelParams tuned;
    if (fine_tune_steps > 0) {
      RngStream rng(seed, {p.id, round_tag, Purpose::FineTune});
      tuned = fine_tune(p, spec, w, fine_tune_steps, eta_l, b, rng);
      cand = &tuned;
    }
    if (evaluate_appeal(p, spec, *cand, LossBasis::TrainLoss)) {
      s += accuracy(spec, *cand, p.data.test);
    } else {
      s += accuracy(spec, p.solo_model, p.data.test);
    }
  }
  return s / static_cast<double>(profiles.size());
}

/// |mean_k test-loss(w) - mean_k train-loss(w)|: the f_k ~ F_k relaxation
/// check, reported per round.
inline double loss_gap_diagnostic(const ModelParams& w,
                                  const std::vector<ClientProfile>& profiles,
                                  const ModelSpec& spec) {
  double tr = 0.0, te = 0.0;
  std::size_t n = 0;
  for (const auto& p : profiles) {
    if (p.data.n_train() == 0 || p.data.n_test() == 0) continue;
    tr += loss(spec, w, p.data.train);
    te += loss(spec, w, p.data.test);
    ++n;
  }
  if (n == 0) return 0.0;
  return std::abs(te / static_cast<double>(n) - tr / static_cast<double>(n));
}

/// || (1/M) sum_k q(gap_k) grad F_k(w) ||_2 with full-dataset gradients;
/// the gradient norm of the sigmoid objective when mode is SigmoidDerivative.
inline double maxfl_grad_norm(const ModelParams& w, const std::vector<ClientProfile>& profiles,
                              const ModelSpec& spec, WeightMode mode) {
  if (profiles.empty()) throw ConfigError("maxfl_grad_norm: no clients");
  std::vector<double> acc(w.size(), 0.0);
  for (const auto& p : profiles) {
    const double gap = loss(spec, w, p.data.train) - p.rho;
    const double q = weight_from_gap(gap, mode);
    const ModelParams g = grad(spec, w, p.data.train);
    axpy(q, g, acc);
  }
  scale(acc, 1.0 / static_cast<double>(profiles.size()));
  return l2_norm(acc);
}

/// Value of the relaxed objective (1/M) sum_k sigma(F_k(w) - rho_k).
inline double maxfl_objective(const ModelParams& w, const std::vector<ClientProfile>& profiles,
                              const ModelSpec& spec) {
  double s = 0.0;
  for (const auto& p : profiles) s += sigmoid(loss(spec, w, p.data.train) - p.rho);
  return s / static_cast<double>(profiles.size());
}

/// The 0-1 objective sum_k sign(F_k(w) - rho_k), sign(x) = 1 for x >= 0.
/// Diagnostic only; never optimized.
inline double sign_objective(const ModelParams& w, const std::vector<ClientProfile>& profiles,
                             const ModelSpec& spec) {
  double s = 0.0;
  for (const auto& p : profiles) {
    s += (loss(spec, w, p.data.train) - p.rho) >= 0.0 ? 1.0 : 0.0;
  }
  return s;
}

/// Margin variant sum_k max{rho_k - F_k(w), 0}. Diagnostic only.
inline double appeal_margin(const ModelParams& w, const std::vector<ClientProfile>& profiles,
                            const ModelSpec& spec) {
  double s = 0.0;
  for (const auto& p : profiles) {
    s += std::max(p.rho - loss(spec, w, p.data.train), 0.0);
  }
  return s;
}

/// Pointwise bounded-dissimilarity diagnostic: returns
/// ( (1/M) sum ||grad F_i||^2 / ||mean grad||^2 , numerator ). A zero mean
/// gradient yields a +inf ratio with the numerator intact.
inline std::pair<double, double> dissimilarity_estimate(
    const ModelParams& w, const std::vector<ClientProfile>& profiles, const ModelSpec& spec) {
  std::vector<double> mean(w.size(), 0.0);
  double num = 0.0;
  for (const auto& p : profiles) {
    const ModelParams g = grad(spec, w, p.data.train);
    const double n = l2_norm(g);
    num += n * n;
    axpy(1.0, g, mean);
  }
  const double inv_m = 1.0 / static_cast<double>(profiles.size());
  num *= inv_m;
  scale(mean, inv_m);
  const double mn = l2_norm(mean);
  if (mn == 0.0) return {std::numeric_limits<double>::infinity(), num};
  return {num / (mn * mn), num};
}

}  // namespace maxfl
