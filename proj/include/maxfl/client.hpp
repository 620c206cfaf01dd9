#pragma once

// Everything a single client does: warm-up solo training that fixes its
// requirement rho_k, local SGD rounds, weight reporting, fine-tuning,
// appeal evaluation, and Byzantine corruption of an update.

#include <cmath>
#include <cstdint>
#include <limits>
#include <variant>
#include <vector>

#include "maxfl/data.hpp"
#include "maxfl/math.hpp"
#include "maxfl/model.hpp"
#include "maxfl/rng.hpp"

namespace maxfl {

enum class ParticipationMode { Mandatory, AppealBased };
enum class LossBasis { TrainLoss, TestLoss };

struct ClientProfile {
  std::size_t id = 0;
  ClientDataset data;
  double rho = std::numeric_limits<double>::quiet_NaN();  // frozen after warmup
  ModelParams solo_model;                                 // w_hat_k, frozen after warmup
  bool byzantine = false;
  ParticipationMode participation = ParticipationMode::AppealBased;
  bool last_appeal = false;

  bool warmed_up() const { return !solo_model.empty(); }
};

struct ClientUpdate {
  std::size_t client_id = 0;
  std::size_t n_train = 0;
  ModelParams delta;              // w^(t,0) - w^(t,tau)
  double reported_weight = 0.0;   // q_k at round start
  double gap = 0.0;               // F_k(w0) - rho_k, pre-corruption
  double loss_w0 = 0.0;           // F_k(w0) on the full train split
  bool participated = false;
  bool diverged = false;

  bool usable() const { return participated && !diverged; }
};

// How a local SGD step is modified by the aggregation strategy.
struct SgdPlain {};
struct SgdProx {
  double mu = 0.0;
  const ModelParams* anchor = nullptr;  // round-start model w^(t,0)
};
struct SgdScaffold {
  const ModelParams* c = nullptr;   // server control variate
  const ModelParams* ck = nullptr;  // this client's control variate
};
struct SgdPerFedAvgFo {
  double alpha = 0.0;  // inner adaptation step size
};
using LocalRule = std::variant<SgdPlain, SgdProx, SgdScaffold, SgdPerFedAvgFo>;

namespace detail {

inline std::vector<std::size_t> sample_batch(std::size_t n, std::size_t b, RngStream& rng) {
  std::vector<std::size_t> rows(b);
  for (std::size_t i = 0; i < b; ++i) rows[i] = static_cast<std::size_t>(rng.next_below(n));
  return rows;
}

// One SGD step in place; returns false when params went non-finite.
inline bool sgd_step(const ModelSpec& spec, ModelParams& w, const SampleSet& train,
                     std::size_t b, double eta_l, const LocalRule& rule, RngStream& rng) {
  const auto rows = sample_batch(train.n, b, rng);
  if (const auto* pf = std::get_if<SgdPerFedAvgFo>(&rule)) {
    // inner step at alpha, outer gradient at the adapted point
    ModelParams g1 = grad(spec, w, train, rows);
    ModelParams adapted = w;
    axpy(-pf->alpha, g1, adapted);
    const auto rows2 = sample_batch(train.n, b, rng);
    ModelParams g2 = grad(spec, adapted, train, rows2);
    axpy(-eta_l, g2, w);
  } else {
    ModelParams g = grad(spec, w, train, rows);
    if (const auto* prox = std::get_if<SgdProx>(&rule)) {
      if (prox->mu != 0.0) {  // mu == 0 must be bit-identical to plain SGD
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += prox->mu * (w[i] - (*prox->anchor)[i]);
        }
      }
    } else if (const auto* sc = std::get_if<SgdScaffold>(&rule)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += (*sc->c)[i] - (*sc->ck)[i];
      }
    }
    axpy(-eta_l, g, w);
  }
  return all_finite(w);
}

}  // namespace detail

/// Warm-up solo training: tau_warm plain SGD steps from a fresh init on the
/// client's train split. Freezes the solo model w_hat_k and the requirement
/// rho_k = F_k(w_hat_k) evaluated on the full train split.
inline void warmup(ClientProfile& profile, const ModelSpec& spec, int tau_warm, double eta_l,
                   std::size_t b, std::uint64_t seed) {
  if (tau_warm < 1) {
    throw ConfigError("warmup: tau_warm must be >= 1 (rho from an untrained model is meaningless)");
  }
  if (profile.warmed_up()) throw ConfigError("warmup: client already has a solo model");
  if (profile.data.n_train() < 1) throw ConfigError("warmup: client has no training data");
  RngStream init_rng(seed, {profile.id, 0, Purpose::ModelInit});
  ModelParams w = init_params(spec, init_rng);
  RngStream rng(seed, {profile.id, 0, Purpose::Warmup});
  for (int s = 0; s < tau_warm; ++s) {
    detail::sgd_step(spec, w, profile.data.train, b, eta_l, SgdPlain{}, rng);
  }
  profile.rho = loss(spec, w, profile.data.train);
  profile.solo_model = std::move(w);
}

/// One round of local work: report q_k at w0, run tau local steps, return
/// delta = w0 - w^(t,tau). A non-finite trajectory flags the update as
/// diverged; the server drops it from aggregation.
inline ClientUpdate local_train(const ClientProfile& profile, const ModelSpec& spec,
                                const ModelParams& w0, int tau, double eta_l, std::size_t b,
                                WeightMode mode, const LocalRule& rule, RngStream& rng) {
  ClientUpdate up;
  up.client_id = profile.id;
  up.n_train = profile.data.n_train();
  up.participated = true;
  up.loss_w0 = loss(spec, w0, profile.data.train);
  up.gap = up.loss_w0 - profile.rho;
  up.reported_weight = weight_from_gap(up.gap, mode);
  if (!std::isfinite(up.loss_w0)) {
    up.diverged = true;
    up.delta.assign(w0.size(), 0.0);
    return up;
  }
  ModelParams w = w0;
  for (int s = 0; s < tau; ++s) {
    if (!detail::sgd_step(spec, w, profile.data.train, b, eta_l, rule, rng)) {
      up.diverged = true;
      break;
    }
  }
  up.delta.resize(w0.size());
  for (std::size_t i = 0; i < w0.size(); ++i) up.delta[i] = w0[i] - w[i];
  return up;
}

/// Byzantine corruption: the reported gap is inflated by loss_inflation and
/// the update is blurred with N(0, noise_sigma^2) noise. Inflation 0 and
/// sigma 0 leave the update bit-identical.
inline void byzantine_corrupt(ClientUpdate& up, WeightMode mode, double loss_inflation,
                              double noise_sigma, RngStream& rng) {
  up.reported_weight = weight_from_gap(up.gap + loss_inflation, mode);
  if (noise_sigma != 0.0) {
    for (double& d : up.delta) d += noise_sigma * rng.next_gaussian();
  }
}

/// Does the model appeal to this client on the chosen split? The basis picks
/// the split only; rho_k stays the frozen warm-up threshold.
inline bool evaluate_appeal(const ClientProfile& profile, const ModelSpec& spec,
                            const ModelParams& w, LossBasis basis) {
  const SampleSet& split =
      basis == LossBasis::TrainLoss ? profile.data.train : profile.data.test;
  return appeals(loss(spec, w, split), profile.rho);
}

/// k_steps of plain SGD from w on the client's train split. Used for the
/// locally-tuned evaluation protocol only; never fed back to the server.
inline ModelParams fine_tune(const ClientProfile& profile, const ModelSpec& spec, ModelParams w,
                             int k_steps, double eta_l, std::size_t b, RngStream& rng) {
  if (k_steps < 0) throw ConfigError("fine_tune: k_steps must be >= 0");
  for (int s = 0; s < k_steps; ++s) {
    detail::sgd_step(spec, w, profile.data.train, b, eta_l, SgdPlain{}, rng);
  }
  return w;
}

}  // namespace maxfl
