#pragma once

// Round orchestration: flexible-participation gating, client sampling, the
// sigmoid-weighted aggregate with its adaptive server learning rate, and
// the baseline aggregation strategies in their standard published forms.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <variant>
#include <vector>

#include "maxfl/client.hpp"
#include "maxfl/math.hpp"
#include "maxfl/metrics.hpp"

namespace maxfl {

struct MaxFlSpec {
  WeightMode mode = WeightMode::SigmoidDerivative;
  double eta_g = 1.0;
  double epsilon = 0.01;
};
struct FedAvgSpec {
  double eta_g = 1.0;
};
// Clients add mu*(w - w0) to each local gradient; the server averages like
// FedAvg. mu = 0 is trajectory-identical to FedAvg.
struct FedProxSpec {
  double eta_g = 1.0;
  double mu = 0.0;
};
// Local steps corrected by (c - c_k); control variates updated with the
// option-II rule. Stateful by design, state lives on the server.
struct ScaffoldSpec {
  double eta_g = 1.0;
};
// q-fair reweighting F_k(w)^q with the Lipschitz normaliser L = 1/lr.
// q = 0 is the loss-independent FedAvg path.
struct QfflSpec {
  double q = 1.0;
  double lr = 0.1;
};
// First-order variant: each local iteration adapts with one inner step of
// size alpha and steps on the gradient at the adapted point.
struct PerFedAvgFoSpec {
  double eta_g = 1.0;
  double alpha = 0.01;
};

using AggregatorSpec =
    std::variant<MaxFlSpec, FedAvgSpec, FedProxSpec, ScaffoldSpec, QfflSpec, PerFedAvgFoSpec>;

inline const char* aggregator_name(const AggregatorSpec& a) {
  struct V {
    const char* operator()(const MaxFlSpec&) const { return "maxfl"; }
    const char* operator()(const FedAvgSpec&) const { return "fedavg"; }
    const char* operator()(const FedProxSpec&) const { return "fedprox"; }
    const char* operator()(const ScaffoldSpec&) const { return "scaffold"; }
    const char* operator()(const QfflSpec&) const { return "qffl"; }
    const char* operator()(const PerFedAvgFoSpec&) const { return "perfedavg_fo"; }
  };
  return std::visit(V{}, a);
}

struct ParticipationPolicy {
  enum class Mode { AlwaysAvailable, AppealBased };
  Mode mode = Mode::AppealBased;
  int mandatory_rounds = 0;  // default ceil(0.05 * T), resolved by the config
};

struct ScaffoldState {
  ModelParams c;                  // server control variate
  std::vector<ModelParams> c_k;   // one per client

  void init(std::size_t n_clients, std::size_t dim) {
    c.assign(dim, 0.0);
    c_k.assign(n_clients, ModelParams(dim, 0.0));
  }
  bool initialized() const { return !c.empty(); }
};

/// Eligible client ids for round t: everyone while t < mandatory_rounds or
/// under AlwaysAvailable; afterwards the clients whose last appeal check on
/// the current global model passed (plus per-client Mandatory overrides).
inline std::vector<std::size_t> eligible_pool(const std::vector<ClientProfile>& profiles,
                                              const ParticipationPolicy& policy, int t) {
  std::vector<std::size_t> out;
  const bool everyone =
      policy.mode == ParticipationPolicy::Mode::AlwaysAvailable || t < policy.mandatory_rounds;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    if (everyone || profiles[k].participation == ParticipationMode::Mandatory ||
        profiles[k].last_appeal) {
      out.push_back(k);
    }
  }
  return out;
}

/// min(m, |pool|) ids drawn uniformly without replacement, returned in
/// ascending order so downstream reductions have a fixed order.
inline std::vector<std::size_t> sample_clients(const std::vector<std::size_t>& pool,
                                               std::size_t m, RngStream& rng) {
  if (m < 1) throw ConfigError("sample_clients: m must be >= 1");
  const auto picks = sample_without_replacement(pool.size(), std::min(m, pool.size()), rng);
  std::vector<std::size_t> out;
  out.reserve(picks.size());
  for (std::size_t i : picks) out.push_back(pool[i]);
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

inline std::vector<const ClientUpdate*> usable_sorted(const std::vector<ClientUpdate>& ups) {
  std::vector<const ClientUpdate*> v;
  for (const auto& u : ups) {
    if (u.usable()) v.push_back(&u);
  }
  std::sort(v.begin(), v.end(), [](const ClientUpdate* a, const ClientUpdate* b) {
    return a->client_id < b->client_id;
  });
  return v;
}

// w - sum_k coeff_k * delta_k with a Neumaier-compensated, id-ordered
// per-coordinate reduction.
inline ModelParams apply_weighted(const ModelParams& w,
                                  const std::vector<const ClientUpdate*>& ups,
                                  const std::vector<double>& coeff) {
  ModelParams out(w.size());
  std::vector<NeumaierSum> acc(w.size());
  for (std::size_t j = 0; j < ups.size(); ++j) {
    for (std::size_t i = 0; i < w.size(); ++i) acc[i].add(coeff[j] * ups[j]->delta[i]);
  }
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - acc[i].value();
  return out;
}

}  // namespace detail

/// Sigmoid-weighted aggregate with the adaptive server learning rate
/// eta_g / (sum_{k in S} q_k + epsilon); the sum runs over this round's
/// usable updates only. All updates invalid -> model returned unchanged.
inline ModelParams aggregate_maxfl(const ModelParams& w, const std::vector<ClientUpdate>& updates,
                                   double eta_g, double epsilon) {
  const auto ups = detail::usable_sorted(updates);
  if (ups.empty()) return w;
  NeumaierSum qsum;
  for (const auto* u : ups) qsum.add(u->reported_weight);
  const double eta_eff = eta_g / (qsum.value() + epsilon);
  std::vector<double> coeff(ups.size());
  for (std::size_t j = 0; j < ups.size(); ++j) coeff[j] = eta_eff * ups[j]->reported_weight;
  return detail::apply_weighted(w, ups, coeff);
}

namespace detail {

inline ModelParams aggregate_fedavg(const ModelParams& w, const std::vector<ClientUpdate>& updates,
                                    double eta_g) {
  const auto ups = usable_sorted(updates);
  if (ups.empty()) return w;
  double n_total = 0.0;
  for (const auto* u : ups) n_total += static_cast<double>(u->n_train);
  std::vector<double> coeff(ups.size());
  for (std::size_t j = 0; j < ups.size(); ++j) {
    coeff[j] = eta_g * (static_cast<double>(ups[j]->n_train) / n_total);
  }
  return apply_weighted(w, ups, coeff);
}

inline ModelParams aggregate_scaffold(const ModelParams& w,
                                      const std::vector<ClientUpdate>& updates,
                                      ScaffoldState& state, double eta_g, int tau, double eta_l,
                                      std::size_t n_clients) {
  const auto ups = usable_sorted(updates);
  if (ups.empty()) return w;
  const double inv_s = 1.0 / static_cast<double>(ups.size());
  std::vector<double> coeff(ups.size(), eta_g * inv_s);
  ModelParams out = apply_weighted(w, ups, coeff);
  // option-II control variates against the round-start broadcast c:
  // c_k+ = c_k - c + delta_k / (tau * eta_l), then c += (1/M) sum (c_k+ - c_k)
  const double inv_step = 1.0 / (static_cast<double>(tau) * eta_l);
  const double inv_m = 1.0 / static_cast<double>(n_clients);
  const ModelParams c_bcast = state.c;
  for (const auto* u : ups) {
    ModelParams& ck = state.c_k[u->client_id];
    for (std::size_t i = 0; i < ck.size(); ++i) {
      const double ck_new = ck[i] - c_bcast[i] + u->delta[i] * inv_step;
      state.c[i] += (ck_new - ck[i]) * inv_m;
      ck[i] = ck_new;
    }
  }
  return out;
}

inline ModelParams aggregate_qffl(const ModelParams& w, const std::vector<ClientUpdate>& updates,
                                  double q, double lr) {
  if (q == 0.0) return aggregate_fedavg(w, updates, 1.0);  // x^0 = 1, normaliser cancels
  const auto ups = usable_sorted(updates);
  if (ups.empty()) return w;
  const double L = 1.0 / lr;
  NeumaierSum den;
  std::vector<double> coeff(ups.size());
  for (std::size_t j = 0; j < ups.size(); ++j) {
    const double fk = ups[j]->loss_w0;
    double d2 = 0.0;
    for (double d : ups[j]->delta) d2 += d * d;
    d2 *= L * L;  // ||L * delta||^2
    coeff[j] = std::pow(fk, q) * L;
    den.add(L * std::pow(fk, q) + (fk > 0.0 ? q * std::pow(fk, q - 1.0) * d2 : 0.0));
  }
  const double h = den.value();
  if (h <= 0.0) return w;
  for (double& c : coeff) c /= h;
  return apply_weighted(w, ups, coeff);
}

}  // namespace detail

/// Baseline aggregation in each method's standard form; kind must not be
/// the sigmoid-weighted aggregator.
inline ModelParams aggregate_baseline(const AggregatorSpec& kind, const ModelParams& w,
                                      const std::vector<ClientUpdate>& updates,
                                      ScaffoldState& state, int tau, double eta_l,
                                      std::size_t n_clients) {
  struct V {
    const ModelParams& w;
    const std::vector<ClientUpdate>& ups;
    ScaffoldState& st;
    int tau;
    double eta_l;
    std::size_t m;
    ModelParams operator()(const MaxFlSpec&) const {
      throw ConfigError("aggregate_baseline called with the maxfl aggregator");
    }
    ModelParams operator()(const FedAvgSpec& s) const {
      return detail::aggregate_fedavg(w, ups, s.eta_g);
    }
    ModelParams operator()(const FedProxSpec& s) const {
      return detail::aggregate_fedavg(w, ups, s.eta_g);
    }
    ModelParams operator()(const ScaffoldSpec& s) const {
      return detail::aggregate_scaffold(w, ups, st, s.eta_g, tau, eta_l, m);
    }
    ModelParams operator()(const QfflSpec& s) const {
      return detail::aggregate_qffl(w, ups, s.q, s.lr);
    }
    ModelParams operator()(const PerFedAvgFoSpec& s) const {
      return detail::aggregate_fedavg(w, ups, s.eta_g);
    }
  };
  return std::visit(V{w, updates, state, tau, eta_l, n_clients}, kind);
}

// Shared per-run knobs.
struct FedConfig {
  AggregatorSpec aggregator = MaxFlSpec{};
  int tau = 10;
  double eta_l = 0.01;
  std::size_t batch_size = 32;
  std::size_t clients_per_round = 5;
  ParticipationPolicy policy;
  double byz_loss_inflation = 10.0;
  double byz_noise_sigma = 0.0;
  int fine_tune_steps = 0;
  int eval_interval = 1;
  int total_rounds = 0;  // > 0 forces an eval on the last round
  int threads = 1;
};

// Mutable state of one federated run.
struct Federation {
  ModelSpec model;
  ModelParams w;
  std::vector<ClientProfile> clients;  // seen
  std::vector<ClientProfile> unseen;   // never trained, evaluated by inference
  ScaffoldState scaffold;
  std::uint64_t seed = 0;
  RoundRecord last_eval;  // carried into non-eval rounds
};

using RoundObserver = std::function<void(int t, const std::vector<ClientUpdate>&)>;

/// One communication round: appeal re-evaluation, eligibility, sampling,
/// parallel local training (plus Byzantine corruption), fixed-order
/// aggregation, and a metrics snapshot on the eval cadence.
inline RoundRecord run_round(Federation& fed, const FedConfig& cfg, int t,
                             const RoundObserver& observer = {}) {
  RoundRecord rec;
  rec.t = t;

  const WeightMode mode = std::holds_alternative<MaxFlSpec>(cfg.aggregator)
                              ? std::get<MaxFlSpec>(cfg.aggregator).mode
                              : WeightMode::SigmoidDerivative;
  if (std::holds_alternative<ScaffoldSpec>(cfg.aggregator) && !fed.scaffold.initialized()) {
    fed.scaffold.init(fed.clients.size(), fed.w.size());
  }

  for (auto& p : fed.clients) {
    p.last_appeal = evaluate_appeal(p, fed.model, fed.w, LossBasis::TrainLoss);
  }
  const auto pool = eligible_pool(fed.clients, cfg.policy, t);
  rec.n_eligible = static_cast<int>(pool.size());

  std::vector<ClientUpdate> updates;
  if (pool.empty()) {
    rec.skipped = true;
  } else {
    RngStream srng(fed.seed, {0, static_cast<std::uint64_t>(t), Purpose::ClientSampling});
    const auto selected = sample_clients(pool, cfg.clients_per_round, srng);

    auto rule_for = [&](std::size_t k) -> LocalRule {
      if (const auto* prox = std::get_if<FedProxSpec>(&cfg.aggregator)) {
        return SgdProx{prox->mu, &fed.w};
      }
      if (std::holds_alternative<ScaffoldSpec>(cfg.aggregator)) {
        return SgdScaffold{&fed.scaffold.c, &fed.scaffold.c_k[k]};
      }
      if (const auto* pf = std::get_if<PerFedAvgFoSpec>(&cfg.aggregator)) {
        return SgdPerFedAvgFo{pf->alpha};
      }
      return SgdPlain{};
    };

    updates.resize(selected.size());
    auto work = [&](std::size_t j) {
      const std::size_t k = selected[j];
      const ClientProfile& p = fed.clients[k];
      RngStream rng(fed.seed, {k, static_cast<std::uint64_t>(t), Purpose::LocalTrain});
      updates[j] = local_train(p, fed.model, fed.w, cfg.tau, cfg.eta_l, cfg.batch_size, mode,
                               rule_for(k), rng);
      if (p.byzantine) {
        RngStream brng(fed.seed, {k, static_cast<std::uint64_t>(t), Purpose::ByzantineNoise});
        byzantine_corrupt(updates[j], mode, cfg.byz_loss_inflation, cfg.byz_noise_sigma, brng);
      }
    };
    if (cfg.threads > 1 && selected.size() > 1) {
      std::vector<std::thread> workers;
      const std::size_t nw = std::min<std::size_t>(cfg.threads, selected.size());
      for (std::size_t wk = 0; wk < nw; ++wk) {
        workers.emplace_back([&, wk]() {
          for (std::size_t j = wk; j < selected.size(); j += nw) work(j);
        });
      }
      for (auto& th : workers) th.join();
    } else {
      for (std::size_t j = 0; j < selected.size(); ++j) work(j);
    }

    for (const auto& u : updates) {
      if (u.usable()) ++rec.n_participating;
      if (u.diverged) ++rec.n_diverged;
    }
    if (rec.n_participating == 0) {
      rec.skipped = true;
    } else if (const auto* mf = std::get_if<MaxFlSpec>(&cfg.aggregator)) {
      fed.w = aggregate_maxfl(fed.w, updates, mf->eta_g, mf->epsilon);
    } else {
      fed.w = aggregate_baseline(cfg.aggregator, fed.w, updates, fed.scaffold, cfg.tau, cfg.eta_l,
                                 fed.clients.size());
    }
    if (observer) observer(t, updates);
  }

  const bool eval_now = (cfg.eval_interval > 0 && t % cfg.eval_interval == 0) ||
                        (cfg.total_rounds > 0 && t == cfg.total_rounds - 1);
  if (eval_now) {
    rec.gm_appeal_seen = gm_appeal(fed.w, fed.clients, fed.model, LossBasis::TestLoss);
    rec.avg_acc_seen = average_test_accuracy(fed.w, fed.clients, fed.model);
    rec.pref_acc_seen =
        preferred_model_accuracy(fed.w, fed.clients, fed.model, cfg.fine_tune_steps, cfg.eta_l,
                                 cfg.batch_size, fed.seed, static_cast<std::uint64_t>(t));
    if (!fed.unseen.empty()) {
      rec.gm_appeal_unseen = gm_appeal(fed.w, fed.unseen, fed.model, LossBasis::TestLoss);
      rec.avg_acc_unseen = average_test_accuracy(fed.w, fed.unseen, fed.model);
      rec.pref_acc_unseen =
          preferred_model_accuracy(fed.w, fed.unseen, fed.model, cfg.fine_tune_steps, cfg.eta_l,
                                   cfg.batch_size, fed.seed, static_cast<std::uint64_t>(t));
    }
    rec.grad_norm = maxfl_grad_norm(fed.w, fed.clients, fed.model, mode);
    rec.loss_gap = loss_gap_diagnostic(fed.w, fed.clients, fed.model);
    const auto [ratio, residual] = dissimilarity_estimate(fed.w, fed.clients, fed.model);
    rec.dissim_ratio = ratio;
    rec.dissim_residual = residual;
    fed.last_eval = rec;
  } else {
    // carry the latest evaluated metrics; participation fields stay per-round
    rec.gm_appeal_seen = fed.last_eval.gm_appeal_seen;
    rec.gm_appeal_unseen = fed.last_eval.gm_appeal_unseen;
    rec.avg_acc_seen = fed.last_eval.avg_acc_seen;
    rec.avg_acc_unseen = fed.last_eval.avg_acc_unseen;
    rec.pref_acc_seen = fed.last_eval.pref_acc_seen;
    rec.pref_acc_unseen = fed.last_eval.pref_acc_unseen;
    rec.grad_norm = fed.last_eval.grad_norm;
    rec.loss_gap = fed.last_eval.loss_gap;
    rec.dissim_ratio = fed.last_eval.dissim_ratio;
    rec.dissim_residual = fed.last_eval.dissim_residual;
  }
  return rec;
}

}  // namespace maxfl
