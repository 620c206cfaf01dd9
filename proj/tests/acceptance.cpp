// Acceptance suite: one pass/fail line per criterion, exit 0 only if all
// pass. Tolerances are pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "maxfl/config.hpp"
#include "maxfl/experiment.hpp"

using namespace maxfl;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail,
            double seconds) {
  std::printf("[%s] criterion %2d: %-34s %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, name,
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <typename F>
void run(int id, const char* name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(id, name, pass, detail, secs);
}

std::string source_dir() {
#ifdef MAXFL_SOURCE_DIR
  return MAXFL_SOURCE_DIR;
#else
  return ".";
#endif
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

SampleSet random_batchset(const ModelSpec& spec, std::size_t n, RngStream& rng) {
  SampleSet d;
  d.dim = spec.kind == ModelKind::ScalarQuadratic ? 0 : spec.input_dim();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d.dim);
    for (auto& v : x) v = rng.next_gaussian();
    const double y = spec.is_classification()
                         ? static_cast<double>(rng.next_below(spec.n_classes()))
                         : rng.next_gaussian();
    d.push_back(x, y, i);
  }
  return d;
}

// --- criterion 1: per-model gradient correctness ---------------------------

bool crit1(std::string& detail) {
  struct Case {
    const char* name;
    ModelSpec spec;
    double tol;
  };
  const Case cases[] = {
      {"scalar_quadratic", ModelSpec::scalar_quadratic(), 1e-9},
      {"linear_regression", ModelSpec::linear_regression(7), 1e-4},
      {"softmax_regression", ModelSpec::softmax_regression(6, 5), 1e-4},
      {"mlp", ModelSpec::mlp({6, 10, 8, 4}), 1e-4},
  };
  std::ostringstream ds;
  bool ok = true;
  const double h = 1e-5;
  for (const auto& c : cases) {
    double worst = 0.0;
    int accepted = 0;
    for (int attempt = 0; accepted < 100; ++attempt) {
      RngStream rng(1000 + attempt, {static_cast<std::uint64_t>(attempt), 0, Purpose::DataGen});
      const auto d = random_batchset(c.spec, 8, rng);
      ModelParams w(c.spec.param_count());
      for (auto& v : w) v = 0.5 * rng.next_gaussian();
      std::vector<std::size_t> rows(d.n);
      for (std::size_t i = 0; i < d.n; ++i) rows[i] = i;
      // central differences cannot measure the gradient across a ReLU kink;
      // keep draws whose hidden pre-activations clear the step comfortably
      if (min_hidden_preactivation(c.spec, w, d, rows) < 100.0 * h) continue;
      ++accepted;
      worst = std::max(worst, fd_check(c.spec, w, d, rows, h));
    }
    ok = ok && worst <= c.tol;
    ds << c.name << "=" << fmt(worst) << " ";
  }
  detail = ds.str();
  return ok;
}

// --- criterion 2: objective-gradient identity -------------------------------

bool crit2(std::string& detail) {
  const auto spec = ModelSpec::softmax_regression(4, 3);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<ClientProfile> ps;
    RngStream rng(2000 + rep, {0, 0, Purpose::DataGen});
    for (std::size_t k = 0; k < 4; ++k) {
      ClientProfile p;
      p.id = k;
      p.data.train = random_batchset(spec, 30, rng);
      p.data.test = random_batchset(spec, 10, rng);
      p.rho = 0.3 + 0.4 * rng.next_double();
      p.solo_model.assign(spec.param_count(), 0.0);
      ps.push_back(std::move(p));
    }
    ModelParams w(spec.param_count());
    for (auto& v : w) v = 0.5 * rng.next_gaussian();

    std::vector<double> g(w.size(), 0.0);
    for (const auto& p : ps) {
      const double gap = loss(spec, w, p.data.train) - p.rho;
      axpy(weight_from_gap(gap, WeightMode::SigmoidDerivative), grad(spec, w, p.data.train), g);
    }
    scale(g, 1.0 / ps.size());

    auto objective = [&](const ModelParams& wp) {
      double s = 0.0;
      for (const auto& p : ps) s += sigmoid(loss(spec, wp, p.data.train) - p.rho);
      return s / ps.size();
    };
    const double h = 1e-5;
    ModelParams wp = w;
    double err2 = 0.0, norm2 = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      wp[i] = w[i] + h;
      const double up = objective(wp);
      wp[i] = w[i] - h;
      const double dn = objective(wp);
      wp[i] = w[i];
      const double fd = (up - dn) / (2 * h);
      err2 += (g[i] - fd) * (g[i] - fd);
      norm2 += g[i] * g[i];
    }
    worst = std::max(worst, std::sqrt(err2) / std::max(1.0, std::sqrt(norm2)));
  }
  detail = "max rel err " + fmt(worst);
  return worst <= 1e-4;
}

// --- criteria 3/4: mean-estimation bounds ----------------------------------

const double kGammaGrid[] = {0.5, 1.0, 2.0, 3.0, std::sqrt(20.0)};

bool crit3(std::string& detail) {
  std::ostringstream ds;
  bool ok = true;
  for (double g : kGammaGrid) {
    const auto est = expected_appeal(Estimator::FedAvgMean, {0.0, 2.0 * g}, 1.0, 100000, 31);
    const double bound = 2.0 * std::exp(-g * g / 5.0);
    const bool pass = est.mean <= bound + 3.0 * est.stderr_;
    ok = ok && pass;
    ds << fmt(est.mean) << "<=" << fmt(bound) << " ";
  }
  detail = ds.str();
  return ok;
}

bool crit4(std::string& detail) {
  const double bound = std::exp(-1.0) / 16.0;
  std::ostringstream ds;
  bool ok = true;
  double fedavg_at_20 = 1.0;
  for (double g : kGammaGrid) {
    const auto est = expected_appeal(Estimator::MaxFlMinimum, {0.0, 2.0 * g}, 1.0, 100000, 41);
    const bool pass = est.mean >= bound - 3.0 * est.stderr_;
    ok = ok && pass;
    ds << fmt(est.mean) << " ";
  }
  {
    const double g = std::sqrt(20.0);
    const auto fed = expected_appeal(Estimator::FedAvgMean, {0.0, 2.0 * g}, 1.0, 100000, 41);
    fedavg_at_20 = fed.mean;
    ok = ok && fedavg_at_20 < 0.01;
  }
  detail = ds.str() + ">= " + fmt(bound) + "; fedavg@20=" + fmt(fedavg_at_20);
  return ok;
}

// --- criterion 5: convex surrogates collapse to the mean --------------------

bool crit5(std::string& detail) {
  double worst_soft = 0.0, worst_relu = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    RngStream rng(500 + rep, {0, 0, Purpose::MeanEst});
    MeanEstProblem p;
    p.theta = {0.0, 0.0};
    p.gamma2 = 1.0;
    const double a = 4.0 * rng.next_gaussian();
    const double b = a + 0.01 + 7.0 * rng.next_double();
    p.theta_hat = {a, b};
    const double mid = (a + b) / 2.0;
    for (auto [kind, worst] : {std::pair<SurrogateKind, double*>{SurrogateKind::Softplus, &worst_soft},
                               {SurrogateKind::Relu, &worst_relu}}) {
      double best = 1e300;
      bool found = false;
      for (const auto& sp : find_local_minima(p, kind)) {
        if (sp.type != StationaryType::Minimum) continue;
        if (found) return detail = "multiple minima for a convex surrogate", false;
        found = true;
        best = std::abs(sp.w - mid);
      }
      if (!found) return detail = "no minimum located", false;
      *worst = std::max(*worst, best);
    }
  }
  detail = "softplus dev " + fmt(worst_soft) + ", relu dev " + fmt(worst_relu);
  return worst_soft <= 1e-6 && worst_relu <= 1e-6;
}

// --- criterion 6: band structure and the hessian boundary -------------------

bool crit6(std::string& detail) {
  int violations = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    RngStream rng(600 + rep, {0, 0, Purpose::MeanEst});
    MeanEstProblem p;
    p.theta = {0.0, 0.0};
    p.gamma2 = 1.0;
    const double a = 6.0 * rng.next_gaussian();
    const double ghat = 2.0 + 1e-6 + 6.0 * rng.next_double();  // gamma_hat > 2
    const double b = a + 2.0 * ghat;
    p.theta_hat = {a, b};
    if (hessian_v(p, (a + b) / 2.0) >= 0.0) ++violations;
    for (const auto& sp : find_local_minima(p, SurrogateKind::Sigmoid)) {
      if (sp.type != StationaryType::Minimum) continue;
      // equality at theta_hat is the correctly-rounded image of a root
      // strictly inside the open endpoint (distance ~exp(-4 ghat^2) < ulp)
      const bool left = sp.w >= a && sp.w <= a + 2.0 + 1e-9;
      const bool right = sp.w >= b - 2.0 - 1e-9 && sp.w <= b;
      if (!left && !right) ++violations;
    }
  }

  // bisect the midpoint-hessian sign boundary in gamma_hat
  auto mid_hessian = [](double gh) {
    MeanEstProblem p;
    p.theta = {0.0, 0.0};
    p.theta_hat = {0.0, 2.0 * gh};
    p.gamma2 = 1.0;
    return hessian_v(p, gh);
  };
  double lo = 0.5, hi = 2.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid_hessian(mid) > 0.0 ? lo : hi) = mid;
  }
  const bool boundary_ok = lo >= 1.021 && hi <= 1.023;
  detail = "violations " + std::to_string(violations) + ", boundary " + fmt(0.5 * (lo + hi));
  return violations == 0 && boundary_ok;
}

// --- criterion 7: the weight bell curve -------------------------------------

bool crit7(std::string& detail) {
  if (weight_from_gap(0.0, WeightMode::SigmoidDerivative) != 0.25) {
    detail = "max not 0.25";
    return false;
  }
  const int n = 10000;
  double prev = 0.25;
  for (int i = 1; i <= n; ++i) {
    const double x = 20.0 * i / n;
    const double q = weight_from_gap(x, WeightMode::SigmoidDerivative);
    const double qm = weight_from_gap(-x, WeightMode::SigmoidDerivative);
    if (std::abs(q - qm) > 1e-15) return detail = "evenness broken at " + fmt(x), false;
    if (!(q < prev)) return detail = "monotonicity broken at " + fmt(x), false;
    prev = q;
  }
  detail = "even + strictly decaying on 10^4 grid";
  return true;
}

// --- criteria 8/12: the flagship directional run ----------------------------

ExperimentConfig flagship_config() {
  const std::string path = source_dir() + "/configs/flagship.toml";
  return ExperimentConfig::from_file(path);
}

bool crit8(std::string& detail) {
  ExperimentConfig maxfl_cfg = flagship_config();
  ExperimentConfig fedavg_cfg = maxfl_cfg;
  fedavg_cfg.algorithm_kind = "fedavg";
  fedavg_cfg.aggregator = FedAvgSpec{maxfl_cfg.eta_g};  // shared server lr

  auto final_gm = [](const ExperimentConfig& cfg) {
    double seen = 0.0, unseen = 0.0;
    for (std::uint64_t seed : cfg.seeds) {
      const auto res = run_seed(cfg, seed);
      seen += res.records.back().gm_appeal_seen;
      unseen += res.records.back().gm_appeal_unseen;
    }
    return std::pair<double, double>{seen / cfg.seeds.size(), unseen / cfg.seeds.size()};
  };
  const auto [mx_seen, mx_unseen] = final_gm(maxfl_cfg);
  const auto [fa_seen, fa_unseen] = final_gm(fedavg_cfg);
  detail = "seen " + fmt(mx_seen) + " vs " + fmt(fa_seen) + ", unseen " + fmt(mx_unseen) +
           " vs " + fmt(fa_unseen);
  return mx_seen - fa_seen >= 0.10 && mx_unseen - fa_unseen >= 0.10;
}

bool crit12(std::string& detail) {
  ExperimentConfig cfg = flagship_config();
  cfg.seeds = {1};
  namespace fs = std::filesystem;
  const auto d1 = fs::temp_directory_path() / "maxfl_acc_det1";
  const auto d2 = fs::temp_directory_path() / "maxfl_acc_det2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  const auto s1 = run_experiment(cfg, d1.string());
  const auto s2 = run_experiment(cfg, d2.string());
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const bool same = slurp(s1.rounds_csv) == slurp(s2.rounds_csv);
  fs::remove_all(d1);
  fs::remove_all(d2);
  detail = same ? "rounds.csv byte-identical" : "byte mismatch";
  return same;
}

// --- criterion 9: byzantine weight suppression -------------------------------

ExperimentConfig byzantine_config() {
  return ExperimentConfig::from_file(source_dir() + "/configs/byzantine.toml");
}

bool crit9(std::string& detail) {
  // derivative mode: normalized byzantine weight < 1e-3 in every round
  ExperimentConfig cfg = byzantine_config();
  const std::uint64_t seed = cfg.seeds.front();

  double worst_norm = 0.0;
  int byz_seen = 0;
  {
    Federation fed;
    fed.model = cfg.model;
    fed.seed = seed;
    fed.clients = build_clients(cfg, seed, 0, cfg.partition_spec.n_clients, 0);
    RngStream wrng(seed, {~0ull, 0, Purpose::ModelInit});
    fed.w = init_params(cfg.model, wrng);
    std::vector<bool> is_byz(fed.clients.size());
    for (std::size_t k = 0; k < fed.clients.size(); ++k) is_byz[k] = fed.clients[k].byzantine;

    FedConfig fc = fed_config(cfg);
    fc.eval_interval = 1 << 20;  // metrics are irrelevant here
    fc.total_rounds = 0;
    RoundObserver obs = [&](int, const std::vector<ClientUpdate>& ups) {
      NeumaierSum qsum;
      for (const auto& u : ups) {
        if (u.usable()) qsum.add(u.reported_weight);
      }
      const double denom = qsum.value() + cfg.epsilon;
      for (const auto& u : ups) {
        if (!u.usable() || !is_byz[u.client_id]) continue;
        ++byz_seen;
        worst_norm = std::max(worst_norm, u.reported_weight / denom);
      }
    };
    for (int t = 0; t < cfg.rounds; ++t) run_round(fed, fc, t, obs);
  }

  // raw mode: the same attack wins the weight game
  double min_raw = 1.0;
  {
    ExperimentConfig raw = cfg;
    raw.weight_mode = WeightMode::RawSigmoid;
    raw.aggregator = MaxFlSpec{WeightMode::RawSigmoid, raw.eta_g, raw.epsilon};
    Federation fed;
    fed.model = raw.model;
    fed.seed = seed;
    fed.clients = build_clients(raw, seed, 0, raw.partition_spec.n_clients, 0);
    RngStream wrng(seed, {~0ull, 0, Purpose::ModelInit});
    fed.w = init_params(raw.model, wrng);
    std::vector<bool> is_byz(fed.clients.size());
    for (std::size_t k = 0; k < fed.clients.size(); ++k) is_byz[k] = fed.clients[k].byzantine;

    FedConfig fc = fed_config(raw);
    fc.eval_interval = 1 << 20;
    fc.total_rounds = 0;
    RoundObserver obs = [&](int, const std::vector<ClientUpdate>& ups) {
      for (const auto& u : ups) {
        if (u.usable() && is_byz[u.client_id]) min_raw = std::min(min_raw, u.reported_weight);
      }
    };
    for (int t = 0; t < raw.rounds; ++t) run_round(fed, fc, t, obs);
  }

  detail = "max normalized " + fmt(worst_norm) + " over " + std::to_string(byz_seen) +
           " byz updates; min raw " + fmt(min_raw);
  return byz_seen > 0 && worst_norm < 1e-3 && min_raw > 0.99;
}

// --- criterion 10: baseline degeneracies ------------------------------------

bool crit10(std::string& detail) {
  auto base = ExperimentConfig::from_text(R"(
[experiment]
seeds = [5]
rounds = 20
[algorithm]
kind = "fedavg"
eta_g = 1.0
[local]
tau = 5
eta_l = 0.05
batch_size = 16
warmup_steps = 50
[model]
kind = "mlp"
hidden = [8]
[data]
scheme = "dirichlet"
alpha = 0.5
n_clients = 10
n_samples = 1200
n_features = 6
n_labels = 4
cluster_sep = 3.0
min_samples = 40
[sampling]
clients_per_round = 4
[participation]
mode = "always_available"
[unseen]
n_clients = 2
)");

  auto trajectory = [&](AggregatorSpec agg, const char* kind) {
    ExperimentConfig cfg = base;
    cfg.aggregator = agg;
    cfg.algorithm_kind = kind;
    Federation fed;
    fed.model = cfg.model;
    fed.seed = cfg.seeds.front();
    fed.clients = build_clients(cfg, fed.seed, 0, cfg.partition_spec.n_clients, 0);
    RngStream wrng(fed.seed, {~0ull, 0, Purpose::ModelInit});
    fed.w = init_params(cfg.model, wrng);
    FedConfig fc = fed_config(cfg);
    std::vector<ModelParams> traj;
    for (int t = 0; t < cfg.rounds; ++t) {
      run_round(fed, fc, t);
      traj.push_back(fed.w);
    }
    return traj;
  };

  const auto fedavg = trajectory(FedAvgSpec{1.0}, "fedavg");
  const auto fedprox = trajectory(FedProxSpec{1.0, 0.0}, "fedprox");
  const auto qffl = trajectory(QfflSpec{0.0, 0.1}, "qffl");
  bool prox_ok = fedavg == fedprox;
  bool qffl_ok = fedavg == qffl;
  detail = std::string("fedprox(mu=0) ") + (prox_ok ? "identical" : "differs") +
           ", qffl(q=0) " + (qffl_ok ? "identical" : "differs");
  return prox_ok && qffl_ok;
}

// --- criterion 11: gradient-norm decay --------------------------------------

bool crit11(std::string& detail) {
  auto cfg = ExperimentConfig::from_text(R"(
[experiment]
seeds = [1, 2, 3]
rounds = 400
[algorithm]
kind = "maxfl"
[local]
tau = 5
eta_l = 0.01
batch_size = 8
warmup_steps = 60
[data]
scheme = "mean_estimation"
theta = [0.0, 0.6, 1.2, 1.8, 2.4, 3.0, 3.6, 4.2, 4.8, 5.4]
nu2 = 1.0
n_per_client = 30
n_clients = 10
[sampling]
clients_per_round = 10
[participation]
mode = "always_available"
[unseen]
n_clients = 0
)");
  std::ostringstream ds;
  bool ok = true;
  for (std::uint64_t seed : cfg.seeds) {
    const auto res = run_seed(cfg, seed);
    double min50 = 1e300, min400 = 1e300;
    for (const auto& r : res.records) {
      if (r.t < 50) min50 = std::min(min50, r.grad_norm);
      min400 = std::min(min400, r.grad_norm);
    }
    ok = ok && min400 < min50;
    ds << fmt(min50) << "->" << fmt(min400) << " ";
  }
  detail = ds.str();
  return ok;
}

}  // namespace

int main() {
  std::printf("acceptance suite (%s)\n", kVersion);
  run(1, "gradient correctness", crit1);
  run(2, "objective-gradient identity", crit2);
  run(3, "fedavg appeal upper bound", crit3);
  run(4, "maxfl appeal lower bound", crit4);
  run(5, "convex surrogate degeneracy", crit5);
  run(6, "minima bands + hessian boundary", crit6);
  run(7, "weight bell curve", crit7);
  run(8, "directional federated result", crit8);
  run(9, "byzantine suppression", crit9);
  run(10, "baseline degeneracies", crit10);
  run(11, "gradient-norm decay", crit11);
  run(12, "flagship determinism", crit12);
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed\n", g_failures);
  return 1;
}
