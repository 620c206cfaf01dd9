#pragma once

// Experiment runner: builds the seen/unseen client populations for each
// seed, warms everyone up, drives the rounds, and emits rounds.csv plus
// summary.json. Also the mean-estimation sweep behind the meanest
// subcommand.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "maxfl/config.hpp"
#include "maxfl/data.hpp"
#include "maxfl/meanest.hpp"
#include "maxfl/metrics.hpp"
#include "maxfl/server.hpp"

namespace maxfl {

inline constexpr const char* kRoundsCsvHeader =
    "seed,t,algorithm,gm_appeal_seen,gm_appeal_unseen,avg_acc_seen,avg_acc_unseen,"
    "pref_acc_seen,pref_acc_unseen,n_participating,n_eligible,skipped,grad_norm,loss_gap";

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<RoundRecord> records;
};

struct MetricSummary {
  double mean = 0.0;
  double std_dev = 0.0;
  std::vector<double> per_seed;
};

struct RunSummary {
  MetricSummary gm_appeal_seen, gm_appeal_unseen;
  MetricSummary avg_acc_seen, avg_acc_unseen;
  MetricSummary pref_acc_seen, pref_acc_unseen;
  std::string rounds_csv;
  std::string summary_json;
  std::string config_echo;
  std::uint64_t hash = 0;
  std::vector<SeedResult> per_seed;
};

namespace detail {

inline MetricSummary summarize(std::vector<double> vals) {
  MetricSummary s;
  s.per_seed = vals;
  double m = 0.0;
  for (double v : vals) m += v;
  m /= static_cast<double>(vals.size());
  s.mean = m;
  if (vals.size() > 1) {
    double var = 0.0;
    for (double v : vals) var += (v - m) * (v - m);
    s.std_dev = std::sqrt(var / static_cast<double>(vals.size() - 1));
  }
  return s;
}

inline void write_csv_row(std::ostream& out, std::uint64_t seed, const char* algorithm,
                          const RoundRecord& r) {
  out << seed << ',' << r.t << ',' << algorithm << ',' << fmt_g17(r.gm_appeal_seen) << ','
      << fmt_g17(r.gm_appeal_unseen) << ',' << fmt_g17(r.avg_acc_seen) << ','
      << fmt_g17(r.avg_acc_unseen) << ',' << fmt_g17(r.pref_acc_seen) << ','
      << fmt_g17(r.pref_acc_unseen) << ',' << r.n_participating << ',' << r.n_eligible << ','
      << (r.skipped ? 1 : 0) << ',' << fmt_g17(r.grad_norm) << ',' << fmt_g17(r.loss_gap)
      << '\n';
}

}  // namespace detail

/// Builds the full client population of one domain (0 = seen, 1 = unseen)
/// for one seed: data, label flips, Byzantine flags, warm-up.
inline std::vector<ClientProfile> build_clients(const ExperimentConfig& cfg, std::uint64_t seed,
                                                std::uint64_t domain, std::size_t n_clients,
                                                std::size_t id_offset) {
  PartitionSpec pspec = cfg.partition_spec;
  pspec.n_clients = n_clients;

  std::vector<ClientDataset> datasets;
  if (std::holds_alternative<MeanEstimationScheme>(pspec.scheme)) {
    datasets = partition(SampleSet{}, pspec, seed, domain);
  } else if (!cfg.idx_images.empty()) {
    // one real pool, split disjointly between the seen and unseen domains
    // proportionally to their client counts
    const SampleSet full = load_idx(cfg.idx_images, cfg.idx_labels);
    std::vector<std::size_t> order(full.n);
    std::iota(order.begin(), order.end(), 0);
    RngStream srng(seed, {0, 2, Purpose::DataGen});
    shuffle(order, srng);
    const std::size_t m_seen = cfg.partition_spec.n_clients;
    const std::size_t m_total = m_seen + cfg.n_unseen;
    const std::size_t n_seen = full.n * m_seen / (m_total == 0 ? 1 : m_total);
    SampleSet pool;
    pool.dim = full.dim;
    const std::size_t lo = domain == 0 ? 0 : n_seen;
    const std::size_t hi = domain == 0 ? n_seen : full.n;
    for (std::size_t i = lo; i < hi; ++i) {
      pool.push_back(full.row(order[i]), full.targets[order[i]], full.ids[order[i]]);
    }
    int max_label = 0;
    for (double t : pool.targets) max_label = std::max(max_label, static_cast<int>(t));
    if (pool.dim != cfg.n_features || max_label >= cfg.n_labels) {
      throw ConfigError("idx pool (" + std::to_string(pool.dim) + " features, labels up to " +
                        std::to_string(max_label) + ") does not match data.n_features/n_labels");
    }
    datasets = partition(pool, pspec, seed, domain);
    flip_labels(datasets, pspec.flip_fraction, cfg.n_labels, seed, domain);
  } else {
    // scale the pool with the population so per-client volume stays put
    const std::size_t n_pool = std::max(
        pspec.min_samples * n_clients,
        static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_samples) *
                                              static_cast<double>(n_clients) /
                                              static_cast<double>(cfg.partition_spec.n_clients))));
    RngStream drng(seed, {0, domain, Purpose::DataGen});
    const SampleSet pool = make_synthetic_classification(n_pool, cfg.n_features, cfg.n_labels,
                                                         cfg.cluster_sep, drng);
    datasets = partition(pool, pspec, seed, domain);
    flip_labels(datasets, pspec.flip_fraction, cfg.n_labels, seed, domain);
  }

  std::vector<ClientProfile> profiles(datasets.size());
  for (std::size_t k = 0; k < datasets.size(); ++k) {
    profiles[k].id = id_offset + k;
    profiles[k].data = std::move(datasets[k]);
  }
  if (domain == 0 && cfg.byz_fraction > 0.0) {
    const std::size_t n_byz = static_cast<std::size_t>(
        std::ceil(cfg.byz_fraction * static_cast<double>(profiles.size())));
    RngStream brng(seed, {0, domain, Purpose::ByzantineAssign});
    for (std::size_t k : sample_without_replacement(profiles.size(), n_byz, brng)) {
      profiles[k].byzantine = true;
    }
  }
  for (auto& p : profiles) {
    warmup(p, cfg.model, cfg.warmup_steps, cfg.eta_l, cfg.batch_size, seed);
  }
  return profiles;
}

inline FedConfig fed_config(const ExperimentConfig& cfg) {
  FedConfig fc;
  fc.aggregator = cfg.aggregator;
  fc.tau = cfg.tau;
  fc.eta_l = cfg.eta_l;
  fc.batch_size = cfg.batch_size;
  fc.clients_per_round = cfg.clients_per_round;
  fc.policy = cfg.policy;
  fc.byz_loss_inflation = cfg.byz_loss_inflation;
  fc.byz_noise_sigma = cfg.byz_noise_sigma;
  fc.fine_tune_steps = cfg.fine_tune_steps;
  fc.eval_interval = cfg.eval_interval;
  fc.total_rounds = cfg.rounds;
  fc.threads = cfg.threads;
  return fc;
}

/// Runs one seed end to end and returns its round records.
inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const RoundObserver& observer = {}) {
  Federation fed;
  fed.model = cfg.model;
  fed.seed = seed;
  fed.clients = build_clients(cfg, seed, 0, cfg.partition_spec.n_clients, 0);
  const std::size_t n_unseen = cfg.n_unseen == 0 ? cfg.partition_spec.n_clients : cfg.n_unseen;
  if (n_unseen > 0) {
    fed.unseen = build_clients(cfg, seed, 1, n_unseen, fed.clients.size());
  }
  RngStream wrng(seed, {~0ull, 0, Purpose::ModelInit});
  fed.w = init_params(cfg.model, wrng);

  const FedConfig fc = fed_config(cfg);
  SeedResult res;
  res.seed = seed;
  res.records.reserve(cfg.rounds);
  for (int t = 0; t < cfg.rounds; ++t) {
    res.records.push_back(run_round(fed, fc, t, observer));
  }
  return res;
}

/// Full experiment: every seed, rounds.csv + summary.json +
/// config_resolved.toml under out_dir.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

  RunSummary sum;
  sum.rounds_csv = (fs::path(out_dir) / "rounds.csv").string();
  sum.summary_json = (fs::path(out_dir) / "summary.json").string();
  sum.config_echo = cfg.to_toml();
  sum.hash = cfg.hash();

  std::ofstream csv(sum.rounds_csv, std::ios::binary);
  if (!csv) throw IoError("cannot write " + sum.rounds_csv);
  csv << kRoundsCsvHeader << '\n';

  const char* algo = aggregator_name(cfg.aggregator);
  std::vector<double> f_gm_s, f_gm_u, f_aa_s, f_aa_u, f_pa_s, f_pa_u;
  for (std::uint64_t seed : cfg.seeds) {
    SeedResult res = run_seed(cfg, seed);
    for (const auto& r : res.records) detail::write_csv_row(csv, seed, algo, r);
    const RoundRecord& last = res.records.back();
    f_gm_s.push_back(last.gm_appeal_seen);
    f_gm_u.push_back(last.gm_appeal_unseen);
    f_aa_s.push_back(last.avg_acc_seen);
    f_aa_u.push_back(last.avg_acc_unseen);
    f_pa_s.push_back(last.pref_acc_seen);
    f_pa_u.push_back(last.pref_acc_unseen);
    sum.per_seed.push_back(std::move(res));
  }
  csv.close();

  sum.gm_appeal_seen = detail::summarize(f_gm_s);
  sum.gm_appeal_unseen = detail::summarize(f_gm_u);
  sum.avg_acc_seen = detail::summarize(f_aa_s);
  sum.avg_acc_unseen = detail::summarize(f_aa_u);
  sum.pref_acc_seen = detail::summarize(f_pa_s);
  sum.pref_acc_unseen = detail::summarize(f_pa_u);

  {
    std::ofstream cf(fs::path(out_dir) / "config_resolved.toml", std::ios::binary);
    cf << sum.config_echo;
  }
  {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(sum.hash));
    j["hash"] = hex;
    j["algorithm"] = algo;
    j["rounds_csv"] = "rounds.csv";
    j["config_toml"] = sum.config_echo;
    auto metric = [](const MetricSummary& m) {
      nlohmann::ordered_json out;
      out["mean"] = m.mean;
      out["std"] = m.std_dev;
      out["per_seed"] = m.per_seed;
      return out;
    };
    j["final"]["gm_appeal_seen"] = metric(sum.gm_appeal_seen);
    j["final"]["gm_appeal_unseen"] = metric(sum.gm_appeal_unseen);
    j["final"]["avg_acc_seen"] = metric(sum.avg_acc_seen);
    j["final"]["avg_acc_unseen"] = metric(sum.avg_acc_unseen);
    j["final"]["pref_acc_seen"] = metric(sum.pref_acc_seen);
    j["final"]["pref_acc_unseen"] = metric(sum.pref_acc_unseen);
    {
      nlohmann::ordered_json dis = nlohmann::ordered_json::array();
      for (const auto& s : sum.per_seed) {
        nlohmann::ordered_json row;
        row["seed"] = s.seed;
        row["ratio"] = s.records.back().dissim_ratio;
        row["residual"] = s.records.back().dissim_residual;
        dis.push_back(row);
      }
      j["final"]["dissimilarity"] = dis;
    }
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (const auto& s : cfg.seeds) seeds.push_back(s);
    j["seeds"] = seeds;
    std::ofstream jf(sum.summary_json, std::ios::binary);
    if (!jf) throw IoError("cannot write " + sum.summary_json);
    jf << j.dump(2) << '\n';
  }
  return sum;
}

inline constexpr const char* kMeanestCsvHeader =
    "gamma_g,gamma_g2,estimator,appeal_mean,appeal_stderr,bound";

/// Sweeps gamma_G over the configured grid (endpoints included) and emits
/// one row per (grid point, estimator) with the matching analytic bound.
inline void run_meanest(const MeanestConfig& cfg, const std::string& csv_path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const auto dir = fs::path(csv_path).parent_path();
  if (!dir.empty()) fs::create_directories(dir, ec);
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + csv_path);
  out << kMeanestCsvHeader << '\n';
  for (int i = 0; i < cfg.grid_points; ++i) {
    const double g = cfg.gamma_g_min + (cfg.gamma_g_max - cfg.gamma_g_min) *
                                           static_cast<double>(i) /
                                           static_cast<double>(cfg.grid_points - 1);
    const std::vector<double> theta{0.0, 2.0 * g};
    for (Estimator est :
         {Estimator::FedAvgMean, Estimator::MaxFlMinimum, Estimator::ReluSurrogate}) {
      const AppealEstimate e = expected_appeal(est, theta, cfg.gamma2, cfg.trials, cfg.seed);
      const double bound = appeal_bound(est, g * g, cfg.gamma2);
      out << detail::fmt_g17(g) << ',' << detail::fmt_g17(g * g) << ',' << estimator_name(est)
          << ',' << detail::fmt_g17(e.mean) << ',' << detail::fmt_g17(e.stderr_) << ','
          << detail::fmt_g17(bound) << '\n';
    }
  }
}

}  // namespace maxfl
