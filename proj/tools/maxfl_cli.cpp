// Experiment runner CLI.
//
// Subcommands:
//   fl        run a federated experiment from a TOML config
//   meanest   mean-estimation appeal sweep (Monte-Carlo vs analytic bounds)
//   gradcheck finite-difference sweep over every model kind
//   validate  parse and validate a config, print the resolved echo
//
// Exit codes: 0 success, 1 configuration error, 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "maxfl/config.hpp"
#include "maxfl/experiment.hpp"

namespace {

int cmd_fl(const std::string& config_path, const std::string& out_override, int threads) {
  maxfl::ExperimentConfig cfg = maxfl::ExperimentConfig::from_file(config_path);
  if (threads > 0) cfg.threads = threads;
  const std::string out = out_override.empty() ? cfg.output_dir : out_override;
  const maxfl::RunSummary sum = maxfl::run_experiment(cfg, out);
  std::printf("algorithm        %s\n", maxfl::aggregator_name(cfg.aggregator));
  std::printf("seeds            %zu\n", cfg.seeds.size());
  std::printf("gm_appeal seen   %.4f (+/- %.4f)\n", sum.gm_appeal_seen.mean,
              sum.gm_appeal_seen.std_dev);
  std::printf("gm_appeal unseen %.4f (+/- %.4f)\n", sum.gm_appeal_unseen.mean,
              sum.gm_appeal_unseen.std_dev);
  std::printf("avg_acc seen     %.4f (+/- %.4f)\n", sum.avg_acc_seen.mean,
              sum.avg_acc_seen.std_dev);
  std::printf("avg_acc unseen   %.4f (+/- %.4f)\n", sum.avg_acc_unseen.mean,
              sum.avg_acc_unseen.std_dev);
  std::printf("pref_acc seen    %.4f (+/- %.4f)\n", sum.pref_acc_seen.mean,
              sum.pref_acc_seen.std_dev);
  std::printf("rounds csv       %s\n", sum.rounds_csv.c_str());
  std::printf("summary json     %s\n", sum.summary_json.c_str());
  return 0;
}

int cmd_meanest(const std::string& config_path, const std::string& out_override) {
  maxfl::MeanestConfig mc;
  std::string out_dir = "out";
  if (!config_path.empty()) {
    const maxfl::ExperimentConfig cfg = maxfl::ExperimentConfig::from_file(config_path);
    mc = cfg.meanest;
    out_dir = cfg.output_dir;
  }
  if (!out_override.empty()) out_dir = out_override;
  const std::string csv = (std::filesystem::path(out_dir) / "meanest.csv").string();
  maxfl::run_meanest(mc, csv);
  std::printf("wrote %s (%d grid points, %zu trials per estimator)\n", csv.c_str(),
              mc.grid_points, mc.trials);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  using namespace maxfl;
  struct Case {
    const char* name;
    ModelSpec spec;
    double tol;
  };
  const Case cases[] = {
      {"scalar_quadratic", ModelSpec::scalar_quadratic(), 1e-9},
      {"linear_regression", ModelSpec::linear_regression(6), 1e-4},
      {"softmax_regression", ModelSpec::softmax_regression(6, 4), 1e-4},
      {"mlp", ModelSpec::mlp({6, 8, 4}), 1e-4},
  };
  bool ok = true;
  const double h = 1e-5;
  for (const auto& c : cases) {
    double worst = 0.0;
    int accepted = 0;
    for (int attempt = 0; accepted < 100; ++attempt) {
      RngStream rng(seed, {static_cast<std::uint64_t>(attempt), 0, Purpose::DataGen});
      SampleSet data;
      data.dim = c.spec.kind == ModelKind::ScalarQuadratic ? 0 : c.spec.input_dim();
      const std::size_t n = 8;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(data.dim);
        for (auto& v : x) v = rng.next_gaussian();
        const double y = c.spec.is_classification()
                             ? static_cast<double>(rng.next_below(c.spec.n_classes()))
                             : rng.next_gaussian();
        data.push_back(x, y, i);
      }
      ModelParams w(c.spec.param_count());
      for (auto& v : w) v = 0.5 * rng.next_gaussian();
      std::vector<std::size_t> rows(n);
      for (std::size_t i = 0; i < n; ++i) rows[i] = i;
      // finite differences are blind at ReLU kinks; skip states within 100h
      if (min_hidden_preactivation(c.spec, w, data, rows) < 100.0 * h) continue;
      ++accepted;
      worst = std::max(worst, fd_check(c.spec, w, data, rows, h));
    }
    const bool pass = worst <= c.tol;
    ok = ok && pass;
    std::printf("%-20s max rel err %.3e  (tol %.0e)  %s\n", c.name, worst, c.tol,
                pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

int cmd_validate(const std::string& config_path) {
  const maxfl::ExperimentConfig cfg = maxfl::ExperimentConfig::from_file(config_path);
  std::cout << cfg.to_toml();
  std::fprintf(stderr, "config ok (hash %016llx)\n",
               static_cast<unsigned long long>(cfg.hash()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MaxFL federated-learning simulation engine"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int threads = 0;
  std::uint64_t gc_seed = 1;

  auto* fl = app.add_subcommand("fl", "run a federated experiment");
  fl->add_option("--config", config_path, "TOML config path")->required();
  fl->add_option("--out", out_dir, "output directory (overrides the config)");
  fl->add_option("--threads", threads, "worker threads for client fan-out");

  auto* me = app.add_subcommand("meanest", "mean-estimation appeal sweep");
  me->add_option("--config", config_path, "TOML config path (only [meanest] is used)");
  me->add_option("--out", out_dir, "output directory");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient sweep");
  gc->add_option("--seed", gc_seed, "sweep seed");

  auto* va = app.add_subcommand("validate", "parse a config and print the resolved echo");
  va->add_option("--config", config_path, "TOML config path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fl->parsed()) return cmd_fl(config_path, out_dir, threads);
    if (me->parsed()) return cmd_meanest(config_path, out_dir);
    if (gc->parsed()) return cmd_gradcheck(gc_seed);
    if (va->parsed()) return cmd_validate(config_path);
  } catch (const maxfl::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const maxfl::IngestError& e) {
    std::fprintf(stderr, "ingest error: %s\n", e.what());
    return 2;
  } catch (const maxfl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  }
  return 0;
}
