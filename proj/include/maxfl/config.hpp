#pragma once

// Experiment configuration: a strict TOML-subset reader (single-level
// tables, scalar and array values, # comments), the resolved experiment
// config with defaults, validation that names the offending key, and a
// round-trippable echo of the effective configuration.

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "maxfl/data.hpp"
#include "maxfl/math.hpp"
#include "maxfl/model.hpp"
#include "maxfl/server.hpp"

namespace maxfl {

inline constexpr const char* kVersion = "maxfl 1.0";

// ---- TOML subset -----------------------------------------------------------

struct TomlValue {
  enum class Type { Bool, Int, Float, Str, Array };
  Type type = Type::Int;
  bool b = false;
  std::int64_t i = 0;
  double f = 0.0;
  std::string s;
  std::vector<TomlValue> arr;

  double as_double() const { return type == Type::Int ? static_cast<double>(i) : f; }
};

using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline TomlValue parse_toml_scalar(const std::string& tok, const std::string& where) {
  TomlValue v;
  if (tok.empty()) throw ConfigError(where + ": empty value");
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"') throw ConfigError(where + ": unterminated string");
    v.type = TomlValue::Type::Str;
    for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
      if (tok[i] == '\\' && i + 2 < tok.size()) {
        ++i;
        v.s += tok[i] == 'n' ? '\n' : tok[i] == 't' ? '\t' : tok[i];
      } else {
        v.s += tok[i];
      }
    }
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.type = TomlValue::Type::Bool;
    v.b = tok == "true";
    return v;
  }
  const bool floaty = tok.find_first_of(".eE") != std::string::npos &&
                      tok.find_first_not_of("+-0123456789.eE_") == std::string::npos;
  errno = 0;
  char* end = nullptr;
  if (!floaty) {
    const long long iv = std::strtoll(tok.c_str(), &end, 10);
    if (end && *end == '\0' && errno == 0) {
      v.type = TomlValue::Type::Int;
      v.i = iv;
      return v;
    }
  }
  errno = 0;
  const double fv = std::strtod(tok.c_str(), &end);
  if (!end || *end != '\0' || errno == ERANGE) {
    throw ConfigError(where + ": cannot parse value '" + tok + "'");
  }
  v.type = TomlValue::Type::Float;
  v.f = fv;
  return v;
}

}  // namespace detail

/// Parses the TOML subset into a flat "table.key" -> value map.
inline TomlTable parse_toml(const std::string& text, const std::string& filename = "<config>") {
  TomlTable out;
  std::istringstream in(text);
  std::string line, table;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = filename + ":" + std::to_string(lineno);
    // strip comments outside strings
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line.resize(i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed table header");
      table = detail::trim(line.substr(1, line.size() - 2));
      if (table.empty() || table.find('.') != std::string::npos) {
        throw ConfigError(where + ": unsupported table name '" + table + "'");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (key.empty() || key.find_first_not_of(
                           "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
                           std::string::npos) {
      throw ConfigError(where + ": malformed key '" + key + "'");
    }
    const std::string full = table.empty() ? key : table + "." + key;
    if (out.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
    TomlValue v;
    if (!val.empty() && val.front() == '[') {
      if (val.back() != ']') throw ConfigError(where + ": arrays must be single-line");
      v.type = TomlValue::Type::Array;
      std::string body = val.substr(1, val.size() - 2);
      std::string tok;
      bool str = false;
      for (char c : body) {
        if (c == '"') str = !str;
        if (c == ',' && !str) {
          if (!detail::trim(tok).empty()) v.arr.push_back(detail::parse_toml_scalar(detail::trim(tok), where));
          tok.clear();
        } else {
          tok += c;
        }
      }
      if (!detail::trim(tok).empty()) v.arr.push_back(detail::parse_toml_scalar(detail::trim(tok), where));
    } else {
      v = detail::parse_toml_scalar(val, where);
    }
    out.emplace(full, std::move(v));
  }
  return out;
}

// Typed access that remembers which keys were touched, so leftovers can be
// reported as unknown (no silent typos).
class ConfigReader {
 public:
  explicit ConfigReader(TomlTable table) : kv_(std::move(table)) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return kv_.count(key) > 0;
  }
  double get_double(const std::string& key, double dflt) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second.type != TomlValue::Type::Int && it->second.type != TomlValue::Type::Float) {
      throw ConfigError("config key '" + key + "' must be a number");
    }
    return it->second.as_double();
  }
  std::int64_t get_int(const std::string& key, std::int64_t dflt) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second.type != TomlValue::Type::Int) {
      throw ConfigError("config key '" + key + "' must be an integer");
    }
    return it->second.i;
  }
  std::string get_string(const std::string& key, const std::string& dflt) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second.type != TomlValue::Type::Str) {
      throw ConfigError("config key '" + key + "' must be a string");
    }
    return it->second.s;
  }
  std::string require_string(const std::string& key) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing required config key '" + key + "'");
    if (it->second.type != TomlValue::Type::Str) {
      throw ConfigError("config key '" + key + "' must be a string");
    }
    return it->second.s;
  }
  std::vector<double> get_double_array(const std::string& key, std::vector<double> dflt) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second.type != TomlValue::Type::Array) {
      throw ConfigError("config key '" + key + "' must be an array");
    }
    std::vector<double> out;
    for (const auto& v : it->second.arr) {
      if (v.type != TomlValue::Type::Int && v.type != TomlValue::Type::Float) {
        throw ConfigError("config key '" + key + "' must hold numbers");
      }
      out.push_back(v.as_double());
    }
    return out;
  }
  std::vector<std::int64_t> get_int_array(const std::string& key, std::vector<std::int64_t> dflt) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    if (it->second.type != TomlValue::Type::Array) {
      throw ConfigError("config key '" + key + "' must be an array");
    }
    std::vector<std::int64_t> out;
    for (const auto& v : it->second.arr) {
      if (v.type != TomlValue::Type::Int) {
        throw ConfigError("config key '" + key + "' must hold integers");
      }
      out.push_back(v.i);
    }
    return out;
  }

  /// Throws for the first key that was never requested.
  void finish() const {
    for (const auto& [key, _] : kv_) {
      if (!used_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
  }

 private:
  TomlTable kv_;
  std::set<std::string> used_;
};

// ---- experiment config ------------------------------------------------------

struct MeanestConfig {
  double gamma_g_min = 0.0;
  double gamma_g_max = std::sqrt(20.0);
  double gamma2 = 1.0;
  int grid_points = 15;
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  // experiment
  std::vector<std::uint64_t> seeds = {1};
  int rounds = 100;
  int eval_interval = 1;
  int fine_tune_steps = 0;
  std::string output_dir = "out";
  int threads = 1;
  // algorithm
  std::string algorithm_kind = "maxfl";
  AggregatorSpec aggregator = MaxFlSpec{};
  WeightMode weight_mode = WeightMode::SigmoidDerivative;
  double eta_g = 1.0, epsilon = 0.01, mu = 0.0, qffl_q = 1.0, qffl_lr = 0.1, pfa_alpha = 0.01;
  // local
  int tau = 10;
  double eta_l = 0.01;
  std::size_t batch_size = 32;
  int warmup_steps = 100;
  // model
  std::string model_kind = "mlp";
  std::vector<int> hidden = {64, 30};
  ModelSpec model;
  // data
  std::string data_scheme = "cluster_labels";
  PartitionSpec partition_spec;
  std::size_t n_samples = 6000;
  std::size_t n_features = 20;
  int n_labels = 10;
  double cluster_sep = 6.0;
  std::string idx_images;  // optional IDX pool instead of synthetic blobs
  std::string idx_labels;
  // participation
  ParticipationPolicy policy;
  // sampling
  std::size_t clients_per_round = 5;
  // byzantine
  double byz_fraction = 0.0, byz_loss_inflation = 10.0, byz_noise_sigma = 0.0;
  // unseen
  std::size_t n_unseen = 0;  // 0 -> same as n_clients
  // meanest
  MeanestConfig meanest;

  static ExperimentConfig from_text(const std::string& text,
                                    const std::string& filename = "<config>");
  static ExperimentConfig from_file(const std::string& path);

  std::string to_toml() const;
  std::uint64_t hash() const;
};

namespace detail {

inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_text(const std::string& text,
                                                    const std::string& filename) {
  ConfigReader r(parse_toml(text, filename));
  ExperimentConfig c;

  // [experiment]
  {
    const auto seeds = r.get_int_array("experiment.seeds", {1});
    if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
    c.seeds.clear();
    for (auto s : seeds) c.seeds.push_back(static_cast<std::uint64_t>(s));
    c.rounds = static_cast<int>(r.get_int("experiment.rounds", 100));
    if (c.rounds < 1) throw ConfigError("experiment.rounds must be >= 1");
    c.eval_interval = static_cast<int>(r.get_int("experiment.eval_interval", 1));
    if (c.eval_interval < 1) throw ConfigError("experiment.eval_interval must be >= 1");
    c.fine_tune_steps = static_cast<int>(r.get_int("experiment.fine_tune_steps", 0));
    if (c.fine_tune_steps < 0) throw ConfigError("experiment.fine_tune_steps must be >= 0");
    c.output_dir = r.get_string("experiment.output_dir", "out");
    c.threads = static_cast<int>(r.get_int("experiment.threads", 1));
    if (c.threads < 1) throw ConfigError("experiment.threads must be >= 1");
  }

  // [local]
  c.tau = static_cast<int>(r.get_int("local.tau", 10));
  if (c.tau < 1) throw ConfigError("local.tau must be >= 1");
  c.eta_l = r.get_double("local.eta_l", 0.01);
  if (!(c.eta_l > 0.0)) throw ConfigError("local.eta_l must be > 0");
  c.batch_size = static_cast<std::size_t>(r.get_int("local.batch_size", 32));
  if (c.batch_size < 1) throw ConfigError("local.batch_size must be >= 1");
  c.warmup_steps = static_cast<int>(r.get_int("local.warmup_steps", 100));
  if (c.warmup_steps < 1) throw ConfigError("local.warmup_steps must be >= 1");

  // [algorithm]
  c.algorithm_kind = r.require_string("algorithm.kind");
  c.eta_g = r.get_double("algorithm.eta_g", 1.0);
  if (!(c.eta_g > 0.0)) throw ConfigError("algorithm.eta_g must be > 0");
  c.epsilon = r.get_double("algorithm.epsilon", 0.01);
  if (!(c.epsilon > 0.0)) throw ConfigError("algorithm.epsilon must be > 0");
  c.mu = r.get_double("algorithm.mu", 0.0);
  if (c.mu < 0.0) throw ConfigError("algorithm.mu must be >= 0");
  c.qffl_q = r.get_double("algorithm.q", 1.0);
  if (c.qffl_q < 0.0) throw ConfigError("algorithm.q must be >= 0");
  c.qffl_lr = r.get_double("algorithm.lr", 0.1);
  if (!(c.qffl_lr > 0.0)) throw ConfigError("algorithm.lr must be > 0");
  c.pfa_alpha = r.get_double("algorithm.alpha", 0.01);
  const std::string wm = r.get_string("algorithm.weight_mode", "sigmoid_derivative");
  if (wm == "sigmoid_derivative") {
    c.weight_mode = WeightMode::SigmoidDerivative;
  } else if (wm == "raw_sigmoid") {
    c.weight_mode = WeightMode::RawSigmoid;
  } else {
    throw ConfigError("algorithm.weight_mode must be sigmoid_derivative or raw_sigmoid");
  }
  if (c.algorithm_kind == "maxfl") {
    c.aggregator = MaxFlSpec{c.weight_mode, c.eta_g, c.epsilon};
  } else if (c.algorithm_kind == "fedavg") {
    c.aggregator = FedAvgSpec{c.eta_g};
  } else if (c.algorithm_kind == "fedprox") {
    c.aggregator = FedProxSpec{c.eta_g, c.mu};
  } else if (c.algorithm_kind == "scaffold") {
    c.aggregator = ScaffoldSpec{c.eta_g};
  } else if (c.algorithm_kind == "qffl") {
    c.aggregator = QfflSpec{c.qffl_q, c.qffl_lr};
  } else if (c.algorithm_kind == "perfedavg_fo") {
    c.aggregator = PerFedAvgFoSpec{c.eta_g, c.pfa_alpha};
  } else {
    throw ConfigError("algorithm.kind '" + c.algorithm_kind +
                      "' is not one of maxfl/fedavg/fedprox/scaffold/qffl/perfedavg_fo");
  }

  // [data]
  c.data_scheme = r.require_string("data.scheme");
  c.partition_spec.n_clients = static_cast<std::size_t>(r.get_int("data.n_clients", 50));
  if (c.partition_spec.n_clients < 1) throw ConfigError("data.n_clients must be >= 1");
  c.partition_spec.flip_fraction = r.get_double("data.flip_fraction", 0.0);
  if (c.partition_spec.flip_fraction < 0.0 || c.partition_spec.flip_fraction > 1.0) {
    throw ConfigError("data.flip_fraction must lie in [0,1]");
  }
  c.partition_spec.split_ratio = r.get_double("data.split_ratio", 0.6);
  if (!(c.partition_spec.split_ratio > 0.0 && c.partition_spec.split_ratio < 1.0)) {
    throw ConfigError("data.split_ratio must lie in (0,1)");
  }
  c.partition_spec.min_samples = static_cast<std::size_t>(r.get_int("data.min_samples", 50));
  c.n_samples = static_cast<std::size_t>(r.get_int("data.n_samples", 6000));
  c.n_features = static_cast<std::size_t>(r.get_int("data.n_features", 20));
  c.n_labels = static_cast<int>(r.get_int("data.n_labels", 10));
  c.cluster_sep = r.get_double("data.cluster_sep", 6.0);
  c.idx_images = r.get_string("data.idx_images", "");
  c.idx_labels = r.get_string("data.idx_labels", "");
  if (c.idx_images.empty() != c.idx_labels.empty()) {
    throw ConfigError("data.idx_images and data.idx_labels must be set together");
  }
  const auto theta = r.get_double_array("data.theta", {0.0, 4.0});
  const double nu2 = r.get_double("data.nu2", 1.0);
  const auto n_per_client = static_cast<std::size_t>(r.get_int("data.n_per_client", 20));
  if (c.data_scheme == "cluster_labels") {
    ClusterLabelsScheme s;
    s.clusters = static_cast<int>(r.get_int("data.clusters", 5));
    s.labels_per_cluster = static_cast<int>(r.get_int("data.labels_per_cluster", 2));
    if (s.clusters < 1 || s.labels_per_cluster < 1 ||
        s.clusters * s.labels_per_cluster > c.n_labels) {
      throw ConfigError("data.clusters * data.labels_per_cluster must fit within data.n_labels");
    }
    c.partition_spec.scheme = s;
  } else if (c.data_scheme == "dirichlet") {
    DirichletScheme s;
    s.alpha = r.get_double("data.alpha", 0.5);
    if (!(s.alpha > 0.0)) throw ConfigError("data.alpha must be > 0");
    c.partition_spec.scheme = s;
  } else if (c.data_scheme == "mean_estimation") {
    MeanEstimationScheme s;
    s.theta = theta;
    s.nu2 = nu2;
    s.n_per_client = n_per_client;
    if (s.theta.empty()) throw ConfigError("data.theta must not be empty");
    if (!(s.nu2 > 0.0)) throw ConfigError("data.nu2 must be > 0");
    if (s.n_per_client < 2) throw ConfigError("data.n_per_client must be >= 2");
    if (!c.idx_images.empty()) {
      throw ConfigError("data.idx_images cannot be combined with data.scheme mean_estimation");
    }
    c.partition_spec.min_samples = 0;  // floor does not apply to generated data
    c.partition_spec.scheme = s;
  } else {
    throw ConfigError("data.scheme '" + c.data_scheme +
                      "' is not one of cluster_labels/dirichlet/mean_estimation");
  }

  // [model]
  c.model_kind = r.get_string("model.kind",
                              c.data_scheme == "mean_estimation" ? "scalar_quadratic" : "mlp");
  {
    const auto hv = r.get_int_array("model.hidden", {64, 30});
    c.hidden.clear();
    for (auto h : hv) c.hidden.push_back(static_cast<int>(h));
  }
  if (c.model_kind == "scalar_quadratic") {
    if (c.data_scheme != "mean_estimation") {
      throw ConfigError("model.kind scalar_quadratic requires data.scheme mean_estimation");
    }
    c.model = ModelSpec::scalar_quadratic();
  } else if (c.data_scheme == "mean_estimation") {
    throw ConfigError("data.scheme mean_estimation requires model.kind scalar_quadratic");
  } else if (c.model_kind == "softmax_regression") {
    c.model = ModelSpec::softmax_regression(static_cast<int>(c.n_features), c.n_labels);
  } else if (c.model_kind == "mlp") {
    std::vector<int> layers{static_cast<int>(c.n_features)};
    for (int h : c.hidden) {
      if (h < 1) throw ConfigError("model.hidden entries must be >= 1");
      layers.push_back(h);
    }
    layers.push_back(c.n_labels);
    c.model = ModelSpec::mlp(layers);
  } else {
    throw ConfigError("model.kind '" + c.model_kind +
                      "' is not one of scalar_quadratic/softmax_regression/mlp");
  }

  // [participation]
  {
    const std::string pm = r.get_string("participation.mode", "appeal_based");
    if (pm == "always_available") {
      c.policy.mode = ParticipationPolicy::Mode::AlwaysAvailable;
    } else if (pm == "appeal_based") {
      c.policy.mode = ParticipationPolicy::Mode::AppealBased;
    } else {
      throw ConfigError("participation.mode must be always_available or appeal_based");
    }
    const std::int64_t mr = r.get_int("participation.mandatory_rounds", -1);
    c.policy.mandatory_rounds =
        mr >= 0 ? static_cast<int>(mr)
                : static_cast<int>(std::ceil(0.05 * static_cast<double>(c.rounds)));
    if (c.policy.mandatory_rounds > c.rounds) {
      throw ConfigError("participation.mandatory_rounds must be <= experiment.rounds");
    }
  }

  // [sampling]
  c.clients_per_round = static_cast<std::size_t>(r.get_int("sampling.clients_per_round", 5));
  if (c.clients_per_round < 1 || c.clients_per_round > c.partition_spec.n_clients) {
    throw ConfigError("sampling.clients_per_round must lie in [1, data.n_clients]");
  }

  // [byzantine]
  c.byz_fraction = r.get_double("byzantine.fraction", 0.0);
  if (c.byz_fraction < 0.0 || c.byz_fraction > 1.0) {
    throw ConfigError("byzantine.fraction must lie in [0,1]");
  }
  c.byz_loss_inflation = r.get_double("byzantine.loss_inflation", 10.0);
  c.byz_noise_sigma = r.get_double("byzantine.noise_sigma", 0.0);
  if (c.byz_noise_sigma < 0.0) throw ConfigError("byzantine.noise_sigma must be >= 0");

  // [unseen]
  c.n_unseen = static_cast<std::size_t>(
      r.get_int("unseen.n_clients", static_cast<std::int64_t>(c.partition_spec.n_clients)));

  // [meanest]
  c.meanest.gamma_g_min = r.get_double("meanest.gamma_g_min", 0.0);
  c.meanest.gamma_g_max = r.get_double("meanest.gamma_g_max", std::sqrt(20.0));
  c.meanest.gamma2 = r.get_double("meanest.gamma2", 1.0);
  if (!(c.meanest.gamma2 > 0.0)) throw ConfigError("meanest.gamma2 must be > 0");
  c.meanest.grid_points = static_cast<int>(r.get_int("meanest.grid_points", 15));
  if (c.meanest.grid_points < 2) throw ConfigError("meanest.grid_points must be >= 2");
  c.meanest.trials = static_cast<std::size_t>(r.get_int("meanest.trials", 10000));
  if (c.meanest.trials < 1) throw ConfigError("meanest.trials must be >= 1");
  c.meanest.seed = static_cast<std::uint64_t>(r.get_int("meanest.seed", 1));

  r.finish();
  return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path);
}

inline std::string ExperimentConfig::to_toml() const {
  using detail::fmt_g17;
  std::ostringstream o;
  o << "[experiment]\n";
  o << "seeds = [";
  for (std::size_t i = 0; i < seeds.size(); ++i) o << (i ? ", " : "") << seeds[i];
  o << "]\n";
  o << "rounds = " << rounds << "\n";
  o << "eval_interval = " << eval_interval << "\n";
  o << "fine_tune_steps = " << fine_tune_steps << "\n";
  o << "output_dir = \"" << output_dir << "\"\n";
  o << "threads = " << threads << "\n\n";

  o << "[algorithm]\n";
  o << "kind = \"" << algorithm_kind << "\"\n";
  o << "eta_g = " << fmt_g17(eta_g) << "\n";
  o << "epsilon = " << fmt_g17(epsilon) << "\n";
  o << "weight_mode = \""
    << (weight_mode == WeightMode::SigmoidDerivative ? "sigmoid_derivative" : "raw_sigmoid")
    << "\"\n";
  o << "mu = " << fmt_g17(mu) << "\n";
  o << "q = " << fmt_g17(qffl_q) << "\n";
  o << "lr = " << fmt_g17(qffl_lr) << "\n";
  o << "alpha = " << fmt_g17(pfa_alpha) << "\n\n";

  o << "[local]\n";
  o << "tau = " << tau << "\n";
  o << "eta_l = " << fmt_g17(eta_l) << "\n";
  o << "batch_size = " << batch_size << "\n";
  o << "warmup_steps = " << warmup_steps << "\n\n";

  o << "[model]\n";
  o << "kind = \"" << model_kind << "\"\n";
  o << "hidden = [";
  for (std::size_t i = 0; i < hidden.size(); ++i) o << (i ? ", " : "") << hidden[i];
  o << "]\n\n";

  o << "[data]\n";
  o << "scheme = \"" << data_scheme << "\"\n";
  o << "n_clients = " << partition_spec.n_clients << "\n";
  o << "n_samples = " << n_samples << "\n";
  o << "n_features = " << n_features << "\n";
  o << "n_labels = " << n_labels << "\n";
  o << "cluster_sep = " << fmt_g17(cluster_sep) << "\n";
  if (!idx_images.empty()) {
    o << "idx_images = \"" << idx_images << "\"\n";
    o << "idx_labels = \"" << idx_labels << "\"\n";
  }
  if (const auto* cl = std::get_if<ClusterLabelsScheme>(&partition_spec.scheme)) {
    o << "clusters = " << cl->clusters << "\n";
    o << "labels_per_cluster = " << cl->labels_per_cluster << "\n";
  } else if (const auto* d = std::get_if<DirichletScheme>(&partition_spec.scheme)) {
    o << "alpha = " << fmt_g17(d->alpha) << "\n";
  } else if (const auto* me = std::get_if<MeanEstimationScheme>(&partition_spec.scheme)) {
    o << "theta = [";
    for (std::size_t i = 0; i < me->theta.size(); ++i) o << (i ? ", " : "") << fmt_g17(me->theta[i]);
    o << "]\n";
    o << "nu2 = " << fmt_g17(me->nu2) << "\n";
    o << "n_per_client = " << me->n_per_client << "\n";
  }
  o << "flip_fraction = " << fmt_g17(partition_spec.flip_fraction) << "\n";
  o << "split_ratio = " << fmt_g17(partition_spec.split_ratio) << "\n";
  o << "min_samples = " << partition_spec.min_samples << "\n\n";

  o << "[participation]\n";
  o << "mode = \""
    << (policy.mode == ParticipationPolicy::Mode::AlwaysAvailable ? "always_available"
                                                                  : "appeal_based")
    << "\"\n";
  o << "mandatory_rounds = " << policy.mandatory_rounds << "\n\n";

  o << "[sampling]\n";
  o << "clients_per_round = " << clients_per_round << "\n\n";

  o << "[byzantine]\n";
  o << "fraction = " << fmt_g17(byz_fraction) << "\n";
  o << "loss_inflation = " << fmt_g17(byz_loss_inflation) << "\n";
  o << "noise_sigma = " << fmt_g17(byz_noise_sigma) << "\n\n";

  o << "[unseen]\n";
  o << "n_clients = " << n_unseen << "\n\n";

  o << "[meanest]\n";
  o << "gamma_g_min = " << fmt_g17(meanest.gamma_g_min) << "\n";
  o << "gamma_g_max = " << fmt_g17(meanest.gamma_g_max) << "\n";
  o << "gamma2 = " << fmt_g17(meanest.gamma2) << "\n";
  o << "grid_points = " << meanest.grid_points << "\n";
  o << "trials = " << meanest.trials << "\n";
  o << "seed = " << meanest.seed << "\n";
  return o.str();
}

inline std::uint64_t ExperimentConfig::hash() const {
  return detail::fnv1a(std::string(kVersion) + "\n" + to_toml());
}

}  // namespace maxfl
