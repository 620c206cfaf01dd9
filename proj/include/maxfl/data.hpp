#pragma once

// Dataset generation and partitioning: Gaussian-blob classification pools,
// cluster-label and Dirichlet non-IID splits, cyclic label flipping, the
// 1-D mean-estimation instance, and IDX image ingestion.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "maxfl/math.hpp"
#include "maxfl/meanest.hpp"
#include "maxfl/model.hpp"
#include "maxfl/rng.hpp"

namespace maxfl {

struct ClientDataset {
  SampleSet train;
  SampleSet test;
  double split_ratio = 0.6;
  std::size_t topped_up = 0;  // samples moved in to satisfy the min floor

  std::size_t n_train() const { return train.n; }
  std::size_t n_test() const { return test.n; }
};

struct ClusterLabelsScheme {
  int clusters = 5;
  int labels_per_cluster = 2;
};
struct DirichletScheme {
  double alpha = 0.5;
};
struct MeanEstimationScheme {
  std::vector<double> theta;
  double nu2 = 1.0;
  std::size_t n_per_client = 20;
};

struct PartitionSpec {
  std::variant<ClusterLabelsScheme, DirichletScheme, MeanEstimationScheme> scheme =
      ClusterLabelsScheme{};
  std::size_t n_clients = 50;
  double flip_fraction = 0.0;
  double split_ratio = 0.6;
  std::size_t min_samples = 50;
};

/// Balanced Gaussian-blob pool: one mean per label, pairwise separation
/// cluster_sep (orthogonal placement when n_labels <= n_features, a line
/// with adjacent separation cluster_sep otherwise), unit noise.
inline SampleSet make_synthetic_classification(std::size_t n_samples, std::size_t n_features,
                                               int n_labels, double cluster_sep,
                                               RngStream& rng) {
  if (n_samples < 1 || n_features < 1 || n_labels < 1) {
    throw ConfigError("make_synthetic_classification: all counts must be >= 1");
  }
  std::vector<std::vector<double>> means(n_labels, std::vector<double>(n_features, 0.0));
  if (static_cast<std::size_t>(n_labels) <= n_features) {
    const double a = cluster_sep / std::sqrt(2.0);
    for (int l = 0; l < n_labels; ++l) means[l][l] = a;
  } else {
    for (int l = 0; l < n_labels; ++l) means[l][0] = cluster_sep * l;
  }

  SampleSet pool;
  pool.dim = n_features;
  pool.features.resize(n_samples * n_features);
  pool.targets.resize(n_samples);
  pool.ids.resize(n_samples);
  pool.n = n_samples;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int label = static_cast<int>(i % n_labels);
    double* x = pool.features.data() + i * n_features;
    for (std::size_t j = 0; j < n_features; ++j) x[j] = means[label][j] + rng.next_gaussian();
    pool.targets[i] = label;
    pool.ids[i] = i;
  }
  // decouple pool order from label order
  std::vector<std::size_t> perm(n_samples);
  std::iota(perm.begin(), perm.end(), 0);
  shuffle(perm, rng);
  SampleSet shuffled;
  shuffled.dim = n_features;
  shuffled.features.reserve(pool.features.size());
  for (std::size_t i : perm) shuffled.push_back(pool.row(i), pool.targets[i], pool.ids[i]);
  return shuffled;
}

namespace detail {

/// Integer shares of `total` proportional to `weights`, largest-remainder
/// rounding, ties toward the lower index.
inline std::vector<std::size_t> largest_remainder(std::size_t total,
                                                  const std::vector<double>& weights) {
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::size_t> counts(weights.size(), 0);
  if (wsum <= 0.0 || total == 0) {
    return counts;
  }
  std::vector<std::pair<double, std::size_t>> rema;  // (-frac, index)
  std::size_t assigned = 0;
  rema.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double share = static_cast<double>(total) * weights[i] / wsum;
    counts[i] = static_cast<std::size_t>(std::floor(share));
    assigned += counts[i];
    rema.emplace_back(-(share - std::floor(share)), i);
  }
  std::sort(rema.begin(), rema.end());
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) {
    counts[rema[i % rema.size()].second] += 1;
  }
  return counts;
}

/// Marsaglia-Tsang gamma variate, shape alpha, scale 1.
inline double gamma_sample(double alpha, RngStream& rng) {
  if (alpha < 1.0) {
    double u = rng.next_double();
    if (u <= 0.0) u = 0x1.0p-53;
    return gamma_sample(alpha + 1.0, rng) * std::pow(u, 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.next_gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_double();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

/// Seeded per-client train/test split at `ratio`, order-independent of how
/// the client's samples were accumulated (indices are shuffled first).
inline ClientDataset split_client(const SampleSet& pool, std::vector<std::size_t> samples,
                                  double ratio, std::uint64_t seed, std::uint64_t client,
                                  std::uint64_t domain) {
  RngStream rng(seed, {client, domain, Purpose::Split});
  std::sort(samples.begin(), samples.end());  // canonical order before the seeded shuffle
  shuffle(samples, rng);
  const std::size_t n = samples.size();
  std::size_t n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  n_train = std::max<std::size_t>(1, std::min(n_train, n > 1 ? n - 1 : n));
  ClientDataset out;
  out.split_ratio = ratio;
  out.train.dim = pool.dim;
  out.test.dim = pool.dim;
  for (std::size_t i = 0; i < n; ++i) {
    SampleSet& dst = i < n_train ? out.train : out.test;
    dst.push_back(pool.row(samples[i]), pool.targets[samples[i]], pool.ids[samples[i]]);
  }
  return out;
}

}  // namespace detail

struct MeanEstData {
  std::vector<ClientDataset> clients;
  MeanEstProblem problem;  // theta, empirical means, gamma2 = nu2/n
};

/// Each client draws n samples ~ N(theta_k, nu2); records the empirical
/// means and gamma2 = nu2/n.
inline MeanEstData make_mean_estimation(const std::vector<double>& theta, double nu2,
                                        std::size_t n_per_client, double split_ratio,
                                        std::uint64_t seed, std::uint64_t domain) {
  if (!(nu2 > 0.0) || n_per_client < 1 || theta.empty()) {
    throw ConfigError("make_mean_estimation: need nu2 > 0, n >= 1 and a nonempty theta list");
  }
  MeanEstData out;
  out.problem.theta = theta;
  out.problem.gamma2 = nu2 / static_cast<double>(n_per_client);
  const double nu = std::sqrt(nu2);
  std::uint64_t next_id = 0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    RngStream rng(seed, {k, domain, Purpose::DataGen});
    SampleSet samples;
    samples.dim = 0;
    double mean = 0.0;
    for (std::size_t j = 0; j < n_per_client; ++j) {
      const double e = theta[k] + nu * rng.next_gaussian();
      samples.push_back({}, e, next_id++);
      mean += e;
    }
    mean /= static_cast<double>(n_per_client);
    out.problem.theta_hat.push_back(mean);
    std::vector<std::size_t> idx(n_per_client);
    std::iota(idx.begin(), idx.end(), 0);
    out.clients.push_back(detail::split_client(samples, idx, split_ratio, seed, k, domain));
  }
  return out;
}

/// Splits a labeled pool into n_clients client datasets. See PartitionSpec
/// for the schemes; every sample is assigned to at most one client.
inline std::vector<ClientDataset> partition(const SampleSet& pool, const PartitionSpec& spec,
                                            std::uint64_t seed, std::uint64_t domain = 0) {
  const std::size_t m = spec.n_clients;
  if (m < 1) throw ConfigError("partition: n_clients must be >= 1");

  if (const auto* me = std::get_if<MeanEstimationScheme>(&spec.scheme)) {
    // pool is unused; each client gets its own Gaussian draw
    std::vector<double> theta(m);
    for (std::size_t k = 0; k < m; ++k) theta[k] = me->theta[k % me->theta.size()];
    return make_mean_estimation(theta, me->nu2, me->n_per_client, spec.split_ratio, seed, domain)
        .clients;
  }

  if (pool.n < spec.min_samples * m) {
    throw ConfigError("partition: pool of " + std::to_string(pool.n) +
                      " samples cannot give " + std::to_string(m) + " clients at least " +
                      std::to_string(spec.min_samples) + " each");
  }
  int n_labels = 0;
  for (double t : pool.targets) n_labels = std::max(n_labels, static_cast<int>(t) + 1);

  // per-label sample indices, shuffled once
  RngStream prng(seed, {0, domain, Purpose::Partition});
  std::vector<std::vector<std::size_t>> by_label(n_labels);
  for (std::size_t i = 0; i < pool.n; ++i) {
    by_label[static_cast<int>(pool.targets[i])].push_back(i);
  }
  for (auto& v : by_label) shuffle(v, prng);

  std::vector<std::vector<std::size_t>> assigned(m);

  if (const auto* cl = std::get_if<ClusterLabelsScheme>(&spec.scheme)) {
    if (cl->clusters < 1 || cl->labels_per_cluster < 1 ||
        cl->clusters * cl->labels_per_cluster > n_labels) {
      throw ConfigError("partition: cluster labels exceed the pool's label universe");
    }
    // cluster c owns labels [c*L, (c+1)*L); clients round-robin over clusters
    for (int c = 0; c < cl->clusters; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t k = c; k < m; k += cl->clusters) members.push_back(k);
      if (members.empty()) continue;
      for (int j = 0; j < cl->labels_per_cluster; ++j) {
        const auto& lab = by_label[c * cl->labels_per_cluster + j];
        const std::vector<double> w(members.size(), 1.0);
        const auto counts = detail::largest_remainder(lab.size(), w);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < members.size(); ++s) {
          for (std::size_t i = 0; i < counts[s]; ++i) assigned[members[s]].push_back(lab[pos++]);
        }
      }
    }
  } else {
    const auto& dir = std::get<DirichletScheme>(spec.scheme);
    if (!(dir.alpha > 0.0)) throw ConfigError("partition: Dirichlet alpha must be > 0");
    // proportions p_k ~ Dir(alpha) per client over labels
    std::vector<std::vector<double>> prop(m, std::vector<double>(n_labels));
    for (std::size_t k = 0; k < m; ++k) {
      double s = 0.0;
      for (int l = 0; l < n_labels; ++l) {
        prop[k][l] = detail::gamma_sample(dir.alpha, prng);
        s += prop[k][l];
      }
      for (int l = 0; l < n_labels; ++l) prop[k][l] /= s;
    }
    // each label's samples split across clients proportional to their weight
    for (int l = 0; l < n_labels; ++l) {
      std::vector<double> w(m);
      for (std::size_t k = 0; k < m; ++k) w[k] = prop[k][l];
      const auto counts = detail::largest_remainder(by_label[l].size(), w);
      std::size_t pos = 0;
      for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < counts[k]; ++i) assigned[k].push_back(by_label[l][pos++]);
      }
    }
  }

  // enforce the per-client floor by uniform transfer from clients above it
  std::vector<std::size_t> topped(m, 0);
  for (std::size_t k = 0; k < m; ++k) {
    while (assigned[k].size() < spec.min_samples) {
      std::size_t surplus = 0;
      for (std::size_t j = 0; j < m; ++j) {
        if (assigned[j].size() > spec.min_samples) surplus += assigned[j].size() - spec.min_samples;
      }
      if (surplus == 0) throw ConfigError("partition: cannot satisfy the min-sample floor");
      std::uint64_t pick = prng.next_below(surplus);
      for (std::size_t j = 0; j < m; ++j) {
        if (assigned[j].size() <= spec.min_samples) continue;
        const std::uint64_t here = assigned[j].size() - spec.min_samples;
        if (pick < here) {
          const std::size_t slot = static_cast<std::size_t>(
              prng.next_below(assigned[j].size()));
          assigned[k].push_back(assigned[j][slot]);
          assigned[j].erase(assigned[j].begin() + static_cast<std::ptrdiff_t>(slot));
          ++topped[k];
          break;
        }
        pick -= here;
      }
    }
  }

  std::vector<ClientDataset> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    out.push_back(
        detail::split_client(pool, std::move(assigned[k]), spec.split_ratio, seed, k, domain));
    out.back().topped_up = topped[k];
  }
  return out;
}

/// Remaps labels by y -> (y+1) mod n_labels on both splits of
/// ceil(flip_fraction * M) clients drawn uniformly without replacement.
inline void flip_labels(std::vector<ClientDataset>& clients, double flip_fraction, int n_labels,
                        std::uint64_t seed, std::uint64_t domain = 0) {
  if (flip_fraction < 0.0 || flip_fraction > 1.0) {
    throw ConfigError("flip_labels: fraction must lie in [0,1]");
  }
  const std::size_t m = clients.size();
  const std::size_t n_flip =
      static_cast<std::size_t>(std::ceil(flip_fraction * static_cast<double>(m)));
  if (n_flip == 0) return;
  RngStream rng(seed, {0, domain, Purpose::LabelFlip});
  const auto chosen = sample_without_replacement(m, n_flip, rng);
  for (std::size_t k : chosen) {
    for (SampleSet* s : {&clients[k].train, &clients[k].test}) {
      for (double& y : s->targets) {
        y = static_cast<double>((static_cast<int>(y) + 1) % n_labels);
      }
    }
  }
}

// ---- IDX ingestion ---------------------------------------------------------

namespace detail {
inline std::uint32_t read_be32(std::ifstream& f, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (!f) {
    throw IngestError(path + ": truncated at offset " + std::to_string(offset));
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}
}  // namespace detail

/// Reads an IDX image/label pair (big-endian, magics 2051/2049) into a pool;
/// pixels are scaled to [0,1].
inline SampleSet load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IngestError(images_path + ": cannot open");
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw IngestError(labels_path + ": cannot open");

  const std::uint32_t img_magic = detail::read_be32(imgs, images_path, 0);
  if (img_magic != 0x00000803u) {
    throw IngestError(images_path + ": bad magic at offset 0 (expected 2051, got " +
                      std::to_string(img_magic) + ")");
  }
  const std::uint32_t n_img = detail::read_be32(imgs, images_path, 4);
  const std::uint32_t rows = detail::read_be32(imgs, images_path, 8);
  const std::uint32_t cols = detail::read_be32(imgs, images_path, 12);

  const std::uint32_t lab_magic = detail::read_be32(labs, labels_path, 0);
  if (lab_magic != 0x00000801u) {
    throw IngestError(labels_path + ": bad magic at offset 0 (expected 2049, got " +
                      std::to_string(lab_magic) + ")");
  }
  const std::uint32_t n_lab = detail::read_be32(labs, labels_path, 4);
  if (n_img != n_lab) {
    throw IngestError(images_path + ": image count " + std::to_string(n_img) +
                      " does not match label count " + std::to_string(n_lab));
  }

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  SampleSet pool;
  pool.dim = dim;
  pool.n = n_img;
  pool.features.resize(static_cast<std::size_t>(n_img) * dim);
  pool.targets.resize(n_img);
  pool.ids.resize(n_img);
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!imgs) {
      throw IngestError(images_path + ": truncated at offset " +
                        std::to_string(16 + static_cast<std::size_t>(i) * dim));
    }
    double* x = pool.features.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t j = 0; j < dim; ++j) x[j] = buf[j] / 255.0;
    const int c = labs.get();
    if (c == std::ifstream::traits_type::eof()) {
      throw IngestError(labels_path + ": truncated at offset " + std::to_string(8 + i));
    }
    pool.targets[i] = static_cast<double>(c);
    pool.ids[i] = i;
  }
  return pool;
}

}  // namespace maxfl
