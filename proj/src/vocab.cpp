#include "blcf/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "blcf/error.hpp"
#include "blcf/parallel.hpp"

namespace blcf {

namespace {

double squared_distance(std::span<const float> a, const float* b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - b[k];
    s += d * d;
  }
  return s;
}

struct Nearest {
  std::uint32_t word;
  double distance;
};

Nearest exact_nearest(std::span<const float> x, const float* centroids, std::size_t k) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  const std::size_t d = x.size();
  for (std::size_t c = 0; c < k; ++c) {
    const double dist = squared_distance(x, centroids + c * d);
    if (dist < best.distance) best = {static_cast<std::uint32_t>(c), dist};
  }
  return best;
}

void check_finite(const DescriptorSet& features) {
  if (!std::all_of(features.values.begin(), features.values.end(),
                   [](float v) { return std::isfinite(v); })) {
    fail("non-finite values in k-means input");
  }
}

/// k-means++ seeding: first centre uniform, then proportional to D^2.
std::vector<float> seed_centroids(const DescriptorSet& x, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = x.size();
  const std::size_t d = x.dim;
  std::vector<float> centroids;
  centroids.reserve(k * d);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto add = [&](std::size_t i) {
    auto r = x.row(i);
    centroids.insert(centroids.end(), r.begin(), r.end());
  };
  add(pick(rng));

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x.row(i), centroids.data());
  while (centroids.size() < k * d) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double run = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += d2[i];
        if (run > target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    add(chosen);
    const float* c = centroids.data() + centroids.size() - d;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(x.row(i), c));
  }
  return centroids;
}

std::size_t default_probes(std::size_t cells) {
  return std::max<std::size_t>(2, (cells + 3) / 4);
}

}  // namespace

std::uint32_t nearest_word(std::span<const float> descriptor, const Vocabulary& vocab) {
  if (descriptor.size() != vocab.dim) {
    fail("descriptor dimension " + std::to_string(descriptor.size()) +
         " does not match vocabulary dimension " + std::to_string(vocab.dim));
  }
  return exact_nearest(descriptor, vocab.centroids.data(), vocab.k).word;
}

double kmeans_objective(const DescriptorSet& features, const Vocabulary& vocab) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    total += exact_nearest(features.row(i), vocab.centroids.data(), vocab.k).distance;
  }
  return total;
}

CentroidPartition::CentroidPartition(const Vocabulary& vocab, std::uint64_t seed,
                                     std::size_t probes)
    : vocab_(&vocab) {
  const std::size_t k = vocab.k;
  const std::size_t d = vocab.dim;
  const auto cell_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(k)))));
  probes_ = std::min(cell_count, probes == 0 ? default_probes(cell_count) : probes);

  // Small k-means over the centroids themselves.
  DescriptorSet points(d, vocab.centroids);
  std::mt19937_64 rng(seed);
  coarse_ = seed_centroids(points, cell_count, rng);
  std::vector<std::uint32_t> owner(k, 0);
  for (int iter = 0; iter < 8; ++iter) {
    for (std::size_t c = 0; c < k; ++c) {
      owner[c] = exact_nearest(points.row(c), coarse_.data(), cell_count).word;
    }
    std::vector<double> sums(cell_count * d, 0.0);
    std::vector<std::size_t> counts(cell_count, 0);
    for (std::size_t c = 0; c < k; ++c) {
      auto r = points.row(c);
      for (std::size_t t = 0; t < d; ++t) sums[owner[c] * d + t] += r[t];
      ++counts[owner[c]];
    }
    for (std::size_t cell = 0; cell < cell_count; ++cell) {
      if (counts[cell] == 0) continue;
      for (std::size_t t = 0; t < d; ++t) {
        coarse_[cell * d + t] = static_cast<float>(sums[cell * d + t] / counts[cell]);
      }
    }
  }
  cells_.assign(cell_count, {});
  for (std::size_t c = 0; c < k; ++c) {
    owner[c] = exact_nearest(points.row(c), coarse_.data(), cell_count).word;
    cells_[owner[c]].push_back(static_cast<std::uint32_t>(c));
  }
  radius_.assign(cell_count, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    const double r = std::sqrt(squared_distance(points.row(c), coarse_.data() + owner[c] * d));
    radius_[owner[c]] = std::max(radius_[owner[c]], r);
  }
}

std::uint32_t CentroidPartition::nearest(std::span<const float> descriptor) const {
  const std::size_t d = vocab_->dim;
  const std::size_t cell_count = cells_.size();
  std::vector<std::pair<double, std::uint32_t>> order(cell_count);
  for (std::size_t c = 0; c < cell_count; ++c) {
    order[c] = {squared_distance(descriptor, coarse_.data() + c * d),
                static_cast<std::uint32_t>(c)};
  }
  std::sort(order.begin(), order.end());
  Nearest best{std::numeric_limits<std::uint32_t>::max(),
               std::numeric_limits<double>::infinity()};
  for (std::size_t p = 0; p < cell_count; ++p) {
    if (p >= probes_) {
      // Past the probe budget, visit a cell only if it could hold a closer word.
      const double bound = std::sqrt(order[p].first) - radius_[order[p].second];
      if (bound > 0.0 && bound * bound > best.distance * (1.0 + 1e-9)) continue;
    }
    for (std::uint32_t word : cells_[order[p].second]) {
      const double dist = squared_distance(descriptor, vocab_->centroids.data() + word * d);
      if (dist < best.distance || (dist == best.distance && word < best.word)) {
        best = {word, dist};
      }
    }
  }
  return best.word;
}

double approximate_agreement(const DescriptorSet& features, const Vocabulary& vocab,
                             const CentroidPartition& partition) {
  if (features.empty()) return 1.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (partition.nearest(features.row(i)) == nearest_word(features.row(i), vocab)) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(features.size());
}

Vocabulary train_vocabulary(const DescriptorSet& features, const KMeansOptions& options) {
  const std::size_t k = options.k;
  const std::size_t n = features.size();
  const std::size_t d = features.dim;
  if (k == 0) fail("vocabulary size K must be positive");
  if (n < k) {
    fail("too few samples for k-means: " + std::to_string(n) + " < K=" + std::to_string(k));
  }
  check_finite(features);

  std::mt19937_64 rng(options.seed);
  Vocabulary vocab;
  vocab.k = k;
  vocab.dim = d;
  vocab.seed = options.seed;
  vocab.centroids = seed_centroids(features, k, rng);

  std::vector<std::uint32_t> assignment(n);
  std::vector<double> distance(n);

  auto assign_exact = [&](std::vector<std::uint32_t>& out, std::vector<double>& dist) {
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto best = exact_nearest(features.row(i), vocab.centroids.data(), k);
        out[i] = best.word;
        dist[i] = best.distance;
      }
    });
  };

  // Approximate lookups never replace the previous word with a worse one, so
  // the objective stays monotone.
  auto assign_approx = [&](std::vector<std::uint32_t>& out, std::vector<double>& dist,
                           std::uint64_t round_seed) {
    const CentroidPartition partition(vocab, round_seed, options.probes);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto x = features.row(i);
        const std::uint32_t prev = out[i];
        const double prev_dist = squared_distance(x, vocab.centroids.data() + prev * d);
        const std::uint32_t cand = partition.nearest(x);
        const double cand_dist = squared_distance(x, vocab.centroids.data() + cand * d);
        if (cand_dist < prev_dist || (cand_dist == prev_dist && cand < prev)) {
          out[i] = cand;
          dist[i] = cand_dist;
        } else {
          dist[i] = prev_dist;
        }
      }
    });
  };

  assign_exact(assignment, distance);
  vocab.objective_history.push_back(std::accumulate(distance.begin(), distance.end(), 0.0));

  std::vector<std::uint32_t> next(n);
  std::vector<double> next_distance(n);
  for (std::size_t iter = 1; iter <= options.max_iters; ++iter) {
    // Update: per-cluster means summed in point order.
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = features.row(i);
      double* s = sums.data() + assignment[i] * d;
      for (std::size_t t = 0; t < d; ++t) s[t] += r[t];
      ++counts[assignment[i]];
    }
    std::vector<std::uint32_t> empty;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        empty.push_back(static_cast<std::uint32_t>(c));
        continue;
      }
      for (std::size_t t = 0; t < d; ++t) {
        vocab.centroids[c * d + t] = static_cast<float>(sums[c * d + t] / counts[c]);
      }
    }

    next = assignment;
    if (!empty.empty()) {
      // Farthest points from their (updated) centroids re-seed empty clusters.
      std::vector<double> far(n);
      for (std::size_t i = 0; i < n; ++i) {
        far[i] = squared_distance(features.row(i), vocab.centroids.data() + assignment[i] * d);
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return far[a] > far[b]; });
      for (std::size_t e = 0; e < empty.size(); ++e) {
        const std::size_t donor = order[e];
        auto r = features.row(donor);
        std::copy(r.begin(), r.end(), vocab.centroids.begin() + empty[e] * d);
        next[donor] = empty[e];
      }
    }

    if (options.mode == SearchMode::exact) {
      assign_exact(next, next_distance);
    } else {
      assign_approx(next, next_distance, options.seed ^ (0x9E3779B97F4A7C15ull * iter));
    }
    vocab.iterations_run = iter;
    vocab.objective_history.push_back(
        std::accumulate(next_distance.begin(), next_distance.end(), 0.0));
    const bool changed = next != assignment;
    assignment.swap(next);
    distance.swap(next_distance);
    if (!changed) break;
  }
  vocab.final_objective = vocab.objective_history.back();
  return vocab;
}

AssignmentMap assign_map(const Tensor& feature_map, const Vocabulary& vocab) {
  if (feature_map.ndim() != 3) fail("assign_map expects an M x N x D tensor");
  if (feature_map.channels() != vocab.dim) {
    fail("feature map depth " + std::to_string(feature_map.channels()) +
         " does not match vocabulary dimension " + std::to_string(vocab.dim));
  }
  AssignmentMap out;
  out.rows = feature_map.rows();
  out.cols = feature_map.cols();
  out.words.resize(out.rows * out.cols);
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) {
      out.at(i, j) = exact_nearest(feature_map.cell(i, j), vocab.centroids.data(), vocab.k).word;
    }
  }
  return out;
}

Tensor upsample_query(const Tensor& feature_map) {
  if (feature_map.ndim() != 3) fail("upsample_query expects an M x N x D tensor");
  const std::size_t m = feature_map.rows();
  const std::size_t n = feature_map.cols();
  const std::size_t d = feature_map.channels();
  const std::size_t om = 2 * m;
  const std::size_t on = 2 * n;

  // Output index o samples source position o * (in - 1) / (out - 1).
  auto coord = [](std::size_t o, std::size_t in, std::size_t out) {
    if (in == 1) return std::tuple<std::size_t, std::size_t, double>{0, 0, 0.0};
    const double s = static_cast<double>(o) * static_cast<double>(in - 1) /
                     static_cast<double>(out - 1);
    auto lo = std::min(static_cast<std::size_t>(s), in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    return std::tuple<std::size_t, std::size_t, double>{lo, hi, s - static_cast<double>(lo)};
  };

  Tensor out({static_cast<std::uint32_t>(om), static_cast<std::uint32_t>(on),
              static_cast<std::uint32_t>(d)});
  for (std::size_t i = 0; i < om; ++i) {
    const auto [y0, y1, fy] = coord(i, m, om);
    for (std::size_t j = 0; j < on; ++j) {
      const auto [x0, x1, fx] = coord(j, n, on);
      auto a = feature_map.cell(y0, x0);
      auto b = feature_map.cell(y0, x1);
      auto c = feature_map.cell(y1, x0);
      auto e = feature_map.cell(y1, x1);
      auto dst = out.cell(i, j);
      for (std::size_t t = 0; t < d; ++t) {
        const double top = a[t] + (b[t] - static_cast<double>(a[t])) * fx;
        const double bottom = c[t] + (e[t] - static_cast<double>(c[t])) * fx;
        dst[t] = static_cast<float>(top + (bottom - top) * fy);
      }
    }
  }
  return out;
}

void save_vocabulary(const std::filesystem::path& prefix, const Vocabulary& vocab) {
  write_tensor(prefix.string() + ".blcf",
               Tensor({static_cast<std::uint32_t>(vocab.k), static_cast<std::uint32_t>(vocab.dim)},
                      vocab.centroids));
  nlohmann::json j{{"K", vocab.k},
                   {"D", vocab.dim},
                   {"seed", vocab.seed},
                   {"iterations_run", vocab.iterations_run},
                   {"final_objective", vocab.final_objective},
                   {"objective_history", vocab.objective_history},
                   {"config_hash", vocab.config_hash}};
  const std::filesystem::path path = prefix.string() + ".json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail_io("write failed: " + path.string());
}

Vocabulary load_vocabulary(const std::filesystem::path& prefix) {
  const std::filesystem::path path = prefix.string() + ".json";
  std::ifstream in(path);
  if (!in) fail_io("cannot open vocabulary sidecar: " + path.string());
  Vocabulary vocab;
  try {
    const auto j = nlohmann::json::parse(in);
    vocab.k = j.at("K").get<std::size_t>();
    vocab.dim = j.at("D").get<std::size_t>();
    vocab.seed = j.at("seed").get<std::uint64_t>();
    vocab.iterations_run = j.at("iterations_run").get<std::size_t>();
    vocab.final_objective = j.at("final_objective").get<double>();
    if (j.contains("objective_history")) {
      vocab.objective_history = j["objective_history"].get<std::vector<double>>();
    }
    if (j.contains("config_hash")) vocab.config_hash = j["config_hash"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(path.string() + ": " + e.what());
  }
  Tensor centroids = read_tensor(prefix.string() + ".blcf");
  if (centroids.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(vocab.k),
                                                   static_cast<std::uint32_t>(vocab.dim)}) {
    fail("vocabulary tensor does not match sidecar dimensions: " + prefix.string());
  }
  vocab.centroids = std::move(centroids.data);
  return vocab;
}

}  // namespace blcf
