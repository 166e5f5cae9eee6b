#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "blcf/descriptors.hpp"
#include "blcf/tensor_io.hpp"

namespace blcf {

enum class SearchMode { exact, approximate };

struct KMeansOptions {
  std::size_t k = 0;
  std::size_t max_iters = 25;
  std::uint64_t seed = 0;
  SearchMode mode = SearchMode::exact;
  /// Coarse cells visited per lookup in approximate mode; 0 picks a default.
  std::size_t probes = 0;
};

/// Visual vocabulary: K centroids of dimension D.
struct Vocabulary {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<float> centroids;  // k x dim, row-major
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0;
  double final_objective = 0.0;
  /// Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  std::string config_hash;

  std::span<const float> centroid(std::size_t i) const {
    return {centroids.data() + i * dim, dim};
  }
};

/// k-means++ seeded Lloyd iterations. Stops after max_iters update steps or
/// when no assignment changes. Empty clusters are re-seeded at the point
/// farthest from its centroid.
Vocabulary train_vocabulary(const DescriptorSet& features, const KMeansOptions& options);

/// Index of the closest centroid; ties go to the lowest index.
std::uint32_t nearest_word(std::span<const float> descriptor, const Vocabulary& vocab);

/// Sum of squared distances from each feature to its nearest centroid.
double kmeans_objective(const DescriptorSet& features, const Vocabulary& vocab);

/// Coarse quantization of the centroids for multi-probe nearest-word search.
/// The nearest `probes` cells are always scanned; further cells are scanned
/// only when their radius bound cannot rule them out.
class CentroidPartition {
 public:
  CentroidPartition(const Vocabulary& vocab, std::uint64_t seed, std::size_t probes = 0);

  std::uint32_t nearest(std::span<const float> descriptor) const;
  std::size_t cell_count() const { return cells_.size(); }
  std::size_t probes() const { return probes_; }

 private:
  const Vocabulary* vocab_;
  std::size_t probes_;
  std::vector<float> coarse_;  // cell_count x dim
  std::vector<std::vector<std::uint32_t>> cells_;
  std::vector<double> radius_;  // farthest member centroid per cell
};

/// Fraction of features whose partition lookup agrees with exact search.
double approximate_agreement(const DescriptorSet& features, const Vocabulary& vocab,
                             const CentroidPartition& partition);

/// M x N grid of word ids.
struct AssignmentMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> words;

  std::uint32_t at(std::size_t i, std::size_t j) const { return words[i * cols + j]; }
  std::uint32_t& at(std::size_t i, std::size_t j) { return words[i * cols + j]; }
  bool operator==(const AssignmentMap&) const = default;
};

/// Nearest-word quantization of every cell of a postprocessed M x N x D map.
AssignmentMap assign_map(const Tensor& feature_map, const Vocabulary& vocab);

/// Corner-aligned bilinear interpolation of an M x N x D map to 2M x 2N.
Tensor upsample_query(const Tensor& feature_map);

/// Persists as <prefix>.blcf (K x D) and <prefix>.json.
void save_vocabulary(const std::filesystem::path& prefix, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& prefix);

}  // namespace blcf
