#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "blcf/tensor_io.hpp"

namespace blcf {

/// Equal-length float vectors stored contiguously, one row per descriptor.
struct DescriptorSet {
  std::size_t dim = 0;
  std::vector<float> values;

  DescriptorSet() = default;
  explicit DescriptorSet(std::size_t d) : dim(d) {}
  DescriptorSet(std::size_t d, std::vector<float> v) : dim(d), values(std::move(v)) {}

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  bool empty() const { return size() == 0; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }
  void push_back(std::span<const float> v);
};

/// Euclidean norm, accumulated in double.
double l2_norm(std::span<const float> v);

/// Scales v to unit norm in place; leaves an all-zero vector untouched.
void l2_normalize(std::span<float> v);

inline constexpr double kDefaultPcaEpsilon = 1e-8;

/// PCA whitening model. Rows of `basis` are covariance eigenvectors scaled
/// by 1/sqrt(eigenvalue + epsilon), ordered by descending eigenvalue.
struct PcaModel {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  double epsilon = kDefaultPcaEpsilon;
  std::vector<float> mean;         // in_dim
  std::vector<float> basis;        // out_dim x in_dim, row-major
  std::vector<double> eigenvalues; // out_dim, descending
  std::string config_hash;
  std::uint64_t sample_seed = 0;  // seed of the descriptor sample it was fit on

  /// Identity model: zero mean, identity basis.
  static PcaModel identity(std::size_t dim);
};

/// Fits whitening PCA on already L2-normalized features by exact
/// eigendecomposition of the (population) covariance.
PcaModel fit_pca(const DescriptorSet& features, std::size_t out_dim,
                 double epsilon = kDefaultPcaEpsilon);

/// basis * (l2norm(x) - mean), without the final normalization.
std::vector<float> whiten(std::span<const float> descriptor, const PcaModel& pca);

/// L2-normalize, whiten, L2-normalize. A zero descriptor maps to zeros.
std::vector<float> postprocess(std::span<const float> descriptor, const PcaModel& pca);

/// postprocess at every location of an M x N x D map.
Tensor postprocess_map(const Tensor& feature_map, const PcaModel& pca);

/// Persists as <prefix>.mean.blcf, <prefix>.basis.blcf and <prefix>.json.
void save_pca(const std::filesystem::path& prefix, const PcaModel& pca);
PcaModel load_pca(const std::filesystem::path& prefix);

}  // namespace blcf
