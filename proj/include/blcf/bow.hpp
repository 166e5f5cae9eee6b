#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blcf/descriptors.hpp"
#include "blcf/manifest.hpp"
#include "blcf/tensor_io.hpp"
#include "blcf/vocab.hpp"
#include "blcf/weighting.hpp"

namespace blcf {

struct BowEntry {
  std::uint32_t word = 0;
  float weight = 0.0f;
  bool operator==(const BowEntry&) const = default;
};

/// L2-normalized sparse histogram over K visual words, entries sorted by word.
struct SparseBow {
  std::string image_id;
  std::size_t k = 0;
  std::vector<BowEntry> entries;

  std::size_t nnz() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  bool operator==(const SparseBow&) const = default;
};

/// Builds a normalized SparseBow from (word, weight) pairs in any order;
/// duplicate words are summed and non-positive totals dropped.
SparseBow make_bow(std::string image_id, std::size_t k, std::vector<BowEntry> raw);

/// Throws unless words are strictly increasing, below K, weights positive
/// and the vector unit-norm (or empty).
void validate_bow(const SparseBow& bow);

/// Half-open cell window [row_begin, row_end) x [col_begin, col_end).
struct CellRange {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  std::size_t col_begin = 0;
  std::size_t col_end = 0;
  bool operator==(const CellRange&) const = default;
};

/// Query bounding box in original-image pixels.
struct QueryRegion {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  bool operator==(const QueryRegion&) const = default;
};

/// Throws unless 0 <= x_min < x_max <= width and likewise for y.
void validate_region(const QueryRegion& region, std::size_t width, std::size_t height);

/// Maps a pixel box onto a rows x cols grid with floor/ceil over-coverage.
/// A window that clamps to nothing is expanded to the nearest single cell.
CellRange map_region(const QueryRegion& region, std::size_t width, std::size_t height,
                     std::size_t rows, std::size_t cols);

/// h_k = sum of weights of cells assigned word k, then L2-normalized.
SparseBow encode(const AssignmentMap& assignment, const WeightMap& weights, std::size_t k,
                 std::string image_id = {});

/// encode restricted to the cells inside `range`.
SparseBow encode(const AssignmentMap& assignment, const WeightMap& weights, std::size_t k,
                 const CellRange& range, std::string image_id = {});

/// Dense sum-pooled descriptor (baseline aggregation).
struct DenseDescriptor {
  std::string image_id;
  std::vector<float> values;
};

/// v = sum_ij weight(i,j) * x(i,j,:), L2-normalized (zero stays zero).
DenseDescriptor sum_pool(const Tensor& raw_feature_map, const WeightMap& weights,
                         std::string image_id = {});

/// Full feature-map to SparseBow pipeline under fixed models and weighting.
class Encoder {
 public:
  Encoder(const PcaModel& pca, const Vocabulary& vocab, WeightingScheme scheme);

  /// Database image: postprocess, assign, weight on the native grid, encode.
  SparseBow encode_image(const Tensor& raw_feature_map, const ImageMeta& meta,
                         const Tensor* saliency = nullptr) const;

  /// Query image: upsample to 2M x 2N, postprocess, assign, weight the full
  /// grid, then encode only the cells covered by `region` (all if absent).
  SparseBow encode_query(const Tensor& raw_feature_map, const ImageMeta& meta,
                         const std::optional<QueryRegion>& region,
                         const Tensor* saliency = nullptr) const;

  /// Sum-pooling baseline on the native grid under the same weighting.
  DenseDescriptor sum_pool_image(const Tensor& raw_feature_map, const ImageMeta& meta,
                                 const Tensor* saliency = nullptr) const;

  const PcaModel& pca() const { return *pca_; }
  const Vocabulary& vocab() const { return *vocab_; }
  const WeightingScheme& scheme() const { return scheme_; }

 private:
  WeightMap weights_for(const Tensor& raw_grid_map, const ImageMeta& meta,
                        const Tensor* saliency) const;

  const PcaModel* pca_;
  const Vocabulary* vocab_;
  WeightingScheme scheme_;
};

/// {"image_id": ..., "entries": [[word, weight], ...]}
std::string bow_to_json_line(const SparseBow& bow);

}  // namespace blcf
