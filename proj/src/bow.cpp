#include "blcf/bow.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "blcf/error.hpp"

namespace blcf {

SparseBow make_bow(std::string image_id, std::size_t k, std::vector<BowEntry> raw) {
  std::stable_sort(raw.begin(), raw.end(),
                   [](const BowEntry& a, const BowEntry& b) { return a.word < b.word; });
  std::vector<std::pair<std::uint32_t, double>> merged;
  for (const auto& e : raw) {
    if (e.word >= k) fail("word id " + std::to_string(e.word) + " out of range for K=" + std::to_string(k));
    if (!merged.empty() && merged.back().first == e.word) {
      merged.back().second += e.weight;
    } else {
      merged.emplace_back(e.word, e.weight);
    }
  }
  double norm = 0.0;
  for (const auto& [w, v] : merged) {
    if (v > 0.0) norm += v * v;
  }
  norm = std::sqrt(norm);

  SparseBow bow;
  bow.image_id = std::move(image_id);
  bow.k = k;
  for (const auto& [w, v] : merged) {
    if (!(v > 0.0)) continue;
    const auto weight = static_cast<float>(v / norm);
    if (weight > 0.0f) bow.entries.push_back({w, weight});
  }
  return bow;
}

void validate_bow(const SparseBow& bow) {
  double norm = 0.0;
  for (std::size_t i = 0; i < bow.entries.size(); ++i) {
    const auto& e = bow.entries[i];
    if (e.word >= bow.k) fail(bow.image_id + ": word id out of range");
    if (i > 0 && bow.entries[i - 1].word >= e.word) fail(bow.image_id + ": words not strictly increasing");
    if (!(e.weight > 0.0f) || !std::isfinite(e.weight)) fail(bow.image_id + ": non-positive weight");
    norm += static_cast<double>(e.weight) * e.weight;
  }
  if (!bow.entries.empty() && std::abs(std::sqrt(norm) - 1.0) > 1e-5) {
    fail(bow.image_id + ": vector is not unit-norm");
  }
}

void validate_region(const QueryRegion& r, std::size_t width, std::size_t height) {
  const auto w = static_cast<double>(width);
  const auto h = static_cast<double>(height);
  if (!(r.x_min >= 0.0 && r.x_min < r.x_max && r.x_max <= w && r.y_min >= 0.0 &&
        r.y_min < r.y_max && r.y_max <= h)) {
    fail("query region outside the image or empty");
  }
}

CellRange map_region(const QueryRegion& region, std::size_t width, std::size_t height,
                     std::size_t rows, std::size_t cols) {
  if (width == 0 || height == 0 || rows == 0 || cols == 0) fail("map_region: empty image or grid");
  auto span = [](double lo, double hi, std::size_t extent, std::size_t cells) {
    const double scale = static_cast<double>(cells) / static_cast<double>(extent);
    const double max_cell = static_cast<double>(cells);
    auto b = static_cast<std::size_t>(std::clamp(std::floor(lo * scale), 0.0, max_cell));
    auto e = static_cast<std::size_t>(std::clamp(std::ceil(hi * scale), 0.0, max_cell));
    if (e <= b) {
      b = std::min(b, cells - 1);
      e = b + 1;
    }
    return std::pair{b, e};
  };
  const auto [rb, re] = span(region.y_min, region.y_max, height, rows);
  const auto [cb, ce] = span(region.x_min, region.x_max, width, cols);
  return {rb, re, cb, ce};
}

SparseBow encode(const AssignmentMap& assignment, const WeightMap& weights, std::size_t k,
                 const CellRange& range, std::string image_id) {
  if (assignment.rows != weights.rows || assignment.cols != weights.cols) {
    fail("assignment map and weight map shapes differ");
  }
  if (range.row_end > assignment.rows || range.col_end > assignment.cols) {
    fail("cell range exceeds the assignment map");
  }
  std::vector<BowEntry> raw;
  raw.reserve((range.row_end - range.row_begin) * (range.col_end - range.col_begin));
  for (std::size_t i = range.row_begin; i < range.row_end; ++i) {
    for (std::size_t j = range.col_begin; j < range.col_end; ++j) {
      const float w = weights.at(i, j);
      if (w > 0.0f) raw.push_back({assignment.at(i, j), w});
    }
  }
  return make_bow(std::move(image_id), k, std::move(raw));
}

SparseBow encode(const AssignmentMap& assignment, const WeightMap& weights, std::size_t k,
                 std::string image_id) {
  return encode(assignment, weights, k, CellRange{0, assignment.rows, 0, assignment.cols},
                std::move(image_id));
}

DenseDescriptor sum_pool(const Tensor& raw_feature_map, const WeightMap& weights,
                         std::string image_id) {
  if (raw_feature_map.ndim() != 3) fail("sum_pool expects an M x N x D tensor");
  if (raw_feature_map.rows() != weights.rows || raw_feature_map.cols() != weights.cols) {
    fail("feature map and weight map shapes differ");
  }
  const std::size_t d = raw_feature_map.channels();
  std::vector<double> acc(d, 0.0);
  for (std::size_t i = 0; i < weights.rows; ++i) {
    for (std::size_t j = 0; j < weights.cols; ++j) {
      const double w = weights.at(i, j);
      if (w == 0.0) continue;
      auto x = raw_feature_map.cell(i, j);
      for (std::size_t t = 0; t < d; ++t) acc[t] += w * x[t];
    }
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  DenseDescriptor out{std::move(image_id), std::vector<float>(d, 0.0f)};
  if (norm > 0.0) {
    for (std::size_t t = 0; t < d; ++t) out.values[t] = static_cast<float>(acc[t] / norm);
  }
  return out;
}

Encoder::Encoder(const PcaModel& pca, const Vocabulary& vocab, WeightingScheme scheme)
    : pca_(&pca), vocab_(&vocab), scheme_(scheme) {
  if (pca.out_dim != vocab.dim) {
    fail("PCA output dimension " + std::to_string(pca.out_dim) +
         " does not match vocabulary dimension " + std::to_string(vocab.dim));
  }
}

WeightMap Encoder::weights_for(const Tensor& raw_grid_map, const ImageMeta& meta,
                               const Tensor* saliency) const {
  WeightingContext ctx;
  ctx.rows = raw_grid_map.rows();
  ctx.cols = raw_grid_map.cols();
  ctx.raw_feature_map = &raw_grid_map;
  ctx.image_width = meta.width;
  ctx.image_height = meta.height;
  ctx.saliency_path = meta.saliency_path;
  ctx.image_path = meta.image_path;
  ctx.saliency = saliency;
  return make_weights(scheme_, ctx);
}

SparseBow Encoder::encode_image(const Tensor& raw_feature_map, const ImageMeta& meta,
                                const Tensor* saliency) const {
  const AssignmentMap words = assign_map(postprocess_map(raw_feature_map, *pca_), *vocab_);
  return encode(words, weights_for(raw_feature_map, meta, saliency), vocab_->k, meta.image_id);
}

SparseBow Encoder::encode_query(const Tensor& raw_feature_map, const ImageMeta& meta,
                                const std::optional<QueryRegion>& region,
                                const Tensor* saliency) const {
  const Tensor upsampled = upsample_query(raw_feature_map);
  const AssignmentMap words = assign_map(postprocess_map(upsampled, *pca_), *vocab_);
  const WeightMap weights = weights_for(upsampled, meta, saliency);
  CellRange range{0, words.rows, 0, words.cols};
  if (region) {
    validate_region(*region, meta.width, meta.height);
    range = map_region(*region, meta.width, meta.height, words.rows, words.cols);
  }
  return encode(words, weights, vocab_->k, range, meta.image_id);
}

DenseDescriptor Encoder::sum_pool_image(const Tensor& raw_feature_map, const ImageMeta& meta,
                                        const Tensor* saliency) const {
  return sum_pool(raw_feature_map, weights_for(raw_feature_map, meta, saliency), meta.image_id);
}

std::string bow_to_json_line(const SparseBow& bow) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : bow.entries) entries.push_back({e.word, e.weight});
  return nlohmann::json{{"image_id", bow.image_id}, {"entries", entries}}.dump();
}

}  // namespace blcf
