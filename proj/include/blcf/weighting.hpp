#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blcf/tensor_io.hpp"

namespace blcf {

/// Spatial weights on the assignment grid, values in [0,1].
struct WeightMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  float& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  bool operator==(const WeightMap&) const = default;
};

WeightMap uniform_weights(std::size_t rows, std::size_t cols);

/// Center prior with per-axis sigma = sigma_frac * axis length.
WeightMap gaussian_weights(std::size_t rows, std::size_t cols, double sigma_frac);

/// Per-location descriptor norm divided by the map maximum.
WeightMap l2norm_weights(const Tensor& raw_feature_map);

/// Block max-pooling of a full-resolution saliency map onto a rows x cols
/// grid (ceil-sized blocks, trailing partial blocks kept), then divided by
/// the maximum. An all-zero result falls back to uniform weights.
WeightMap downsample_saliency(const Tensor& saliency, std::size_t rows, std::size_t cols);

struct BmsOptions {
  int step = 8;
  int dilation_width = 7;
  /// Gaussian blur sigma in pixels; negative means 0.02 * max(H, W).
  double blur_sigma = -1.0;
  /// Per-channel mean/std whitening before thresholding; false uses raw RGB.
  bool whiten = true;
};

/// Boolean Map Saliency: thresholded channel maps, surrounded-region
/// attention, dilation and L2 normalization, mean, blur, max-normalize.
/// Returns an H x W map in [0,1]; a constant image gives all ones.
Tensor bms_saliency(const RgbImage& image, const BmsOptions& options = {});

enum class WeightingKind { none, gaussian, l2norm, saliency_file, bms };

WeightingKind parse_weighting_kind(std::string_view name);
std::string to_string(WeightingKind kind);

struct WeightingScheme {
  WeightingKind kind = WeightingKind::none;
  double sigma_frac = 1.0 / 3.0;
  BmsOptions bms;
};

/// Inputs a scheme may need. Only the fields the chosen kind uses must be set.
struct WeightingContext {
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Raw (un-postprocessed) features on the same rows x cols grid.
  const Tensor* raw_feature_map = nullptr;
  /// Original image size, for reading saliency images.
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::optional<std::filesystem::path> saliency_path;
  std::optional<std::filesystem::path> image_path;
  /// Pre-loaded full-resolution saliency; takes precedence over the path.
  const Tensor* saliency = nullptr;
};

WeightMap make_weights(const WeightingScheme& scheme, const WeightingContext& context);

}  // namespace blcf
