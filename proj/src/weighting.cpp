#include "blcf/weighting.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "blcf/error.hpp"

namespace blcf {

namespace {

/// Divides by the maximum; an all-zero (or empty) map becomes uniform.
void normalize_by_max(WeightMap& w) {
  const float peak = w.values.empty() ? 0.0f : *std::max_element(w.values.begin(), w.values.end());
  if (!(peak > 0.0f)) {
    std::fill(w.values.begin(), w.values.end(), 1.0f);
    return;
  }
  for (float& v : w.values) v = std::clamp(v / peak, 0.0f, 1.0f);
}

void require_grid(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) fail("weight grid must be at least 1 x 1");
}

// --- BMS helpers -----------------------------------------------------------

using Plane = std::vector<float>;

/// Marks foreground pixels not 4-connected to the image border.
void surrounded_regions(const std::vector<std::uint8_t>& fg, std::size_t h, std::size_t w,
                        std::vector<std::uint8_t>& attention, std::vector<std::uint32_t>& stack) {
  attention = fg;
  stack.clear();
  auto seed = [&](std::size_t y, std::size_t x) {
    const std::size_t idx = y * w + x;
    if (attention[idx]) {
      attention[idx] = 0;
      stack.push_back(static_cast<std::uint32_t>(idx));
    }
  };
  for (std::size_t x = 0; x < w; ++x) {
    seed(0, x);
    seed(h - 1, x);
  }
  for (std::size_t y = 0; y < h; ++y) {
    seed(y, 0);
    seed(y, w - 1);
  }
  while (!stack.empty()) {
    const std::size_t idx = stack.back();
    stack.pop_back();
    const std::size_t y = idx / w;
    const std::size_t x = idx % w;
    if (y > 0) seed(y - 1, x);
    if (y + 1 < h) seed(y + 1, x);
    if (x > 0) seed(y, x - 1);
    if (x + 1 < w) seed(y, x + 1);
  }
}

/// Square-kernel binary dilation, separable.
void dilate(std::vector<std::uint8_t>& map, std::size_t h, std::size_t w, int width) {
  if (width <= 1) return;
  const auto before = static_cast<std::ptrdiff_t>(width / 2);
  const auto after = static_cast<std::ptrdiff_t>(width - 1 - width / 2);
  std::vector<std::uint8_t> tmp(map.size());
  const auto sh = static_cast<std::ptrdiff_t>(h);
  const auto sw = static_cast<std::ptrdiff_t>(w);
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      std::uint8_t v = 0;
      for (std::ptrdiff_t t = std::max<std::ptrdiff_t>(0, x - after);
           t <= std::min(sw - 1, x + before) && !v; ++t) {
        v = map[y * sw + t];
      }
      tmp[y * sw + x] = v;
    }
  }
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      std::uint8_t v = 0;
      for (std::ptrdiff_t t = std::max<std::ptrdiff_t>(0, y - after);
           t <= std::min(sh - 1, y + before) && !v; ++t) {
        v = tmp[t * sw + x];
      }
      map[y * sw + x] = v;
    }
  }
}

/// Separable Gaussian blur with replicated borders.
void gaussian_blur(std::vector<double>& img, std::size_t h, std::size_t w, double sigma) {
  if (!(sigma > 0.0)) return;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
    const double v = std::exp(-static_cast<double>(t * t) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(t + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  const auto sh = static_cast<std::ptrdiff_t>(h);
  const auto sw = static_cast<std::ptrdiff_t>(w);
  std::vector<double> tmp(img.size());
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        const auto xx = std::clamp<std::ptrdiff_t>(x + t, 0, sw - 1);
        acc += kernel[static_cast<std::size_t>(t + radius)] * img[y * sw + xx];
      }
      tmp[y * sw + x] = acc;
    }
  }
  for (std::ptrdiff_t y = 0; y < sh; ++y) {
    for (std::ptrdiff_t x = 0; x < sw; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        const auto yy = std::clamp<std::ptrdiff_t>(y + t, 0, sh - 1);
        acc += kernel[static_cast<std::size_t>(t + radius)] * tmp[yy * sw + x];
      }
      img[y * sw + x] = acc;
    }
  }
}

/// Channel planes on a 0..255 scale, optionally whitened per channel.
std::array<Plane, 3> channel_planes(const RgbImage& image, bool whiten) {
  const std::size_t count = image.width * image.height;
  std::array<Plane, 3> planes;
  for (std::size_t c = 0; c < 3; ++c) {
    Plane& p = planes[c];
    p.resize(count);
    for (std::size_t i = 0; i < count; ++i) p[i] = image.pixels[i * 3 + c];
    if (!whiten) continue;

    double mean = 0.0;
    for (float v : p) mean += v;
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (float v : p) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(count));
    if (sd == 0.0) {
      std::fill(p.begin(), p.end(), 0.0f);
      continue;
    }
    for (float& v : p) v = static_cast<float>((v - mean) / sd);
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    const float low = *lo;
    const float range = *hi - *lo;
    for (float& v : p) v = (v - low) / range * 255.0f;
  }
  return planes;
}

}  // namespace

WeightMap uniform_weights(std::size_t rows, std::size_t cols) {
  require_grid(rows, cols);
  return {rows, cols, std::vector<float>(rows * cols, 1.0f)};
}

WeightMap gaussian_weights(std::size_t rows, std::size_t cols, double sigma_frac) {
  require_grid(rows, cols);
  if (!(sigma_frac > 0.0)) fail("gaussian sigma fraction must be positive");
  const double si = sigma_frac * static_cast<double>(rows);
  const double sj = sigma_frac * static_cast<double>(cols);
  const double ci = (static_cast<double>(rows) - 1.0) / 2.0;
  const double cj = (static_cast<double>(cols) - 1.0) / 2.0;
  WeightMap w{rows, cols, std::vector<float>(rows * cols)};
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double di = static_cast<double>(i) - ci;
      const double dj = static_cast<double>(j) - cj;
      w.at(i, j) = static_cast<float>(
          std::exp(-(di * di / (2.0 * si * si) + dj * dj / (2.0 * sj * sj))));
    }
  }
  return w;
}

WeightMap l2norm_weights(const Tensor& raw_feature_map) {
  if (raw_feature_map.ndim() != 3) fail("l2norm weighting expects an M x N x D tensor");
  const std::size_t rows = raw_feature_map.rows();
  const std::size_t cols = raw_feature_map.cols();
  WeightMap w{rows, cols, std::vector<float>(rows * cols)};
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (float v : raw_feature_map.cell(i, j)) s += static_cast<double>(v) * v;
      w.at(i, j) = static_cast<float>(std::sqrt(s));
    }
  }
  normalize_by_max(w);
  return w;
}

WeightMap downsample_saliency(const Tensor& saliency, std::size_t rows, std::size_t cols) {
  require_grid(rows, cols);
  if (saliency.ndim() != 2) fail("saliency map must be 2-D");
  const std::size_t h = saliency.rows();
  const std::size_t w = saliency.cols();
  const std::size_t bh = (h + rows - 1) / rows;
  const std::size_t bw = (w + cols - 1) / cols;
  WeightMap out{rows, cols, std::vector<float>(rows * cols, 0.0f)};
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t y0 = std::min(h, i * bh);
    const std::size_t y1 = std::min(h, (i + 1) * bh);
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t x0 = std::min(w, j * bw);
      const std::size_t x1 = std::min(w, (j + 1) * bw);
      float peak = 0.0f;
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) peak = std::max(peak, saliency.at(y, x));
      }
      out.at(i, j) = peak;
    }
  }
  normalize_by_max(out);
  return out;
}

Tensor bms_saliency(const RgbImage& image, const BmsOptions& options) {
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  if (h == 0 || w == 0 || image.pixels.size() != h * w * 3) fail("invalid RGB image");
  if (options.step < 1 || options.step > 255) fail("BMS step must be in [1, 255]");
  if (options.dilation_width < 1) fail("BMS dilation width must be >= 1");
  const double sigma = options.blur_sigma < 0.0
                           ? 0.02 * static_cast<double>(std::max(h, w))
                           : options.blur_sigma;

  const auto planes = channel_planes(image, options.whiten);
  const std::size_t count = h * w;
  std::vector<double> mean(count, 0.0);
  std::size_t maps = 0;
  std::vector<std::uint8_t> fg(count);
  std::vector<std::uint8_t> attention;
  std::vector<std::uint32_t> stack;

  for (const Plane& plane : planes) {
    for (int theta = options.step; theta <= 255; theta += options.step) {
      for (int polarity = 0; polarity < 2; ++polarity) {
        for (std::size_t i = 0; i < count; ++i) {
          const bool above = plane[i] > static_cast<float>(theta);
          fg[i] = static_cast<std::uint8_t>(polarity == 0 ? above : !above);
        }
        ++maps;
        surrounded_regions(fg, h, w, attention, stack);
        dilate(attention, h, w, options.dilation_width);
        const auto on = static_cast<std::size_t>(std::count(attention.begin(), attention.end(), 1));
        if (on == 0) continue;
        const double inv_norm = 1.0 / std::sqrt(static_cast<double>(on));
        for (std::size_t i = 0; i < count; ++i) {
          if (attention[i]) mean[i] += inv_norm;
        }
      }
    }
  }
  if (maps > 0) {
    for (double& v : mean) v /= static_cast<double>(maps);
  }
  gaussian_blur(mean, h, w, sigma);

  const double peak = *std::max_element(mean.begin(), mean.end());
  Tensor out({static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)});
  for (std::size_t i = 0; i < count; ++i) {
    out.data[i] = peak > 0.0 ? static_cast<float>(std::clamp(mean[i] / peak, 0.0, 1.0)) : 1.0f;
  }
  return out;
}

WeightingKind parse_weighting_kind(std::string_view name) {
  if (name == "none") return WeightingKind::none;
  if (name == "gaussian") return WeightingKind::gaussian;
  if (name == "l2norm") return WeightingKind::l2norm;
  if (name == "saliency" || name == "saliency_file") return WeightingKind::saliency_file;
  if (name == "bms") return WeightingKind::bms;
  fail("unknown weighting scheme '" + std::string(name) + "'");
}

std::string to_string(WeightingKind kind) {
  switch (kind) {
    case WeightingKind::none: return "none";
    case WeightingKind::gaussian: return "gaussian";
    case WeightingKind::l2norm: return "l2norm";
    case WeightingKind::saliency_file: return "saliency";
    case WeightingKind::bms: return "bms";
  }
  return "unknown";
}

WeightMap make_weights(const WeightingScheme& scheme, const WeightingContext& ctx) {
  require_grid(ctx.rows, ctx.cols);
  switch (scheme.kind) {
    case WeightingKind::none:
      return uniform_weights(ctx.rows, ctx.cols);
    case WeightingKind::gaussian:
      return gaussian_weights(ctx.rows, ctx.cols, scheme.sigma_frac);
    case WeightingKind::l2norm: {
      if (ctx.raw_feature_map == nullptr) fail("l2norm weighting needs the raw feature map");
      if (ctx.raw_feature_map->ndim() != 3 || ctx.raw_feature_map->rows() != ctx.rows ||
          ctx.raw_feature_map->cols() != ctx.cols) {
        fail("l2norm weighting: feature map does not match the weight grid");
      }
      return l2norm_weights(*ctx.raw_feature_map);
    }
    case WeightingKind::saliency_file: {
      if (ctx.saliency != nullptr) return downsample_saliency(*ctx.saliency, ctx.rows, ctx.cols);
      if (!ctx.saliency_path) fail("saliency weighting requires a saliency_path for the image");
      const Tensor map = read_saliency(*ctx.saliency_path, ctx.image_width, ctx.image_height);
      return downsample_saliency(map, ctx.rows, ctx.cols);
    }
    case WeightingKind::bms: {
      if (!ctx.image_path) fail("bms weighting requires an image_path for the image");
      const Tensor map = bms_saliency(read_rgb_image(*ctx.image_path), scheme.bms);
      return downsample_saliency(map, ctx.rows, ctx.cols);
    }
  }
  fail("unhandled weighting scheme");
}

}  // namespace blcf
