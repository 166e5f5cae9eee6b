#include "blcf/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <tuple>
#include <numeric>

#include <opencv2/imgcodecs.hpp>

#include "blcf/error.hpp"
#include "blcf/little_endian.hpp"

namespace blcf {

namespace {

constexpr char kMagic[4] = {'B', 'L', 'C', 'F'};
constexpr std::size_t kPreambleBytes = 4 + 1 + 4;

}  // namespace

Tensor::Tensor(std::vector<std::uint32_t> shape, std::vector<float> values)
    : dims(std::move(shape)), data(std::move(values)) {}

Tensor::Tensor(std::vector<std::uint32_t> shape)
    : dims(std::move(shape)), data(shape_size(dims), 0.0f) {}

std::size_t shape_size(std::span<const std::uint32_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

void validate_tensor(const Tensor& t) {
  if (t.ndim() != 2 && t.ndim() != 3) {
    fail("tensor must have 2 or 3 dimensions, got " + std::to_string(t.ndim()));
  }
  for (auto d : t.dims) {
    if (d == 0) fail("tensor dimensions must be positive");
  }
  if (shape_size(t.dims) != t.data.size()) {
    fail("tensor shape does not match its data length");
  }
  if (!std::all_of(t.data.begin(), t.data.end(),
                   [](float v) { return std::isfinite(v); })) {
    fail("non-finite values");
  }
}

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  validate_tensor(tensor);
  std::vector<std::uint8_t> out;
  out.reserve(kPreambleBytes + 4 * tensor.ndim() + 4 * tensor.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kTensorFormatVersion);
  le::put_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
  for (auto d : tensor.dims) le::put_u32(out, d);
  for (float v : tensor.data) le::put_f32(out, v);
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail("not a BLCF tensor");
  }
  if (bytes.size() < kPreambleBytes) fail("truncated tensor");
  if (bytes[4] != kTensorFormatVersion) {
    fail("unsupported BLCF tensor version " + std::to_string(bytes[4]));
  }
  le::Reader in(bytes.subspan(5));
  const std::uint32_t ndim = in.u32();
  if (ndim != 2 && ndim != 3) {
    fail("tensor must have 2 or 3 dimensions, got " + std::to_string(ndim));
  }
  if (in.remaining() < 4u * ndim) fail("truncated tensor");
  Tensor t;
  t.dims.resize(ndim);
  for (auto& d : t.dims) d = in.u32();
  const std::size_t count = shape_size(t.dims);
  if (in.remaining() != 4 * count) fail("truncated tensor");
  t.data.resize(count);
  for (auto& v : t.data) v = in.f32();
  validate_tensor(t);
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  le::write_file(path, encode_tensor(tensor));
}

Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = le::read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

bool is_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char head[4] = {};
  in.read(head, 4);
  return in.gcount() == 4 && std::memcmp(head, kMagic, 4) == 0;
}

Tensor resize_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  if (map.ndim() != 2) fail("resize_bilinear expects a 2-D map");
  const std::size_t in_h = map.rows();
  const std::size_t in_w = map.cols();
  if (in_h == out_h && in_w == out_w) return map;

  auto source_coord = [](std::size_t o, std::size_t in, std::size_t out) {
    double s = (static_cast<double>(o) + 0.5) * in / out - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    auto lo = static_cast<std::size_t>(s);
    std::size_t hi = std::min(lo + 1, in - 1);
    return std::tuple{lo, hi, s - static_cast<double>(lo)};
  };

  Tensor out({static_cast<std::uint32_t>(out_h), static_cast<std::uint32_t>(out_w)});
  for (std::size_t i = 0; i < out_h; ++i) {
    auto [y0, y1, fy] = source_coord(i, in_h, out_h);
    for (std::size_t j = 0; j < out_w; ++j) {
      auto [x0, x1, fx] = source_coord(j, in_w, out_w);
      const double top = map.at(y0, x0) * (1 - fx) + map.at(y0, x1) * fx;
      const double bottom = map.at(y1, x0) * (1 - fx) + map.at(y1, x1) * fx;
      out.at(i, j) = static_cast<float>(top * (1 - fy) + bottom * fy);
    }
  }
  return out;
}

Tensor read_saliency_image(const std::filesystem::path& path,
                           std::size_t target_w, std::size_t target_h) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) fail_io("cannot decode image: " + path.string());
  if (img.depth() != CV_8U) fail("saliency image must be 8-bit: " + path.string());

  Tensor map({static_cast<std::uint32_t>(img.rows), static_cast<std::uint32_t>(img.cols)});
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) {
      map.at(y, x) = static_cast<float>(row[x]) / 255.0f;
    }
  }
  // A zero target keeps the stored resolution.
  Tensor out = (target_w == 0 || target_h == 0) ? map : resize_bilinear(map, target_h, target_w);
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Tensor read_saliency(const std::filesystem::path& path, std::size_t target_w,
                     std::size_t target_h) {
  if (!std::filesystem::exists(path)) {
    fail_io("saliency map not found: " + path.string());
  }
  if (!is_tensor_file(path)) return read_saliency_image(path, target_w, target_h);
  Tensor t = read_tensor(path);
  if (t.ndim() != 2) fail("saliency tensor must be 2-D: " + path.string());
  for (auto& v : t.data) v = std::clamp(v, 0.0f, 1.0f);
  return t;
}

RgbImage read_rgb_image(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) fail_io("cannot decode image: " + path.string());
  RgbImage out;
  out.width = static_cast<std::size_t>(img.cols);
  out.height = static_cast<std::size_t>(img.rows);
  out.pixels.resize(out.width * out.height * 3);
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      // OpenCV stores BGR.
      out.at(y, x, 0) = row[x][2];
      out.at(y, x, 1) = row[x][1];
      out.at(y, x, 2) = row[x][0];
    }
  }
  return out;
}

void write_gray_image(const std::filesystem::path& path, const Tensor& map) {
  if (map.ndim() != 2) fail("write_gray_image expects a 2-D map");
  cv::Mat img(static_cast<int>(map.rows()), static_cast<int>(map.cols()), CV_8UC1);
  for (int y = 0; y < img.rows; ++y) {
    auto* row = img.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.cols; ++x) {
      const float v = std::clamp(map.at(y, x), 0.0f, 1.0f);
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  if (!cv::imwrite(path.string(), img)) fail_io("cannot write image: " + path.string());
}

}  // namespace blcf
