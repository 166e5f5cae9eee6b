#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace blcf {

/// Dense row-major float tensor with 2 (H x W) or 3 (M x N x D) dimensions.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::uint32_t> shape, std::vector<float> values);
  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::uint32_t> shape);

  std::size_t ndim() const { return dims.size(); }
  std::size_t size() const { return data.size(); }

  std::size_t rows() const { return dims.at(0); }
  std::size_t cols() const { return dims.at(1); }
  /// Channel count; 1 for 2-D tensors.
  std::size_t channels() const { return dims.size() == 3 ? dims[2] : 1; }

  float& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  float at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  /// The D-vector stored at grid cell (i, j) of a 3-D tensor.
  std::span<const float> cell(std::size_t i, std::size_t j) const {
    const std::size_t d = channels();
    return {data.data() + (i * cols() + j) * d, d};
  }
  std::span<float> cell(std::size_t i, std::size_t j) {
    const std::size_t d = channels();
    return {data.data() + (i * cols() + j) * d, d};
  }

  bool operator==(const Tensor&) const = default;
};

/// Element count implied by a shape.
std::size_t shape_size(std::span<const std::uint32_t> dims);

/// Throws unless dims are 2-D/3-D, positive, consistent with data, and finite.
void validate_tensor(const Tensor& t);

inline constexpr std::uint8_t kTensorFormatVersion = 1;

/// Layout: "BLCF", u8 version, u32 ndim, u32 dims[ndim], f32 data[]; all LE.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

/// In-memory forms of the same encoding.
std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

/// True if the file starts with the BLCF tensor magic.
bool is_tensor_file(const std::filesystem::path& path);

/// Reads an 8-bit grayscale image as a (target_h, target_w) map in [0,1].
/// Bilinear resize when the stored size differs from the target; a zero
/// target dimension keeps the stored size.
Tensor read_saliency_image(const std::filesystem::path& path,
                           std::size_t target_w, std::size_t target_h);

/// Saliency from either a 2-D BLCF tensor or a grayscale image. Tensors are
/// returned at their stored resolution and clamped to [0,1].
Tensor read_saliency(const std::filesystem::path& path, std::size_t target_w,
                     std::size_t target_h);

/// Bilinear resize of a 2-D map (pixel-center alignment).
Tensor resize_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w);

/// Interleaved 8-bit RGB image.
struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
};

RgbImage read_rgb_image(const std::filesystem::path& path);

/// Writes a [0,1] 2-D map as an 8-bit grayscale image (format by extension).
void write_gray_image(const std::filesystem::path& path, const Tensor& map);

}  // namespace blcf
