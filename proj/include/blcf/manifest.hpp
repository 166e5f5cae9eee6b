#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace blcf {

/// One dataset image: original size plus where its feature tensor lives.
struct ImageMeta {
  std::string image_id;
  std::size_t width = 0;
  std::size_t height = 0;
  std::filesystem::path tensor_path;
  std::optional<std::filesystem::path> saliency_path;
  /// Source RGB image, needed only for on-the-fly BMS weighting.
  std::optional<std::filesystem::path> image_path;

  bool operator==(const ImageMeta&) const = default;
};

/// JSON-lines manifest. Relative paths resolve against the manifest's
/// directory. Throws on duplicate ids or non-positive sizes.
std::vector<ImageMeta> read_manifest(const std::filesystem::path& path);

/// Paths are written as stored in each entry.
void write_manifest(const std::filesystem::path& path, const std::vector<ImageMeta>& images);

}  // namespace blcf
