#include "blcf/manifest.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "blcf/error.hpp"

namespace blcf {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<ImageMeta> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("cannot open manifest: " + path.string());
  const auto base = path.parent_path();

  std::vector<ImageMeta> images;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ImageMeta meta;
    try {
      const auto j = nlohmann::json::parse(line);
      meta.image_id = j.at("image_id").get<std::string>();
      const auto w = j.at("width").get<long long>();
      const auto h = j.at("height").get<long long>();
      if (w < 1 || h < 1) fail(where + ": width and height must be >= 1");
      meta.width = static_cast<std::size_t>(w);
      meta.height = static_cast<std::size_t>(h);
      meta.tensor_path = resolve(base, j.at("tensor_path").get<std::string>());
      if (j.contains("saliency_path") && !j["saliency_path"].is_null()) {
        meta.saliency_path = resolve(base, j["saliency_path"].get<std::string>());
      }
      if (j.contains("image_path") && !j["image_path"].is_null()) {
        meta.image_path = resolve(base, j["image_path"].get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      fail(where + ": " + e.what());
    }
    if (!seen.insert(meta.image_id).second) {
      fail(where + ": duplicate image_id '" + meta.image_id + "'");
    }
    images.push_back(std::move(meta));
  }
  return images;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ImageMeta>& images) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path.string());
  for (const auto& m : images) {
    nlohmann::json j{{"image_id", m.image_id},
                     {"width", m.width},
                     {"height", m.height},
                     {"tensor_path", m.tensor_path.string()}};
    if (m.saliency_path) j["saliency_path"] = m.saliency_path->string();
    if (m.image_path) j["image_path"] = m.image_path->string();
    out << j.dump() << '\n';
  }
  if (!out) fail_io("write failed: " + path.string());
}

}  // namespace blcf
