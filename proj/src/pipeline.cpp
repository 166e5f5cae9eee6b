#include "blcf/pipeline.hpp"

#include <cstdio>
#include <random>

#include "blcf/error.hpp"

namespace blcf {

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DescriptorSet collect_descriptors(const std::vector<ImageMeta>& images, const PcaModel* pca,
                                  std::size_t sample_cap, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DescriptorSet out;
  std::size_t in_dim = 0;
  std::size_t seen = 0;
  for (const auto& meta : images) {
    const Tensor t = read_tensor(meta.tensor_path);
    if (t.ndim() != 3) fail(meta.image_id + ": feature tensor must be M x N x D");
    if (in_dim == 0) {
      in_dim = t.channels();
      out.dim = pca != nullptr ? pca->out_dim : in_dim;
    } else if (t.channels() != in_dim) {
      fail(meta.image_id + ": descriptor depth " + std::to_string(t.channels()) +
           " differs from " + std::to_string(in_dim));
    }
    for (std::size_t i = 0; i < t.rows(); ++i) {
      for (std::size_t j = 0; j < t.cols(); ++j) {
        const auto cell = t.cell(i, j);
        if (l2_norm(cell) == 0.0) continue;
        std::vector<float> v;
        if (pca != nullptr) {
          v = postprocess(cell, *pca);
        } else {
          v.assign(cell.begin(), cell.end());
          l2_normalize(v);
        }
        ++seen;
        if (sample_cap == 0 || out.size() < sample_cap) {
          out.push_back(v);
          continue;
        }
        std::uniform_int_distribution<std::size_t> slot(0, seen - 1);
        const std::size_t r = slot(rng);
        if (r < sample_cap) std::copy(v.begin(), v.end(), out.row(r).begin());
      }
    }
  }
  return out;
}

}  // namespace blcf
