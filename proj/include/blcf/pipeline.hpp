#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "blcf/descriptors.hpp"
#include "blcf/manifest.hpp"

namespace blcf {

/// 64-bit FNV-1a as 16 lowercase hex digits. Used to chain config hashes
/// between pipeline stages.
std::string fnv1a_hex(std::string_view bytes);

/// Reservoir sample (seeded) of local descriptors across all manifest
/// tensors, skipping all-zero locations. With `pca` null the samples are
/// L2-normalized (PCA input); otherwise they are fully postprocessed
/// (vocabulary input). sample_cap == 0 keeps everything. Throws if tensors
/// disagree on depth, naming the offending image.
DescriptorSet collect_descriptors(const std::vector<ImageMeta>& images, const PcaModel* pca,
                                  std::size_t sample_cap, std::uint64_t seed);

}  // namespace blcf
