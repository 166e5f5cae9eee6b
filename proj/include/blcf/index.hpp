#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "blcf/bow.hpp"

namespace blcf {

struct Posting {
  std::uint32_t doc = 0;
  float weight = 0.0f;
};

struct RankedItem {
  std::string image_id;
  double score = 0.0;
};

/// Sorted by score descending, ties by image_id ascending.
using RankedList = std::vector<RankedItem>;

/// Work counters filled in by InvertedIndex::query.
struct QueryStats {
  std::size_t postings_touched = 0;
};

inline constexpr std::size_t kAllResults = std::numeric_limits<std::size_t>::max();

/// Word -> posting list index over unit-norm SparseBow vectors. Immutable
/// after construction, so concurrent queries are safe.
class InvertedIndex {
 public:
  explicit InvertedIndex(std::size_t k = 0) : k_(k), postings_(k) {}

  /// Throws on duplicate image ids, K mismatch or invalid vectors.
  static InvertedIndex build(const std::vector<SparseBow>& bows, std::size_t k);

  std::size_t k() const { return k_; }
  std::size_t doc_count() const { return ids_.size(); }
  const std::string& image_id(std::uint32_t doc) const { return ids_.at(doc); }
  std::optional<std::uint32_t> find(const std::string& image_id) const;
  std::span<const Posting> postings(std::uint32_t word) const { return postings_.at(word); }

  /// Stored vector of one document.
  const SparseBow& document(std::uint32_t doc) const { return docs_.at(doc); }

  /// Cosine scores against every document (zero for documents sharing no
  /// word), truncated to top_n. Only the query words' postings are read.
  RankedList query(const SparseBow& q, std::size_t top_n = kAllResults,
                   QueryStats* stats = nullptr) const;

  /// Free-form JSON object persisted with the index (provenance, config).
  std::string metadata_json = "{}";

 private:
  std::size_t k_;
  std::vector<std::vector<Posting>> postings_;
  std::vector<std::string> ids_;
  std::vector<SparseBow> docs_;
  std::vector<std::uint32_t> id_rank_;  // lexicographic rank of each image id
  std::unordered_map<std::string, std::uint32_t> by_id_;

  void finalize();
  friend InvertedIndex load_index(const std::filesystem::path& path);
};

/// Average query expansion: sum of q (optional) and the stored vectors of
/// the top min(n, |ranked|) results, L2-normalized.
SparseBow expand_query(const SparseBow& q, const RankedList& ranked, const InvertedIndex& index,
                       std::size_t n = 10, bool include_query = true);

inline constexpr std::uint32_t kIndexFormatVersion = 1;

/// u32 header length, JSON header {K, doc_count, format_version, metadata},
/// doc table (u32 length + bytes per id), then for each word a u32 count
/// followed by (u32 ordinal, f32 weight) pairs. Little-endian throughout.
void save_index(const std::filesystem::path& path, const InvertedIndex& index);
InvertedIndex load_index(const std::filesystem::path& path);

}  // namespace blcf
