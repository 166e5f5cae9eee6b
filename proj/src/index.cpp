#include "blcf/index.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "blcf/error.hpp"
#include "blcf/little_endian.hpp"

namespace blcf {

InvertedIndex InvertedIndex::build(const std::vector<SparseBow>& bows, std::size_t k) {
  InvertedIndex index(k);
  index.docs_.reserve(bows.size());
  for (const auto& bow : bows) {
    if (bow.k != k) {
      fail(bow.image_id + ": K=" + std::to_string(bow.k) + " does not match index K=" +
           std::to_string(k));
    }
    validate_bow(bow);
    if (index.by_id_.contains(bow.image_id)) fail("duplicate image_id '" + bow.image_id + "'");
    const auto doc = static_cast<std::uint32_t>(index.ids_.size());
    index.by_id_.emplace(bow.image_id, doc);
    index.ids_.push_back(bow.image_id);
    index.docs_.push_back(bow);
    for (const auto& e : bow.entries) index.postings_[e.word].push_back({doc, e.weight});
  }
  index.finalize();
  return index;
}

void InvertedIndex::finalize() {
  std::vector<std::uint32_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [this](std::uint32_t a, std::uint32_t b) { return ids_[a] < ids_[b]; });
  id_rank_.assign(ids_.size(), 0);
  for (std::uint32_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = r;
}

std::optional<std::uint32_t> InvertedIndex::find(const std::string& image_id) const {
  auto it = by_id_.find(image_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

RankedList InvertedIndex::query(const SparseBow& q, std::size_t top_n, QueryStats* stats) const {
  if (q.k != k_) {
    fail("query K=" + std::to_string(q.k) + " does not match index K=" + std::to_string(k_));
  }
  std::vector<double> scores(ids_.size(), 0.0);
  std::size_t touched = 0;
  for (const auto& e : q.entries) {
    if (e.word >= k_) fail("query word id out of range");
    const double qw = e.weight;
    for (const auto& p : postings_[e.word]) {
      scores[p.doc] += qw * static_cast<double>(p.weight);
    }
    touched += postings_[e.word].size();
  }
  if (stats != nullptr) stats->postings_touched = touched;

  std::vector<std::uint32_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0u);
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return id_rank_[a] < id_rank_[b];
  };
  const std::size_t keep = std::min(top_n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    better);
  RankedList ranked;
  ranked.reserve(keep);
  for (std::size_t r = 0; r < keep; ++r) ranked.push_back({ids_[order[r]], scores[order[r]]});
  return ranked;
}

SparseBow expand_query(const SparseBow& q, const RankedList& ranked, const InvertedIndex& index,
                       std::size_t n, bool include_query) {
  std::vector<BowEntry> raw;
  if (include_query) raw = q.entries;
  const std::size_t take = std::min(n, ranked.size());
  for (std::size_t r = 0; r < take; ++r) {
    const auto doc = index.find(ranked[r].image_id);
    if (!doc) fail("ranked image '" + ranked[r].image_id + "' is not in the index");
    const auto& entries = index.document(*doc).entries;
    raw.insert(raw.end(), entries.begin(), entries.end());
  }
  if (take == 0) raw = q.entries;
  return make_bow(q.image_id, q.k, std::move(raw));
}

void save_index(const std::filesystem::path& path, const InvertedIndex& index) {
  nlohmann::json header{{"K", index.k()},
                        {"doc_count", index.doc_count()},
                        {"format_version", kIndexFormatVersion},
                        {"metadata", nlohmann::json::parse(index.metadata_json)}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  le::put_u32(out, static_cast<std::uint32_t>(text.size()));
  le::put_bytes(out, text);
  for (std::uint32_t d = 0; d < index.doc_count(); ++d) {
    const auto& id = index.image_id(d);
    le::put_u32(out, static_cast<std::uint32_t>(id.size()));
    le::put_bytes(out, id);
  }
  for (std::uint32_t w = 0; w < index.k(); ++w) {
    const auto list = index.postings(w);
    le::put_u32(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
      le::put_u32(out, p.doc);
      le::put_f32(out, p.weight);
    }
  }
  le::write_file(path, out);
}

InvertedIndex load_index(const std::filesystem::path& path) {
  const auto bytes = le::read_file(path);
  try {
    le::Reader in(bytes);
    const std::string text = in.bytes(in.u32());
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("bad index header: ") + e.what());
    }
    if (header.value("format_version", 0u) != kIndexFormatVersion) {
      fail("unsupported index format version");
    }
    const auto k = header.at("K").get<std::size_t>();
    const auto doc_count = header.at("doc_count").get<std::size_t>();

    InvertedIndex index(k);
    if (header.contains("metadata")) index.metadata_json = header["metadata"].dump();
    std::vector<std::vector<BowEntry>> forward(doc_count);
    for (std::size_t d = 0; d < doc_count; ++d) {
      std::string id = in.bytes(in.u32());
      if (!index.by_id_.emplace(id, static_cast<std::uint32_t>(d)).second) {
        fail("duplicate image_id '" + id + "' in index");
      }
      index.ids_.push_back(std::move(id));
    }
    for (std::uint32_t w = 0; w < k; ++w) {
      const std::uint32_t count = in.u32();
      auto& list = index.postings_[w];
      list.reserve(count);
      for (std::uint32_t c = 0; c < count; ++c) {
        Posting p{in.u32(), in.f32()};
        if (p.doc >= doc_count) fail("posting refers to unknown document");
        if (!list.empty() && list.back().doc >= p.doc) fail("posting list not sorted");
        list.push_back(p);
        forward[p.doc].push_back({w, p.weight});
      }
    }
    if (in.remaining() != 0) fail("trailing bytes after postings");
    index.docs_.reserve(doc_count);
    for (std::size_t d = 0; d < doc_count; ++d) {
      index.docs_.push_back({index.ids_[d], k, std::move(forward[d])});
    }
    index.finalize();
    return index;
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(path.string() + ": " + e.what());
  }
}

}  // namespace blcf
