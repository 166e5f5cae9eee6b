#include "blcf/evalkit.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "blcf/error.hpp"
#include "blcf/parallel.hpp"

namespace blcf {

namespace {

constexpr std::string_view kOxfordPrefix = "oxc1_";

std::string strip_prefix(std::string id) {
  if (id.starts_with(kOxfordPrefix)) id.erase(0, kOxfordPrefix.size());
  return id;
}

std::set<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_io("missing ground-truth file: " + path.string());
  std::set<std::string> ids;
  std::string id;
  while (in >> id) ids.insert(strip_prefix(id));
  return ids;
}

}  // namespace

std::vector<QueryGroundTruth> parse_groundtruth(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail_io("ground-truth directory not found: " + dir.string());
  constexpr std::string_view kSuffix = "_query.txt";
  std::vector<QueryGroundTruth> gts;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_regular_file() || !name.ends_with(kSuffix)) continue;

    QueryGroundTruth gt;
    gt.query_id = name.substr(0, name.size() - kSuffix.size());
    std::ifstream in(entry.path());
    std::string image_id;
    if (!(in >> image_id >> gt.bbox.x_min >> gt.bbox.y_min >> gt.bbox.x_max >> gt.bbox.y_max)) {
      fail("malformed query file: " + entry.path().string());
    }
    gt.query_image_id = strip_prefix(image_id);

    const auto base = (dir / gt.query_id).string();
    for (const char* kind : {"_good.txt", "_ok.txt"}) {
      auto ids = read_id_list(base + kind);
      gt.positives.insert(ids.begin(), ids.end());
    }
    gt.junk = read_id_list(base + "_junk.txt");
    for (const auto& id : gt.positives) gt.junk.erase(id);
    const std::filesystem::path subset = base + "_subset.txt";
    if (std::filesystem::exists(subset)) gt.subset = read_id_list(subset);
    gts.push_back(std::move(gt));
  }
  std::sort(gts.begin(), gts.end(),
            [](const auto& a, const auto& b) { return a.query_id < b.query_id; });
  return gts;
}

void write_groundtruth(const std::filesystem::path& dir, const std::vector<QueryGroundTruth>& gts) {
  std::filesystem::create_directories(dir);
  auto write_list = [](const std::filesystem::path& path, const std::set<std::string>& ids) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail_io("cannot open for writing: " + path.string());
    for (const auto& id : ids) out << id << '\n';
  };
  for (const auto& gt : gts) {
    const auto base = (dir / gt.query_id).string();
    {
      std::ofstream out(base + "_query.txt", std::ios::trunc);
      if (!out) fail_io("cannot open for writing: " + base + "_query.txt");
      out.precision(17);
      out << gt.query_image_id << ' ' << gt.bbox.x_min << ' ' << gt.bbox.y_min << ' '
          << gt.bbox.x_max << ' ' << gt.bbox.y_max << '\n';
    }
    write_list(base + "_good.txt", gt.positives);
    write_list(base + "_ok.txt", {});
    write_list(base + "_junk.txt", gt.junk);
    if (gt.subset) write_list(base + "_subset.txt", *gt.subset);
  }
}

ApConvention parse_ap_convention(std::string_view name) {
  if (name == "trapezoid") return ApConvention::trapezoid;
  if (name == "standard") return ApConvention::standard;
  fail("unknown AP convention '" + std::string(name) + "'");
}

std::string to_string(ApConvention convention) {
  return convention == ApConvention::trapezoid ? "trapezoid" : "standard";
}

std::optional<double> average_precision(std::span<const std::string> ranked_ids,
                                        const QueryGroundTruth& gt, ApConvention convention) {
  const std::size_t positives = gt.positives.size();
  if (positives == 0) return std::nullopt;

  double ap = 0.0;
  double old_recall = 0.0;
  double old_precision = 1.0;
  std::size_t hits = 0;
  std::size_t rank = 0;
  for (const auto& id : ranked_ids) {
    if (gt.junk.contains(id)) continue;
    ++rank;
    const bool hit = gt.positives.contains(id);
    if (hit) ++hits;
    const double recall = static_cast<double>(hits) / static_cast<double>(positives);
    const double precision = static_cast<double>(hits) / static_cast<double>(rank);
    if (convention == ApConvention::trapezoid) {
      ap += (recall - old_recall) * (old_precision + precision) / 2.0;
    } else if (hit) {
      ap += precision / static_cast<double>(positives);
    }
    old_recall = recall;
    old_precision = precision;
    if (hits == positives) break;
  }
  return ap;
}

std::optional<double> average_precision(const RankedList& ranked, const QueryGroundTruth& gt,
                                        ApConvention convention) {
  std::vector<std::string> ids;
  ids.reserve(ranked.size());
  for (const auto& item : ranked) ids.push_back(item.image_id);
  return average_precision(ids, gt, convention);
}

EvalReport evaluate(const InvertedIndex& index, const std::vector<QueryGroundTruth>& gts,
                    const Encoder& encoder, const std::vector<ImageMeta>& images,
                    const EvalOptions& options) {
  std::unordered_map<std::string, const ImageMeta*> by_id;
  for (const auto& m : images) by_id.emplace(m.image_id, &m);

  struct Outcome {
    std::optional<double> ap;
    std::string error;
  };
  std::vector<Outcome> outcomes(gts.size());

  auto run_one = [&](const QueryGroundTruth& gt) -> Outcome {
    if (gt.positives.empty()) return {std::nullopt, "no positives"};
    auto it = by_id.find(gt.query_image_id);
    if (it == by_id.end()) return {std::nullopt, "query image not in manifest: " + gt.query_image_id};
    const ImageMeta& meta = *it->second;
    try {
      const Tensor raw = read_tensor(meta.tensor_path);
      QueryRegion box = gt.bbox;
      const auto w = static_cast<double>(meta.width);
      const auto h = static_cast<double>(meta.height);
      box.x_min = std::clamp(box.x_min, 0.0, w);
      box.x_max = std::clamp(box.x_max, 0.0, w);
      box.y_min = std::clamp(box.y_min, 0.0, h);
      box.y_max = std::clamp(box.y_max, 0.0, h);
      SparseBow q = encoder.encode_query(raw, meta, box);

      auto rank = [&](const SparseBow& vec) {
        RankedList ranked = index.query(vec);
        if (gt.subset) {
          std::erase_if(ranked, [&](const RankedItem& r) { return !gt.subset->contains(r.image_id); });
        }
        return ranked;
      };
      RankedList ranked = rank(q);
      if (options.aqe) {
        q = expand_query(q, ranked, index, options.aqe_n, options.aqe_include_query);
        ranked = rank(q);
      }
      return {average_precision(ranked, gt, options.convention), {}};
    } catch (const Error& e) {
      return {std::nullopt, e.what()};
    }
  };

  parallel_for(gts.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) outcomes[i] = run_one(gts[i]);
  }, 1);

  std::vector<std::size_t> order(gts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return gts[a].query_id < gts[b].query_id; });

  EvalReport report;
  double total = 0.0;
  for (std::size_t i : order) {
    if (outcomes[i].ap) {
      report.per_query.push_back({gts[i].query_id, *outcomes[i].ap});
      total += *outcomes[i].ap;
    } else {
      report.excluded.emplace_back(gts[i].query_id, outcomes[i].error);
    }
  }
  if (!report.per_query.empty()) report.map = total / static_cast<double>(report.per_query.size());

  nlohmann::json echo{{"weighting", to_string(encoder.scheme().kind)},
                      {"sigma_frac", encoder.scheme().sigma_frac},
                      {"aqe", options.aqe},
                      {"aqe_n", options.aqe_n},
                      {"aqe_include_query", options.aqe_include_query},
                      {"ap_convention", to_string(options.convention)},
                      {"K", index.k()},
                      {"doc_count", index.doc_count()}};
  report.config_echo = echo.dump();
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json per_query = nlohmann::json::array();
  for (const auto& q : report.per_query) {
    per_query.push_back({{"query_id", q.query_id}, {"average_precision", q.average_precision}});
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& [id, reason] : report.excluded) {
    excluded.push_back({{"query_id", id}, {"reason", reason}});
  }
  nlohmann::json j{{"map", report.map},
                   {"per_query", per_query},
                   {"excluded", excluded},
                   {"config_echo", nlohmann::json::parse(report.config_echo)}};
  return j.dump(2);
}

}  // namespace blcf
