#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "blcf/bow.hpp"
#include "blcf/index.hpp"
#include "blcf/manifest.hpp"

namespace blcf {

struct QueryGroundTruth {
  std::string query_id;
  std::string query_image_id;
  QueryRegion bbox;
  std::set<std::string> positives;  // good and ok
  std::set<std::string> junk;
  /// Restricts the ranked corpus for this query when present.
  std::optional<std::set<std::string>> subset;
};

/// Reads an Oxford/Paris style directory: <q>_query.txt holding
/// "<image_id> x_min y_min x_max y_max" plus <q>_good.txt, <q>_ok.txt and
/// <q>_junk.txt. An optional <q>_subset.txt lists the images to rank.
/// The Oxford "oxc1_" id prefix is stripped. Queries are sorted by id.
std::vector<QueryGroundTruth> parse_groundtruth(const std::filesystem::path& dir);

/// Inverse of parse_groundtruth (query ids become file stems).
void write_groundtruth(const std::filesystem::path& dir, const std::vector<QueryGroundTruth>& gts);

enum class ApConvention { trapezoid, standard };

ApConvention parse_ap_convention(std::string_view name);
std::string to_string(ApConvention convention);

/// Average precision after deleting junk images from the ranking.
/// trapezoid: sum over hits of (recall step) * (previous precision +
/// current precision) / 2, with precision 1 before the first rank.
/// standard: mean of precision at each hit. Missing positives count as 0.
/// Returns nullopt when the query has no positives.
std::optional<double> average_precision(std::span<const std::string> ranked_ids,
                                        const QueryGroundTruth& gt,
                                        ApConvention convention = ApConvention::trapezoid);
std::optional<double> average_precision(const RankedList& ranked, const QueryGroundTruth& gt,
                                        ApConvention convention = ApConvention::trapezoid);

struct EvalOptions {
  bool aqe = false;
  std::size_t aqe_n = 10;
  bool aqe_include_query = true;
  ApConvention convention = ApConvention::trapezoid;
};

struct QueryScore {
  std::string query_id;
  double average_precision = 0.0;
};

struct EvalReport {
  std::vector<QueryScore> per_query;  // sorted by query_id
  double map = 0.0;
  /// Queries left out of the mean, with the reason.
  std::vector<std::pair<std::string, std::string>> excluded;
  /// JSON object describing the configuration that produced the report.
  std::string config_echo = "{}";
};

/// Runs every query: encode with its bounding box, rank the whole corpus,
/// optionally expand and re-rank, and score. Queries whose image or tensor
/// is unavailable, or that have no positives, are excluded and reported.
EvalReport evaluate(const InvertedIndex& index, const std::vector<QueryGroundTruth>& gts,
                    const Encoder& encoder, const std::vector<ImageMeta>& images,
                    const EvalOptions& options = {});

std::string report_to_json(const EvalReport& report);

}  // namespace blcf
