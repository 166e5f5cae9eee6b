#include "blcf/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "blcf/bow.hpp"
#include "blcf/descriptors.hpp"
#include "blcf/error.hpp"
#include "blcf/evalkit.hpp"
#include "blcf/index.hpp"
#include "blcf/little_endian.hpp"
#include "blcf/manifest.hpp"
#include "blcf/pipeline.hpp"
#include "blcf/vocab.hpp"
#include "blcf/weighting.hpp"

namespace blcf::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void log(const std::string& msg) { std::cerr << "[blcf] " << msg << '\n'; }

std::string file_hash(const fs::path& path) {
  const auto bytes = le::read_file(path);
  return fnv1a_hex({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::string absolute_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path.string());
  out << text << '\n';
  if (!out) fail_io("write failed: " + path.string());
}

struct WeightingFlags {
  std::string kind = "none";
  double sigma_frac = 1.0 / 3.0;
  int bms_step = 8;
  int bms_dilation = 7;
  double bms_blur = -1.0;
  bool bms_raw_rgb = false;

  void add_to(CLI::App& cmd, bool with_kind) {
    if (with_kind) {
      cmd.add_option("--weighting", kind, "Spatial weighting scheme")
          ->check(CLI::IsMember({"none", "gaussian", "l2norm", "saliency", "bms"}))
          ->capture_default_str();
    }
    if (with_kind) {
      cmd.add_option("--sigma-frac", sigma_frac, "Gaussian sigma as a fraction of grid size")
          ->capture_default_str();
    }
    cmd.add_option("--bms-step", bms_step, "BMS threshold step")->capture_default_str();
    cmd.add_option("--bms-dilation", bms_dilation, "BMS dilation kernel width")->capture_default_str();
    cmd.add_option("--bms-blur", bms_blur, "BMS blur sigma in pixels (<0: 0.02*max side)")
        ->capture_default_str();
    cmd.add_flag("--bms-raw-rgb", bms_raw_rgb, "Threshold raw RGB instead of whitened channels");
  }

  WeightingScheme scheme() const {
    WeightingScheme s;
    s.kind = parse_weighting_kind(kind);
    s.sigma_frac = sigma_frac;
    s.bms = bms_options();
    return s;
  }

  BmsOptions bms_options() const {
    return BmsOptions{bms_step, bms_dilation, bms_blur, !bms_raw_rgb};
  }

  json to_json() const {
    return json{{"kind", kind},
                {"sigma_frac", sigma_frac},
                {"bms_step", bms_step},
                {"bms_dilation", bms_dilation},
                {"bms_blur", bms_blur},
                {"bms_whiten", !bms_raw_rgb}};
  }

  static WeightingFlags from_json(const json& j) {
    WeightingFlags f;
    f.kind = j.at("kind").get<std::string>();
    f.sigma_frac = j.at("sigma_frac").get<double>();
    f.bms_step = j.at("bms_step").get<int>();
    f.bms_dilation = j.at("bms_dilation").get<int>();
    f.bms_blur = j.at("bms_blur").get<double>();
    f.bms_raw_rgb = !j.at("bms_whiten").get<bool>();
    return f;
  }
};

// --- fit-pca ---------------------------------------------------------------

struct FitPcaArgs {
  std::string manifest;
  std::string out;
  std::size_t out_dim = 0;
  std::size_t sample_cap = 500000;
  std::uint64_t seed = 0;
  double epsilon = kDefaultPcaEpsilon;
};

void cmd_fit_pca(const FitPcaArgs& a) {
  const auto images = read_manifest(a.manifest);
  if (images.empty()) fail("manifest is empty: " + a.manifest);
  const DescriptorSet sample = collect_descriptors(images, nullptr, a.sample_cap, a.seed);
  const std::size_t out_dim = a.out_dim == 0 ? sample.dim : a.out_dim;
  log("fit-pca: " + std::to_string(sample.size()) + " descriptors of dimension " +
      std::to_string(sample.dim) + " -> " + std::to_string(out_dim));
  PcaModel pca = fit_pca(sample, out_dim, a.epsilon);
  pca.sample_seed = a.seed;
  pca.config_hash = fnv1a_hex(json{{"stage", "pca"},
                                   {"manifest", file_hash(a.manifest)},
                                   {"out_dim", out_dim},
                                   {"sample_cap", a.sample_cap},
                                   {"seed", a.seed},
                                   {"epsilon", a.epsilon}}
                                  .dump());
  save_pca(a.out, pca);
  log("fit-pca: wrote " + a.out + " (config " + pca.config_hash + ")");
}

// --- train-vocab -----------------------------------------------------------

struct TrainVocabArgs {
  std::string manifest;
  std::string pca;
  std::string out;
  std::size_t k = 0;
  std::size_t iters = 25;
  std::uint64_t seed = 0;
  std::size_t sample_cap = 500000;
  bool approximate = false;
  std::size_t probes = 0;
};

void cmd_train_vocab(const TrainVocabArgs& a) {
  const auto images = read_manifest(a.manifest);
  const PcaModel pca = load_pca(a.pca);
  const DescriptorSet sample = collect_descriptors(images, &pca, a.sample_cap, a.seed);
  if (sample.size() < a.k) {
    fail("K=" + std::to_string(a.k) + " exceeds the " + std::to_string(sample.size()) +
         " available descriptors");
  }
  log("train-vocab: " + std::to_string(sample.size()) + " descriptors, K=" + std::to_string(a.k));
  KMeansOptions opts;
  opts.k = a.k;
  opts.max_iters = a.iters;
  opts.seed = a.seed;
  opts.mode = a.approximate ? SearchMode::approximate : SearchMode::exact;
  opts.probes = a.probes;
  Vocabulary vocab = train_vocabulary(sample, opts);
  for (std::size_t i = 0; i < vocab.objective_history.size(); ++i) {
    log("train-vocab: iteration " + std::to_string(i) + " objective " +
        std::to_string(vocab.objective_history[i]));
  }
  vocab.config_hash = fnv1a_hex(json{{"stage", "vocab"},
                                     {"pca", pca.config_hash},
                                     {"manifest", file_hash(a.manifest)},
                                     {"K", a.k},
                                     {"iters", a.iters},
                                     {"seed", a.seed},
                                     {"sample_cap", a.sample_cap},
                                     {"approximate", a.approximate},
                                     {"probes", a.probes}}
                                    .dump());
  save_vocabulary(a.out, vocab);
  log("train-vocab: wrote " + a.out + " (config " + vocab.config_hash + ")");
}

// --- index -----------------------------------------------------------------

struct IndexArgs {
  std::string manifest;
  std::string pca;
  std::string vocab;
  std::string out;
  std::string dump_bow;
  WeightingFlags weighting;
};

void cmd_index(const IndexArgs& a) {
  const auto images = read_manifest(a.manifest);
  const PcaModel pca = load_pca(a.pca);
  const Vocabulary vocab = load_vocabulary(a.vocab);
  const Encoder encoder(pca, vocab, a.weighting.scheme());

  std::vector<SparseBow> bows;
  bows.reserve(images.size());
  std::size_t total_words = 0;
  std::size_t max_words = 0;
  for (const auto& meta : images) {
    bows.push_back(encoder.encode_image(read_tensor(meta.tensor_path), meta));
    total_words += bows.back().nnz();
    max_words = std::max(max_words, bows.back().nnz());
  }
  InvertedIndex index = InvertedIndex::build(bows, vocab.k);

  json meta{{"pca_hash", pca.config_hash},
            {"vocab_hash", vocab.config_hash},
            {"vocab_seed", vocab.seed},
            {"manifest_hash", file_hash(a.manifest)},
            {"manifest_path", absolute_string(a.manifest)},
            {"pca_path", absolute_string(a.pca)},
            {"vocab_path", absolute_string(a.vocab)},
            {"weighting", a.weighting.to_json()}};
  meta["config_hash"] = fnv1a_hex(json{{"stage", "index"},
                                       {"pca", pca.config_hash},
                                       {"vocab", vocab.config_hash},
                                       {"manifest", meta["manifest_hash"]},
                                       {"weighting", meta["weighting"]}}
                                      .dump());
  index.metadata_json = meta.dump();
  save_index(a.out, index);

  const double mean_words =
      images.empty() ? 0.0 : static_cast<double>(total_words) / static_cast<double>(images.size());
  log("index: " + std::to_string(index.doc_count()) + " images, " + std::to_string(mean_words) +
      " words/image on average, max " + std::to_string(max_words));
  if (!a.dump_bow.empty()) {
    std::ofstream out(a.dump_bow, std::ios::trunc);
    if (!out) fail_io("cannot open for writing: " + a.dump_bow);
    for (const auto& b : bows) out << bow_to_json_line(b) << '\n';
  }
}

// --- shared loading for query/eval ------------------------------------------

struct ModelOverrides {
  std::string manifest;
  std::string pca;
  std::string vocab;
  bool force = false;
};

struct LoadedPipeline {
  InvertedIndex index;
  std::vector<ImageMeta> images;
  PcaModel pca;
  Vocabulary vocab;
  WeightingFlags weighting;
  json metadata;
};

LoadedPipeline load_pipeline(const std::string& index_path, const ModelOverrides& o) {
  LoadedPipeline p;
  p.index = load_index(index_path);
  p.metadata = json::parse(p.index.metadata_json);
  auto pick = [&](const std::string& given, const char* key) -> std::string {
    if (!given.empty()) return given;
    if (!p.metadata.contains(key)) fail(std::string("index lacks '") + key + "'; pass it explicitly");
    return p.metadata[key].get<std::string>();
  };
  const std::string manifest = pick(o.manifest, "manifest_path");
  p.images = read_manifest(manifest);
  p.pca = load_pca(pick(o.pca, "pca_path"));
  p.vocab = load_vocabulary(pick(o.vocab, "vocab_path"));
  p.weighting = p.metadata.contains("weighting") ? WeightingFlags::from_json(p.metadata["weighting"])
                                                 : WeightingFlags{};

  auto check = [&](const char* key, const std::string& actual) {
    const std::string expected = p.metadata.value(key, std::string{});
    if (expected == actual) return;
    const std::string msg = std::string("config hash mismatch for ") + key + ": index has '" +
                            expected + "', loaded model has '" + actual + "'";
    if (!o.force) fail(msg + " (use --force to override)");
    log("warning: " + msg);
  };
  check("pca_hash", p.pca.config_hash);
  check("vocab_hash", p.vocab.config_hash);
  if (p.vocab.k != p.index.k()) fail("vocabulary K does not match the index");
  return p;
}

// --- query -----------------------------------------------------------------

struct QueryArgs {
  std::string index;
  std::string image_id;
  std::vector<double> bbox;
  std::size_t top = 10;
  bool aqe = false;
  std::size_t aqe_n = 10;
  bool aqe_include_query = true;
  std::string out;
  ModelOverrides models;
};

void cmd_query(const QueryArgs& a) {
  const LoadedPipeline p = load_pipeline(a.index, a.models);
  auto it = std::find_if(p.images.begin(), p.images.end(),
                         [&](const ImageMeta& m) { return m.image_id == a.image_id; });
  if (it == p.images.end()) fail("image '" + a.image_id + "' not in the manifest");
  std::optional<QueryRegion> region;
  if (!a.bbox.empty()) region = QueryRegion{a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]};

  const Encoder encoder(p.pca, p.vocab, p.weighting.scheme());
  SparseBow q = encoder.encode_query(read_tensor(it->tensor_path), *it, region);
  RankedList ranked = p.index.query(q);
  if (a.aqe) {
    q = expand_query(q, ranked, p.index, a.aqe_n, a.aqe_include_query);
    ranked = p.index.query(q);
  }
  ranked.resize(std::min(ranked.size(), a.top));

  json results = json::array();
  for (const auto& r : ranked) results.push_back({{"image_id", r.image_id}, {"score", r.score}});
  json out{{"query", a.image_id},
           {"config_hash", p.metadata.value("config_hash", std::string{})},
           {"aqe", a.aqe},
           {"vocab_seed", p.vocab.seed},
           {"results", results}};
  if (region) out["bbox"] = a.bbox;
  write_text(a.out, out.dump(2));
  log("query: wrote " + std::to_string(ranked.size()) + " results to " + a.out);
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string index;
  std::string gt;
  std::string style = "oxford";
  bool aqe = false;
  std::size_t aqe_n = 10;
  bool aqe_include_query = true;
  std::string ap_convention = "trapezoid";
  std::string report;
  ModelOverrides models;
};

void cmd_eval(const EvalArgs& a) {
  const LoadedPipeline p = load_pipeline(a.index, a.models);
  const auto gts = parse_groundtruth(a.gt);
  if (gts.empty()) fail("no queries found in " + a.gt);
  const Encoder encoder(p.pca, p.vocab, p.weighting.scheme());
  EvalOptions opts;
  opts.aqe = a.aqe;
  opts.aqe_n = a.aqe_n;
  opts.aqe_include_query = a.aqe_include_query;
  opts.convention = parse_ap_convention(a.ap_convention);
  EvalReport report = evaluate(p.index, gts, encoder, p.images, opts);

  json echo = json::parse(report.config_echo);
  echo["index_config_hash"] = p.metadata.value("config_hash", std::string{});
  echo["vocab_seed"] = p.vocab.seed;
  echo["weighting"] = p.weighting.to_json();
  report.config_echo = echo.dump();
  for (const auto& [id, reason] : report.excluded) log("eval: excluded " + id + ": " + reason);
  write_text(a.report, report_to_json(report));
  log("eval: mAP " + std::to_string(report.map) + " over " +
      std::to_string(report.per_query.size()) + " queries");
}

// --- saliency --------------------------------------------------------------

struct SaliencyArgs {
  std::string image;
  std::string out;
  WeightingFlags weighting;
};

void cmd_saliency(const SaliencyArgs& a) {
  const Tensor map = bms_saliency(read_rgb_image(a.image), a.weighting.bms_options());
  if (fs::path(a.out).extension() == ".blcf") {
    write_tensor(a.out, map);
  } else {
    write_gray_image(a.out, map);
  }
  log("saliency: wrote " + a.out);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Saliency-weighted bag of local convolutional features retrieval", "blcf"};
  app.require_subcommand(1);

  FitPcaArgs fit;
  auto* c_fit = app.add_subcommand("fit-pca", "Fit the PCA whitening model on a dataset");
  c_fit->add_option("--manifest", fit.manifest)->required();
  c_fit->add_option("--out", fit.out, "Output prefix")->required();
  c_fit->add_option("--out-dim", fit.out_dim, "Output dimension (0 = input dimension)")->capture_default_str();
  c_fit->add_option("--sample-cap", fit.sample_cap, "Max descriptors sampled (0 = all)")->capture_default_str();
  c_fit->add_option("--seed", fit.seed)->capture_default_str();
  c_fit->add_option("--epsilon", fit.epsilon, "Eigenvalue floor")->capture_default_str();

  TrainVocabArgs tv;
  auto* c_tv = app.add_subcommand("train-vocab", "Train the visual vocabulary with k-means");
  c_tv->add_option("--manifest", tv.manifest)->required();
  c_tv->add_option("--pca", tv.pca)->required();
  c_tv->add_option("--k", tv.k, "Vocabulary size")->required()->check(CLI::PositiveNumber);
  c_tv->add_option("--iters", tv.iters)->capture_default_str();
  c_tv->add_option("--seed", tv.seed)->capture_default_str();
  c_tv->add_option("--sample-cap", tv.sample_cap, "Max descriptors sampled (0 = all)")->capture_default_str();
  c_tv->add_flag("--approximate", tv.approximate, "Multi-probe nearest-centroid search");
  c_tv->add_option("--probes", tv.probes, "Coarse cells probed (0 = default)")->capture_default_str();
  c_tv->add_option("--out", tv.out, "Output prefix")->required();

  IndexArgs ix;
  auto* c_ix = app.add_subcommand("index", "Encode every manifest image and build the index");
  c_ix->add_option("--manifest", ix.manifest)->required();
  c_ix->add_option("--pca", ix.pca)->required();
  c_ix->add_option("--vocab", ix.vocab)->required();
  c_ix->add_option("--out", ix.out)->required();
  c_ix->add_option("--dump-bow", ix.dump_bow, "Also write the vectors as JSON lines");
  ix.weighting.add_to(*c_ix, true);

  auto add_overrides = [](CLI::App* cmd, ModelOverrides& o) {
    cmd->add_option("--manifest", o.manifest, "Override the manifest recorded in the index")
        ;
    cmd->add_option("--pca", o.pca, "Override the PCA model recorded in the index")
        ;
    cmd->add_option("--vocab", o.vocab, "Override the vocabulary recorded in the index")
        ;
    cmd->add_flag("--force", o.force, "Proceed despite config hash mismatches");
  };

  QueryArgs qa;
  auto* c_q = app.add_subcommand("query", "Rank the index against one manifest image");
  c_q->add_option("--index", qa.index)->required();
  c_q->add_option("--image-id", qa.image_id)->required();
  c_q->add_option("--bbox", qa.bbox, "x_min y_min x_max y_max in original pixels")->expected(4);
  c_q->add_option("--top", qa.top)->capture_default_str();
  c_q->add_flag("--aqe", qa.aqe, "Average query expansion");
  c_q->add_option("--aqe-n", qa.aqe_n)->capture_default_str();
  c_q->add_option("--aqe-include-query", qa.aqe_include_query)->capture_default_str();
  c_q->add_option("--out", qa.out)->required();
  add_overrides(c_q, qa.models);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Mean average precision over a ground-truth set");
  c_ev->add_option("--index", ev.index)->required();
  c_ev->add_option("--gt", ev.gt)->required();
  c_ev->add_option("--style", ev.style)->check(CLI::IsMember({"oxford"}))->capture_default_str();
  c_ev->add_flag("--aqe", ev.aqe, "Average query expansion");
  c_ev->add_option("--aqe-n", ev.aqe_n)->capture_default_str();
  c_ev->add_option("--aqe-include-query", ev.aqe_include_query)->capture_default_str();
  c_ev->add_option("--ap-convention", ev.ap_convention)
      ->check(CLI::IsMember({"trapezoid", "standard"}))
      ->capture_default_str();
  c_ev->add_option("--report", ev.report)->required();
  add_overrides(c_ev, ev.models);

  SaliencyArgs sa;
  auto* c_s = app.add_subcommand("saliency", "Boolean Map Saliency for one image");
  c_s->add_option("--image", sa.image)->required();
  c_s->add_option("--out", sa.out, ".blcf for a tensor, otherwise an image format")->required();
  sa.weighting.add_to(*c_s, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (*c_fit) cmd_fit_pca(fit);
    else if (*c_tv) cmd_train_vocab(tv);
    else if (*c_ix) cmd_index(ix);
    else if (*c_q) cmd_query(qa);
    else if (*c_ev) cmd_eval(ev);
    else if (*c_s) cmd_saliency(sa);
  } catch (const Error& e) {
    log(std::string("error: ") + e.what());
    return e.kind() == ErrorKind::io ? kIoError : kValidationError;
  } catch (const json::exception& e) {
    log(std::string("error: ") + e.what());
    return kValidationError;
  } catch (const fs::filesystem_error& e) {
    log(std::string("error: ") + e.what());
    return kIoError;
  }
  return kOk;
}

}  // namespace blcf::cli
