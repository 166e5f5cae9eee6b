#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "blcf/bow.hpp"
#include "blcf/error.hpp"

using namespace blcf;

namespace {

AssignmentMap make_assignment(std::size_t rows, std::size_t cols, std::vector<std::uint32_t> words) {
  return {rows, cols, std::move(words)};
}

/// h_k = sum of weights per word, normalized; computed with a std::map.
std::map<std::uint32_t, double> histogram_oracle(const AssignmentMap& a, const WeightMap& w) {
  std::map<std::uint32_t, double> h;
  for (std::size_t c = 0; c < a.words.size(); ++c) {
    if (w.values[c] > 0) h[a.words[c]] += w.values[c];
  }
  double norm = 0;
  for (auto& [k, v] : h) norm += v * v;
  norm = std::sqrt(norm);
  for (auto& [k, v] : h) v /= norm;
  return h;
}

void expect_matches(const SparseBow& bow, const std::map<std::uint32_t, double>& expect, double tol) {
  ASSERT_EQ(bow.entries.size(), expect.size());
  auto it = expect.begin();
  for (const auto& e : bow.entries) {
    EXPECT_EQ(e.word, it->first);
    EXPECT_NEAR(e.weight, it->second, tol);
    ++it;
  }
}

/// Vocabulary whose words are the one-hot axes of R^d.
Vocabulary one_hot_vocab(std::size_t d) {
  Vocabulary v;
  v.k = d;
  v.dim = d;
  v.centroids.assign(d * d, 0.0f);
  for (std::size_t i = 0; i < d; ++i) v.centroids[i * d + i] = 1.0f;
  return v;
}

}  // namespace

TEST(Encode, HandSummedExample) {
  const auto a = make_assignment(2, 2, {0, 1, 1, 1});
  const WeightMap w{2, 2, {1.0f, 0.5f, 0.5f, 1.0f}};
  const SparseBow bow = encode(a, w, 4, "img");
  EXPECT_EQ(bow.image_id, "img");
  expect_matches(bow, {{0, 1 / std::sqrt(5.0)}, {1, 2 / std::sqrt(5.0)}}, 1e-7);
}

TEST(Encode, UniformWeightsCountWords) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint32_t> word(0, 9);
  for (int t = 0; t < 20; ++t) {
    AssignmentMap a{5, 6, std::vector<std::uint32_t>(30)};
    for (auto& x : a.words) x = word(rng);
    std::map<std::uint32_t, double> counts;
    for (auto x : a.words) counts[x] += 1.0;
    double norm = 0;
    for (auto& [k, v] : counts) norm += v * v;
    for (auto& [k, v] : counts) v /= std::sqrt(norm);
    expect_matches(encode(a, uniform_weights(5, 6), 10), counts, 1e-6);
  }
}

TEST(Encode, ZeroWeightsOmittedAndEmptyVector) {
  const auto a = make_assignment(1, 3, {4, 5, 6});
  const SparseBow bow = encode(a, WeightMap{1, 3, {0.0f, 2.0f, 0.0f}}, 8);
  ASSERT_EQ(bow.nnz(), 1u);
  EXPECT_EQ(bow.entries[0].word, 5u);
  EXPECT_FLOAT_EQ(bow.entries[0].weight, 1.0f);
  EXPECT_TRUE(encode(a, WeightMap{1, 3, {0, 0, 0}}, 8).empty());
}

TEST(Encode, ShapeMismatchIsAnError) {
  EXPECT_THROW(encode(make_assignment(1, 2, {0, 1}), uniform_weights(2, 1), 2), Error);
  EXPECT_THROW(encode(make_assignment(1, 2, {0, 5}), uniform_weights(1, 2), 2), Error);
}

TEST(Encode, PropertiesOnRandomMaps) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::uint32_t> word(0, 63);
  std::uniform_real_distribution<float> weight(0.0f, 1.0f);
  std::uniform_real_distribution<float> scale(0.1f, 10.0f);
  for (int t = 0; t < 50; ++t) {
    AssignmentMap a{7, 9, std::vector<std::uint32_t>(63)};
    for (auto& x : a.words) x = word(rng);
    WeightMap w{7, 9, std::vector<float>(63)};
    for (auto& x : w.values) x = weight(rng);
    const SparseBow bow = encode(a, w, 64);
    validate_bow(bow);
    EXPECT_LE(bow.nnz(), 63u);
    expect_matches(bow, histogram_oracle(a, w), 1e-6);

    // Positive rescaling of the weights leaves the vector unchanged.
    WeightMap scaled = w;
    const float c = scale(rng);
    for (auto& x : scaled.values) x *= c;
    const SparseBow s = encode(a, scaled, 64);
    ASSERT_EQ(s.nnz(), bow.nnz());
    for (std::size_t i = 0; i < s.nnz(); ++i) EXPECT_NEAR(s.entries[i].weight, bow.entries[i].weight, 1e-6);

    // A joint permutation of the cells is invisible to the histogram.
    std::vector<std::size_t> perm(63);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    AssignmentMap pa = a;
    WeightMap pw = w;
    for (std::size_t i = 0; i < 63; ++i) {
      pa.words[i] = a.words[perm[i]];
      pw.values[i] = w.values[perm[i]];
    }
    const SparseBow p = encode(pa, pw, 64);
    ASSERT_EQ(p.nnz(), bow.nnz());
    for (std::size_t i = 0; i < p.nnz(); ++i) EXPECT_NEAR(p.entries[i].weight, bow.entries[i].weight, 1e-6);
  }
}

TEST(MapRegion, FloorCeilCoverage) {
  // 100x60 image onto a 6x10 grid: 10 px per cell both ways.
  EXPECT_EQ(map_region({0, 0, 100, 60}, 100, 60, 6, 10), (CellRange{0, 6, 0, 10}));
  EXPECT_EQ(map_region({15, 5, 31, 40}, 100, 60, 6, 10), (CellRange{0, 4, 1, 4}));
  // One-pixel-tall box on a cell boundary still keeps a cell.
  const CellRange thin = map_region({10, 30, 50, 30.5}, 100, 60, 6, 10);
  EXPECT_EQ(thin.row_end - thin.row_begin, 1u);
  // Box touching the far edge: floor lands on the last row, expansion keeps it.
  const CellRange edge = map_region({0, 60, 100, 60}, 100, 60, 6, 10);
  EXPECT_EQ(edge.row_begin, 5u);
  EXPECT_EQ(edge.row_end, 6u);
}

TEST(MapRegion, ValidateRegion) {
  EXPECT_NO_THROW(validate_region({0, 0, 10, 10}, 10, 10));
  EXPECT_THROW(validate_region({5, 0, 5, 10}, 10, 10), Error);
  EXPECT_THROW(validate_region({0, 0, 11, 10}, 10, 10), Error);
  EXPECT_THROW(validate_region({-1, 0, 5, 10}, 10, 10), Error);
}

TEST(EncodeRegion, LeftHalfExcludesRightOnlyWords) {
  // 4x8 grid: words 0-3 on the left half, 4-7 on the right.
  AssignmentMap a{4, 8, std::vector<std::uint32_t>(32)};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) a.at(i, j) = (j < 4 ? 0u : 4u) + static_cast<std::uint32_t>(i);
  const CellRange range = map_region({0, 0, 39, 40}, 80, 40, 4, 8);
  const SparseBow bow = encode(a, uniform_weights(4, 8), 8, range);
  ASSERT_FALSE(bow.empty());
  for (const auto& e : bow.entries) EXPECT_LT(e.word, 4u);
}

TEST(SumPool, HandExamples) {
  const Tensor map({2, 1, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  const DenseDescriptor d = sum_pool(map, WeightMap{2, 1, {1.0f, 3.0f}});
  EXPECT_NEAR(d.values[0], 1 / std::sqrt(10.0), 1e-7);
  EXPECT_NEAR(d.values[1], 3 / std::sqrt(10.0), 1e-7);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 2.0f);
  Tensor raw({3, 4, 5});
  for (auto& x : raw.data) x = u(rng);
  WeightMap one{3, 4, std::vector<float>(12, 0.0f)};
  one.at(2, 1) = 1.0f;
  const DenseDescriptor single = sum_pool(raw, one);
  std::vector<float> expect(raw.cell(2, 1).begin(), raw.cell(2, 1).end());
  l2_normalize(expect);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(single.values[k], expect[k], 1e-6);

  std::vector<double> sum(5, 0.0);
  for (std::size_t c = 0; c < 12; ++c)
    for (std::size_t k = 0; k < 5; ++k) sum[k] += raw.data[c * 5 + k];
  const double n = std::sqrt(std::inner_product(sum.begin(), sum.end(), sum.begin(), 0.0));
  const DenseDescriptor plain = sum_pool(raw, uniform_weights(3, 4));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(plain.values[k], sum[k] / n, 1e-6);

  EXPECT_EQ(sum_pool(Tensor({1, 2, 3}), uniform_weights(1, 2)).values, std::vector<float>(3, 0.0f));
  EXPECT_THROW(sum_pool(raw, uniform_weights(4, 3)), Error);
}

TEST(Encoder, FullImageBoxEqualsUnrestrictedQuery) {
  const PcaModel pca = PcaModel::identity(4);
  const Vocabulary vocab = one_hot_vocab(4);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor raw({3, 5, 4});
  for (auto& x : raw.data) x = u(rng);
  const ImageMeta meta{"q", 80, 48, "unused", std::nullopt, std::nullopt};
  for (auto kind : {WeightingKind::none, WeightingKind::gaussian, WeightingKind::l2norm}) {
    const Encoder enc(pca, vocab, WeightingScheme{kind});
    const SparseBow full = enc.encode_query(raw, meta, QueryRegion{0, 0, 80, 48});
    const SparseBow none = enc.encode_query(raw, meta, std::nullopt);
    EXPECT_EQ(full, none);
    const Tensor up = upsample_query(raw);
    WeightingContext ctx;
    ctx.rows = 6;
    ctx.cols = 10;
    ctx.raw_feature_map = &up;
    const SparseBow manual = encode(assign_map(postprocess_map(up, pca), vocab),
                                    make_weights(WeightingScheme{kind}, ctx), 4, "q");
    EXPECT_EQ(none, manual);
  }
}

TEST(Encoder, TinyBoxStillProducesAVector) {
  const PcaModel pca = PcaModel::identity(3);
  const Vocabulary vocab = one_hot_vocab(3);
  Tensor raw({4, 4, 3});
  for (std::size_t c = 0; c < 16; ++c) raw.data[c * 3 + c % 3] = 1.0f;
  const Encoder enc(pca, vocab, WeightingScheme{});
  const ImageMeta meta{"q", 64, 64, "unused", std::nullopt, std::nullopt};
  const SparseBow bow = enc.encode_query(raw, meta, QueryRegion{10, 20, 30, 21});
  EXPECT_GE(bow.nnz(), 1u);
  EXPECT_THROW(enc.encode_query(raw, meta, QueryRegion{10, 20, 5, 21}), Error);
}

TEST(Encoder, DatabaseImageUsesNativeGrid) {
  const PcaModel pca = PcaModel::identity(2);
  const Vocabulary vocab = one_hot_vocab(2);
  // Left column word 0, right column word 1, right column three times stronger.
  Tensor raw({2, 2, 2}, {1, 0, 0, 3, 1, 0, 0, 3});
  const ImageMeta meta{"d", 32, 32, "unused", std::nullopt, std::nullopt};
  const SparseBow plain = Encoder(pca, vocab, {}).encode_image(raw, meta);
  expect_matches(plain, {{0, std::sqrt(0.5)}, {1, std::sqrt(0.5)}}, 1e-6);
  const SparseBow weighted = Encoder(pca, vocab, {WeightingKind::l2norm}).encode_image(raw, meta);
  // weights 1/3 and 1 per cell, two cells each: h = (2/3, 2).
  expect_matches(weighted, {{0, (2.0 / 3) / std::sqrt(4.0 / 9 + 4)}, {1, 2 / std::sqrt(4.0 / 9 + 4)}}, 1e-6);
}

TEST(Encoder, RejectsMismatchedModels) {
  const PcaModel pca = PcaModel::identity(3);
  const Vocabulary vocab = one_hot_vocab(4);
  EXPECT_THROW(Encoder(pca, vocab, {}), Error);
}

TEST(BowJson, DumpsEntries) {
  SparseBow bow{"x", 10, {{2, 0.6f}, {7, 0.8f}}};
  const std::string line = bow_to_json_line(bow);
  EXPECT_NE(line.find("\"image_id\":\"x\""), std::string::npos);
  EXPECT_NE(line.find("[2,0.6"), std::string::npos);
}
