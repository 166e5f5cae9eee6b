#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "blcf/error.hpp"
#include "blcf/weighting.hpp"
#include "test_support.hpp"

using namespace blcf;

namespace {

/// Exhaustive block max with ceil-sized blocks, then max normalization.
std::vector<float> block_max_oracle(const Tensor& s, std::size_t rows, std::size_t cols) {
  const std::size_t h = s.rows(), w = s.cols();
  const std::size_t bh = (h + rows - 1) / rows, bw = (w + cols - 1) / cols;
  std::vector<float> out(rows * cols, 0.0f);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y / bh, j = x / bw;
      out[i * cols + j] = std::max(out[i * cols + j], s.at(y, x));
    }
  const float peak = *std::max_element(out.begin(), out.end());
  for (auto& v : out) v = peak > 0 ? v / peak : 1.0f;
  return out;
}

Tensor random_map(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor t({static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)});
  for (auto& v : t.data) v = u(rng);
  return t;
}

RgbImage solid(std::size_t h, std::size_t w, std::uint8_t v) {
  RgbImage img;
  img.width = w;
  img.height = h;
  img.pixels.assign(h * w * 3, v);
  return img;
}

void paint(RgbImage& img, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1,
           std::uint8_t v) {
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = v;
}

double region_mean(const Tensor& m, std::size_t y0, std::size_t x0, std::size_t y1, std::size_t x1) {
  double s = 0;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) s += m.at(y, x);
  return s / static_cast<double>((y1 - y0) * (x1 - x0));
}

}  // namespace

TEST(UniformWeights, AllOnes) {
  const WeightMap w = uniform_weights(2, 3);
  EXPECT_EQ(w.rows, 2u);
  EXPECT_EQ(w.values, std::vector<float>(6, 1.0f));
  EXPECT_EQ(uniform_weights(1, 1).values, std::vector<float>{1.0f});
  EXPECT_THROW(uniform_weights(0, 3), Error);
}

TEST(GaussianWeights, HandEvaluatedThreeByThree) {
  EXPECT_EQ(gaussian_weights(1, 1, 0.3).values, std::vector<float>{1.0f});
  const WeightMap w = gaussian_weights(3, 3, 1.0 / 3.0);
  EXPECT_NEAR(w.at(1, 1), 1.0, 1e-6);
  for (auto [i, j] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}}) {
    EXPECT_NEAR(w.at(i, j), std::exp(-0.5), 1e-6);
  }
  for (auto [i, j] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}}) {
    EXPECT_NEAR(w.at(i, j), std::exp(-1.0), 1e-6);
  }
}

TEST(GaussianWeights, SymmetricUnderFlips) {
  for (auto [m, n] : {std::pair{4, 7}, {5, 5}, {2, 9}}) {
    const WeightMap w = gaussian_weights(m, n, 0.25);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        EXPECT_FLOAT_EQ(w.at(i, j), w.at(m - 1 - i, j));
        EXPECT_FLOAT_EQ(w.at(i, j), w.at(i, n - 1 - j));
        EXPECT_GT(w.at(i, j), 0.0f);
        EXPECT_LE(w.at(i, j), 1.0f);
      }
  }
  EXPECT_THROW(gaussian_weights(3, 3, 0.0), Error);
}

TEST(L2NormWeights, HandComputed) {
  const WeightMap w = l2norm_weights(Tensor({1, 2, 2}, {3.0f, 4.0f, 0.0f, 0.0f}));
  EXPECT_EQ(w.values, (std::vector<float>{1.0f, 0.0f}));

  Tensor single({2, 3, 4});
  single.cell(1, 2)[3] = 0.7f;
  const WeightMap s = l2norm_weights(single);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s.at(i, j), (i == 1 && j == 2) ? 1.0f : 0.0f);
}

TEST(L2NormWeights, AllZeroFallsBackToUniform) {
  EXPECT_EQ(l2norm_weights(Tensor({2, 2, 5})).values, std::vector<float>(4, 1.0f));
}

TEST(DownsampleSaliency, ConstantNormalizesToOne) {
  Tensor s({37, 23});
  std::fill(s.data.begin(), s.data.end(), 0.5f);
  for (auto [m, n] : {std::pair{3, 2}, {1, 1}, {5, 4}}) {
    EXPECT_EQ(downsample_saliency(s, m, n).values, std::vector<float>(m * n, 1.0f));
  }
}

TEST(DownsampleSaliency, SinglePixel) {
  Tensor s({4, 4});
  s.at(0, 0) = 1.0f;
  EXPECT_EQ(downsample_saliency(s, 2, 2).values, (std::vector<float>{1, 0, 0, 0}));
}

TEST(DownsampleSaliency, CeilSplitKeepsPartialBlocks) {
  std::mt19937_64 rng(1);
  Tensor s = random_map(rng, 5, 5);
  EXPECT_EQ(downsample_saliency(s, 2, 2).values, block_max_oracle(s, 2, 2));
  // Content confined to the trailing partial block still registers.
  Tensor tail({5, 5});
  tail.at(4, 4) = 0.3f;
  EXPECT_EQ(downsample_saliency(tail, 2, 2).values, (std::vector<float>{0, 0, 0, 1}));
}

TEST(DownsampleSaliency, MatchesOracleOnRandomShapes) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dim(1, 60);
  std::uniform_int_distribution<int> grid(1, 8);
  for (int t = 0; t < 200; ++t) {
    const std::size_t h = dim(rng), w = dim(rng);
    const std::size_t m = std::min<std::size_t>(grid(rng), h);
    const std::size_t n = std::min<std::size_t>(grid(rng), w);
    const Tensor s = random_map(rng, h, w);
    EXPECT_EQ(downsample_saliency(s, m, n).values, block_max_oracle(s, m, n));
  }
}

TEST(DownsampleSaliency, CommutesWithHorizontalFlip) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + t % 5;
    const Tensor s = random_map(rng, 17, n * 6);
    Tensor flipped = s;
    for (std::size_t y = 0; y < s.rows(); ++y)
      for (std::size_t x = 0; x < s.cols(); ++x) flipped.at(y, x) = s.at(y, s.cols() - 1 - x);
    const WeightMap a = downsample_saliency(s, 3, n);
    const WeightMap b = downsample_saliency(flipped, 3, n);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(a.at(i, j), b.at(i, n - 1 - j));
  }
}

TEST(DownsampleSaliency, RaisingAPixelNeverLowersItsBlock) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(0, 29);
  for (int t = 0; t < 100; ++t) {
    Tensor s = random_map(rng, 30, 30);
    s.data[0] = 1.0f;  // pin the global max so normalization is fixed
    const WeightMap before = downsample_saliency(s, 4, 4);
    const std::size_t y = pick(rng), x = pick(rng);
    s.at(y, x) = std::min(1.0f, s.at(y, x) + 0.3f);
    const WeightMap after = downsample_saliency(s, 4, 4);
    EXPECT_GE(after.at(y / 8, x / 8), before.at(y / 8, x / 8));
  }
}

TEST(BmsSaliency, CenteredSquareIsSalient) {
  RgbImage img = solid(64, 64, 20);
  paint(img, 24, 24, 40, 40, 230);
  const Tensor s = bms_saliency(img);
  ASSERT_EQ(s.dims, (std::vector<std::uint32_t>{64, 64}));
  const auto peak = std::max_element(s.data.begin(), s.data.end()) - s.data.begin();
  const std::size_t py = peak / 64, px = peak % 64;
  EXPECT_TRUE(py >= 24 && py < 40 && px >= 24 && px < 40) << py << "," << px;
  float border = 0;
  for (std::size_t k = 0; k < 64; ++k) {
    border = std::max({border, s.at(0, k), s.at(63, k), s.at(k, 0), s.at(k, 63)});
  }
  EXPECT_LE(border, 0.2f);
  for (float v : s.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(BmsSaliency, BorderTouchingRegionLosesAttention) {
  RgbImage img = solid(64, 96, 20);
  paint(img, 24, 56, 40, 72, 230);  // interior square
  paint(img, 0, 0, 16, 16, 230);    // identical square in the corner
  const Tensor s = bms_saliency(img);
  EXPECT_LT(region_mean(s, 0, 0, 16, 16), region_mean(s, 24, 56, 40, 72));
}

TEST(BmsSaliency, ConstantImageGivesUniformMap) {
  const Tensor s = bms_saliency(solid(20, 30, 128));
  EXPECT_EQ(s.data, std::vector<float>(600, 1.0f));
  BmsOptions raw;
  raw.whiten = false;
  EXPECT_EQ(bms_saliency(solid(10, 10, 77), raw).data, std::vector<float>(100, 1.0f));
}

TEST(BmsSaliency, DarkObjectOnBrightGround) {
  RgbImage img = solid(48, 48, 240);
  paint(img, 18, 18, 30, 30, 10);
  const Tensor s = bms_saliency(img);
  EXPECT_GT(region_mean(s, 18, 18, 30, 30), 2.0 * region_mean(s, 0, 0, 8, 48));
}

TEST(BmsSaliency, RejectsBadParameters) {
  BmsOptions bad;
  bad.step = 0;
  EXPECT_THROW(bms_saliency(solid(8, 8, 1), bad), Error);
  RgbImage broken;
  EXPECT_THROW(bms_saliency(broken), Error);
}

TEST(MakeWeights, DispatchesByKind) {
  Tensor raw({2, 3, 2}, {3, 4, 0, 0, 1, 0, 0, 2, 0, 0, 0, 0});
  WeightingContext ctx;
  ctx.rows = 2;
  ctx.cols = 3;
  ctx.raw_feature_map = &raw;

  WeightingScheme scheme;
  EXPECT_EQ(make_weights(scheme, ctx), uniform_weights(2, 3));
  scheme.kind = WeightingKind::l2norm;
  EXPECT_EQ(make_weights(scheme, ctx), l2norm_weights(raw));
  scheme.kind = WeightingKind::gaussian;
  scheme.sigma_frac = 0.4;
  EXPECT_EQ(make_weights(scheme, ctx), gaussian_weights(2, 3, 0.4));

  scheme.kind = WeightingKind::saliency_file;
  EXPECT_THROW(make_weights(scheme, ctx), Error);  // no saliency_path
  blcf::testing::TempDir dir;
  Tensor ones({32, 48});
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  write_tensor(dir / "s.blcf", ones);
  ctx.saliency_path = dir / "s.blcf";
  EXPECT_EQ(make_weights(scheme, ctx).values, std::vector<float>(6, 1.0f));

  scheme.kind = WeightingKind::bms;
  EXPECT_THROW(make_weights(scheme, ctx), Error);  // no image_path
}

TEST(MakeWeights, ParsesSchemeNames) {
  EXPECT_EQ(parse_weighting_kind("saliency"), WeightingKind::saliency_file);
  EXPECT_EQ(parse_weighting_kind("bms"), WeightingKind::bms);
  EXPECT_EQ(to_string(WeightingKind::l2norm), "l2norm");
  EXPECT_THROW(parse_weighting_kind("itti"), Error);
}
