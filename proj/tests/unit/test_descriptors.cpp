#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "blcf/descriptors.hpp"
#include "blcf/error.hpp"
#include "test_support.hpp"

using namespace blcf;

namespace {

/// Test-side covariance of a set of vectors (population normalization).
std::vector<double> covariance(const std::vector<std::vector<double>>& xs) {
  const std::size_t n = xs.size();
  const std::size_t d = xs.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& x : xs)
    for (std::size_t k = 0; k < d; ++k) mean[k] += x[k] / static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (const auto& x : xs)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += (x[a] - mean[a]) * (x[b] - mean[b]) / static_cast<double>(n);
  return cov;
}

/// basis * (x - mean), straight from the stored model.
std::vector<double> apply_linear(const PcaModel& pca, std::span<const float> x) {
  std::vector<double> out(pca.out_dim, 0.0);
  for (std::size_t r = 0; r < pca.out_dim; ++r)
    for (std::size_t k = 0; k < pca.in_dim; ++k)
      out[r] += static_cast<double>(pca.basis[r * pca.in_dim + k]) * (x[k] - pca.mean[k]);
  return out;
}

DescriptorSet unit_sphere_sample(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  DescriptorSet set(d);
  std::vector<float> v(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) v[k] = g(rng) * (1.0f + 0.3f * static_cast<float>(k)) + 0.5f;
    l2_normalize(v);
    set.push_back(v);
  }
  return set;
}

}  // namespace

TEST(FitPca, WhitensAnisotropicGaussian) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> g(0.0f, 1.0f);
  DescriptorSet set(2);
  for (int i = 0; i < 1000; ++i) {
    const float v[2] = {2.0f * g(rng), g(rng)};
    set.push_back(v);
  }
  const PcaModel pca = fit_pca(set, 2, kDefaultPcaEpsilon);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back(apply_linear(pca, set.row(i)));
  const auto cov = covariance(out);
  EXPECT_NEAR(cov[0], 1.0, 0.1);
  EXPECT_NEAR(cov[3], 1.0, 0.1);
  EXPECT_NEAR(cov[1], 0.0, 0.1);
  EXPECT_GT(pca.eigenvalues[0], pca.eigenvalues[1]);
  EXPECT_NEAR(pca.eigenvalues[0], 4.0, 0.5);
}

TEST(FitPca, ConstantFeaturesGiveZeroEigenvaluesAndZeroOutputs) {
  DescriptorSet set(3);
  const float v[3] = {0.6f, 0.0f, 0.8f};
  for (int i = 0; i < 10; ++i) set.push_back(v);
  const PcaModel pca = fit_pca(set, 3, kDefaultPcaEpsilon);
  for (double e : pca.eigenvalues) EXPECT_NEAR(e, 0.0, 1e-12);
  for (float b : pca.basis) EXPECT_TRUE(std::isfinite(b));
  for (double x : apply_linear(pca, set.row(0))) EXPECT_NEAR(x, 0.0, 1e-3);
}

TEST(FitPca, StandardNormalBasisIsNearRotation) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g(0.0f, 1.0f);
  const std::size_t d = 6;
  DescriptorSet set(d);
  std::vector<float> v(d);
  for (int i = 0; i < 20000; ++i) {
    for (auto& x : v) x = g(rng);
    set.push_back(v);
  }
  const PcaModel pca = fit_pca(set, d, kDefaultPcaEpsilon);
  for (std::size_t r = 0; r < d; ++r) {
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) norm += std::pow(pca.basis[r * d + k], 2);
    EXPECT_NEAR(std::sqrt(norm), 1.0, 0.1) << "row " << r;
  }
}

TEST(FitPca, PostprocessedTrainingSetHasIdentityCovariance) {
  const std::size_t d = 16;
  const DescriptorSet set = unit_sphere_sample(20 * d, d, 3);
  const PcaModel pca = fit_pca(set, d, kDefaultPcaEpsilon);
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto w = whiten(set.row(i), pca);
    out.emplace_back(w.begin(), w.end());
  }
  const auto cov = covariance(out);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b)
      EXPECT_NEAR(cov[a * d + b], a == b ? 1.0 : 0.0, 1e-3) << a << "," << b;
}

TEST(FitPca, EigenvaluesDescendAndRowEnergyDescends) {
  const DescriptorSet set = unit_sphere_sample(400, 10, 9);
  const PcaModel pca = fit_pca(set, 10, kDefaultPcaEpsilon);
  for (std::size_t r = 1; r < pca.out_dim; ++r) {
    EXPECT_GE(pca.eigenvalues[r - 1], pca.eigenvalues[r]);
    // Undoing the 1/sqrt scaling recovers unit rows; scaled norm grows down the list.
    double n0 = 0.0, n1 = 0.0;
    for (std::size_t k = 0; k < pca.in_dim; ++k) {
      n0 += std::pow(pca.basis[(r - 1) * pca.in_dim + k], 2);
      n1 += std::pow(pca.basis[r * pca.in_dim + k], 2);
    }
    EXPECT_NEAR(n0 * (pca.eigenvalues[r - 1] + pca.epsilon), 1.0, 1e-4);
    EXPECT_LE(n0, n1 * (1 + 1e-6));
  }
}

TEST(FitPca, ReducesDimensionWhenAsked) {
  const DescriptorSet set = unit_sphere_sample(100, 8, 1);
  const PcaModel pca = fit_pca(set, 3, kDefaultPcaEpsilon);
  EXPECT_EQ(pca.out_dim, 3u);
  EXPECT_EQ(pca.basis.size(), 24u);
  EXPECT_EQ(postprocess(set.row(0), pca).size(), 3u);
}

TEST(FitPca, ErrorPaths) {
  const DescriptorSet small = unit_sphere_sample(3, 8, 1);
  try {
    fit_pca(small, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient samples"), std::string::npos);
  }
  DescriptorSet bad(2, {1.0f, NAN, 0.0f, 1.0f});
  EXPECT_THROW(fit_pca(bad, 1), Error);
  EXPECT_THROW(fit_pca(unit_sphere_sample(10, 4, 1), 5), Error);
}

TEST(Postprocess, IdentityModelNormalizes) {
  const PcaModel id = PcaModel::identity(2);
  const float x[2] = {3.0f, 4.0f};
  const auto out = postprocess(x, id);
  EXPECT_NEAR(out[0], 0.6f, 1e-6);
  EXPECT_NEAR(out[1], 0.8f, 1e-6);
}

TEST(Postprocess, ZeroDescriptorMapsToZero) {
  const DescriptorSet set = unit_sphere_sample(50, 4, 2);
  const PcaModel pca = fit_pca(set, 4);
  const float zero[4] = {0, 0, 0, 0};
  for (float v : postprocess(zero, pca)) EXPECT_EQ(v, 0.0f);
}

TEST(Postprocess, UnitNormAndScaleInvariant) {
  const DescriptorSet set = unit_sphere_sample(200, 12, 4);
  const PcaModel pca = fit_pca(set, 12);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  std::uniform_real_distribution<float> scale(0.01f, 100.0f);
  std::vector<float> x(12), cx(12);
  for (int trial = 0; trial < 100; ++trial) {
    for (auto& v : x) v = u(rng);
    const float c = scale(rng);
    for (std::size_t k = 0; k < 12; ++k) cx[k] = c * x[k];
    const auto a = postprocess(x, pca);
    const auto b = postprocess(cx, pca);
    EXPECT_NEAR(l2_norm(a), 1.0, 1e-5);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-5);
  }
}

TEST(PostprocessMap, MatchesPerLocationLoop) {
  const DescriptorSet set = unit_sphere_sample(100, 8, 6);
  const PcaModel pca = fit_pca(set, 8);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Tensor map({3, 4, 8});
  for (auto& v : map.data) v = u(rng);
  const Tensor out = postprocess_map(map, pca);
  ASSERT_EQ(out.dims, (std::vector<std::uint32_t>{3, 4, 8}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const auto expect = postprocess(map.cell(i, j), pca);
      const auto got = out.cell(i, j);
      for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(got[k], expect[k]);
    }
}

TEST(PostprocessMap, SingleCellAndConstantMaps) {
  const DescriptorSet set = unit_sphere_sample(100, 4, 7);
  const PcaModel pca = fit_pca(set, 4);
  Tensor one({1, 1, 4}, {0.1f, 0.2f, 0.3f, 0.4f});
  EXPECT_EQ(postprocess_map(one, pca).data, postprocess(one.cell(0, 0), pca));

  Tensor constant({2, 3, 4});
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t k = 0; k < 4; ++k) constant.data[c * 4 + k] = 0.1f * (k + 1);
  const Tensor out = postprocess_map(constant, pca);
  for (std::size_t c = 1; c < 6; ++c)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(out.data[c * 4 + k], out.data[k]);
}

TEST(PostprocessMap, DimensionMismatchIsAnError) {
  const PcaModel pca = PcaModel::identity(4);
  EXPECT_THROW(postprocess_map(Tensor({2, 2, 5}), pca), Error);
  EXPECT_THROW(postprocess_map(Tensor({2, 2}), pca), Error);
}

TEST(PcaPersistence, SaveLoadRoundTrip) {
  blcf::testing::TempDir dir;
  PcaModel pca = fit_pca(unit_sphere_sample(100, 6, 3), 4);
  pca.config_hash = "abc";
  pca.sample_seed = 42;
  save_pca(dir / "pca", pca);
  EXPECT_TRUE(std::filesystem::exists(dir / "pca.mean.blcf"));
  EXPECT_TRUE(std::filesystem::exists(dir / "pca.basis.blcf"));
  const PcaModel back = load_pca(dir / "pca");
  EXPECT_EQ(back.in_dim, 6u);
  EXPECT_EQ(back.out_dim, 4u);
  EXPECT_EQ(back.mean, pca.mean);
  EXPECT_EQ(back.basis, pca.basis);
  EXPECT_EQ(back.epsilon, pca.epsilon);
  EXPECT_EQ(back.config_hash, "abc");
  EXPECT_EQ(back.sample_seed, 42u);
  EXPECT_EQ(read_tensor(dir / "pca.mean.blcf").dims, (std::vector<std::uint32_t>{1, 6}));
}
