#include "blcf/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "blcf/error.hpp"

namespace blcf {

void DescriptorSet::push_back(std::span<const float> v) {
  if (v.size() != dim) fail("descriptor length does not match set dimension");
  values.insert(values.end(), v.begin(), v.end());
}

double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

void l2_normalize(std::span<float> v) {
  const double n = l2_norm(v);
  if (n == 0.0) return;
  for (float& x : v) x = static_cast<float>(x / n);
}

PcaModel PcaModel::identity(std::size_t dim) {
  PcaModel m;
  m.in_dim = m.out_dim = dim;
  m.epsilon = 0.0;
  m.mean.assign(dim, 0.0f);
  m.basis.assign(dim * dim, 0.0f);
  for (std::size_t i = 0; i < dim; ++i) m.basis[i * dim + i] = 1.0f;
  m.eigenvalues.assign(dim, 1.0);
  return m;
}

PcaModel fit_pca(const DescriptorSet& features, std::size_t out_dim, double epsilon) {
  const std::size_t n = features.size();
  const std::size_t d = features.dim;
  if (out_dim == 0 || d == 0) fail("PCA dimensions must be positive");
  if (out_dim > d) fail("PCA out_dim exceeds input dimension");
  if (n < out_dim) fail("insufficient samples for PCA");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("PCA epsilon must be positive");
  if (!std::all_of(features.values.begin(), features.values.end(),
                   [](float v) { return std::isfinite(v); })) {
    fail("non-finite values in PCA input");
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = features.row(i);
    for (std::size_t k = 0; k < d; ++k) mean[k] += r[k];
  }
  mean /= static_cast<double>(n);

  // Accumulate the upper triangle row by row in sample order.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                              static_cast<Eigen::Index>(d));
  Eigen::VectorXd centered(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    auto r = features.row(i);
    for (std::size_t k = 0; k < d; ++k) centered[k] = r[k] - mean[k];
    cov.selfadjointView<Eigen::Upper>().rankUpdate(centered);
  }
  cov = cov.selfadjointView<Eigen::Upper>();
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) fail("PCA eigendecomposition failed");

  PcaModel model;
  model.in_dim = d;
  model.out_dim = out_dim;
  model.epsilon = epsilon;
  model.mean.resize(d);
  for (std::size_t k = 0; k < d; ++k) model.mean[k] = static_cast<float>(mean[k]);
  model.basis.resize(out_dim * d);
  model.eigenvalues.resize(out_dim);

  // Eigen returns ascending eigenvalues; take them from the back.
  for (std::size_t r = 0; r < out_dim; ++r) {
    const auto col = static_cast<Eigen::Index>(d - 1 - r);
    const double lambda = std::max(solver.eigenvalues()[col], 0.0);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    // Fix the sign so the largest-magnitude component is positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    const double scale = 1.0 / std::sqrt(lambda + epsilon);
    model.eigenvalues[r] = lambda;
    for (std::size_t k = 0; k < d; ++k) {
      model.basis[r * d + k] = static_cast<float>(v[static_cast<Eigen::Index>(k)] * scale);
    }
  }
  return model;
}

std::vector<float> whiten(std::span<const float> descriptor, const PcaModel& pca) {
  if (descriptor.size() != pca.in_dim) {
    fail("descriptor dimension " + std::to_string(descriptor.size()) +
         " does not match PCA input dimension " + std::to_string(pca.in_dim));
  }
  const double norm = l2_norm(descriptor);
  const double inv = norm > 0.0 ? 1.0 / norm : 0.0;
  std::vector<double> centered(pca.in_dim);
  for (std::size_t k = 0; k < pca.in_dim; ++k) {
    centered[k] = descriptor[k] * inv - pca.mean[k];
  }
  std::vector<float> out(pca.out_dim);
  for (std::size_t r = 0; r < pca.out_dim; ++r) {
    const float* row = pca.basis.data() + r * pca.in_dim;
    double acc = 0.0;
    for (std::size_t k = 0; k < pca.in_dim; ++k) acc += row[k] * centered[k];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

std::vector<float> postprocess(std::span<const float> descriptor, const PcaModel& pca) {
  if (descriptor.size() != pca.in_dim) {
    fail("descriptor dimension " + std::to_string(descriptor.size()) +
         " does not match PCA input dimension " + std::to_string(pca.in_dim));
  }
  if (l2_norm(descriptor) == 0.0) return std::vector<float>(pca.out_dim, 0.0f);
  auto out = whiten(descriptor, pca);
  l2_normalize(out);
  return out;
}

Tensor postprocess_map(const Tensor& feature_map, const PcaModel& pca) {
  if (feature_map.ndim() != 3) fail("postprocess_map expects an M x N x D tensor");
  if (feature_map.channels() != pca.in_dim) {
    fail("feature map depth " + std::to_string(feature_map.channels()) +
         " does not match PCA input dimension " + std::to_string(pca.in_dim));
  }
  const auto m = feature_map.dims[0];
  const auto n = feature_map.dims[1];
  Tensor out({m, n, static_cast<std::uint32_t>(pca.out_dim)});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      auto v = postprocess(feature_map.cell(i, j), pca);
      std::copy(v.begin(), v.end(), out.cell(i, j).begin());
    }
  }
  return out;
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

void save_pca(const std::filesystem::path& prefix, const PcaModel& pca) {
  write_tensor(with_suffix(prefix, ".mean.blcf"),
               Tensor({1u, static_cast<std::uint32_t>(pca.in_dim)}, pca.mean));
  write_tensor(with_suffix(prefix, ".basis.blcf"),
               Tensor({static_cast<std::uint32_t>(pca.out_dim),
                       static_cast<std::uint32_t>(pca.in_dim)},
                      pca.basis));
  nlohmann::json j{{"in_dim", pca.in_dim},
                   {"out_dim", pca.out_dim},
                   {"epsilon", pca.epsilon},
                   {"eigenvalues", pca.eigenvalues},
                   {"config_hash", pca.config_hash},
                   {"sample_seed", pca.sample_seed}};
  const auto path = with_suffix(prefix, ".json");
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail_io("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) fail_io("write failed: " + path.string());
}

PcaModel load_pca(const std::filesystem::path& prefix) {
  const auto path = with_suffix(prefix, ".json");
  std::ifstream in(path);
  if (!in) fail_io("cannot open PCA sidecar: " + path.string());
  PcaModel pca;
  try {
    const auto j = nlohmann::json::parse(in);
    pca.in_dim = j.at("in_dim").get<std::size_t>();
    pca.out_dim = j.at("out_dim").get<std::size_t>();
    pca.epsilon = j.at("epsilon").get<double>();
    if (j.contains("eigenvalues")) pca.eigenvalues = j["eigenvalues"].get<std::vector<double>>();
    if (j.contains("config_hash")) pca.config_hash = j["config_hash"].get<std::string>();
    pca.sample_seed = j.value("sample_seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(path.string() + ": " + e.what());
  }
  Tensor mean = read_tensor(with_suffix(prefix, ".mean.blcf"));
  Tensor basis = read_tensor(with_suffix(prefix, ".basis.blcf"));
  if (mean.dims != std::vector<std::uint32_t>{1u, static_cast<std::uint32_t>(pca.in_dim)} ||
      basis.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(pca.out_dim),
                                               static_cast<std::uint32_t>(pca.in_dim)}) {
    fail("PCA tensors do not match sidecar dimensions: " + prefix.string());
  }
  pca.mean = std::move(mean.data);
  pca.basis = std::move(basis.data);
  return pca;
}

}  // namespace blcf
