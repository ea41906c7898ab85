#include <fstream>

#include "../common/binary_io.hpp"
#include "uscore/errors.hpp"
#include "uscore/gmm.hpp"

namespace uscore::gmm {
namespace {

constexpr char kGmmMagic[4] = {'U', 'S', 'G', 'M'};
constexpr char kPcaMagic[4] = {'U', 'S', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_matrix(detail::BinaryWriter& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

Matrix read_matrix(detail::BinaryReader& r, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace

void save_gmm(const std::filesystem::path& path, const GmmModel& model, const std::optional<PcaModel>& pca) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  detail::BinaryWriter w(out);
  w.bytes(kGmmMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(model.n_classes()));
  w.u32(static_cast<std::uint32_t>(model.dim()));
  for (Eigen::Index k = 0; k < model.n_classes(); ++k) w.f64(model.weights()(k));
  for (Eigen::Index k = 0; k < model.n_classes(); ++k) write_matrix(w, model.mean(k).transpose());
  for (Eigen::Index k = 0; k < model.n_classes(); ++k) write_matrix(w, model.covariance(k));
  w.u8(pca ? 1 : 0);
  if (pca) {
    w.bytes(kPcaMagic, 4);
    w.u32(static_cast<std::uint32_t>(pca->dim()));
    w.u32(static_cast<std::uint32_t>(pca->n_components()));
    write_matrix(w, pca->mean.transpose());
    write_matrix(w, pca->components);
    write_matrix(w, pca->explained_variance.transpose());
  }
}

std::pair<GmmModel, std::optional<PcaModel>> load_gmm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  detail::BinaryReader r(in);
  r.expect_magic(kGmmMagic, "GMM checkpoint");
  const auto version = r.u32();
  if (version != kVersion) throw DataError("unsupported GMM checkpoint version " + std::to_string(version));
  const auto k = static_cast<Eigen::Index>(r.u32());
  const auto d = static_cast<Eigen::Index>(r.u32());
  if (k <= 0 || d <= 0 || k > 100000 || d > 100000) throw DataError("implausible GMM dimensions in " + path.string());
  Vector weights(k);
  for (Eigen::Index i = 0; i < k; ++i) weights(i) = r.f64();
  std::vector<Vector> means;
  for (Eigen::Index i = 0; i < k; ++i) means.push_back(read_matrix(r, 1, d).transpose());
  std::vector<Matrix> covs;
  for (Eigen::Index i = 0; i < k; ++i) covs.push_back(read_matrix(r, d, d));
  std::optional<PcaModel> pca;
  if (r.u8()) {
    r.expect_magic(kPcaMagic, "PCA block");
    const auto dim = static_cast<Eigen::Index>(r.u32());
    const auto nh = static_cast<Eigen::Index>(r.u32());
    if (nh != d || dim <= 0 || dim > 10'000'000) throw DataError("PCA block does not match GMM dimension");
    PcaModel p;
    p.mean = read_matrix(r, 1, dim).transpose();
    p.components = read_matrix(r, nh, dim);
    p.explained_variance = read_matrix(r, 1, nh).transpose();
    pca = std::move(p);
  }
  try {
    return {GmmModel(std::move(weights), std::move(means), std::move(covs)), std::move(pca)};
  } catch (const NumericalError& e) {
    throw DataError("invalid GMM in " + path.string() + ": " + e.what());
  }
}

}  // namespace uscore::gmm
