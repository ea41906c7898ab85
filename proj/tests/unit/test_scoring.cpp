#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/QR>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"
#include "uscore/scoring.hpp"

using namespace uscore;
using namespace uscore::scoring;
using gmm::GmmModel;
using gmm::Matrix;
using gmm::Vector;

namespace {

Matrix random_spd(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

Vector random_vector(Eigen::Index d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = g(rng);
  return v;
}

double direct_log_density(const Vector& mu, const Matrix& cov, const Vector& x) {
  const Eigen::Index d = x.size();
  const Vector r = x - mu;
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + std::log(cov.determinant()) +
                 r.dot(cov.fullPivLu().solve(r)));
}

GmmModel random_mixture(Eigen::Index k, Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Vector w(k);
  for (Eigen::Index i = 0; i < k; ++i) w[i] = u(rng);
  w /= w.sum();
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (Eigen::Index i = 0; i < k; ++i) {
    means.push_back(random_vector(d, rng, 2.0));
    covs.push_back(random_spd(d, rng));
  }
  return GmmModel(w, means, covs);
}

}  // namespace

TEST_CASE("score kinds") {
  const auto b = ScoreBreakdown::from_terms(1.0, 2.0, 3.0);
  CHECK(select(b, ScoreKind::M) == 3.0);
  CHECK(select(b, ScoreKind::L) == 6.0);
  CHECK(select(b, ScoreKind::D) == 1.0);
  CHECK(select(b, ScoreKind::A) == 2.0);
  for (auto kind : kAllScoreKinds) CHECK(parse_score_kind(to_string(kind)) == kind);
  CHECK(parse_score_kind("m") == ScoreKind::M);
  CHECK_THROWS_AS(parse_score_kind("Q"), ConfigError);
}

TEST_CASE("single-class GMM at its mean") {
  Rng rng(1);
  const Matrix cov = random_spd(3, rng);
  const Vector mu = random_vector(3, rng);
  const GmmModel model(Vector::Ones(1), {mu}, {cov});
  const auto s = score_gmm(model, mu);
  CHECK(s.d == 0.0);
  CHECK(s.m == 0.0);
  CHECK(s.a == doctest::Approx(0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + std::log(cov.determinant()))).epsilon(1e-12));
  CHECK(select(s, ScoreKind::D) == 0.0);
}

TEST_CASE("single-class M is half the Mahalanobis distance from a direct solve") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix cov = random_spd(5, rng);
    const Vector mu = random_vector(5, rng);
    const GmmModel model(Vector::Ones(1), {mu}, {cov});
    const Vector x = random_vector(5, rng, 3.0);
    const Vector r = x - mu;
    const Vector y = cov.colPivHouseholderQr().solve(r);
    CHECK(std::abs(score_gmm(model, x).m - 0.5 * r.dot(y)) < 1e-9);
  }
}

TEST_CASE("GMM L is the MAP-class negative log-likelihood") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_mixture(3, 4, rng);
    const Vector x = random_vector(4, rng, 2.0);
    const auto k = gmm::map_class(model, x);
    const auto s = score_gmm(model, x);
    const double direct = -std::log(model.weights()[k]) - direct_log_density(model.mean(k), model.covariance(k), x);
    CHECK(std::abs(s.l - direct) < 1e-8);
    CHECK(std::abs(s.l - (s.d + s.a + s.m)) < 1e-9);
    CHECK(s.d == doctest::Approx(-std::log(model.weights()[k])));
    CHECK(gmm::nll(model, x) <= s.l + 1e-8);
  }
}

TEST_CASE("equidistant sample in a symmetric two-class model") {
  const Matrix cov = Matrix::Identity(2, 2) * 0.7;
  Vector a(2), b(2), mid(2);
  a << -1.0, 0.5;
  b << 1.0, 0.5;
  mid << 0.0, 2.0;
  const GmmModel ab(Vector::Constant(2, 0.5), {a, b}, {cov, cov});
  const GmmModel ba(Vector::Constant(2, 0.5), {b, a}, {cov, cov});
  CHECK(score_gmm(ab, mid) == score_gmm(ba, mid));
  CHECK(gmm::map_class(ab, mid) == 0);
}

TEST_CASE("class relabeling leaves scores unchanged") {
  Rng rng(4);
  const auto model = random_mixture(3, 3, rng);
  const std::vector<Eigen::Index> perm = {2, 0, 1};
  Vector w(3);
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (Eigen::Index i = 0; i < 3; ++i) {
    w[i] = model.weights()[perm[i]];
    means.push_back(model.mean(perm[i]));
    covs.push_back(model.covariance(perm[i]));
  }
  const GmmModel permuted(w, means, covs);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_vector(3, rng, 2.0);
    const auto s = score_gmm(model, x), t = score_gmm(permuted, x);
    CHECK(s.l == doctest::Approx(t.l).epsilon(1e-12));
    CHECK(s.m == doctest::Approx(t.m).epsilon(1e-12));
    CHECK(gmm::nll(model, x) == doctest::Approx(gmm::nll(permuted, x)).epsilon(1e-12));
  }
}

TEST_CASE("VAE score at an exact reconstruction has M = 0") {
  vae::VaeConfig cfg;
  cfg.arch = vae::Architecture::dense;
  cfg.n_size = 4;
  cfg.n_z = 2;
  cfg.hidden = {8};
  Rng rng(5);
  auto model = vae::VaeModel::create(cfg, rng);
  nn::Tensor x({4, 4});
  std::uniform_real_distribution<double> u;
  for (double& v : x.values()) v = u(rng);
  auto& last = model.decoder().params.layers.back();
  last.weight.fill(0.0);
  last.bias.fill(0.0);
  for (std::size_t i = 0; i < 16; ++i) last.bias[i] = x[i];
  const auto s = score_vae(model, x);
  CHECK(s.m == 0.0);
  CHECK(s.l == s.d + s.a);
  CHECK(s.a == doctest::Approx(8.0 * std::log(2.0 * std::numbers::pi)));
  CHECK(score_vae(model, x) == s);

  nn::Tensor batch({2, 16});
  for (double& v : batch.values()) v = u(rng);
  const auto rows = score_vae_batch(model, batch);
  REQUIRE(rows.size() == 2);
  const auto single = score_vae(model, nn::Tensor({4, 4}, std::vector<double>(batch.row(1).begin(), batch.row(1).end())));
  CHECK(rows[1].l == doctest::Approx(single.l).epsilon(1e-12));
  CHECK(rows[1].m == doctest::Approx(single.m).epsilon(1e-12));
}

TEST_CASE("ae scores report the MSE as M and L") {
  vae::VaeConfig cfg;
  cfg.mode = vae::ModelMode::ae;
  cfg.arch = vae::Architecture::dense;
  cfg.n_size = 4;
  cfg.n_z = 2;
  cfg.hidden = {8};
  Rng rng(6);
  const auto model = vae::VaeModel::create(cfg, rng);
  nn::Tensor x({4, 4}, 0.25);
  const auto s = score_vae(model, x);
  CHECK(s.d == 0.0);
  CHECK(s.a == 0.0);
  CHECK(s.m == s.l);
  CHECK(s.m == doctest::Approx(vae::ae_score(model, x)).epsilon(1e-14));
}

TEST_CASE("dataset scoring covers the grid and keeps labels") {
  Rng rng(7);
  const GmmModel model(Vector::Ones(1), {Vector::Constant(16, 0.5)}, {Matrix::Identity(16, 16)});
  const std::optional<gmm::PcaModel> no_pca;
  const GmmScorer scorer(model, no_pca, 4);
  std::vector<data::LabeledImage> images(2);
  images[0].pixels = nn::Tensor({8, 12}, 0.5);
  images[1].pixels = nn::Tensor({8, 12}, 0.5);
  images[1].pixels[0] = 1.0;
  images[1].label = data::Label::anomalous;
  images[1].cluster_id = 3;
  const auto rows = score_dataset(scorer, images, data::PatchGrid{4, 4});
  REQUIRE(rows.size() == 2 * 2 * 3);
  CHECK(rows[5].patch_row == 1);
  CHECK(rows[5].patch_col == 2);
  CHECK(rows[6].sample_id == 1);
  CHECK(rows[6].label == 1);
  CHECK(rows[6].cluster_id == 3);
  CHECK(rows[6].score.m == doctest::Approx(0.125));
  CHECK(rows[7].score.m == 0.0);
  CHECK_THROWS_AS(score_dataset(scorer, images, data::PatchGrid{5, 4}), ConfigError);
}

TEST_CASE("score dump round-trip") {
  std::vector<ScoreRow> rows;
  Rng rng(8);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < 50; ++i)
    rows.push_back({i / 5, i % 5, i % 3, ScoreBreakdown::from_terms(g(rng), g(rng) * 1e6, std::exp(g(rng))),
                    static_cast<int>(i % 2), i % 4});
  const auto path = std::filesystem::temp_directory_path() / "uscore_scores.csv";
  write_scores_csv(path, rows);
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "sample_id,patch_row,patch_col,D,A,M,L,label,cluster_id");
  }
  const auto back = read_scores_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].sample_id == rows[i].sample_id);
    CHECK(back[i].patch_col == rows[i].patch_col);
    CHECK(back[i].score == rows[i].score);
    CHECK(back[i].label == rows[i].label);
    CHECK(back[i].cluster_id == rows[i].cluster_id);
  }
  std::ofstream(path) << "sample_id,patch_row,patch_col,D,A,M,L,label,cluster_id\n0,0,0,1,2,3\n";
  CHECK_THROWS_AS(read_scores_csv(path), DataError);
  std::filesystem::remove(path);
}
