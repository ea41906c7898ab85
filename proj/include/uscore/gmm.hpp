#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "uscore/pca.hpp"
#include "uscore/rng.hpp"
#include "uscore/score.hpp"

namespace uscore::gmm {

inline constexpr double kCovarianceRidge = 1e-6;

/// Full-covariance Gaussian mixture with cached Cholesky factors.
class GmmModel {
 public:
  /// Validates the simplex and symmetry constraints and factorizes every
  /// covariance; throws NumericalError if one is not positive definite.
  GmmModel(Vector weights, std::vector<Vector> means, std::vector<Matrix> covariances);

  Eigen::Index n_classes() const { return weights_.size(); }
  Eigen::Index dim() const { return means_.front().size(); }

  const Vector& weights() const { return weights_; }
  const Vector& mean(Eigen::Index k) const { return means_[static_cast<std::size_t>(k)]; }
  const Matrix& covariance(Eigen::Index k) const { return covariances_[static_cast<std::size_t>(k)]; }
  double log_det(Eigen::Index k) const { return log_det_[static_cast<std::size_t>(k)]; }

  /// (x - mu_k)^T Sigma_k^{-1} (x - mu_k) from the cached factor.
  double mahalanobis_sq(Eigen::Index k, const Vector& x) const;
  /// log N(x; mu_k, Sigma_k).
  double log_density(Eigen::Index k, const Vector& x) const;
  /// [n, K] matrix of log w_k + log N(x_i; mu_k, Sigma_k).
  Matrix log_joint(const Matrix& samples) const;

 private:
  Vector weights_;
  std::vector<Vector> means_;
  std::vector<Matrix> covariances_;
  std::vector<Eigen::LLT<Matrix>> factors_;
  std::vector<double> log_det_;
};

struct EmConfig {
  Eigen::Index n_z = 2;
  std::uint64_t seed = 0;
  std::size_t max_iter = 200;
  double tol = 1e-5;
  double ridge = kCovarianceRidge;
};

struct EmTrace {
  std::vector<double> mean_nll;  // entry 0 is the initialization, then one per iteration
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<std::size_t> reinitialized;  // iterations at which an empty class was reseeded
};

struct EmResult {
  GmmModel model;
  EmTrace trace;
};

/// Responsibilities p(z=k | x_i), computed in log space.
Matrix e_step(const GmmModel& model, const Matrix& samples);

/// Weighted maximum-likelihood update followed by symmetrization and a
/// `ridge` * I regularizer. A class whose responsibility mass is below 1e-12
/// is reseeded on a random sample (requires `rng`).
GmmModel m_step(const Matrix& samples, const Matrix& responsibilities, double ridge = kCovarianceRidge,
                Rng* rng = nullptr, bool* reinitialized = nullptr);

/// k-means++ seeded means refined by Lloyd iterations, shared global covariance,
/// uniform weights.
GmmModel initialize(const Matrix& samples, Eigen::Index n_z, Rng& rng, double ridge = kCovarianceRidge);

EmResult em_fit(const Matrix& samples, const EmConfig& config);

/// -log sum_k w_k N(x; mu_k, Sigma_k).
double nll(const GmmModel& model, const Vector& x);
Vector nll(const GmmModel& model, const Matrix& samples);
double mean_nll(const GmmModel& model, const Matrix& samples);

/// argmax_k p(z=k | x); ties go to the lowest index.
Eigen::Index map_class(const GmmModel& model, const Vector& x);

/// Unbiased sample covariance of the rows of `samples`.
Matrix sample_covariance(const Matrix& samples, bool unbiased = true);

// GMM checkpoint with an optional PCA block; layout in docs/file-formats.md.
void save_gmm(const std::filesystem::path& path, const GmmModel& model, const std::optional<PcaModel>& pca);
std::pair<GmmModel, std::optional<PcaModel>> load_gmm(const std::filesystem::path& path);

}  // namespace uscore::gmm
