#pragma once

#include <Eigen/Core>

namespace uscore::gmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Principal subspace of a sample set. `components` holds one unit-norm
/// principal axis per row, ordered by decreasing explained variance; each row's
/// largest-magnitude entry is positive.
struct PcaModel {
  Vector mean;
  Matrix components;           // [n_h, dim]
  Vector explained_variance;   // [n_h]

  Eigen::Index dim() const { return mean.size(); }
  Eigen::Index n_components() const { return components.rows(); }
};

/// Fits on `samples` (one sample per row) via the eigendecomposition of the
/// unbiased sample covariance.
PcaModel pca_fit(const Matrix& samples, Eigen::Index n_h);

/// components * (x - mean).
Vector pca_transform(const PcaModel& model, const Vector& x);
/// Row-wise transform of a sample matrix.
Matrix pca_transform(const PcaModel& model, const Matrix& samples);
/// mean + components^T * feature.
Vector pca_inverse(const PcaModel& model, const Vector& feature);

}  // namespace uscore::gmm
