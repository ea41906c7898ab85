#include <Eigen/Eigenvalues>
#include <algorithm>
#include <numeric>

#include "uscore/errors.hpp"
#include "uscore/gmm.hpp"
#include "uscore/pca.hpp"

namespace uscore::gmm {

PcaModel pca_fit(const Matrix& samples, Eigen::Index n_h) {
  const Eigen::Index n = samples.rows(), dim = samples.cols();
  if (n_h <= 0 || n_h > dim)
    throw ConfigError("number of principal components (" + std::to_string(n_h) + ") must be in [1, " +
                      std::to_string(dim) + "]");
  if (n <= n_h) throw DataError("PCA needs more samples than components");

  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sample_covariance(samples));
  if (solver.info() != Eigen::Success) throw NumericalError("PCA eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  const Vector& values = solver.eigenvalues();
  const Matrix& vectors = solver.eigenvectors();
  model.components.resize(n_h, dim);
  model.explained_variance.resize(n_h);
  for (Eigen::Index i = 0; i < n_h; ++i) {
    const Eigen::Index src = dim - 1 - i;
    Vector axis = vectors.col(src);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0.0) axis = -axis;
    model.components.row(i) = axis.transpose();
    model.explained_variance(i) = std::max(values(src), 0.0);
  }
  return model;
}

Vector pca_transform(const PcaModel& model, const Vector& x) {
  if (x.size() != model.dim())
    throw ShapeError("PCA input has " + std::to_string(x.size()) + " entries, model expects " +
                     std::to_string(model.dim()));
  return model.components * (x - model.mean);
}

Matrix pca_transform(const PcaModel& model, const Matrix& samples) {
  if (samples.cols() != model.dim()) throw ShapeError("PCA input dimension mismatch");
  return (samples.rowwise() - model.mean.transpose()) * model.components.transpose();
}

Vector pca_inverse(const PcaModel& model, const Vector& feature) {
  if (feature.size() != model.n_components()) throw ShapeError("PCA feature dimension mismatch");
  return model.mean + model.components.transpose() * feature;
}

}  // namespace uscore::gmm
