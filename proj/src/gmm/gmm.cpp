#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "uscore/errors.hpp"
#include "uscore/gmm.hpp"

namespace uscore::gmm {
namespace {

constexpr std::size_t kLloydIterations = 100;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kEmptyClassMass = 1e-12;

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

Matrix sample_covariance(const Matrix& samples, bool unbiased) {
  const Eigen::Index n = samples.rows();
  if (n < 2 && unbiased) throw DataError("covariance needs at least two samples");
  const Matrix centered = samples.rowwise() - samples.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(unbiased ? n - 1 : n);
  return 0.5 * (cov + cov.transpose());
}

GmmModel::GmmModel(Vector weights, std::vector<Vector> means, std::vector<Matrix> covariances)
    : weights_(std::move(weights)), means_(std::move(means)), covariances_(std::move(covariances)) {
  const auto k = static_cast<std::size_t>(weights_.size());
  if (k == 0 || means_.size() != k || covariances_.size() != k) throw ShapeError("GMM component counts disagree");
  if (std::abs(weights_.sum() - 1.0) > 1e-12 || (weights_.array() < 0.0).any())
    throw NumericalError("GMM weights must lie on the simplex");
  const Eigen::Index d = means_.front().size();
  factors_.reserve(k);
  log_det_.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (means_[i].size() != d || covariances_[i].rows() != d || covariances_[i].cols() != d)
      throw ShapeError("GMM component " + std::to_string(i) + " has inconsistent dimensions");
    if ((covariances_[i] - covariances_[i].transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw NumericalError("GMM covariance " + std::to_string(i) + " is not symmetric");
    Eigen::LLT<Matrix> llt(covariances_[i]);
    if (llt.info() != Eigen::Success) throw NumericalError("GMM covariance " + std::to_string(i) + " is not positive definite");
    log_det_.push_back(2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum());
    factors_.push_back(std::move(llt));
  }
}

double GmmModel::mahalanobis_sq(Eigen::Index k, const Vector& x) const {
  if (x.size() != dim()) throw ShapeError("GMM input has " + std::to_string(x.size()) + " entries, expected " + std::to_string(dim()));
  const auto& f = factors_[static_cast<std::size_t>(k)];
  const Vector y = f.matrixL().solve(x - mean(k));
  return y.squaredNorm();
}

double GmmModel::log_density(Eigen::Index k, const Vector& x) const {
  return -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det(k) + mahalanobis_sq(k, x));
}

Matrix GmmModel::log_joint(const Matrix& samples) const {
  if (samples.cols() != dim()) throw ShapeError("GMM input dimension mismatch");
  const Eigen::Index n = samples.rows();
  Matrix out(n, n_classes());
  for (Eigen::Index k = 0; k < n_classes(); ++k) {
    Matrix centered = (samples.rowwise() - mean(k).transpose()).transpose();  // [d, n]
    factors_[static_cast<std::size_t>(k)].matrixL().solveInPlace(centered);
    const Vector maha = centered.colwise().squaredNorm().transpose();
    out.col(k) = (std::log(weights_(k)) - 0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det(k))) -
                 0.5 * maha.array();
  }
  return out;
}

Matrix e_step(const GmmModel& model, const Matrix& samples) {
  Matrix resp = model.log_joint(samples);
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    const double lse = log_sum_exp(resp.row(i).transpose());
    resp.row(i) = (resp.row(i).array() - lse).exp();
  }
  return resp;
}

GmmModel m_step(const Matrix& samples, const Matrix& resp, double ridge, Rng* rng, bool* reinitialized) {
  const Eigen::Index n = samples.rows(), d = samples.cols(), k = resp.cols();
  if (resp.rows() != n) throw ShapeError("responsibility rows do not match samples");
  if (reinitialized) *reinitialized = false;
  const Vector mass = resp.colwise().sum().transpose();
  Vector weights(k);
  std::vector<Vector> means(static_cast<std::size_t>(k));
  std::vector<Matrix> covs(static_cast<std::size_t>(k));
  std::optional<Matrix> global;
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto idx = static_cast<std::size_t>(c);
    if (mass(c) < kEmptyClassMass) {
      if (!rng) throw NumericalError("GMM class " + std::to_string(c) + " lost all responsibility mass");
      if (!global) global = sample_covariance(samples, false);
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      means[idx] = samples.row(pick(*rng)).transpose();
      covs[idx] = *global + ridge * Matrix::Identity(d, d);
      weights(c) = 1.0 / static_cast<double>(n);
      if (reinitialized) *reinitialized = true;
      continue;
    }
    weights(c) = mass(c);
    means[idx] = (samples.transpose() * resp.col(c)) / mass(c);
    const Matrix centered = samples.rowwise() - means[idx].transpose();
    Matrix cov = centered.transpose() * (centered.array().colwise() * resp.col(c).array()).matrix() / mass(c);
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += ridge;
    covs[idx] = std::move(cov);
  }
  weights /= weights.sum();
  return GmmModel(std::move(weights), std::move(means), std::move(covs));
}

namespace {

// Lloyd iterations from the seeded means; a center that loses all its points stays put.
void lloyd_refine(const Matrix& samples, std::vector<Vector>& means) {
  const Eigen::Index n = samples.rows();
  const auto k = static_cast<Eigen::Index>(means.size());
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  for (std::size_t iter = 0; iter < kLloydIterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = (samples.row(i).transpose() - means[static_cast<std::size_t>(c)]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      auto& a = assign[static_cast<std::size_t>(i)];
      changed = changed || a != best;
      a = best;
    }
    if (!changed) break;
    std::vector<Vector> sums(static_cast<std::size_t>(k), Vector::Zero(samples.cols()));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[static_cast<std::size_t>(i)]);
      sums[c] += samples.row(i).transpose();
      ++counts[c];
    }
    for (std::size_t c = 0; c < means.size(); ++c)
      if (counts[c] > 0) means[c] = sums[c] / static_cast<double>(counts[c]);
  }
}

}  // namespace

GmmModel initialize(const Matrix& samples, Eigen::Index n_z, Rng& rng, double ridge) {
  const Eigen::Index n = samples.rows(), d = samples.cols();
  if (n_z <= 0) throw ConfigError("number of classes must be positive");
  if (n < n_z) throw DataError("EM needs at least as many samples as classes");
  Matrix cov = sample_covariance(samples, false);
  cov.diagonal().array() += ridge;

  std::vector<Vector> means;
  std::uniform_int_distribution<Eigen::Index> uniform(0, n - 1);
  means.push_back(samples.row(uniform(rng)).transpose());
  Vector dist2 = (samples.rowwise() - means.back().transpose()).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(means.size()) < n_z) {
    const double total = dist2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist2(i);
        if (acc >= target && dist2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = uniform(rng);
    }
    means.push_back(samples.row(chosen).transpose());
    dist2 = dist2.cwiseMin((samples.rowwise() - means.back().transpose()).rowwise().squaredNorm());
  }
  lloyd_refine(samples, means);
  Vector weights = Vector::Constant(n_z, 1.0 / static_cast<double>(n_z));
  std::vector<Matrix> covs(static_cast<std::size_t>(n_z), cov);
  return GmmModel(std::move(weights), std::move(means), std::move(covs));
}

Vector nll(const GmmModel& model, const Matrix& samples) {
  const Matrix lj = model.log_joint(samples);
  Vector out(lj.rows());
  for (Eigen::Index i = 0; i < lj.rows(); ++i) out(i) = -log_sum_exp(lj.row(i).transpose());
  return out;
}

double nll(const GmmModel& model, const Vector& x) { return nll(model, Matrix(x.transpose()))(0); }

double mean_nll(const GmmModel& model, const Matrix& samples) { return nll(model, samples).mean(); }

Eigen::Index map_class(const GmmModel& model, const Vector& x) {
  const Matrix lj = model.log_joint(Matrix(x.transpose()));
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < lj.cols(); ++k)
    if (lj(0, k) > lj(0, best)) best = k;
  return best;
}

EmResult em_fit(const Matrix& samples, const EmConfig& config) {
  if (config.max_iter == 0) throw ConfigError("max_iter must be positive");
  Rng rng = make_rng(config.seed, 3);
  GmmModel model = initialize(samples, config.n_z, rng, config.ridge);
  EmTrace trace;

  Matrix lj = model.log_joint(samples);
  auto responsibilities_and_nll = [&](Matrix& joint, double& mean) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i) {
      const double lse = log_sum_exp(joint.row(i).transpose());
      total -= lse;
      joint.row(i) = (joint.row(i).array() - lse).exp();
    }
    mean = total / static_cast<double>(joint.rows());
  };
  double current;
  responsibilities_and_nll(lj, current);
  if (!std::isfinite(current)) throw NumericalError("non-finite NLL at EM initialization");
  trace.mean_nll.push_back(current);

  for (std::size_t it = 1; it <= config.max_iter; ++it) {
    bool reseeded = false;
    GmmModel next = m_step(samples, lj, config.ridge, &rng, &reseeded);
    Matrix next_lj = next.log_joint(samples);
    double next_nll;
    responsibilities_and_nll(next_lj, next_nll);
    if (!std::isfinite(next_nll)) throw NumericalError("non-finite NLL at EM iteration " + std::to_string(it));
    trace.iterations = it;
    if (reseeded) trace.reinitialized.push_back(it);
    const double improvement = current - next_nll;
    model = std::move(next);
    lj = std::move(next_lj);
    current = next_nll;
    trace.mean_nll.push_back(current);
    if (!reseeded && improvement < config.tol) {
      trace.converged = true;
      break;
    }
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace uscore::gmm
