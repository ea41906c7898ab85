// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "grad_check.hpp"
#include "uscore/config.hpp"
#include "uscore/data.hpp"
#include "uscore/eval.hpp"
#include "uscore/gmm.hpp"
#include "uscore/scoring.hpp"
#include "uscore/vae.hpp"

using namespace uscore;
using gmm::Matrix;
using gmm::Vector;
using nn::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Tensor uniform_batch(std::size_t b, std::size_t n, Rng& rng) {
  Tensor t({b, n});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// ---- model-level criteria ------------------------------------------------------

Outcome decomposition_identity() {
  const auto t0 = Clock::now();
  Rng rng(101);
  auto model = vae::VaeModel::create(vae::VaeConfig{}, rng);
  double worst = 0.0;
  for (int chunk = 0; chunk < 10; ++chunk) {
    const auto rows = scoring::score_vae_batch(model, uniform_batch(100, 1024, rng));
    for (const auto& s : rows) worst = std::max(worst, std::abs(s.l - (s.d + s.a + s.m)));
  }
  const double t = seconds_since(t0);
  return {worst < 1e-9 && t < 10.0, fmt("max |L-(D+A+M)| = %.3g over 1000 inputs, %.1fs", worst, t)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  vae::VaeConfig cfg;
  cfg.arch = vae::Architecture::dense;
  cfg.n_size = 8;
  cfg.n_z = 2;
  cfg.hidden = {32, 16};
  Rng rng(202);
  auto model = vae::VaeModel::create(cfg, rng);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto* net : {&model.encoder(), &model.decoder()})
    for (auto& p : net->params.layers)
      for (double& b : p.bias.values()) b = g(rng);
  const Tensor x = uniform_batch(4, 64, rng);
  Tensor noise({4, 2});
  for (double& v : noise.values()) v = g(rng) * 10.0;
  const auto lg = vae::loss_and_gradients(model, x, noise, nn::Mode::train);
  auto loss = [&] { return vae::loss_and_gradients(model, x, noise, nn::Mode::train).loss; };
  test_support::GradCheck gc;
  test_support::check_params(model.encoder().params, lg.encoder_grads, loss, gc, "encoder");
  test_support::check_params(model.decoder().params, lg.decoder_grads, loss, gc, "decoder");
  const double t = seconds_since(t0);
  return {gc.max_rel_error < 1e-4 && t < 60.0,
          fmt("max relative error %.3g over %zu parameters, %.1fs", gc.max_rel_error, gc.checked, t)};
}

Outcome kl_closed_form() {
  Rng rng(303);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_int_distribution<int> dim(1, 5);
  double worst_z = 0.0;
  const std::size_t n = 1000000;
  for (int trial = 0; trial < 20; ++trial) {
    const int d = dim(rng);
    std::vector<double> mu(d), lv(d);
    for (int j = 0; j < d; ++j) mu[j] = u(rng), lv[j] = u(rng);
    const std::vector<double> x = {0.0};
    const double closed = vae::negative_elbo(x, mu, lv, x, x).d;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double log_ratio = 0.0;
      for (int j = 0; j < d; ++j) {
        const double e = g(rng);
        const double z = mu[j] + std::exp(0.5 * lv[j]) * e;
        log_ratio += -0.5 * lv[j] - 0.5 * e * e + 0.5 * z * z;
      }
      sum += log_ratio;
      sq += log_ratio * log_ratio;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    worst_z = std::max(worst_z, std::abs(mean - closed) / se);
  }
  return {worst_z < 3.0, fmt("max |MC - D| = %.2f standard errors over 20 posteriors", worst_z)};
}

Outcome heteroscedastic_identity() {
  Rng rng(404);
  auto model = vae::VaeModel::create(vae::VaeConfig{}, rng);
  double worst = 0.0;
  for (int chunk = 0; chunk < 4; ++chunk) {
    const Tensor x = uniform_batch(50, 1024, rng);
    const auto enc = vae::encode(model, x);
    const auto dec = vae::decode(model, enc.mu_z);
    const auto rows = vae::negative_elbo(x, enc, dec);
    for (std::size_t b = 0; b < rows.size(); ++b) {
      double half_sq = 0.0;
      for (std::size_t i = 0; i < 1024; ++i) {
        const double eps = (x(b, i) - dec.mu_x(b, i)) / std::exp(0.5 * dec.log_var_x(b, i));
        half_sq += 0.5 * eps * eps;
      }
      worst = std::max(worst, std::abs(rows[b].m - half_sq));
    }
  }
  return {worst < 1e-12, fmt("max |M - 0.5*||(x-mu)/sigma||^2| = %.3g over 200 inputs", worst)};
}

// ---- GMM criteria -----------------------------------------------------------------

double plain_density(const Vector& mu, const Matrix& cov, const Vector& x) {
  const Vector r = x - mu;
  return std::exp(-0.5 * r.dot(cov.inverse() * r)) /
         std::sqrt(std::pow(2.0 * std::numbers::pi, double(x.size())) * cov.determinant());
}

Matrix random_spd(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a * a.transpose() + 0.3 * Matrix::Identity(d, d);
}

// Largest increase of the mean NLL between consecutive recorded iterations.
double worst_em_step(const gmm::EmTrace& trace) {
  double worst = -1e300;
  for (std::size_t i = 1; i < trace.mean_nll.size(); ++i) worst = std::max(worst, trace.mean_nll[i] - trace.mean_nll[i - 1]);
  return worst;
}

double g_em_worst = -1e300;
std::size_t g_em_runs = 0;

gmm::EmResult tracked_em(const Matrix& x, const gmm::EmConfig& cfg) {
  auto fit = gmm::em_fit(x, cfg);
  g_em_worst = std::max(g_em_worst, worst_em_step(fit.trace));
  ++g_em_runs;
  return fit;
}

Outcome gmm_oracles() {
  Rng rng(505);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> npts(2, 5), ndim(1, 3), ncls(1, 3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  double e_err = 0.0, m_err = 0.0, nll_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = npts(rng), d = ndim(rng), k = std::min(ncls(rng), n);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
    Vector w(k);
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    for (int c = 0; c < k; ++c) {
      w[c] = u(rng);
      Vector m(d);
      for (int j = 0; j < d; ++j) m[j] = g(rng);
      means.push_back(m);
      covs.push_back(random_spd(d, rng));
    }
    w /= w.sum();
    const gmm::GmmModel model(w, means, covs);

    const Matrix resp = gmm::e_step(model, x);
    for (int i = 0; i < n; ++i) {
      const Vector xi = x.row(i).transpose();
      std::vector<double> joint(k);
      double total = 0.0;
      for (int c = 0; c < k; ++c) total += joint[c] = w[c] * plain_density(means[c], covs[c], xi);
      for (int c = 0; c < k; ++c) e_err = std::max(e_err, std::abs(resp(i, c) - joint[c] / total));
      nll_err = std::max(nll_err, std::abs(gmm::nll(model, xi) + std::log(total)));
    }

    const gmm::GmmModel updated = gmm::m_step(x, resp, gmm::kCovarianceRidge);
    for (int c = 0; c < k; ++c) {
      const double nk = resp.col(c).sum();
      Vector mu = Vector::Zero(d);
      for (int i = 0; i < n; ++i) mu += resp(i, c) * x.row(i).transpose();
      mu /= nk;
      Matrix cov = Matrix::Zero(d, d);
      for (int i = 0; i < n; ++i) {
        const Vector r = x.row(i).transpose() - mu;
        cov += resp(i, c) * r * r.transpose();
      }
      cov = cov / nk + gmm::kCovarianceRidge * Matrix::Identity(d, d);
      m_err = std::max({m_err, std::abs(updated.weights()[c] - nk / n), (updated.mean(c) - mu).cwiseAbs().maxCoeff(),
                        (updated.covariance(c) - cov).cwiseAbs().maxCoeff()});
    }
  }
  // Small clustered problems; the benchmark fits of the GMM trend are tracked as well.
  for (int trial = 0; trial < 20; ++trial) {
    Matrix x(150, 3);
    for (Eigen::Index i = 0; i < 150; ++i)
      for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = g(rng) * (0.2 + 0.3 * (i % 3)) + 2.0 * (i % 3);
    gmm::EmConfig cfg;
    cfg.n_z = 1 + trial % 5;
    cfg.seed = 600 + static_cast<std::uint64_t>(trial);
    tracked_em(x, cfg);
  }
  const bool pass = e_err < 1e-10 && m_err < 1e-10 && nll_err < 1e-10 && g_em_worst <= 1e-8;
  return {pass, fmt("e_step %.2g, m_step %.2g, nll %.2g max abs error on 200 instances; "
                    "largest mean-NLL increase %.3g over %zu EM runs",
                    e_err, m_err, nll_err, g_em_worst, g_em_runs)};
}

Outcome mahalanobis_special_case() {
  Rng rng(707);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 1 + trial % 8;
    const Matrix cov = random_spd(d, rng);
    Vector mu(d), x(d);
    for (Eigen::Index j = 0; j < d; ++j) mu[j] = g(rng), x[j] = 3.0 * g(rng);
    const gmm::GmmModel model(Vector::Ones(1), {mu}, {cov});
    const Vector r = x - mu;
    const Vector y = cov.colPivHouseholderQr().solve(r);
    worst = std::max(worst, std::abs(scoring::score_gmm(model, x).m - 0.5 * r.dot(y)));
  }
  return {worst < 1e-9, fmt("max |M - d^2/2| = %.3g over 200 cases", worst)};
}

// ---- evaluation criteria ----------------------------------------------------------

Outcome auc_oracle() {
  Rng rng(808);
  std::uniform_int_distribution<int> size(2, 300), levels(1, 40);
  double worst = 0.0;
  std::size_t tied = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng), lv = levels(rng);
    std::uniform_int_distribution<int> value(0, lv);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      l[i] = i % 2;
      s[i] = value(rng) * 0.25 + 0.1 * l[i] * (trial % 3);
    }
    std::shuffle(l.begin(), l.end(), rng);
    std::vector<double> sorted(s);
    std::sort(sorted.begin(), sorted.end());
    tied += std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    worst = std::max(worst, std::abs(eval::roc_auc(s, l).auc - eval::auc_pairwise_oracle(s, l)));
  }
  return {worst < 1e-12, fmt("max |roc - oracle| = %.3g over 1000 instances (%zu with ties)", worst, tied)};
}

// ---- benchmark criteria -----------------------------------------------------------

struct Benchmark {
  config::ExperimentConfig cfg;
  data::DatasetSplit split;
};

Benchmark make_benchmark(std::uint64_t seed) {
  Benchmark b;
  b.cfg.set_seed(seed);
  b.cfg.validate();
  const auto normals = data::generate_synthetic(b.cfg.dataset.synth);
  b.split = data::make_split(normals, b.cfg.dataset.held_out, b.cfg.dataset.erasure, b.cfg.dataset.contamination,
                             mix_seed(seed, 4));
  return b;
}

double pixel_variance(std::span<const data::LabeledImage> images, std::size_t cluster) {
  std::vector<double> sum, sq;
  double n = 0.0;
  for (const auto& im : images) {
    if (im.cluster_id != cluster) continue;
    if (sum.empty()) sum.assign(im.pixels.size(), 0.0), sq.assign(im.pixels.size(), 0.0);
    for (std::size_t i = 0; i < im.pixels.size(); ++i) sum[i] += im.pixels[i], sq[i] += im.pixels[i] * im.pixels[i];
    n += 1.0;
  }
  double v = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) v += (sq[i] - sum[i] * sum[i] / n) / (n - 1.0);
  return v / static_cast<double>(sum.size());
}

std::vector<Tensor> pixels_of(std::span<const data::LabeledImage> images) {
  std::vector<Tensor> out;
  for (const auto& im : images) out.push_back(im.pixels);
  return out;
}

double normal_median_spread(const eval::SampleScores& s, ScoreKind kind) {
  const auto stats = eval::cluster_boxstats(s.values(kind), s.labels, s.cluster_ids);
  double lo = 1e300, hi = -1e300;
  for (const auto& c : stats) lo = std::min(lo, c.normal.median), hi = std::max(hi, c.normal.median);
  return hi - lo;
}

struct VaeRun {
  double auc_l = 0.0, auc_m = 0.0, spread_a = 0.0, spread_m = 0.0, variance_ratio = 0.0, seconds = 0.0;
};

VaeRun run_vae_benchmark(std::uint64_t seed) {
  const auto t0 = Clock::now();
  auto b = make_benchmark(seed);
  VaeRun r;
  r.variance_ratio = pixel_variance(b.split.train, 1) / pixel_variance(b.split.train, 0);
  auto vcfg = b.cfg.model.vae;
  vcfg.arch = vae::Architecture::dense;
  vcfg.hidden = {512, 256};
  Rng rng = make_rng(b.cfg.train.vae.seed, 1);
  auto model = vae::VaeModel::create(vcfg, rng);
  auto tc = b.cfg.train.vae;
  tc.epochs = 30;
  vae::train(model, pixels_of(b.split.train), tc);
  const scoring::VaeScorer scorer(model);
  const auto agg = eval::aggregate_sample_scores(scoring::score_dataset(scorer, b.split.test, b.cfg.eval.grid));
  r.auc_l = eval::roc_auc(agg.values(ScoreKind::L), agg.labels).auc;
  r.auc_m = eval::roc_auc(agg.values(ScoreKind::M), agg.labels).auc;
  r.spread_a = normal_median_spread(agg, ScoreKind::A);
  r.spread_m = normal_median_spread(agg, ScoreKind::M);
  r.seconds = seconds_since(t0);
  std::fprintf(stderr, "[acceptance] vae seed %llu: AUC L %.3f M %.3f, spread A %.1f M %.1f, variance ratio %.1f, %.0fs\n",
               static_cast<unsigned long long>(seed), r.auc_l, r.auc_m, r.spread_a, r.spread_m, r.variance_ratio,
               r.seconds);
  return r;
}

std::vector<VaeRun> g_vae_runs;

const std::vector<VaeRun>& vae_runs() {
  if (g_vae_runs.empty())
    for (std::uint64_t seed : {0, 1, 2}) g_vae_runs.push_back(run_vae_benchmark(seed));
  return g_vae_runs;
}

Outcome headline_effect() {
  const auto& runs = vae_runs();
  std::vector<double> gap, auc_m, ratio;
  double total = 0.0;
  for (const auto& r : runs) {
    gap.push_back(r.auc_m - r.auc_l);
    auc_m.push_back(r.auc_m);
    ratio.push_back(r.variance_ratio);
    total += r.seconds;
  }
  const double g = median3(gap), m = median3(auc_m);
  const bool pass = g >= 0.05 && m >= 0.85 && median3(ratio) >= 10.0 && total < 15 * 60.0;
  return {pass, fmt("median AUC(M)-AUC(L) = %+.3f, median AUC(M) = %.3f, variance ratio %.1f, %.0fs for 3 seeds", g, m,
                    median3(ratio), total)};
}

Outcome complexity_sensitivity() {
  std::vector<double> factor;
  for (const auto& r : vae_runs()) factor.push_back(r.spread_a / r.spread_m);
  const double f = median3(factor);
  return {f >= 2.0, fmt("median spread(A)/spread(M) = %.1f", f)};
}

Outcome gmm_trend() {
  std::vector<double> at2, at20;
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto t0 = Clock::now();
    auto b = make_benchmark(seed);
    const auto& grid = b.cfg.eval.grid;
    Matrix x(static_cast<Eigen::Index>(b.split.train.size()), static_cast<Eigen::Index>(grid.patch * grid.patch));
    for (std::size_t i = 0; i < b.split.train.size(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(static_cast<Eigen::Index>(i), j) = b.split.train[i].pixels[j];
    const std::optional<gmm::PcaModel> pca = gmm::pca_fit(x, static_cast<Eigen::Index>(b.cfg.model.n_h));
    const Matrix features = gmm::pca_transform(*pca, x);
    for (Eigen::Index n_z : {2, 20}) {
      auto em = b.cfg.train.em;
      em.n_z = n_z;
      const auto fit = tracked_em(features, em);
      const scoring::GmmScorer scorer(fit.model, pca, grid.patch);
      const auto agg = eval::aggregate_sample_scores(scoring::score_dataset(scorer, b.split.test, grid));
      (n_z == 2 ? at2 : at20).push_back(eval::roc_auc(agg.values(ScoreKind::D), agg.labels).auc);
    }
    std::fprintf(stderr, "[acceptance] gmm seed %llu: D-AUC N_z=2 %.3f, N_z=20 %.3f, %.0fs\n",
                 static_cast<unsigned long long>(seed), at2.back(), at20.back(), seconds_since(t0));
  }
  const double a2 = median3(at2), a20 = median3(at20);
  return {a20 <= a2, fmt("median D-AUC N_z=2 %.3f, N_z=20 %.3f", a2, a20)};
}

Outcome heatmap_localization() {
  const std::uint64_t seed = 0;
  config::ExperimentConfig cfg;
  cfg.set_seed(seed);
  auto spec = data::SynthSpec::toy_default(1510, cfg.dataset.synth.seed);
  spec.height = spec.width = 64;
  const auto normals = data::generate_synthetic(spec);
  const auto split = data::make_split(normals, 20, 4, 0.01, mix_seed(seed, 4));
  vae::VaeConfig vcfg;
  vcfg.arch = vae::Architecture::dense;
  vcfg.n_size = 16;
  vcfg.n_z = 20;
  Rng rng = make_rng(cfg.train.vae.seed, 1);
  auto model = vae::VaeModel::create(vcfg, rng);
  auto tc = cfg.train.vae;
  tc.epochs = 30;
  tc.steps_per_epoch = 150;
  vae::train(model, pixels_of(split.train), tc);

  const scoring::VaeScorer scorer(model);
  const data::PatchGrid grid{16, 4};
  int hits = 0, total = 0;
  for (const auto& im : split.test) {
    if (im.label != data::Label::anomalous) continue;
    const auto hm = eval::render_heatmap(im.pixels, scorer, grid, ScoreKind::M);
    const std::size_t cell = hm.argmax(), top = cell / hm.cols * grid.stride, left = cell % hm.cols * grid.stride;
    bool hit = false;
    for (std::size_t r = top; r < top + grid.patch; ++r)
      for (std::size_t c = left; c < left + grid.patch; ++c) hit = hit || im.anomaly_mask[r * im.width() + c];
    hits += hit;
    ++total;
  }
  return {total == 20 && hits >= 16, fmt("argmax window overlaps the erasure in %d/%d images", hits, total)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"decomposition identity", decomposition_identity},
      {"gradient correctness", gradient_check},
      {"KL closed form", kl_closed_form},
      {"heteroscedastic identity", heteroscedastic_identity},
      {"Mahalanobis special case", mahalanobis_special_case},
      {"AUC oracle", auc_oracle},
      {"headline effect", headline_effect},
      {"complexity sensitivity", complexity_sensitivity},
      {"GMM trend", gmm_trend},
      {"GMM oracle equivalence", gmm_oracles},
      {"heatmap localization", heatmap_localization},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
