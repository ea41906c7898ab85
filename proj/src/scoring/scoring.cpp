#include "uscore/scoring.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "uscore/errors.hpp"

namespace uscore {

std::string_view to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::L:
      return "L";
    case ScoreKind::D:
      return "D";
    case ScoreKind::A:
      return "A";
    case ScoreKind::M:
      return "M";
  }
  return "?";
}

ScoreKind parse_score_kind(std::string_view text) {
  if (text.size() == 1) {
    switch (std::toupper(static_cast<unsigned char>(text[0]))) {
      case 'L':
        return ScoreKind::L;
      case 'D':
        return ScoreKind::D;
      case 'A':
        return ScoreKind::A;
      case 'M':
        return ScoreKind::M;
    }
  }
  throw ConfigError("unknown score kind '" + std::string(text) + "' (expected L, D, A or M)");
}

}  // namespace uscore

namespace uscore::scoring {
namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr std::size_t kScoreBatch = 256;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<ScoreBreakdown> score_vae_batch(const vae::VaeModel& model, const Tensor& input) {
  const Tensor batch = vae::as_batch(model, input);
  std::vector<ScoreBreakdown> out;
  out.reserve(batch.dim(0));
  if (model.config().mode == vae::ModelMode::ae) {
    for (double mse : vae::ae_scores(model, batch)) out.push_back(ScoreBreakdown::from_terms(0.0, 0.0, mse));
    return out;
  }
  const auto enc = vae::encode(model, batch);
  const auto dec = vae::decode(model, enc.mu_z);
  return vae::negative_elbo(batch, enc, dec);
}

ScoreBreakdown score_vae(const vae::VaeModel& model, const Tensor& x) { return score_vae_batch(model, x).at(0); }

ScoreBreakdown score_gmm(const gmm::GmmModel& model, const gmm::Vector& x) {
  const Eigen::Index k = gmm::map_class(model, x);
  const double d = -std::log(model.weights()(k));
  const double a = 0.5 * (static_cast<double>(model.dim()) * kLog2Pi + model.log_det(k));
  const double m = 0.5 * model.mahalanobis_sq(k, x);
  if (!std::isfinite(d) || !std::isfinite(a) || !std::isfinite(m)) throw NumericalError("non-finite GMM score");
  return ScoreBreakdown::from_terms(d, a, m);
}

double select(const ScoreBreakdown& s, ScoreKind kind) {
  switch (kind) {
    case ScoreKind::L:
      return s.l;
    case ScoreKind::D:
      return s.d;
    case ScoreKind::A:
      return s.a;
    case ScoreKind::M:
      return s.m;
  }
  return s.l;
}

std::vector<ScoreBreakdown> VaeScorer::score(std::span<const Tensor> patches) const {
  std::vector<ScoreBreakdown> out(patches.size());
  const std::size_t chunks = (patches.size() + kScoreBatch - 1) / kScoreBatch;
  auto run_chunk = [&](std::size_t c) {
    const std::size_t start = c * kScoreBatch;
    const auto chunk = patches.subspan(start, std::min(kScoreBatch, patches.size() - start));
    const auto scores = score_vae_batch(model_, nn::stack_rows(chunk));
    std::copy(scores.begin(), scores.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  };
  const std::size_t workers = std::min<std::size_t>(chunks, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) {
        try {
          run_chunk(c);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<ScoreBreakdown> GmmScorer::score(std::span<const Tensor> patches) const {
  std::vector<ScoreBreakdown> out;
  out.reserve(patches.size());
  for (const auto& p : patches) {
    const gmm::Vector flat = Eigen::Map<const gmm::Vector>(p.data().data(), static_cast<Eigen::Index>(p.size()));
    out.push_back(score_gmm(model_, pca_ ? gmm::pca_transform(*pca_, flat) : flat));
  }
  return out;
}

std::vector<ScoreRow> score_dataset(const PatchScorer& scorer, std::span<const data::LabeledImage> images,
                                    const data::PatchGrid& grid) {
  if (grid.patch != scorer.patch_size())
    throw ConfigError("patch size " + std::to_string(grid.patch) + " does not match model input " +
                      std::to_string(scorer.patch_size()));
  std::vector<ScoreRow> rows;
  std::vector<Tensor> pending;
  std::vector<ScoreRow> pending_rows;
  auto flush = [&] {
    if (pending.empty()) return;
    const auto scores = scorer.score(pending);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      pending_rows[i].score = scores[i];
      rows.push_back(pending_rows[i]);
    }
    pending.clear();
    pending_rows.clear();
  };
  for (std::size_t id = 0; id < images.size(); ++id) {
    for (auto& patch : data::sliding_crops(images[id].pixels, grid)) {
      ScoreRow row;
      row.sample_id = id;
      row.patch_row = patch.row;
      row.patch_col = patch.col;
      row.label = static_cast<int>(images[id].label);
      row.cluster_id = images[id].cluster_id;
      pending.push_back(std::move(patch.pixels));
      pending_rows.push_back(row);
    }
    if (pending.size() >= kScoreBatch) flush();
  }
  flush();
  return rows;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoreRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "sample_id,patch_row,patch_col,D,A,M,L,label,cluster_id\n";
  for (const auto& r : rows) {
    out << r.sample_id << ',' << r.patch_row << ',' << r.patch_col << ',' << format_double(r.score.d) << ','
        << format_double(r.score.a) << ',' << format_double(r.score.m) << ',' << format_double(r.score.l) << ','
        << r.label << ',' << r.cluster_id << '\n';
  }
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores " + path.string());
  std::vector<ScoreRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("sample_id", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 9) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 9 columns");
    try {
      ScoreRow r;
      r.sample_id = std::stoul(f[0]);
      r.patch_row = std::stoul(f[1]);
      r.patch_col = std::stoul(f[2]);
      r.score = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])};
      r.label = std::stoi(f[7]);
      r.cluster_id = std::stoul(f[8]);
      if (r.label != 0 && r.label != 1) throw DataError("label must be 0 or 1");
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace uscore::scoring
