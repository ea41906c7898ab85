#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uscore/data.hpp"
#include "uscore/score.hpp"
#include "uscore/scoring.hpp"

namespace uscore::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // samples with score >= threshold are flagged; +inf for the origin
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Sweeps every distinct score as a threshold (tied scores move together) and
/// integrates with the trapezoid rule. Labels are 1 for anomalous, 0 for normal.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

/// P(anomalous > normal) + P(equal) / 2 by direct pair enumeration.
double auc_pairwise_oracle(std::span<const double> scores, std::span<const int> labels);

double aggregate_max(std::span<const double> patch_scores);

/// Per-sample maxima of each score kind over that sample's patches.
struct SampleScores {
  std::vector<std::size_t> sample_id;
  std::vector<ScoreBreakdown> max_scores;  // each term maximized independently
  std::vector<int> labels;
  std::vector<std::size_t> cluster_ids;

  std::size_t size() const { return sample_id.size(); }
  std::vector<double> values(ScoreKind kind) const;
};

SampleScores aggregate_sample_scores(std::span<const scoring::ScoreRow> rows);

/// Linear interpolation between order statistics of sorted data: position p/100 * (n-1).
double percentile_sorted(std::span<const double> sorted, double p);

struct BoxStats {
  std::size_t count = 0;
  double p5 = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double p95 = 0.0;
};

BoxStats box_stats(std::vector<double> values);

enum class Centering { none, median };

struct ClusterStats {
  std::size_t cluster_id = 0;
  double center = 0.0;  // subtracted offset: pooled median of the cluster, or 0
  BoxStats normal;
  BoxStats anomalous;
};

/// One entry per cluster id, ascending. With Centering::median every score of a
/// cluster is shifted by the median of its pooled normal and anomalous scores.
std::vector<ClusterStats> cluster_boxstats(std::span<const double> scores, std::span<const int> labels,
                                           std::span<const std::size_t> cluster_ids,
                                           Centering center = Centering::none);

struct Heatmap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> raw;         // row-major
  std::vector<double> normalized;  // (raw - min) / (max - min), all zeros when max == min
  double raw_min = 0.0;
  double raw_max = 0.0;

  std::size_t argmax() const;  // first maximal raw cell
};

std::vector<double> normalize_min_max(std::span<const double> values);
Heatmap make_heatmap(std::size_t rows, std::size_t cols, std::vector<double> raw);

/// Scores every window of `grid` over `image` and places it at its grid cell.
Heatmap render_heatmap(const nn::Tensor& image, const scoring::PatchScorer& scorer, const data::PatchGrid& grid,
                       ScoreKind kind);

/// Grayscale map with brighter pixels for lower scores, upscaled by `cell` pixels per grid cell.
void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& heatmap, std::size_t cell = 1);
/// Raw and normalized values per cell; the raw range goes in a leading comment line.
void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& heatmap, ScoreKind kind,
                       const data::PatchGrid& grid);

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc);
void write_cluster_stats_csv(const std::filesystem::path& path, ScoreKind kind, std::span<const ClusterStats> stats,
                             bool append = false);
/// Plots one ROC CSV per score kind with gnuplot.
void write_roc_gnuplot(const std::filesystem::path& path, std::span<const std::pair<std::string, std::string>> curves,
                       const std::string& png_name);

}  // namespace uscore::eval
