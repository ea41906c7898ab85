#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "uscore/errors.hpp"
#include "uscore/eval.hpp"

namespace uscore::eval {
namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DataError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                    std::to_string(labels.size()) + ")");
  ClassCounts counts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    if (std::isnan(scores[i])) throw DataError("NaN score at index " + std::to_string(i));
    (labels[i] == 1 ? counts.positives : counts.negatives)++;
  }
  if (counts.positives == 0 || counts.negatives == 0) throw DataError("ROC needs both normal and anomalous samples");
  return counts;
}

}  // namespace

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double p = static_cast<double>(counts.positives);
  const double n = static_cast<double>(counts.negatives);
  RocCurve roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0;
  std::size_t fp = 0;
  // Twice the area in units of one (positive, negative) pair; exact in double.
  double twice_area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    const std::size_t tp_before = tp;
    const std::size_t fp_before = fp;
    for (; i < order.size() && scores[order[i]] == threshold; ++i) (labels[order[i]] == 1 ? tp : fp)++;
    twice_area += static_cast<double>(fp - fp_before) * static_cast<double>(tp + tp_before);
    roc.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, threshold});
  }
  roc.auc = twice_area / (2.0 * p * n);
  return roc;
}

double auc_pairwise_oracle(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = check_inputs(scores, labels);
  double twice_wins = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j])
        twice_wins += 2.0;
      else if (scores[i] == scores[j])
        twice_wins += 1.0;
    }
  }
  return twice_wins / (2.0 * static_cast<double>(counts.positives) * static_cast<double>(counts.negatives));
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  char buf[96];
  std::snprintf(buf, sizeof buf, "# auc=%.17g\n", roc.auc);
  out << buf << "fpr,tpr,threshold\n";
  for (const auto& pt : roc.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", pt.fpr, pt.tpr, pt.threshold);
    out << buf;
  }
}

void write_roc_gnuplot(const std::filesystem::path& path, std::span<const std::pair<std::string, std::string>> curves,
                       const std::string& png_name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "set datafile separator ','\n"
      << "set terminal pngcairo size 640,640\n"
      << "set output '" << png_name << "'\n"
      << "set xlabel 'FPR'\nset ylabel 'TPR'\nset xrange [0:1]\nset yrange [0:1]\nset key bottom right\n"
      << "plot x with lines dashtype 2 lc 'gray' notitle";
  for (const auto& [label, file] : curves) out << ", \\\n  '" << file << "' skip 2 using 1:2 with lines title '" << label << "'";
  out << '\n';
}

}  // namespace uscore::eval
