#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include "uscore/errors.hpp"
#include "uscore/eval.hpp"

namespace uscore::eval {

double aggregate_max(std::span<const double> patch_scores) {
  if (patch_scores.empty()) throw DataError("cannot aggregate an empty patch list");
  return *std::max_element(patch_scores.begin(), patch_scores.end());
}

std::vector<double> SampleScores::values(ScoreKind kind) const {
  std::vector<double> out;
  out.reserve(max_scores.size());
  for (const auto& s : max_scores) out.push_back(scoring::select(s, kind));
  return out;
}

SampleScores aggregate_sample_scores(std::span<const scoring::ScoreRow> rows) {
  std::map<std::size_t, std::size_t> slot;
  SampleScores out;
  for (const auto& r : rows) {
    auto [it, inserted] = slot.try_emplace(r.sample_id, out.size());
    if (inserted) {
      out.sample_id.push_back(r.sample_id);
      out.max_scores.push_back(r.score);
      out.labels.push_back(r.label);
      out.cluster_ids.push_back(r.cluster_id);
      continue;
    }
    auto& m = out.max_scores[it->second];
    if (out.labels[it->second] != r.label || out.cluster_ids[it->second] != r.cluster_id)
      throw DataError("sample " + std::to_string(r.sample_id) + " has inconsistent label or cluster across patches");
    m.d = std::max(m.d, r.score.d);
    m.a = std::max(m.a, r.score.a);
    m.m = std::max(m.m, r.score.m);
    m.l = std::max(m.l, r.score.l);
  }
  return out;
}

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("percentile of an empty set");
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.p5 = percentile_sorted(values, 5);
  s.q1 = percentile_sorted(values, 25);
  s.median = percentile_sorted(values, 50);
  s.q3 = percentile_sorted(values, 75);
  s.p95 = percentile_sorted(values, 95);
  return s;
}

std::vector<ClusterStats> cluster_boxstats(std::span<const double> scores, std::span<const int> labels,
                                           std::span<const std::size_t> cluster_ids, Centering center) {
  if (scores.size() != labels.size() || scores.size() != cluster_ids.size())
    throw DataError("scores, labels and cluster ids differ in length");
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& g = groups[cluster_ids[i]];
    (labels[i] == 1 ? g.second : g.first).push_back(scores[i]);
  }
  std::vector<ClusterStats> out;
  for (auto& [id, g] : groups) {
    ClusterStats cs;
    cs.cluster_id = id;
    if (center == Centering::median) {
      std::vector<double> pooled = g.first;
      pooled.insert(pooled.end(), g.second.begin(), g.second.end());
      std::sort(pooled.begin(), pooled.end());
      cs.center = percentile_sorted(pooled, 50);
      for (double& v : g.first) v -= cs.center;
      for (double& v : g.second) v -= cs.center;
    }
    cs.normal = box_stats(std::move(g.first));
    cs.anomalous = box_stats(std::move(g.second));
    out.push_back(cs);
  }
  return out;
}

void write_cluster_stats_csv(const std::filesystem::path& path, ScoreKind kind, std::span<const ClusterStats> stats,
                             bool append) {
  std::ofstream out(path, append ? std::ios::binary | std::ios::app : std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  if (!append) out << "kind,cluster_id,label,count,center,p5,q1,median,q3,p95\n";
  char buf[256];
  for (const auto& cs : stats) {
    for (int label = 0; label < 2; ++label) {
      const BoxStats& b = label == 0 ? cs.normal : cs.anomalous;
      if (b.count == 0) continue;
      std::snprintf(buf, sizeof buf, "%s,%zu,%d,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    std::string(to_string(kind)).c_str(), cs.cluster_id, label, b.count, cs.center, b.p5, b.q1,
                    b.median, b.q3, b.p95);
      out << buf;
    }
  }
}

}  // namespace uscore::eval
