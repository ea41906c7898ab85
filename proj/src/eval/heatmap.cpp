#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "uscore/errors.hpp"
#include "uscore/eval.hpp"

namespace uscore::eval {

std::size_t Heatmap::argmax() const {
  if (raw.empty()) throw DataError("empty heatmap");
  return static_cast<std::size_t>(std::max_element(raw.begin(), raw.end()) - raw.begin());
}

std::vector<double> normalize_min_max(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) return out;
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

Heatmap make_heatmap(std::size_t rows, std::size_t cols, std::vector<double> raw) {
  if (raw.size() != rows * cols || raw.empty()) throw ShapeError("heatmap values do not fill the grid");
  Heatmap h;
  h.rows = rows;
  h.cols = cols;
  h.normalized = normalize_min_max(raw);
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  h.raw_min = *lo;
  h.raw_max = *hi;
  h.raw = std::move(raw);
  return h;
}

Heatmap render_heatmap(const nn::Tensor& image, const scoring::PatchScorer& scorer, const data::PatchGrid& grid,
                       ScoreKind kind) {
  if (grid.patch != scorer.patch_size())
    throw ConfigError("heatmap patch " + std::to_string(grid.patch) + " does not match model input " +
                      std::to_string(scorer.patch_size()));
  const std::size_t h = image.dim(image.rank() - 2);
  const std::size_t w = image.dim(image.rank() - 1);
  grid.validate(h, w);
  auto patches = data::sliding_crops(image, grid);
  std::vector<nn::Tensor> pixels;
  pixels.reserve(patches.size());
  for (auto& p : patches) pixels.push_back(std::move(p.pixels));
  const auto scores = scorer.score(pixels);
  std::vector<double> raw;
  raw.reserve(scores.size());
  for (const auto& s : scores) raw.push_back(scoring::select(s, kind));
  return make_heatmap(grid.rows(h), grid.cols(w), std::move(raw));
}

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& heatmap, std::size_t cell) {
  if (cell == 0) throw ConfigError("heatmap cell size must be positive");
  nn::Tensor img({heatmap.rows * cell, heatmap.cols * cell});
  for (std::size_t r = 0; r < img.dim(0); ++r)
    for (std::size_t c = 0; c < img.dim(1); ++c)
      img(r, c) = 1.0 - heatmap.normalized[(r / cell) * heatmap.cols + c / cell];
  data::write_image(path, img);
}

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& heatmap, ScoreKind kind,
                       const data::PatchGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  char buf[160];
  std::snprintf(buf, sizeof buf, "# kind=%s raw_min=%.17g raw_max=%.17g patch=%zu stride=%zu\n",
                std::string(to_string(kind)).c_str(), heatmap.raw_min, heatmap.raw_max, grid.patch, grid.stride);
  out << buf << "row,col,top,left,raw,normalized\n";
  for (std::size_t r = 0; r < heatmap.rows; ++r) {
    for (std::size_t c = 0; c < heatmap.cols; ++c) {
      const std::size_t i = r * heatmap.cols + c;
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%zu,%.17g,%.17g\n", r, c, grid.origin_row + r * grid.stride,
                    grid.origin_col + c * grid.stride, heatmap.raw[i], heatmap.normalized[i]);
      out << buf;
    }
  }
}

}  // namespace uscore::eval
