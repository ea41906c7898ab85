#include <algorithm>
#include <cmath>
#include <numeric>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"

namespace uscore::data {

LabeledImage inject_erasure(const LabeledImage& image, std::size_t k, Rng& rng, double fill) {
  const std::size_t h = image.height(), w = image.width(), channels = image.channels();
  if (k == 0 || k > std::min(h, w)) throw ConfigError("erasure size must be in [1, min(H, W)]");
  std::uniform_int_distribution<std::size_t> row_dist(0, h - k), col_dist(0, w - k);
  const std::size_t top = row_dist(rng), left = col_dist(rng);
  LabeledImage out = image;
  if (!out.has_mask()) out.anomaly_mask.assign(h * w, 0);
  for (std::size_t r = top; r < top + k; ++r) {
    for (std::size_t c = left; c < left + k; ++c) {
      for (std::size_t ch = 0; ch < channels; ++ch) out.pixels[(ch * h + r) * w + c] = fill;
      out.anomaly_mask[r * w + c] = 1;
    }
  }
  out.label = Label::anomalous;
  return out;
}

LabeledImage inject_erasure(const LabeledImage& image, std::size_t k, std::uint64_t seed, double fill) {
  Rng rng = make_rng(seed);
  return inject_erasure(image, k, rng, fill);
}

std::size_t contaminated_count(std::size_t n, double rho) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * rho + 1e-9));
}

DatasetSplit make_split(std::span<const LabeledImage> normals, std::size_t held_out, std::size_t k, double rho,
                        std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 0.5)) throw ConfigError("contamination ratio must lie in [0, 0.5]");
  if (held_out >= normals.size())
    throw DataError("insufficient samples: " + std::to_string(normals.size()) + " normals cannot hold out " +
                    std::to_string(held_out) + " and still leave a training set");
  Rng rng = make_rng(seed, 0);
  std::vector<std::size_t> order(normals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit split;
  const std::vector<std::size_t> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held_out));
  std::vector<std::size_t> train_ids(order.begin() + static_cast<std::ptrdiff_t>(held_out), order.end());
  std::sort(train_ids.begin(), train_ids.end());

  const std::size_t n_bad = contaminated_count(train_ids.size(), rho);
  std::vector<std::size_t> pick(train_ids.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  std::shuffle(pick.begin(), pick.end(), rng);
  std::vector<bool> corrupt(train_ids.size(), false);
  for (std::size_t i = 0; i < n_bad; ++i) corrupt[pick[i]] = true;

  split.train.reserve(train_ids.size());
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    const auto& src = normals[train_ids[i]];
    split.train.push_back(corrupt[i] ? inject_erasure(src, k, mix_seed(seed, 1'000'000 + train_ids[i])) : src);
    split.train_source.push_back(train_ids[i]);
  }
  split.test.reserve(2 * held_out);
  for (std::size_t id : test_ids) {
    split.test.push_back(normals[id]);
    split.test.push_back(inject_erasure(normals[id], k, mix_seed(seed, 2'000'000 + id)));
    split.test_source.push_back(id);
    split.test_source.push_back(id);
  }
  return split;
}

}  // namespace uscore::data
