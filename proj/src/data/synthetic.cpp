#include <algorithm>
#include <cmath>
#include <numbers>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"

namespace uscore::data {
namespace {

constexpr double kEdgeSoftness = 1.0;  // pixels

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

void render_gray(const ClusterSpec& c, std::size_t height, std::size_t width, Rng& rng, double* out) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double level = c.level * (1.0 + c.amplitude_jitter * unit(rng));
  const double cy = 0.5 * static_cast<double>(height - 1), cx = 0.5 * static_cast<double>(width - 1);

  switch (c.pattern) {
    case Pattern::flat:
      for (std::size_t i = 0; i < height * width; ++i) out[i] = level;
      break;
    case Pattern::edge: {
      const double angle = c.orientation_jitter * unit(rng);
      const double offset = c.phase_jitter * unit(rng) * 0.25 * static_cast<double>(height);
      const double step = c.contrast * (1.0 + c.amplitude_jitter * unit(rng));
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (std::size_t r = 0; r < height; ++r)
        for (std::size_t col = 0; col < width; ++col) {
          const double dist = (static_cast<double>(r) - cy - offset) * ca - (static_cast<double>(col) - cx) * sa;
          out[r * width + col] = level - 0.5 * step + step * sigmoid(dist / kEdgeSoftness);
        }
      break;
    }
    case Pattern::texture: {
      const std::size_t n = std::max<std::size_t>(c.components, 1);
      std::vector<double> freq(n), ct(n), st(n), phase(n), amp(n);
      std::uniform_real_distribution<double> freq_dist(0.5 * c.frequency, c.frequency);
      std::uniform_real_distribution<double> angle_dist(0.0, std::numbers::pi);
      std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi * c.phase_jitter);
      for (std::size_t m = 0; m < n; ++m) {
        freq[m] = freq_dist(rng) * 2.0 * std::numbers::pi / static_cast<double>(height);
        const double theta = angle_dist(rng);
        ct[m] = std::cos(theta);
        st[m] = std::sin(theta);
        phase[m] = phase_dist(rng);
        amp[m] = c.contrast / static_cast<double>(n) * (1.0 + c.amplitude_jitter * unit(rng));
      }
      for (std::size_t r = 0; r < height; ++r)
        for (std::size_t col = 0; col < width; ++col) {
          double v = level;
          for (std::size_t m = 0; m < n; ++m)
            v += amp[m] * std::sin(freq[m] * (static_cast<double>(r) * ct[m] + static_cast<double>(col) * st[m]) + phase[m]);
          out[r * width + col] = v;
        }
      break;
    }
  }
  for (std::size_t i = 0; i < height * width; ++i) out[i] = std::clamp(out[i] + c.noise * gauss(rng), 0.0, 1.0);
}

}  // namespace

std::size_t LabeledImage::mask_count() const {
  return static_cast<std::size_t>(std::count_if(anomaly_mask.begin(), anomaly_mask.end(), [](auto v) { return v != 0; }));
}

std::string to_string(Pattern pattern) {
  switch (pattern) {
    case Pattern::flat:
      return "flat";
    case Pattern::edge:
      return "edge";
    case Pattern::texture:
      return "texture";
  }
  return "?";
}

Pattern parse_pattern(const std::string& text) {
  if (text == "flat") return Pattern::flat;
  if (text == "edge") return Pattern::edge;
  if (text == "texture") return Pattern::texture;
  throw ConfigError("unknown pattern '" + text + "' (expected flat, edge or texture)");
}

SynthSpec SynthSpec::toy_default(std::size_t samples_per_cluster, std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  ClusterSpec simple;
  simple.pattern = Pattern::edge;
  simple.samples = samples_per_cluster;
  simple.level = 0.2;
  simple.contrast = 0.08;
  simple.phase_jitter = 0.5;
  simple.orientation_jitter = 0.2;
  simple.amplitude_jitter = 0.05;
  simple.noise = 0.02;
  ClusterSpec complex;
  complex.pattern = Pattern::texture;
  complex.samples = samples_per_cluster;
  complex.level = 0.8;
  complex.contrast = 0.12;
  complex.frequency = 1.5;
  complex.components = 2;
  complex.phase_jitter = 1.0;
  complex.amplitude_jitter = 0.1;
  complex.noise = 0.08;
  spec.clusters = {simple, complex};
  return spec;
}

void SynthSpec::validate() const {
  if (clusters.empty()) throw ConfigError("synthetic spec has no clusters");
  if (height == 0 || width == 0) throw ConfigError("synthetic image size must be positive");
  if (channels != 1 && channels != 3) throw ConfigError("synthetic images have 1 or 3 channels");
  for (const auto& c : clusters) {
    if (c.samples == 0) throw ConfigError("every cluster needs at least one sample");
    if (c.noise < 0.0 || c.contrast < 0.0 || c.amplitude_jitter < 0.0 || c.phase_jitter < 0.0)
      throw ConfigError("cluster parameters must be non-negative");
    if (c.pattern == Pattern::texture && c.frequency <= 0.0) throw ConfigError("texture frequency must be positive");
  }
}

std::size_t SynthSpec::total_samples() const {
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.samples;
  return n;
}

std::vector<LabeledImage> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::vector<LabeledImage> images;
  images.reserve(spec.total_samples());
  std::size_t index = 0;
  for (std::size_t cid = 0; cid < spec.clusters.size(); ++cid) {
    const auto& cluster = spec.clusters[cid];
    for (std::size_t s = 0; s < cluster.samples; ++s, ++index) {
      Rng rng = make_rng(spec.seed, index);
      LabeledImage img;
      img.cluster_id = cid;
      std::vector<double> gray(spec.height * spec.width);
      render_gray(cluster, spec.height, spec.width, rng, gray.data());
      if (spec.channels == 1) {
        img.pixels = Tensor({spec.height, spec.width}, std::move(gray));
      } else {
        std::uniform_real_distribution<double> tint(0.9, 1.1);
        img.pixels = Tensor({spec.channels, spec.height, spec.width});
        for (std::size_t ch = 0; ch < spec.channels; ++ch) {
          const double t = tint(rng);
          for (std::size_t i = 0; i < gray.size(); ++i)
            img.pixels[ch * gray.size() + i] = std::clamp(gray[i] * t, 0.0, 1.0);
        }
      }
      images.push_back(std::move(img));
    }
  }
  return images;
}

}  // namespace uscore::data
