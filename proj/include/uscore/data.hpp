#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uscore/rng.hpp"
#include "uscore/tensor.hpp"

namespace uscore::data {

using nn::Tensor;

enum class Label : std::uint8_t { normal = 0, anomalous = 1 };

/// An image with values in [0,1], shaped [H, W] (grayscale) or [C, H, W].
struct LabeledImage {
  Tensor pixels;
  Label label = Label::normal;
  std::size_t cluster_id = 0;
  std::vector<std::uint8_t> anomaly_mask;  // H*W ground-truth grid, empty when unknown

  std::size_t channels() const { return pixels.rank() == 3 ? pixels.dim(0) : 1; }
  std::size_t height() const { return pixels.dim(pixels.rank() - 2); }
  std::size_t width() const { return pixels.dim(pixels.rank() - 1); }
  bool has_mask() const { return !anomaly_mask.empty(); }
  std::size_t mask_count() const;
};

// ---- synthetic heterogeneous-complexity generator ------------------------------

enum class Pattern { flat, edge, texture };

std::string to_string(Pattern pattern);
Pattern parse_pattern(const std::string& text);

/// One complexity cluster. Clusters are listed from least to most complex.
struct ClusterSpec {
  Pattern pattern = Pattern::flat;
  std::size_t samples = 0;
  double level = 0.5;             // mean intensity
  double contrast = 0.2;          // edge step height / total grating amplitude
  double frequency = 4.0;         // texture: highest grating frequency, cycles per image
  std::size_t components = 2;     // texture: number of superposed gratings
  double phase_jitter = 1.0;      // texture: phase drawn from [0, 2*pi*jitter); edge: offset in quarter-images
  double orientation_jitter = 0.2;  // edge only, radians
  double amplitude_jitter = 0.1;  // relative jitter of contrast and level
  double noise = 0.02;            // per-pixel Gaussian noise standard deviation
};

struct SynthSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;  // 3 renders tinted RGB copies of the grayscale pattern
  std::vector<ClusterSpec> clusters;
  std::uint64_t seed = 0;

  /// Two clusters: a low-contrast edge and a high-contrast multi-grating texture.
  static SynthSpec toy_default(std::size_t samples_per_cluster = 3000, std::uint64_t seed = 0);
  void validate() const;
  std::size_t total_samples() const;
};

/// Deterministic given spec.seed; image i uses a generator derived from (seed, i)
/// so the output does not depend on generation order.
std::vector<LabeledImage> generate_synthetic(const SynthSpec& spec);

// ---- anomaly injection and splits ---------------------------------------------

inline constexpr double kErasureFill = 0.5;

/// Overwrites a uniformly placed k x k block (fully inside the image) with
/// `fill`, marks it in the mask and labels the image anomalous.
LabeledImage inject_erasure(const LabeledImage& image, std::size_t k, Rng& rng, double fill = kErasureFill);
LabeledImage inject_erasure(const LabeledImage& image, std::size_t k, std::uint64_t seed, double fill = kErasureFill);

struct DatasetSplit {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  std::vector<std::size_t> train_source;  // index into the input normals
  std::vector<std::size_t> test_source;   // both copies of a pair share a source
};

/// floor(n * rho) with a tolerance for representation error in rho.
std::size_t contaminated_count(std::size_t n, double rho);

/// Holds out `held_out` normals for testing (each duplicated: clean + erased copy)
/// and corrupts floor(n * rho) of the remaining training images.
DatasetSplit make_split(std::span<const LabeledImage> normals, std::size_t held_out, std::size_t k, double rho,
                        std::uint64_t seed);

// ---- patches ----------------------------------------------------------------------

struct PatchGrid {
  std::size_t patch = 32;
  std::size_t stride = 16;
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;

  std::size_t rows(std::size_t height) const;
  std::size_t cols(std::size_t width) const;
  void validate(std::size_t height, std::size_t width) const;
};

struct Patch {
  std::size_t row = 0;  // grid position
  std::size_t col = 0;
  Tensor pixels;
};

/// Copies the window with top-left corner (top, left) and side `size`.
Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t size);

/// Uniformly placed size x size crop.
Tensor random_crop(const Tensor& image, std::size_t size, Rng& rng);
Tensor random_crop(const Tensor& image, std::size_t size, std::uint64_t seed);

/// All grid windows in row-major order.
std::vector<Patch> sliding_crops(const Tensor& image, const PatchGrid& grid);

// ---- image and manifest I/O -------------------------------------------------------

/// Binary PGM (P5, 1 channel) or PPM (P6, 3 channels), 8- or 16-bit. Values are
/// scaled to [0,1] by maxval.
Tensor read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor& image, unsigned max_value = 255);
Tensor decode_pnm(const std::string& bytes, const std::string& origin = "<memory>");
std::string encode_pnm(const Tensor& image, unsigned max_value = 255);

struct ManifestEntry {
  std::string path;  // forward-slash path relative to the manifest's directory
  Label label = Label::normal;
  std::size_t cluster_id = 0;
  std::string mask_path;  // optional ground-truth mask image
};

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Loads every image listed in a manifest (paths resolved against its directory).
std::vector<LabeledImage> load_dataset(const std::filesystem::path& manifest_path);

/// Writes images as `<prefix><index>.pgm` under `dir` and returns manifest entries
/// relative to `manifest_dir`. Masks are written alongside as `<prefix><index>_mask.pgm`.
std::vector<ManifestEntry> write_images(const std::filesystem::path& manifest_dir, const std::string& subdir,
                                        std::span<const LabeledImage> images);

}  // namespace uscore::data
