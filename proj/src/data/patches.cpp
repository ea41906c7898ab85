#include <algorithm>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"

namespace uscore::data {
namespace {

void image_dims(const Tensor& image, std::size_t& channels, std::size_t& h, std::size_t& w) {
  if (image.rank() == 2) {
    channels = 1;
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3) {
    channels = image.dim(0);
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw ShapeError("images must be [H, W] or [C, H, W], got " + nn::shape_string(image.shape()));
  }
}

}  // namespace

std::size_t PatchGrid::rows(std::size_t height) const { return (height - origin_row - patch) / stride + 1; }
std::size_t PatchGrid::cols(std::size_t width) const { return (width - origin_col - patch) / stride + 1; }

void PatchGrid::validate(std::size_t height, std::size_t width) const {
  if (patch == 0 || stride == 0) throw ConfigError("patch size and stride must be positive");
  if (origin_row + patch > height || origin_col + patch > width)
    throw ConfigError("patch of size " + std::to_string(patch) + " does not fit a " + std::to_string(height) + "x" +
                      std::to_string(width) + " image");
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t size) {
  std::size_t channels, h, w;
  image_dims(image, channels, h, w);
  if (top + size > h || left + size > w) throw ShapeError("crop window exceeds image bounds");
  Tensor out = image.rank() == 2 ? Tensor({size, size}) : Tensor({channels, size, size});
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t r = 0; r < size; ++r) {
      const auto src = image.data().subspan((ch * h + top + r) * w + left, size);
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>((ch * size + r) * size));
    }
  return out;
}

Tensor random_crop(const Tensor& image, std::size_t size, Rng& rng) {
  std::size_t channels, h, w;
  image_dims(image, channels, h, w);
  if (size == 0 || size > std::min(h, w))
    throw ConfigError("crop size " + std::to_string(size) + " exceeds image size");
  if (size == h && size == w) return image;
  std::uniform_int_distribution<std::size_t> rows(0, h - size), cols(0, w - size);
  const std::size_t top = rows(rng);
  const std::size_t left = cols(rng);
  return crop(image, top, left, size);
}

Tensor random_crop(const Tensor& image, std::size_t size, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return random_crop(image, size, rng);
}

std::vector<Patch> sliding_crops(const Tensor& image, const PatchGrid& grid) {
  std::size_t channels, h, w;
  image_dims(image, channels, h, w);
  grid.validate(h, w);
  const std::size_t rows = grid.rows(h), cols = grid.cols(w);
  std::vector<Patch> out;
  out.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out.push_back({r, c, crop(image, grid.origin_row + r * grid.stride, grid.origin_col + c * grid.stride, grid.patch)});
  return out;
}

}  // namespace uscore::data
