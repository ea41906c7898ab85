#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uscore/data.hpp"
#include "uscore/errors.hpp"

namespace uscore::data {
namespace {

class HeaderParser {
 public:
  HeaderParser(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 1'000'000'000) fail(std::string("implausible ") + what, start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what, start);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_whitespace() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      fail("expected whitespace before raster", pos_);
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw DataError(origin_ + ": malformed image header: " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_pnm(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw DataError(origin + ": wrong magic bytes at byte offset 0 (expected P5 or P6)");
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderParser p(bytes, origin);
  p.advance(2);
  const std::size_t width = p.number("width");
  const std::size_t height = p.number("height");
  const std::size_t maxval_at = p.pos();
  const std::size_t maxval = p.number("maxval");
  if (width == 0 || height == 0) p.fail("zero image dimension", maxval_at);
  if (maxval == 0 || maxval > 65535) p.fail("maxval out of range", maxval_at);
  p.single_whitespace();
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = width * height * channels;
  const std::size_t start = p.pos();
  if (bytes.size() < start + count * bytes_per)
    throw DataError(origin + ": truncated raster at byte offset " + std::to_string(bytes.size()) + " (expected " +
                    std::to_string(start + count * bytes_per) + " bytes)");
  Tensor out = channels == 1 ? Tensor({height, width}) : Tensor({channels, height, width});
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t v;
    if (bytes_per == 1) {
      v = static_cast<unsigned char>(bytes[start + i]);
    } else {
      v = (static_cast<std::size_t>(static_cast<unsigned char>(bytes[start + 2 * i])) << 8) |
          static_cast<unsigned char>(bytes[start + 2 * i + 1]);
    }
    if (v > maxval) throw DataError(origin + ": sample exceeds maxval at byte offset " + std::to_string(start + i * bytes_per));
    const double value = static_cast<double>(v) * scale;
    if (channels == 1) {
      out[i] = value;
    } else {  // interleaved RGB -> planar
      const std::size_t pixel = i / 3, ch = i % 3;
      out[ch * width * height + pixel] = value;
    }
  }
  return out;
}

std::string encode_pnm(const Tensor& image, unsigned max_value) {
  if (max_value == 0 || max_value > 65535) throw ConfigError("PNM maxval must be in [1, 65535]");
  std::size_t channels, h, w;
  if (image.rank() == 2) {
    channels = 1;
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3)) {
    channels = image.dim(0);
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw ShapeError("cannot encode image of shape " + nn::shape_string(image.shape()));
  }
  std::ostringstream out;
  out << (channels == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << '\n' << max_value << '\n';
  std::string raster;
  raster.reserve(h * w * channels * (max_value > 255 ? 2 : 1));
  for (std::size_t pixel = 0; pixel < h * w; ++pixel) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double v = std::clamp(image[ch * h * w + pixel], 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * max_value));
      if (max_value > 255) raster.push_back(static_cast<char>((q >> 8) & 0xff));
      raster.push_back(static_cast<char>(q & 0xff));
    }
  }
  return out.str() + raster;
}

Tensor read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_pnm(buffer.str(), path.string());
}

void write_image(const std::filesystem::path& path, const Tensor& image, unsigned max_value) {
  const std::string bytes = encode_pnm(image, max_value);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace uscore::data
