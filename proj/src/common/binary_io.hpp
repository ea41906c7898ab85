#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <span>
#include <vector>

#include "uscore/errors.hpp"

namespace uscore::detail {

// Little-endian primitives shared by the checkpoint formats.

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw DataError("write failed");
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  void u64(std::uint64_t v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  void f64(double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    u64(bits);
  }
  void f64_array(std::span<const double> values) {
    for (double v : values) f64(v);
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw DataError("truncated checkpoint at byte offset " + std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return to_little(v);
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return to_little(v);
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> f64_array(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = f64();
    return out;
  }
  std::size_t offset() const { return offset_; }

  void expect_magic(const char (&magic)[4], const char* what) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) throw DataError(std::string("bad magic bytes for ") + what + " at byte offset 0");
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

}  // namespace uscore::detail
