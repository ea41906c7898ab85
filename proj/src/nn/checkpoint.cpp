#include "uscore/checkpoint.hpp"

#include <fstream>
#include <string>

#include "../common/binary_io.hpp"
#include "uscore/errors.hpp"

namespace uscore::nn {
namespace {

constexpr std::size_t kMaxRank = 8;

void write_tensor(detail::BinaryWriter& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  w.f64_array(t.values());
}

Tensor read_tensor(detail::BinaryReader& r) {
  const std::size_t at = r.offset();
  const std::uint32_t rank = r.u32();
  if (rank > kMaxRank) throw DataError("implausible tensor rank at byte offset " + std::to_string(at));
  Tensor::Shape shape(rank);
  std::size_t count = rank ? 1 : 0;
  for (auto& d : shape) {
    d = r.u64();
    count *= d;
  }
  if (count > (std::size_t{1} << 32)) throw DataError("implausible tensor size at byte offset " + std::to_string(at));
  if (rank == 0) return Tensor();
  return Tensor(std::move(shape), r.f64_array(count));
}

}  // namespace

void write_networks(std::ostream& out, std::span<const Network> networks) {
  detail::BinaryWriter w(out);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(networks.size()));
  for (const auto& net : networks) {
    validate_stack(net.layers, net.params);
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const auto& s = net.layers[i];
      w.u8(static_cast<std::uint8_t>(s.kind));
      const std::uint64_t fields[] = {s.in_features,     s.out_features,    s.channels,
                                      s.conv.in_channels, s.conv.out_channels, s.conv.in_height,
                                      s.conv.in_width,    s.conv.kernel,     s.conv.stride,
                                      s.conv.padding,     s.conv.transposed ? 1u : 0u};
      w.u32(static_cast<std::uint32_t>(std::size(fields)));
      for (auto f : fields) w.u64(f);
      const auto& p = net.params.layers[i];
      w.u32(4);
      write_tensor(w, p.weight);
      write_tensor(w, p.bias);
      write_tensor(w, p.running_mean);
      write_tensor(w, p.running_var);
    }
  }
}

std::vector<Network> read_networks(std::istream& in) {
  detail::BinaryReader r(in);
  r.expect_magic(kCheckpointMagic, "network checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<Network> nets(count);
  for (auto& net : nets) {
    const std::uint32_t layers = r.u32();
    for (std::uint32_t i = 0; i < layers; ++i) {
      const std::size_t at = r.offset();
      LayerSpec s;
      const auto kind = r.u8();
      if (kind < 1 || kind > 4) throw DataError("unknown layer kind tag at byte offset " + std::to_string(at));
      s.kind = static_cast<LayerKind>(kind);
      if (r.u32() != 11) throw DataError("unexpected layer field count at byte offset " + std::to_string(at));
      s.in_features = r.u64();
      s.out_features = r.u64();
      s.channels = r.u64();
      s.conv.in_channels = r.u64();
      s.conv.out_channels = r.u64();
      s.conv.in_height = r.u64();
      s.conv.in_width = r.u64();
      s.conv.kernel = r.u64();
      s.conv.stride = r.u64();
      s.conv.padding = r.u64();
      s.conv.transposed = r.u64() != 0;
      if (r.u32() != 4) throw DataError("unexpected tensor count at byte offset " + std::to_string(r.offset()));
      LayerParams p;
      p.weight = read_tensor(r);
      p.bias = read_tensor(r);
      p.running_mean = read_tensor(r);
      p.running_var = read_tensor(r);
      net.layers.push_back(s);
      net.params.layers.push_back(std::move(p));
    }
    try {
      validate_stack(net.layers, net.params);
    } catch (const std::exception& e) {
      throw DataError(std::string("invalid network in checkpoint: ") + e.what());
    }
  }
  return nets;
}

void save_networks(const std::filesystem::path& path, std::span<const Network> networks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_networks(out, networks);
}

std::vector<Network> load_networks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_networks(in);
}

}  // namespace uscore::nn
