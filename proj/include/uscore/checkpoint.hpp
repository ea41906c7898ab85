#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "uscore/layers.hpp"

namespace uscore::nn {

inline constexpr char kCheckpointMagic[4] = {'U', 'S', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serializes networks in the layout described in docs/file-formats.md.
/// Output bytes depend only on the layer specs and parameter values.
void write_networks(std::ostream& out, std::span<const Network> networks);
std::vector<Network> read_networks(std::istream& in);

void save_networks(const std::filesystem::path& path, std::span<const Network> networks);
std::vector<Network> load_networks(const std::filesystem::path& path);

}  // namespace uscore::nn
