#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uscore/data.hpp"
#include "uscore/gmm.hpp"
#include "uscore/score.hpp"
#include "uscore/vae.hpp"

namespace uscore::config {

/// Flat "section.key" -> values view of a sectioned key-value file
/// (TOML subset: [section] headers, key = value, arrays, # comments).
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig parse_text(const std::string& text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, std::vector<std::string> values);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Keys present in the file that were never read.
  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::vector<std::string>>& values() const { return values_; }

 private:
  const std::vector<std::string>* find(const std::string& key) const;
  std::string scalar(const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::vector<std::string>> values_;
  mutable std::set<std::string> used_;
};

enum class ModelKind { vae, ae, gmm };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct DatasetConfig {
  std::string source = "synthetic";  // or "manifest"
  data::SynthSpec synth = data::SynthSpec::toy_default();
  std::size_t held_out = 1000;       // normals moved to the test split (each also erased)
  std::size_t erasure = 4;
  double contamination = 0.01;
  std::string train_manifest;        // source = manifest
  std::string test_manifest;
};

struct ModelConfig {
  ModelKind kind = ModelKind::vae;
  vae::VaeConfig vae;                // n_z is shared with the GMM
  std::size_t n_h = 20;              // PCA dimensions for the GMM; 0 uses raw pixels
};

struct TrainSection {
  vae::TrainConfig vae;
  gmm::EmConfig em;
};

struct EvalConfig {
  std::vector<ScoreKind> kinds = {ScoreKind::L, ScoreKind::D, ScoreKind::A, ScoreKind::M};
  data::PatchGrid grid{32, 16};
  std::size_t heatmap_stride = 4;
  std::string out = "out";
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  ModelConfig model;
  TrainSection train;
  EvalConfig eval;

  /// Starts from the toy defaults and applies every key present; unknown keys
  /// and malformed values raise ConfigError.
  static ExperimentConfig from_key_values(const KeyValueConfig& kv);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Sets the run seed and the per-component seeds derived from it.
  void set_seed(std::uint64_t seed);
  void validate() const;
  /// Canonical text form; parses back to an equal configuration.
  std::string to_text() const;
  /// 64-bit FNV-1a of to_text(), as 16 hex digits.
  std::string hash() const;
};

}  // namespace uscore::config
