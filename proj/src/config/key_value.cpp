#include <CLI11.hpp>
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "uscore/config.hpp"
#include "uscore/errors.hpp"

namespace uscore::config {
namespace {

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig kv;
  kv.origin_ = origin;
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    std::vector<std::string> path = item.parents;
    if (!path.empty() && path.front() == "default") path.erase(path.begin());
    path.push_back(item.name);
    const std::string key = join(path, '.');
    const bool valid = !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char c) {
      return std::isalnum(c) || c == '_' || c == '.' || c == '-';
    });
    if (!valid) throw ConfigError(origin + ": malformed line near '" + key + "'");
    kv.values_[key] = item.inputs;
  }
  return kv;
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  return parse(in, origin);
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::set(const std::string& key, std::vector<std::string> values) {
  values_[key] = std::move(values);
}

const std::vector<std::string>* KeyValueConfig::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::scalar(const std::string& key) const {
  const auto* v = find(key);
  if (v->size() != 1) throw ConfigError(origin_ + ": '" + key + "' expects a single value");
  return v->front();
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return find(key) ? scalar(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!find(key)) return fallback;
  const std::string text = scalar(key);
  double value = 0.0;
  std::istringstream in(text);
  in >> value;
  if (in.fail() || !in.eof()) throw ConfigError(origin_ + ": '" + key + "' is not a number: " + text);
  return value;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!find(key)) return fallback;
  const std::string text = scalar(key);
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(origin_ + ": '" + key + "' is not a non-negative integer: " + text);
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": '" + key + "' is out of range: " + text);
  }
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  // "a,b,c" written as a single string is accepted as well as a TOML array.
  if (v->size() == 1 && v->front().find(',') != std::string::npos) {
    std::vector<std::string> out;
    std::stringstream ss(v->front());
    std::string part;
    while (std::getline(ss, part, ',')) {
      part.erase(0, part.find_first_not_of(" \t"));
      part.erase(part.find_last_not_of(" \t") + 1);
      out.push_back(part);
    }
    return out;
  }
  return *v;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, _] : values_)
    if (!used_.contains(key)) out.push_back(key);
  return out;
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::vae:
      return "vae";
    case ModelKind::ae:
      return "ae";
    case ModelKind::gmm:
      return "gmm";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "vae") return ModelKind::vae;
  if (text == "ae") return ModelKind::ae;
  if (text == "gmm") return ModelKind::gmm;
  throw ConfigError("unknown model kind '" + text + "' (expected vae, ae or gmm)");
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_key_values(KeyValueConfig::load(path));
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueConfig& kv) {
  ExperimentConfig c;

  auto& ds = c.dataset;
  ds.source = kv.get_string("dataset.source", ds.source);
  ds.synth = data::SynthSpec::toy_default(kv.get_size("dataset.samples_per_cluster", 3000));
  ds.synth.height = kv.get_size("dataset.height", ds.synth.height);
  ds.synth.width = kv.get_size("dataset.width", ds.synth.width);
  ds.synth.channels = kv.get_size("dataset.channels", ds.synth.channels);
  for (std::size_t i = 0;; ++i) {
    const std::string prefix = "dataset.cluster" + std::to_string(i) + ".";
    bool any = false;
    for (const auto& [key, _] : kv.values()) any = any || key.rfind(prefix, 0) == 0;
    if (!any && i >= ds.synth.clusters.size()) break;
    if (i >= ds.synth.clusters.size()) ds.synth.clusters.push_back(data::ClusterSpec{});
    auto& cl = ds.synth.clusters[i];
    cl.pattern = data::parse_pattern(kv.get_string(prefix + "pattern", data::to_string(cl.pattern)));
    cl.samples = kv.get_size(prefix + "samples", cl.samples);
    cl.level = kv.get_double(prefix + "level", cl.level);
    cl.contrast = kv.get_double(prefix + "contrast", cl.contrast);
    cl.frequency = kv.get_double(prefix + "frequency", cl.frequency);
    cl.components = kv.get_size(prefix + "components", cl.components);
    cl.phase_jitter = kv.get_double(prefix + "phase_jitter", cl.phase_jitter);
    cl.orientation_jitter = kv.get_double(prefix + "orientation_jitter", cl.orientation_jitter);
    cl.amplitude_jitter = kv.get_double(prefix + "amplitude_jitter", cl.amplitude_jitter);
    cl.noise = kv.get_double(prefix + "noise", cl.noise);
  }
  ds.held_out = kv.get_size("dataset.held_out", ds.held_out);
  ds.erasure = kv.get_size("dataset.erasure", ds.erasure);
  ds.contamination = kv.get_double("dataset.contamination", ds.contamination);
  ds.train_manifest = kv.get_string("dataset.train_manifest", ds.train_manifest);
  ds.test_manifest = kv.get_string("dataset.test_manifest", ds.test_manifest);

  auto& m = c.model;
  m.kind = parse_model_kind(kv.get_string("model.kind", to_string(m.kind)));
  m.vae.mode = m.kind == ModelKind::ae ? vae::ModelMode::ae : vae::ModelMode::vae;
  m.vae.arch = vae::parse_architecture(kv.get_string("model.arch", vae::to_string(m.vae.arch)));
  m.vae.n_size = kv.get_size("model.n_size", m.vae.n_size);
  m.vae.image_channels = ds.synth.channels;
  m.vae.n_z = kv.get_size("model.n_z", m.vae.n_z);
  m.vae.n_c = kv.get_size("model.n_c", m.vae.n_c);
  m.vae.n_conv = kv.get_size("model.n_conv", m.vae.n_conv);
  std::vector<std::string> hidden_default;
  for (auto h : m.vae.hidden) hidden_default.push_back(std::to_string(h));
  m.vae.hidden.clear();
  for (const auto& h : kv.get_list("model.hidden", hidden_default)) {
    KeyValueConfig one;
    one.set("h", {h});
    m.vae.hidden.push_back(one.get_size("h", 0));
  }
  m.n_h = kv.get_size("model.n_h", m.n_h);

  auto& t = c.train;
  t.vae.epochs = kv.get_size("train.epochs", t.vae.epochs);
  t.vae.batch_size = kv.get_size("train.batch", t.vae.batch_size);
  t.vae.steps_per_epoch = kv.get_size("train.steps_per_epoch", t.vae.steps_per_epoch);
  t.vae.adam.learning_rate = kv.get_double("train.learning_rate", t.vae.adam.learning_rate);
  t.vae.adam.beta1 = kv.get_double("train.beta1", t.vae.adam.beta1);
  t.vae.adam.beta2 = kv.get_double("train.beta2", t.vae.adam.beta2);
  t.vae.adam.epsilon = kv.get_double("train.epsilon", t.vae.adam.epsilon);
  t.vae.adam.weight_decay = kv.get_double("train.weight_decay", t.vae.adam.weight_decay);
  t.em.max_iter = kv.get_size("train.em_max_iter", t.em.max_iter);
  t.em.tol = kv.get_double("train.em_tol", t.em.tol);
  t.em.ridge = kv.get_double("train.ridge", t.em.ridge);

  auto& e = c.eval;
  std::vector<std::string> kinds_default;
  for (auto k : e.kinds) kinds_default.emplace_back(to_string(k));
  e.kinds.clear();
  for (const auto& k : kv.get_list("eval.kinds", kinds_default)) e.kinds.push_back(parse_score_kind(k));
  e.grid.patch = kv.get_size("eval.patch", c.model.vae.n_size);
  e.grid.stride = kv.get_size("eval.stride", e.grid.stride);
  e.heatmap_stride = kv.get_size("eval.heatmap_stride", e.heatmap_stride);
  e.out = kv.get_string("eval.out", e.out);

  c.set_seed(kv.get_u64("seed", 0));

  if (auto unused = kv.unused_keys(); !unused.empty()) throw ConfigError("unknown config key '" + unused.front() + "'");
  c.validate();
  return c;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  dataset.synth.seed = mix_seed(s, 1);
  train.vae.seed = mix_seed(s, 2);
  train.em.seed = mix_seed(s, 3);
  train.em.n_z = static_cast<Eigen::Index>(model.vae.n_z);
}

void ExperimentConfig::validate() const {
  if (dataset.source != "synthetic" && dataset.source != "manifest")
    throw ConfigError("dataset.source must be 'synthetic' or 'manifest'");
  if (dataset.source == "manifest" && (dataset.train_manifest.empty() || dataset.test_manifest.empty()))
    throw ConfigError("dataset.source = manifest requires train_manifest and test_manifest");
  if (dataset.source == "synthetic") dataset.synth.validate();
  if (dataset.contamination < 0.0 || dataset.contamination > 0.5)
    throw ConfigError("dataset.contamination must lie in [0, 0.5]");
  if (dataset.erasure == 0) throw ConfigError("dataset.erasure must be positive");
  if (model.kind != ModelKind::gmm) model.vae.validate();
  if (model.vae.n_z == 0) throw ConfigError("model.n_z must be positive");
  train.vae.validate();
  if (train.em.max_iter == 0 || !(train.em.tol > 0.0) || train.em.ridge < 0.0)
    throw ConfigError("EM settings need max_iter > 0, tol > 0 and ridge >= 0");
  if (eval.kinds.empty()) throw ConfigError("eval.kinds is empty");
  if (eval.grid.patch == 0 || eval.grid.stride == 0 || eval.heatmap_stride == 0)
    throw ConfigError("eval patch and strides must be positive");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream o;
  o << "seed = " << seed << "\n\n[dataset]\n"
    << "source = \"" << dataset.source << "\"\n"
    << "height = " << dataset.synth.height << "\n"
    << "width = " << dataset.synth.width << "\n"
    << "channels = " << dataset.synth.channels << "\n"
    << "held_out = " << dataset.held_out << "\n"
    << "erasure = " << dataset.erasure << "\n"
    << "contamination = " << fmt_double(dataset.contamination) << "\n"
    << "train_manifest = \"" << dataset.train_manifest << "\"\n"
    << "test_manifest = \"" << dataset.test_manifest << "\"\n";
  for (std::size_t i = 0; i < dataset.synth.clusters.size(); ++i) {
    const auto& cl = dataset.synth.clusters[i];
    o << "\n[dataset.cluster" << i << "]\n"
      << "pattern = \"" << data::to_string(cl.pattern) << "\"\n"
      << "samples = " << cl.samples << "\n"
      << "level = " << fmt_double(cl.level) << "\n"
      << "contrast = " << fmt_double(cl.contrast) << "\n"
      << "frequency = " << fmt_double(cl.frequency) << "\n"
      << "components = " << cl.components << "\n"
      << "phase_jitter = " << fmt_double(cl.phase_jitter) << "\n"
      << "orientation_jitter = " << fmt_double(cl.orientation_jitter) << "\n"
      << "amplitude_jitter = " << fmt_double(cl.amplitude_jitter) << "\n"
      << "noise = " << fmt_double(cl.noise) << "\n";
  }
  o << "\n[model]\n"
    << "kind = \"" << to_string(model.kind) << "\"\n"
    << "arch = \"" << vae::to_string(model.vae.arch) << "\"\n"
    << "n_size = " << model.vae.n_size << "\n"
    << "n_z = " << model.vae.n_z << "\n"
    << "n_c = " << model.vae.n_c << "\n"
    << "n_conv = " << model.vae.n_conv << "\n"
    << "hidden = [";
  for (std::size_t i = 0; i < model.vae.hidden.size(); ++i) o << (i ? ", " : "") << model.vae.hidden[i];
  o << "]\n"
    << "n_h = " << model.n_h << "\n"
    << "\n[train]\n"
    << "epochs = " << train.vae.epochs << "\n"
    << "batch = " << train.vae.batch_size << "\n"
    << "steps_per_epoch = " << train.vae.steps_per_epoch << "\n"
    << "learning_rate = " << fmt_double(train.vae.adam.learning_rate) << "\n"
    << "beta1 = " << fmt_double(train.vae.adam.beta1) << "\n"
    << "beta2 = " << fmt_double(train.vae.adam.beta2) << "\n"
    << "epsilon = " << fmt_double(train.vae.adam.epsilon) << "\n"
    << "weight_decay = " << fmt_double(train.vae.adam.weight_decay) << "\n"
    << "em_max_iter = " << train.em.max_iter << "\n"
    << "em_tol = " << fmt_double(train.em.tol) << "\n"
    << "ridge = " << fmt_double(train.em.ridge) << "\n"
    << "\n[eval]\n"
    << "kinds = [";
  for (std::size_t i = 0; i < eval.kinds.size(); ++i) o << (i ? ", " : "") << '"' << to_string(eval.kinds[i]) << '"';
  o << "]\n"
    << "patch = " << eval.grid.patch << "\n"
    << "stride = " << eval.grid.stride << "\n"
    << "heatmap_stride = " << eval.heatmap_stride << "\n"
    << "out = \"" << eval.out << "\"\n";
  return o.str();
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace uscore::config
