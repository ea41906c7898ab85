// Command-line driver: generate, train, score, eval, heatmap, sweep.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "uscore/config.hpp"
#include "uscore/data.hpp"
#include "uscore/errors.hpp"
#include "uscore/eval.hpp"
#include "uscore/gmm.hpp"
#include "uscore/scoring.hpp"
#include "uscore/vae.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace uscore;

namespace {

constexpr const char* kVersion = USCORE_VERSION;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string kind;
  std::optional<std::size_t> stride;
  std::string data;
  std::string model;
  std::string scores;
  std::string image;
  std::string nz_values = "1,2,5,10,20";
  std::string seeds = "0,1,2";
};

void log(const std::string& msg) { std::cerr << "[uscore] " << msg << '\n'; }

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Short form for log lines.
std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.5g", v);
  return buf;
}

/// Records what a command did; written as <out>/<command>.run.json.
class RunManifest {
 public:
  RunManifest(std::string command, const config::ExperimentConfig& cfg) {
    doc_["command"] = std::move(command);
    doc_["version"] = kVersion;
    doc_["config_hash"] = cfg.hash();
    doc_["seed"] = cfg.seed;
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    doc_["started_at"] = stamp;
    doc_["artifacts"] = json::object();
    doc_["timings_s"] = json::object();
    doc_["metrics"] = json::object();
  }
  void artifact(const std::string& name, const fs::path& path) { doc_["artifacts"][name] = path.generic_string(); }
  void timing(const std::string& name, double s) { doc_["timings_s"][name] = s; }
  void metric(const std::string& name, json value) { doc_["metrics"][name] = std::move(value); }
  void write(const fs::path& dir) const {
    const fs::path path = dir / (doc_["command"].get<std::string>() + ".run.json");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

config::ExperimentConfig load_config(const Options& opt, bool needs_seed) {
  config::ExperimentConfig cfg;
  bool seeded = opt.seed.has_value();
  if (!opt.config_path.empty()) {
    const auto kv = config::KeyValueConfig::load(opt.config_path);
    if (!kv.has("seed") && !opt.seed) throw ConfigError(opt.config_path + ": 'seed' is required (or pass --seed)");
    cfg = config::ExperimentConfig::from_key_values(kv);
    seeded = true;
  }
  if (needs_seed && !seeded) throw ConfigError("a seed is required: pass --seed or a config file with 'seed'");
  if (opt.seed) cfg.set_seed(*opt.seed);
  if (!opt.out.empty()) cfg.eval.out = opt.out;
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const config::ExperimentConfig& cfg) {
  const fs::path out = cfg.eval.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

/// A manifest path, or a dataset directory holding `default_name`.
fs::path resolve_manifest(const std::string& data, const std::string& configured, const std::string& default_name) {
  if (data.empty()) {
    if (configured.empty()) throw ConfigError("no dataset given (use --data or dataset.*_manifest)");
    return configured;
  }
  const fs::path p = data;
  if (fs::is_directory(p)) return p / default_name;
  return p;
}

std::vector<ScoreKind> parse_kinds(const std::string& text, const std::vector<ScoreKind>& fallback) {
  if (text.empty()) return fallback;
  std::vector<ScoreKind> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(parse_score_kind(part));
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& text, const std::string& what) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("bad " + what + " list entry '" + part + "'");
    out.push_back(std::stoull(part));
  }
  if (out.empty()) throw ConfigError("empty " + what + " list");
  return out;
}

// ---- generate -----------------------------------------------------------------

struct Generated {
  std::vector<data::LabeledImage> train;
  std::vector<data::LabeledImage> test;
};

Generated synthesize(const config::ExperimentConfig& cfg) {
  const auto normals = data::generate_synthetic(cfg.dataset.synth);
  auto split = data::make_split(normals, cfg.dataset.held_out, cfg.dataset.erasure, cfg.dataset.contamination,
                                mix_seed(cfg.seed, 4));
  return {std::move(split.train), std::move(split.test)};
}

void cmd_generate(const Options& opt) {
  const auto cfg = load_config(opt, true);
  if (cfg.dataset.source != "synthetic") throw ConfigError("generate needs dataset.source = synthetic");
  const fs::path out = prepare_out(cfg);
  RunManifest run("generate", cfg);
  const auto t0 = Clock::now();
  const auto gen = synthesize(cfg);
  const auto train_entries = data::write_images(out, "train", gen.train);
  const auto test_entries = data::write_images(out, "test", gen.test);
  data::write_manifest(out / "train.csv", train_entries);
  data::write_manifest(out / "test.csv", test_entries);
  write_text(out / "config.toml", cfg.to_text());

  std::size_t contaminated = 0, test_anomalous = 0;
  for (const auto& im : gen.train) contaminated += im.label == data::Label::anomalous;
  for (const auto& im : gen.test) test_anomalous += im.label == data::Label::anomalous;
  json split;
  split["train"] = {{"manifest", "train.csv"}, {"count", gen.train.size()}, {"anomalous", contaminated}};
  split["test"] = {{"manifest", "test.csv"}, {"count", gen.test.size()}, {"anomalous", test_anomalous}};
  split["contamination"] = cfg.dataset.contamination;
  split["erasure"] = cfg.dataset.erasure;
  split["clusters"] = cfg.dataset.synth.clusters.size();
  split["config_hash"] = cfg.hash();
  write_text(out / "split.json", split.dump(2) + "\n");

  run.artifact("train_manifest", out / "train.csv");
  run.artifact("test_manifest", out / "test.csv");
  run.artifact("split", out / "split.json");
  run.timing("generate", seconds_since(t0));
  run.metric("train_count", gen.train.size());
  run.metric("train_anomalous", contaminated);
  run.metric("test_count", gen.test.size());
  run.metric("test_anomalous", test_anomalous);
  run.write(out);
  log("generated " + std::to_string(gen.train.size()) + " train (" + std::to_string(contaminated) +
      " contaminated) and " + std::to_string(gen.test.size()) + " test images in " + out.string());
}

// ---- train ----------------------------------------------------------------------

gmm::Matrix patch_matrix(std::span<const data::LabeledImage> images, const data::PatchGrid& grid) {
  std::vector<nn::Tensor> rows;
  for (const auto& im : images)
    for (auto& p : data::sliding_crops(im.pixels, grid)) rows.push_back(std::move(p.pixels));
  if (rows.empty()) throw DataError("no training patches");
  gmm::Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

struct TrainOutcome {
  json metrics;
};

TrainOutcome train_model(const config::ExperimentConfig& cfg, std::span<const data::LabeledImage> images,
                         const fs::path& out, RunManifest& run) {
  TrainOutcome result;
  if (cfg.model.kind == config::ModelKind::gmm) {
    const auto t0 = Clock::now();
    const gmm::Matrix x = patch_matrix(images, cfg.eval.grid);
    std::optional<gmm::PcaModel> pca;
    gmm::Matrix features = x;
    if (cfg.model.n_h > 0) {
      pca = gmm::pca_fit(x, static_cast<Eigen::Index>(cfg.model.n_h));
      features = gmm::pca_transform(*pca, x);
    }
    const auto fit = gmm::em_fit(features, cfg.train.em);
    gmm::save_gmm(out / "gmm.bin", fit.model, pca);
    std::ofstream trace(out / "train_trace.csv");
    trace << "iteration,mean_nll\n";
    for (std::size_t i = 0; i < fit.trace.mean_nll.size(); ++i) trace << i << ',' << fmt(fit.trace.mean_nll[i]) << '\n';
    run.artifact("model", out / "gmm.bin");
    run.artifact("trace", out / "train_trace.csv");
    run.timing("train", seconds_since(t0));
    result.metrics["iterations"] = fit.trace.iterations;
    result.metrics["converged"] = fit.trace.converged;
    result.metrics["final_mean_nll"] = fit.trace.mean_nll.back();
    log("EM finished after " + std::to_string(fit.trace.iterations) + " iterations, mean NLL " +
        brief(fit.trace.mean_nll.back()));
    return result;
  }

  auto vcfg = cfg.model.vae;
  vcfg.image_channels = images.front().channels();
  Rng rng = make_rng(cfg.train.vae.seed, 1);
  auto model = vae::VaeModel::create(vcfg, rng);
  std::vector<nn::Tensor> pixels;
  pixels.reserve(images.size());
  for (const auto& im : images) pixels.push_back(im.pixels);
  const auto t0 = Clock::now();
  const auto report = vae::train(model, pixels, cfg.train.vae, [&](std::size_t epoch, double loss) {
    log("epoch " + std::to_string(epoch) + " loss " + brief(loss) + " (" + brief(seconds_since(t0)) + " s)");
  });
  vae::save_model(model, (out / "model.bin").string(), (out / "model.json").string());
  std::ofstream trace(out / "train_trace.csv");
  if (vcfg.mode == vae::ModelMode::ae) {
    trace << "epoch,mse\n";
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) trace << e + 1 << ',' << fmt(report.epoch_loss[e]) << '\n';
  } else {
    trace << "epoch,loss,D,A,M\n";
    for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) {
      const auto& t = report.epoch_terms[e];
      trace << e + 1 << ',' << fmt(report.epoch_loss[e]) << ',' << fmt(t.d) << ',' << fmt(t.a) << ',' << fmt(t.m)
            << '\n';
    }
  }
  run.artifact("model", out / "model.bin");
  run.artifact("sidecar", out / "model.json");
  run.artifact("trace", out / "train_trace.csv");
  run.timing("train", seconds_since(t0));
  result.metrics["epochs"] = report.epoch_loss.size();
  result.metrics["steps"] = report.steps;
  result.metrics["final_loss"] = report.epoch_loss.back();
  return result;
}

void cmd_train(const Options& opt) {
  const auto cfg = load_config(opt, true);
  const fs::path out = prepare_out(cfg);
  RunManifest run("train", cfg);
  const fs::path manifest = resolve_manifest(opt.data, cfg.dataset.train_manifest, "train.csv");
  const auto t0 = Clock::now();
  const auto images = data::load_dataset(manifest);
  if (images.empty()) throw DataError("training manifest " + manifest.string() + " lists no images");
  run.timing("load", seconds_since(t0));
  auto outcome = train_model(cfg, images, out, run);
  for (auto& [k, v] : outcome.metrics.items()) run.metric(k, v);
  write_text(out / "config.toml", cfg.to_text());
  run.write(out);
  log("model written to " + out.string());
}

// ---- score ------------------------------------------------------------------------

/// A checkpoint directory (model.bin/model.json or gmm.bin) loaded as a scorer.
class LoadedModel {
 public:
  explicit LoadedModel(const fs::path& path) {
    const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
    if (fs::exists(dir / "model.json")) {
      vae_.emplace(vae::load_model((dir / "model.bin").string(), (dir / "model.json").string()));
      scorer_ = std::make_unique<scoring::VaeScorer>(*vae_);
      kind_ = vae_->config().mode == vae::ModelMode::ae ? config::ModelKind::ae : config::ModelKind::vae;
      channels_ = vae_->config().image_channels;
    } else if (fs::exists(dir / "gmm.bin")) {
      auto [model, pca] = gmm::load_gmm(dir / "gmm.bin");
      gmm_.emplace(std::move(model));
      pca_ = std::move(pca);
      const auto dim = static_cast<std::size_t>(pca_ ? pca_->dim() : gmm_->dim());
      std::size_t patch = 0;
      for (std::size_t c : {1u, 3u}) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim / c))));
        if (dim % c == 0 && side * side * c == dim) {
          patch = side;
          channels_ = c;
          break;
        }
      }
      if (patch == 0) throw ShapeError("GMM input dimension " + std::to_string(dim) + " is not a square patch");
      scorer_ = std::make_unique<scoring::GmmScorer>(*gmm_, pca_, patch);
      kind_ = config::ModelKind::gmm;
    } else {
      throw DataError("no model checkpoint in " + dir.string());
    }
  }

  const scoring::PatchScorer& scorer() const { return *scorer_; }
  config::ModelKind kind() const { return kind_; }
  std::size_t channels() const { return channels_; }

 private:
  std::optional<vae::VaeModel> vae_;
  std::optional<gmm::GmmModel> gmm_;
  std::optional<gmm::PcaModel> pca_;
  std::unique_ptr<scoring::PatchScorer> scorer_;
  config::ModelKind kind_ = config::ModelKind::vae;
  std::size_t channels_ = 1;
};

std::vector<scoring::ScoreRow> score_images(const LoadedModel& model, std::span<const data::LabeledImage> images,
                                            std::size_t stride) {
  for (const auto& im : images)
    if (im.channels() != model.channels())
      throw ShapeError("image has " + std::to_string(im.channels()) + " channels, model expects " +
                       std::to_string(model.channels()));
  data::PatchGrid grid;
  grid.patch = model.scorer().patch_size();
  grid.stride = stride;
  return scoring::score_dataset(model.scorer(), images, grid);
}

void cmd_score(const Options& opt) {
  const auto cfg = load_config(opt, false);
  const fs::path out = prepare_out(cfg);
  RunManifest run("score", cfg);
  if (opt.model.empty()) throw ConfigError("score needs --model");
  const LoadedModel model(opt.model);
  if (!opt.config_path.empty() && model.kind() != cfg.model.kind)
    throw ConfigError("checkpoint holds a " + config::to_string(model.kind()) + " model but the config says " +
                      config::to_string(cfg.model.kind));
  const fs::path manifest = resolve_manifest(opt.data, cfg.dataset.test_manifest, "test.csv");
  const auto t0 = Clock::now();
  const auto images = data::load_dataset(manifest);
  const auto rows = score_images(model, images, opt.stride.value_or(cfg.eval.grid.stride));
  scoring::write_scores_csv(out / "scores.csv", rows);
  run.artifact("scores", out / "scores.csv");
  run.timing("score", seconds_since(t0));
  run.metric("rows", rows.size());
  run.write(out);
  log("scored " + std::to_string(images.size()) + " images (" + std::to_string(rows.size()) + " patches)");
}

// ---- eval -------------------------------------------------------------------------

std::map<ScoreKind, double> evaluate(std::span<const scoring::ScoreRow> rows, const std::vector<ScoreKind>& kinds,
                                     const fs::path& out) {
  const auto samples = eval::aggregate_sample_scores(rows);
  std::map<ScoreKind, double> aucs;
  std::ofstream metrics(out / "metrics.csv");
  if (!metrics) throw DataError("cannot write " + (out / "metrics.csv").string());
  metrics << "kind,auc,samples,anomalous\n";
  std::size_t anomalous = 0;
  for (int l : samples.labels) anomalous += l == 1;
  std::vector<std::pair<std::string, std::string>> curves;
  bool first = true;
  for (const auto kind : kinds) {
    const auto values = samples.values(kind);
    const auto roc = eval::roc_auc(values, samples.labels);
    aucs[kind] = roc.auc;
    const std::string name(to_string(kind));
    metrics << name << ',' << fmt(roc.auc) << ',' << samples.size() << ',' << anomalous << '\n';
    eval::write_roc_csv(out / ("roc_" + name + ".csv"), roc);
    curves.emplace_back(name, "roc_" + name + ".csv");
    const auto stats = eval::cluster_boxstats(values, samples.labels, samples.cluster_ids, eval::Centering::median);
    eval::write_cluster_stats_csv(out / "cluster_stats.csv", kind, stats, !first);
    first = false;
  }
  eval::write_roc_gnuplot(out / "roc.gp", curves, "roc.png");
  return aucs;
}

void cmd_eval(const Options& opt) {
  const auto cfg = load_config(opt, false);
  const fs::path out = prepare_out(cfg);
  RunManifest run("eval", cfg);
  if (opt.scores.empty()) throw ConfigError("eval needs --scores");
  const auto t0 = Clock::now();
  const auto rows = scoring::read_scores_csv(opt.scores);
  const auto aucs = evaluate(rows, parse_kinds(opt.kind, cfg.eval.kinds), out);
  run.artifact("metrics", out / "metrics.csv");
  run.artifact("cluster_stats", out / "cluster_stats.csv");
  run.artifact("plot_script", out / "roc.gp");
  run.timing("eval", seconds_since(t0));
  for (const auto& [kind, auc] : aucs) {
    run.metric("auc_" + std::string(to_string(kind)), auc);
    log("AUC(" + std::string(to_string(kind)) + ") = " + brief(auc));
  }
  run.write(out);
}

// ---- heatmap ------------------------------------------------------------------------

void cmd_heatmap(const Options& opt) {
  const auto cfg = load_config(opt, false);
  const fs::path out = prepare_out(cfg);
  RunManifest run("heatmap", cfg);
  if (opt.model.empty() || opt.image.empty()) throw ConfigError("heatmap needs --model and --image");
  const LoadedModel model(opt.model);
  const auto image = data::read_image(opt.image);
  const std::size_t channels = image.rank() == 3 ? image.dim(0) : 1;
  if (channels != model.channels()) throw ShapeError("image channels do not match the model");
  data::PatchGrid grid;
  grid.patch = model.scorer().patch_size();
  grid.stride = opt.stride.value_or(cfg.eval.heatmap_stride);
  const std::size_t h = image.dim(image.rank() - 2), w = image.dim(image.rank() - 1);
  if (h < grid.patch || w < grid.patch)
    throw DataError("image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the patch size " +
                    std::to_string(grid.patch));
  const ScoreKind kind = opt.kind.empty() ? ScoreKind::M : parse_score_kind(opt.kind);
  const auto t0 = Clock::now();
  const auto hm = eval::render_heatmap(image, model.scorer(), grid, kind);
  eval::write_heatmap_pgm(out / "heatmap.pgm", hm, grid.stride);
  eval::write_heatmap_csv(out / "heatmap.csv", hm, kind, grid);
  run.artifact("heatmap", out / "heatmap.pgm");
  run.artifact("scores", out / "heatmap.csv");
  run.timing("heatmap", seconds_since(t0));
  run.metric("rows", hm.rows);
  run.metric("cols", hm.cols);
  run.metric("raw_min", hm.raw_min);
  run.metric("raw_max", hm.raw_max);
  run.write(out);
  log("heatmap " + std::to_string(hm.rows) + "x" + std::to_string(hm.cols) + ", raw range [" + brief(hm.raw_min) +
      ", " + brief(hm.raw_max) + "]");
}

// ---- sweep ----------------------------------------------------------------------------

void cmd_sweep(const Options& opt) {
  const auto base = load_config(opt, true);
  const fs::path out = prepare_out(base);
  RunManifest run("sweep", base);
  const auto nzs = parse_u64_list(opt.nz_values, "n_z");
  const auto seeds = opt.seed ? std::vector<std::uint64_t>{*opt.seed} : parse_u64_list(opt.seeds, "seed");
  std::ofstream summary(out / "summary.csv");
  if (!summary) throw DataError("cannot write summary");
  summary << "model,n_z,seed";
  for (auto k : base.eval.kinds) summary << ",auc_" << to_string(k);
  summary << '\n';
  const auto t0 = Clock::now();
  for (const auto seed : seeds) {
    auto cfg = base;
    cfg.set_seed(seed);
    std::vector<data::LabeledImage> train, test;
    if (cfg.dataset.source == "synthetic") {
      auto gen = synthesize(cfg);
      train = std::move(gen.train);
      test = std::move(gen.test);
    } else {
      train = data::load_dataset(cfg.dataset.train_manifest);
      test = data::load_dataset(cfg.dataset.test_manifest);
    }
    for (const auto nz : nzs) {
      cfg.model.vae.n_z = nz;
      cfg.set_seed(seed);
      cfg.validate();
      const fs::path dir = out / ("nz" + std::to_string(nz) + "_seed" + std::to_string(seed));
      fs::create_directories(dir);
      RunManifest sub("train", cfg);
      train_model(cfg, train, dir, sub);
      const LoadedModel model(dir);
      const auto rows = score_images(model, test, cfg.eval.grid.stride);
      scoring::write_scores_csv(dir / "scores.csv", rows);
      const auto aucs = evaluate(rows, cfg.eval.kinds, dir);
      summary << config::to_string(cfg.model.kind) << ',' << nz << ',' << seed;
      for (auto k : cfg.eval.kinds) summary << ',' << fmt(aucs.at(k));
      summary << '\n';
      summary.flush();
      log("n_z=" + std::to_string(nz) + " seed=" + std::to_string(seed) + " AUC(M)=" +
          (aucs.contains(ScoreKind::M) ? brief(aucs.at(ScoreKind::M)) : "n/a"));
    }
  }
  run.artifact("summary", out / "summary.csv");
  run.timing("sweep", seconds_since(t0));
  run.write(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anomaly scoring with the ELBO decomposition for VAEs and GMMs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "sectioned key-value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "overrides the config seed");
    sub->add_option("--out", opt.out, "output directory");
  };
  auto* gen = app.add_subcommand("generate", "write the synthetic dataset and manifests");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train a vae, ae or gmm model");
  add_common(train);
  train->add_option("--data", opt.data, "dataset directory or train manifest");
  auto* score = app.add_subcommand("score", "write per-patch D, A, M, L scores");
  add_common(score);
  score->add_option("--model", opt.model, "checkpoint directory")->required();
  score->add_option("--data", opt.data, "dataset directory or test manifest");
  score->add_option("--stride", opt.stride, "patch stride");
  auto* ev = app.add_subcommand("eval", "ROC/AUC and per-cluster statistics from a scores CSV");
  add_common(ev);
  ev->add_option("--scores", opt.scores, "scores CSV")->required();
  ev->add_option("--kind", opt.kind, "score kinds, e.g. M or L,M");
  auto* hm = app.add_subcommand("heatmap", "sliding-window score map of one image");
  add_common(hm);
  hm->add_option("--model", opt.model, "checkpoint directory")->required();
  hm->add_option("--image", opt.image, "PGM/PPM image")->required();
  hm->add_option("--kind", opt.kind, "L, D, A or M (default M)");
  hm->add_option("--stride", opt.stride, "patch stride (default 4)");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate over n_z values and seeds");
  add_common(sweep);
  sweep->add_option("--nz", opt.nz_values, "comma-separated n_z values");
  sweep->add_option("--seeds", opt.seeds, "comma-separated seeds (ignored with --seed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) cmd_generate(opt);
    if (*train) cmd_train(opt);
    if (*score) cmd_score(opt);
    if (*ev) cmd_eval(opt);
    if (*hm) cmd_heatmap(opt);
    if (*sweep) cmd_sweep(opt);
  } catch (const ConfigError& e) {
    log(std::string("config error: ") + e.what());
    return 1;
  } catch (const NumericalError& e) {
    log(std::string("numerical failure: ") + e.what());
    return 3;
  } catch (const std::exception& e) {
    log(std::string("data error: ") + e.what());
    return 2;
  }
  return 0;
}
