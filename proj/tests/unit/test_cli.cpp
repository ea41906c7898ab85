#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "uscore/data.hpp"
#include "uscore/scoring.hpp"

namespace fs = std::filesystem;
using namespace uscore;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "uscore_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(USCORE_CLI_PATH) + " " + args + " >" + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  fs::create_directories(kRoot);
  const fs::path p = kRoot / name;
  std::ofstream(p) << text;
  return p;
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line) && line.starts_with('#')) {
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

const std::string kDataConfig = R"(seed = 5
[dataset]
samples_per_cluster = 60
held_out = 10
contamination = 0.05
)";

const std::string kVaeConfig = kDataConfig + R"(
[model]
kind = "vae"
arch = "dense"
n_z = 4
hidden = [32, 16]
[train]
epochs = 2
batch = 16
[eval]
stride = 16
)";

struct Fixture {
  Fixture() {
    static bool ready = false;
    if (ready) return;
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    const auto cfg = write_config("vae.toml", kVaeConfig);
    REQUIRE(run("generate --config " + cfg.string() + " --out " + (kRoot / "data").string()) == 0);
    REQUIRE(run("train --config " + cfg.string() + " --data " + (kRoot / "data").string() + " --out " +
                (kRoot / "vae").string()) == 0);
    REQUIRE(run("score --config " + cfg.string() + " --model " + (kRoot / "vae").string() + " --data " +
                (kRoot / "data").string() + " --out " + (kRoot / "scored").string()) == 0);
    ready = true;
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "generate writes the split structure deterministically") {
  const auto split = nlohmann::json::parse(slurp(kRoot / "data" / "split.json"));
  CHECK(split["train"]["count"] == 110);
  CHECK(split["train"]["anomalous"] == 5);
  CHECK(split["test"]["count"] == 20);
  CHECK(split["test"]["anomalous"] == 10);
  CHECK(fs::exists(kRoot / "data" / "generate.run.json"));

  const auto cfg = write_config("vae.toml", kVaeConfig);
  REQUIRE(run("generate --config " + cfg.string() + " --out " + (kRoot / "data2").string()) == 0);
  CHECK(slurp(kRoot / "data" / "train.csv") == slurp(kRoot / "data2" / "train.csv"));
  CHECK(slurp(kRoot / "data" / "test.csv") == slurp(kRoot / "data2" / "test.csv"));
  CHECK(slurp(kRoot / "data" / "train" / "000003.pgm") == slurp(kRoot / "data2" / "train" / "000003.pgm"));

  REQUIRE(run("generate --config " + cfg.string() + " --seed 6 --out " + (kRoot / "data3").string()) == 0);
  CHECK(slurp(kRoot / "data" / "train.csv") != slurp(kRoot / "data3" / "train.csv"));
}

TEST_CASE("zero contamination gives an all-normal training manifest") {
  const auto cfg = write_config("clean.toml", "seed = 1\n[dataset]\nsamples_per_cluster = 20\nheld_out = 4\ncontamination = 0\n");
  REQUIRE(run("generate --config " + cfg.string() + " --out " + (kRoot / "clean").string()) == 0);
  for (const auto& e : data::read_manifest(kRoot / "clean" / "train.csv")) CHECK(e.label == data::Label::normal);
  std::size_t anomalous = 0;
  const auto test = data::read_manifest(kRoot / "clean" / "test.csv");
  for (const auto& e : test) anomalous += e.label == data::Label::anomalous;
  CHECK(test.size() == 8);
  CHECK(anomalous == 4);
}

TEST_CASE_FIXTURE(Fixture, "vae training writes checkpoint, sidecar and trace") {
  CHECK(fs::exists(kRoot / "vae" / "model.bin"));
  CHECK(fs::exists(kRoot / "vae" / "model.json"));
  const auto trace = read_numeric_csv(kRoot / "vae" / "train_trace.csv");
  REQUIRE(trace.size() == 2);
  for (const auto& row : trace) CHECK(std::abs(row[1] - (row[2] + row[3] + row[4])) < 1e-6 * std::abs(row[1]));
  const auto manifest = nlohmann::json::parse(slurp(kRoot / "vae" / "train.run.json"));
  CHECK(manifest["seed"] == 5);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest.contains("timings_s"));
  CHECK(manifest["artifacts"].contains("model"));
}

TEST_CASE_FIXTURE(Fixture, "scores decompose and are reproducible") {
  const auto rows = scoring::read_scores_csv(kRoot / "scored" / "scores.csv");
  REQUIRE(rows.size() == 20);
  for (const auto& r : rows) CHECK(std::abs(r.score.l - (r.score.d + r.score.a + r.score.m)) < 1e-9);
  const auto cfg = kRoot / "vae.toml";
  REQUIRE(run("score --config " + cfg.string() + " --model " + (kRoot / "vae").string() + " --data " +
              (kRoot / "data").string() + " --out " + (kRoot / "scored2").string()) == 0);
  CHECK(slurp(kRoot / "scored" / "scores.csv") == slurp(kRoot / "scored2" / "scores.csv"));
  REQUIRE(run("score --model " + (kRoot / "vae").string() + " --data " + (kRoot / "data").string() +
              " --stride 32 --seed 5 --out " + (kRoot / "scored3").string()) == 0);
  CHECK(slurp(kRoot / "scored" / "scores.csv") == slurp(kRoot / "scored3" / "scores.csv"));
}

TEST_CASE_FIXTURE(Fixture, "eval reports every kind") {
  REQUIRE(run("eval --scores " + (kRoot / "scored" / "scores.csv").string() + " --out " + (kRoot / "eval").string()) == 0);
  std::ifstream in(kRoot / "eval" / "metrics.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "kind,auc,samples,anomalous");
  std::vector<std::string> kinds;
  while (std::getline(in, line)) {
    kinds.push_back(line.substr(0, line.find(',')));
    const double auc = std::stod(line.substr(line.find(',') + 1));
    CHECK((auc >= 0.0 && auc <= 1.0));
  }
  CHECK(kinds == std::vector<std::string>{"L", "D", "A", "M"});
  for (const char* f : {"roc_M.csv", "roc_L.csv", "cluster_stats.csv", "roc.gp"}) CHECK(fs::exists(kRoot / "eval" / f));

  REQUIRE(run("eval --kind M --scores " + (kRoot / "scored" / "scores.csv").string() + " --out " +
              (kRoot / "eval_m").string()) == 0);
  CHECK_FALSE(fs::exists(kRoot / "eval_m" / "roc_L.csv"));
}

TEST_CASE_FIXTURE(Fixture, "heatmap output") {
  const auto image = kRoot / "data" / "test" / "000001.pgm";
  REQUIRE(run("heatmap --model " + (kRoot / "vae").string() + " --image " + image.string() + " --seed 5 --out " +
              (kRoot / "hm").string()) == 0);
  std::ifstream in(kRoot / "hm" / "heatmap.csv");
  std::string comment;
  std::getline(in, comment);
  CHECK(comment.find("kind=M") != std::string::npos);
  CHECK(comment.find("raw_min=") != std::string::npos);
  CHECK(comment.find("stride=4") != std::string::npos);
  CHECK(read_numeric_csv(kRoot / "hm" / "heatmap.csv").size() == 1);

  nn::Tensor wide({48, 48}, 0.3);
  data::write_image(kRoot / "wide.pgm", wide);
  REQUIRE(run("heatmap --kind A --model " + (kRoot / "vae").string() + " --image " + (kRoot / "wide.pgm").string() +
              " --seed 5 --out " + (kRoot / "hm_wide").string()) == 0);
  CHECK(read_numeric_csv(kRoot / "hm_wide" / "heatmap.csv").size() == 25);
  CHECK(data::read_image(kRoot / "hm_wide" / "heatmap.pgm").shape() == nn::Tensor::Shape{20, 20});
  REQUIRE(run("heatmap --stride 8 --model " + (kRoot / "vae").string() + " --image " + (kRoot / "wide.pgm").string() +
              " --seed 5 --out " + (kRoot / "hm_wide8").string()) == 0);
  CHECK(read_numeric_csv(kRoot / "hm_wide8" / "heatmap.csv").size() == 9);

  data::write_image(kRoot / "small.pgm", nn::Tensor({16, 40}, 0.5));
  CHECK(run("heatmap --model " + (kRoot / "vae").string() + " --image " + (kRoot / "small.pgm").string() +
            " --seed 5 --out " + (kRoot / "hm_small").string()) == 2);
}

TEST_CASE("gmm and ae training traces") {
  const auto gmm_cfg = write_config("gmm.toml", kDataConfig + "[model]\nkind = \"gmm\"\nn_z = 3\nn_h = 8\n[eval]\nstride = 16\n");
  REQUIRE(run("generate --config " + gmm_cfg.string() + " --out " + (kRoot / "gdata").string()) == 0);
  REQUIRE(run("train --config " + gmm_cfg.string() + " --data " + (kRoot / "gdata").string() + " --out " +
              (kRoot / "gmm").string()) == 0);
  const auto trace = read_numeric_csv(kRoot / "gmm" / "train_trace.csv");
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i][1] <= trace[i - 1][1] + 1e-8);
  REQUIRE(run("score --config " + gmm_cfg.string() + " --model " + (kRoot / "gmm").string() + " --data " +
              (kRoot / "gdata").string() + " --out " + (kRoot / "gscored").string()) == 0);
  const auto rows = scoring::read_scores_csv(kRoot / "gscored" / "scores.csv");
  for (const auto& r : rows) CHECK(std::abs(r.score.l - (r.score.d + r.score.a + r.score.m)) < 1e-9);

  const auto vae_cfg = kRoot / "vae_for_gmm.toml";
  std::ofstream(vae_cfg) << kVaeConfig;
  CHECK(run("score --config " + vae_cfg.string() + " --model " + (kRoot / "gmm").string() + " --data " +
            (kRoot / "gdata").string() + " --out " + (kRoot / "mismatch").string()) == 1);

  const auto ae_cfg = write_config("ae.toml", kDataConfig + "[model]\nkind = \"ae\"\narch = \"dense\"\nn_z = 4\nhidden = [32]\n[train]\nepochs = 2\nbatch = 16\n");
  REQUIRE(run("train --config " + ae_cfg.string() + " --data " + (kRoot / "gdata").string() + " --out " +
              (kRoot / "ae").string()) == 0);
  std::ifstream in(kRoot / "ae" / "train_trace.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "epoch,mse");
  CHECK(read_numeric_csv(kRoot / "ae" / "train_trace.csv").size() == 2);
}

TEST_CASE("sweep collects one row per n_z and seed") {
  const auto cfg = write_config("sweep.toml", kDataConfig + "[model]\nkind = \"gmm\"\nn_h = 6\n[eval]\nstride = 16\n");
  REQUIRE(run("sweep --config " + cfg.string() + " --nz 1,2 --seeds 0,1 --out " + (kRoot / "sweep").string()) == 0);
  std::ifstream in(kRoot / "sweep" / "summary.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "model,n_z,seed,auc_L,auc_D,auc_A,auc_M");
  std::vector<std::string> keys;
  while (std::getline(in, line)) keys.push_back(line.substr(0, line.find(',', line.find(',') + 1) + 2));
  CHECK(keys == std::vector<std::string>{"gmm,1,0", "gmm,2,0", "gmm,1,1", "gmm,2,1"});
}

TEST_CASE("exit codes") {
  fs::create_directories(kRoot);
  CHECK(run("--help") == 0);
  CHECK(run("train --bogus") == 1);
  CHECK(run("frobnicate") == 1);
  const auto no_seed = write_config("noseed.toml", "[dataset]\nsamples_per_cluster = 5\n");
  CHECK(run("generate --config " + no_seed.string() + " --out " + (kRoot / "x").string()) == 1);
  CHECK(run("generate --out " + (kRoot / "x").string()) == 1);
  const auto unknown = write_config("unknown.toml", "seed = 1\n[model]\ncolour = 3\n");
  CHECK(run("generate --config " + unknown.string() + " --out " + (kRoot / "x").string()) == 1);
  CHECK(run("train --seed 1 --data " + (kRoot / "missing").string() + " --out " + (kRoot / "x").string()) == 2);
  CHECK(run("eval --scores " + (kRoot / "missing.csv").string() + " --out " + (kRoot / "x").string()) != 0);

  std::ofstream(kRoot / "one_class.csv") << "sample_id,patch_row,patch_col,D,A,M,L,label,cluster_id\n"
                                            "0,0,0,1,1,1,3,0,0\n1,0,0,1,1,2,4,0,0\n";
  CHECK(run("eval --scores " + (kRoot / "one_class.csv").string() + " --out " + (kRoot / "x").string()) == 2);

  const auto diverge = write_config("diverge.toml", kDataConfig +
                                                         "[model]\narch = \"dense\"\nn_z = 4\nhidden = [32]\n"
                                                         "[train]\nepochs = 3\nbatch = 16\nlearning_rate = 1e200\n");
  REQUIRE(run("generate --config " + diverge.string() + " --out " + (kRoot / "ddata").string()) == 0);
  CHECK(run("train --config " + diverge.string() + " --data " + (kRoot / "ddata").string() + " --out " +
            (kRoot / "dmodel").string()) == 3);
}
