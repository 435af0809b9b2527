#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "dcpt/pretrain.hpp"

using namespace dcpt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DCPT_CLI_PATH) + " " + args +
                          " > /dev/null 2> /dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

size_t file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return std::hash<std::string>{}(ss.str());
}

}  // namespace

TEST_CASE("synth produces a corpus and manifest reproducibly") {
  TmpDir d("dcpt_cli_synth");
  const std::string a = (d.path / "a").string();
  const std::string b = (d.path / "b").string();
  CHECK(run_cli("synth --n 3 --size 64 --classes noise,blur --seed 9 --run-dir " + a) == 0);
  CHECK(fs::exists(fs::path(a) / "manifest.json"));
  CHECK(fs::exists(fs::path(a) / "config.json"));
  Manifest m = Manifest::load((fs::path(a) / "manifest.json").string());
  CHECK(m.classes == std::vector<std::string>({"clean", "noise", "blur"}));
  CHECK(m.entries.size() == 6);

  // rerun with the same seed: identical manifest and corpus bytes
  CHECK(run_cli("synth --n 3 --size 64 --classes noise,blur --seed 9 --run-dir " + b) == 0);
  Manifest mb = Manifest::load((fs::path(b) / "manifest.json").string());
  CHECK(mb.entries.size() == m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(mb.entries[i].seed == m.entries[i].seed);
    CHECK(mb.entries[i].label == m.entries[i].label);
    CHECK(file_hash(fs::path(a) / "corpus" / fs::path(m.entries[i].clean_path).filename()) ==
          file_hash(fs::path(b) / "corpus" / fs::path(mb.entries[i].clean_path).filename()));
  }
}

TEST_CASE("invalid class names exit with the validation code") {
  TmpDir d("dcpt_cli_badclass");
  CHECK(run_cli("synth --n 2 --size 64 --classes noise,fog --run-dir " +
                (d.path / "r").string()) == 1);
}

TEST_CASE("unknown config keys are rejected") {
  TmpDir d("dcpt_cli_badkey");
  CHECK(run_cli("synth --n 2 --size 64 --set pretrain.lr=1 --run-dir " +
                (d.path / "r").string()) == 1);
  const std::string cfg_path = (d.path / "cfg.json").string();
  {
    std::ofstream f(cfg_path);
    f << R"({"pretrain": {"iterations": 2, "warmup": 5}})";
  }
  CHECK(run_cli("synth --n 2 --size 64 --config " + cfg_path + " --run-dir " +
                (d.path / "r2").string()) == 1);
}

TEST_CASE("set overrides land in the echoed config") {
  TmpDir d("dcpt_cli_set");
  const std::string r = (d.path / "r").string();
  CHECK(run_cli("synth --n 2 --size 64 --set data.seed=5 --run-dir " + r) == 0);
  std::ifstream in(fs::path(r) / "config.json");
  json cfg = json::parse(in);
  CHECK(cfg.at("data").at("seed").get<int>() == 5);
  CHECK(cfg.at("command").get<std::string>() == "synth");
}

TEST_CASE("pretrain then probe and eval round trip through the cli") {
  TmpDir d("dcpt_cli_train");
  const std::string synth_dir = (d.path / "synth").string();
  REQUIRE(run_cli("synth --n 3 --size 64 --classes noise,blur --seed 4 --run-dir " +
                  synth_dir) == 0);
  const std::string manifest = (fs::path(synth_dir) / "manifest.json").string();

  const std::string pre_dir = (d.path / "pre").string();
  const std::string small =
      " --set encoder.blocks=4 --set encoder.channels=8 --set encoder.patch=32"
      " --set pretrain.patch_size=32 --set pretrain.batch_size=4"
      " --set pretrain.iterations=3 --set decoder.stem_channels=4";
  REQUIRE(run_cli("pretrain --manifest " + manifest + small + " --run-dir " +
                  pre_dir) == 0);
  const std::string ckpt = (fs::path(pre_dir) / "final.ckpt").string();
  REQUIRE(fs::exists(ckpt));
  CHECK(fs::exists(fs::path(pre_dir) / "trace.jsonl"));

  const std::string probe_dir = (d.path / "probe").string();
  CHECK(run_cli("probe --manifest " + manifest + " --checkpoint " + ckpt +
                " --set probe.crop=32 --set probe.per_class=6"
                " --set probe.seeds=[1,2] --run-dir " + probe_dir) == 0);
  {
    std::ifstream in(fs::path(probe_dir) / "report.json");
    json rep = json::parse(in);
    CHECK(rep.at("per_seed_acc").size() == 2);
    CHECK(rep.at("mean_acc").get<double>() >= 0.0);
    CHECK(rep.at("confusion").size() == 2);  // per-class counts present
  }

  const std::string eval_dir = (d.path / "eval").string();
  CHECK(run_cli("eval --manifest " + manifest + " --checkpoint " + ckpt +
                " --set finetune.patch_size=32 --run-dir " + eval_dir) == 0);
  {
    std::ifstream in(fs::path(eval_dir) / "report.json");
    json rep = json::parse(in);
    CHECK(rep.at("samples").get<int>() == 6);
    CHECK(rep.at("psnr").get<double>() > 0.0);
    CHECK(rep.at("psnr_per_class").size() == 2);  // per-degradation breakdown
  }
}

TEST_CASE("dcguide without a source is a config error") {
  TmpDir d("dcpt_cli_guide");
  const std::string synth_dir = (d.path / "synth").string();
  REQUIRE(run_cli("synth --n 2 --size 64 --classes noise --seed 1 --run-dir " +
                  synth_dir) == 0);
  CHECK(run_cli("dcguide --manifest " +
                (fs::path(synth_dir) / "manifest.json").string() +
                " --run-dir " + (d.path / "g").string()) == 1);
}

TEST_CASE("missing manifest path is a validation failure") {
  TmpDir d("dcpt_cli_nomanifest");
  CHECK(run_cli("pretrain --run-dir " + (d.path / "r").string()) == 1);
}
