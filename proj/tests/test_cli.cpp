// tests/test_cli.cpp
//
// End-to-end exercises of the installed command surface: artifact layout,
// exit codes, and manifest-driven reproducibility.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  std::string cmd = std::string(BIASLATTICE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  f << text;
}

}  // namespace

TEST_CASE("pipeline: gen-data, pretrain, train-adapters, decode, eval, sweep") {
  fs::path dir = biaslattice::testutil::fresh_tmp_dir("cli");
  write(dir / "synth.json",
        R"({"seed": 3, "pretrain_count": 30, "mixed_general": 8, "dev_general": 4,
            "dev_specific": 4, "test_general": 6, "test_specific": 6})");
  write(dir / "train.json", R"({"lr": 0.005, "max_epochs": 2, "patience": 2, "seed": 3})");
  write(dir / "model.json",
        R"({"feature_dim": 8, "enc_layers": 2, "enc_units": 8, "time_reduction_after_layer": 1,
            "time_reduction_factor": 2, "pred_layers": 1, "pred_units": 8, "joint_dim": 8,
            "vocab_size": 64})");
  write(dir / "atrain.json",
        R"({"lr": 0.005, "max_epochs": 2, "patience": 2, "catalog_k": 6, "seed": 4})");

  std::string d = dir.string() + "/";
  REQUIRE(run("gen-data --config " + d + "synth.json --out " + d + "data") == 0);
  CHECK(fs::exists(dir / "data" / "vocab.json"));
  CHECK(fs::exists(dir / "data" / "run_manifest.json"));

  REQUIRE(run("pretrain --config " + d + "train.json --model-config " + d + "model.json --data " + d +
              "data --out " + d + "base") == 0);
  CHECK(fs::exists(dir / "base" / "manifest.json"));
  CHECK(fs::exists(dir / "base" / "params.bin"));
  CHECK(fs::exists(dir / "base.train.jsonl"));

  REQUIRE(run("train-adapters --base " + d + "base --variant enc-pred --mode adapter --data " + d +
              "data --config " + d + "atrain.json --out " + d + "adapters") == 0);
  CHECK(fs::exists(dir / "adapters" / "manifest.json"));

  REQUIRE(run("decode --base " + d + "base --adapters " + d +
              "adapters --sampled-catalogs 6 --beam 2 --in " + d + "data --split test-specific --out " +
              d + "nbest.jsonl") == 0);
  CHECK(fs::exists(dir / "nbest.jsonl"));
  CHECK(fs::exists(dir / "nbest.jsonl.manifest.json"));

  REQUIRE(run("decode --base " + d + "base --beam 2 --in " + d + "data --split test-specific --out " +
              d + "nbest_base.jsonl") == 0);
  REQUIRE(run("eval --refs " + d + "data --split test-specific --hyps " + d +
              "nbest_base.jsonl --out " + d + "base_report.json") == 0);
  REQUIRE(run("eval --refs " + d + "data --split test-specific --hyps " + d + "nbest.jsonl --baseline " +
              d + "base_report.json --out " + d + "report.json") == 0);
  std::string report = slurp(dir / "report.json");
  CHECK(report.find("vs_baseline") != std::string::npos);

  write(dir / "exp.json", "{\"name\": \"smoke\", \"base_ckpt\": \"" + d + "base\", " +
                              "\"adapters_ckpt\": \"" + d + "adapters\", \"catalog_sizes\": [2, 4], " +
                              "\"sf_lambdas\": [0.5, 1.0], \"dataset_dir\": \"" + d + "data\", " +
                              "\"out_dir\": \"" + d + "sweep\", \"beam\": 2, \"seed\": 3}");
  REQUIRE(run("sweep --spec " + d + "exp.json") == 0);
  CHECK(fs::exists(dir / "sweep" / "sweep.csv"));
  CHECK(fs::exists(dir / "sweep" / "sweep.svg"));
  CHECK(fs::exists(dir / "sweep" / "tables.txt"));
  CHECK(fs::exists(dir / "sweep" / "run_manifest.json"));
}

TEST_CASE("rerunning gen-data reproduces the dataset byte for byte") {
  fs::path dir = biaslattice::testutil::fresh_tmp_dir("cli_repro");
  write(dir / "synth.json",
        R"({"seed": 9, "pretrain_count": 10, "mixed_general": 4, "dev_general": 2,
            "dev_specific": 2, "test_general": 2, "test_specific": 2})");
  std::string d = dir.string() + "/";
  REQUIRE(run("gen-data --config " + d + "synth.json --out " + d + "a") == 0);
  REQUIRE(run("gen-data --config " + d + "synth.json --out " + d + "b") == 0);
  for (const char* name : {"vocab.json", "pretrain.jsonl", "mixed.jsonl", "dev.jsonl",
                           "test_general.jsonl", "test_specific.jsonl", "lexicons.json",
                           "run_manifest.json"}) {
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
}

TEST_CASE("BIASLATTICE_SEED overrides the config seed") {
  fs::path dir = biaslattice::testutil::fresh_tmp_dir("cli_seed");
  write(dir / "synth.json",
        R"({"seed": 9, "pretrain_count": 6, "mixed_general": 2, "dev_general": 1,
            "dev_specific": 1, "test_general": 1, "test_specific": 1})");
  std::string d = dir.string() + "/";
  std::string cmd = std::string("BIASLATTICE_SEED=77 ") + BIASLATTICE_CLI_PATH + " gen-data --config " +
                    d + "synth.json --out " + d + "o >/dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  std::string manifest = slurp(dir / "o" / "run_manifest.json");
  CHECK(manifest.find("\"seed\": 77") != std::string::npos);
}

TEST_CASE("distinct exit codes") {
  fs::path dir = biaslattice::testutil::fresh_tmp_dir("cli_codes");
  std::string d = dir.string() + "/";
  CHECK(run("no-such-command") == 2);
  CHECK(run("decode --no-such-flag") == 2);
  CHECK(run("pretrain --data " + d + "missing --out " + d + "x") == 3);
  // Corrupt checkpoint: manifest with a wrong version.
  fs::create_directories(dir / "bad_ckpt");
  write(dir / "bad_ckpt" / "manifest.json", R"({"format_version": 99, "kind": "transducer",
        "config": {}, "checksum": "0", "tensors": []})");
  write(dir / "synth.json",
        R"({"seed": 2, "pretrain_count": 6, "mixed_general": 2, "dev_general": 1,
            "dev_specific": 1, "test_general": 1, "test_specific": 1})");
  REQUIRE(run("gen-data --config " + d + "synth.json --out " + d + "data") == 0);
  CHECK(run("decode --base " + d + "bad_ckpt --beam 1 --in " + d + "data --out " + d + "n.jsonl") == 4);
}
