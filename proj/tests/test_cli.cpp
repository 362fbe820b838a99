#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("gz_cli_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path out = scratch_root() / ("stdout." + std::to_string(counter));
  fs::path err = scratch_root() / ("stderr." + std::to_string(counter));
  ++counter;
  std::string cmd = std::string(GZ_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                    err.string();
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = rc == -1 ? -1 : WEXITSTATUS(rc);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_file(const fs::path& p, const std::string& body) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::trunc);
  f << body;
}

// 30 characters over 8 radicals with a small model: full train+eval cycles
// finish in seconds
const char* kGenConfig = R"({
  "seed": 3,
  "data": {"n_radicals": 8, "cell_px": 12, "n_chars": 30, "image_size": 32,
           "train_n": 14, "val_n": 4, "test_n": 12}
})";

std::string train_config(const fs::path& data_dir) {
  std::ostringstream os;
  os << R"({
  "seed": 3,
  "data": {"dir": ")" << data_dir.string() << R"("},
  "model": {"input_size": 32, "stem_channels": 4, "stage_channels": [4, 8],
            "embedding": [8, 8, 8], "extra_cells": 1},
  "train": {"epochs": 2, "batch_size": 8}
})";
  return os.str();
}

struct Fixture {
  fs::path dir = scratch_root();
  fs::path gen_cfg = dir / "gen.json";
  fs::path data = dir / "data";
  fs::path train_cfg = dir / "train.json";
  fs::path run = dir / "run";

  // dataset and a trained checkpoint are built once and shared read-only
  static Fixture& get() {
    static Fixture f = [] {
      Fixture x;
      write_file(x.gen_cfg, kGenConfig);
      RunResult g = run_cli("gen-data --config " + x.gen_cfg.string() + " --out " +
                            x.data.string() + " --force");
      if (g.code != 0) {
        INFO(g.err);
        REQUIRE(g.code == 0);
      }
      write_file(x.train_cfg, train_config(x.data));
      RunResult t = run_cli("train --config " + x.train_cfg.string() + " --out " +
                            x.run.string());
      REQUIRE(t.code == 0);
      return x;
    }();
    return f;
  }
};

}  // namespace

TEST_CASE("cli: gen-data writes a complete dataset and a summary line") {
  Fixture& f = Fixture::get();
  CHECK(fs::exists(f.data / "manifest.json"));
  CHECK(fs::exists(f.data / "effective_config.json"));
  for (const char* style : {"canonical", "variant", "complex"}) {
    int n = 0;
    for (const auto& e : fs::directory_iterator(f.data / "images" / style)) {
      CHECK(e.path().extension() == ".pgm");
      ++n;
    }
    CHECK(n == 30);
  }
  // re-running into the populated directory must refuse without --force
  RunResult again = run_cli("gen-data --config " + f.gen_cfg.string() + " --out " +
                            f.data.string());
  CHECK(again.code == 1);
  CHECK(again.err.find("not empty") != std::string::npos);
  CHECK(again.err.find("--force") != std::string::npos);

  // --force regenerates byte-identically
  std::string manifest_before = slurp(f.data / "manifest.json");
  RunResult forced = run_cli("gen-data --config " + f.gen_cfg.string() + " --out " +
                             f.data.string() + " --force");
  CHECK(forced.code == 0);
  CHECK(forced.out.find("dataset: 30 characters, 8 radicals") != std::string::npos);
  CHECK(slurp(f.data / "manifest.json") == manifest_before);
}

TEST_CASE("cli: --seed overrides the config seed") {
  Fixture& f = Fixture::get();
  fs::path d4 = scratch_root() / "data_s4";
  fs::path d4b = scratch_root() / "data_s4b";
  fs::path d5 = scratch_root() / "data_s5";
  for (const auto& [dir, seed] : {std::pair{d4, "4"}, {d4b, "4"}, {d5, "5"}}) {
    RunResult r = run_cli("gen-data --config " + f.gen_cfg.string() + " --out " + dir.string() +
                          " --seed " + seed);
    REQUIRE(r.code == 0);
  }
  CHECK(slurp(d4 / "manifest.json") == slurp(d4b / "manifest.json"));
  CHECK(slurp(d4 / "manifest.json") != slurp(d5 / "manifest.json"));
}

TEST_CASE("cli: unknown config keys are rejected by full path") {
  fs::path bad = scratch_root() / "bad.json";
  write_file(bad, R"({"seed": 1, "train": {"lrx": 0.1}})");
  RunResult r = run_cli("train --config " + bad.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown config key 'train.lrx'") != std::string::npos);
}

TEST_CASE("cli: train writes its artifacts and reports the best epoch") {
  Fixture& f = Fixture::get();
  CHECK(fs::exists(f.run / "checkpoint.bin"));
  CHECK(fs::exists(f.run / "train_log.csv"));
  CHECK(fs::exists(f.run / "effective_config.json"));
  std::string log = slurp(f.run / "train_log.csv");
  CHECK(log.rfind("step,loss_hpe,loss_kcls_d,loss_kcls_t,loss_center,loss_race,loss_total,"
                  "val_accuracy\n", 0) == 0);
}

TEST_CASE("cli: eval prints the accuracy it writes to the report") {
  Fixture& f = Fixture::get();
  fs::path out = scratch_root() / "eval";
  RunResult r = run_cli("eval --config " + f.train_cfg.string() + " --checkpoint " +
                        (f.run / "checkpoint.bin").string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  REQUIRE(r.out.rfind("AR% = ", 0) == 0);
  // "AR% = 16.666667 (2/12)" <-> report line "accuracy_percent,16.666667"
  std::string pct = r.out.substr(6, r.out.find(' ', 6) - 6);
  std::string csv = slurp(out / "eval_report.csv");
  CHECK(csv.find("accuracy_percent," + pct + "\n") != std::string::npos);
  CHECK(r.out.find("(") != std::string::npos);
  CHECK(r.out.find("/12)") != std::string::npos);

  // determinism: a second eval of the same checkpoint matches exactly
  fs::path out2 = scratch_root() / "eval2";
  RunResult r2 = run_cli("eval --config " + f.train_cfg.string() + " --checkpoint " +
                         (f.run / "checkpoint.bin").string() + " --out " + out2.string());
  CHECK(r2.out == r.out);
  CHECK(slurp(out2 / "eval_report.csv") == csv);
}

TEST_CASE("cli: missing inputs fail with the offending path") {
  Fixture& f = Fixture::get();
  fs::path cfg = scratch_root() / "missing_data.json";
  write_file(cfg, R"({"seed": 1, "data": {"dir": "/nonexistent/gzds"}})");
  RunResult r = run_cli("train --config " + cfg.string());
  CHECK(r.code == 1);
  CHECK(r.err.find("dataset manifest not found: /nonexistent/gzds/manifest.json") !=
        std::string::npos);

  RunResult e1 = run_cli("eval --config " + f.train_cfg.string());
  CHECK(e1.code == 1);
  CHECK(e1.err.find("no checkpoint given") != std::string::npos);

  RunResult e2 = run_cli("eval --config " + f.train_cfg.string() + " --checkpoint /nope.bin");
  CHECK(e2.code == 1);
  CHECK(e2.err.find("checkpoint not found: /nope.bin") != std::string::npos);
}

TEST_CASE("cli: report summarizes parameters, files, and timing") {
  Fixture& f = Fixture::get();
  fs::path out = scratch_root() / "report";
  RunResult r = run_cli("report --config " + f.train_cfg.string() + " --checkpoint " +
                        (f.run / "checkpoint.bin").string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "report.csv"));
  std::string csv = slurp(out / "report.csv");
  CHECK(csv.rfind("param_count,param_bytes,checkpoint_bytes,bank_entries,bank_bytes,"
                  "mean_ms_per_char,timed_chars\n", 0) == 0);
  // 30 candidates in the bank, each embedding 8x8x8 floats
  CHECK(csv.find(",30,") != std::string::npos);
}

TEST_CASE("cli: sweep emits one csv row per requested size") {
  Fixture& f = Fixture::get();
  fs::path cfg = scratch_root() / "sweep.json";
  std::string body = train_config(f.data);
  body.insert(body.rfind('}'), R"(, "sweep": {"sizes": [6, 10]})");
  // keep it cheap: one epoch per size
  body.replace(body.find("\"epochs\": 2"), 11, "\"epochs\": 1");
  write_file(cfg, body);
  RunResult r = run_cli("sweep --config " + cfg.string() + " --out " +
                        (scratch_root() / "sweep").string());
  if (r.code != 0) {
    INFO(r.err);
    REQUIRE(r.code == 0);
  }
  REQUIRE(r.out.rfind("train_size,ar_percent,note\n", 0) == 0);
  CHECK(r.out.find("\n6,") != std::string::npos);
  CHECK(r.out.find("\n10,") != std::string::npos);
  CHECK(fs::exists(scratch_root() / "sweep" / "sweep.csv"));
}

TEST_CASE("cli: extra-block ablation reports the with/without pair") {
  Fixture& f = Fixture::get();
  fs::path cfg = scratch_root() / "ablate.json";
  std::string body = train_config(f.data);
  body.insert(body.rfind('}'),
              R"(, "ablate": {"axis": "extra-block", "cells": [[0.25, 10.0]]})");
  body.replace(body.find("\"epochs\": 2"), 11, "\"epochs\": 1");
  write_file(cfg, body);
  RunResult r = run_cli("ablate --config " + cfg.string() + " --out " +
                        (scratch_root() / "ablate").string());
  if (r.code != 0) {
    INFO(r.err);
    REQUIRE(r.code == 0);
  }
  REQUIRE(r.out.rfind("blur_sigma,rotation,ar_with_extra,ar_without_extra,diff\n", 0) == 0);
  CHECK(r.out.find("0.25,10,") != std::string::npos);
}
