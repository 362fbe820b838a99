#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "glyphzero/checkpoint.hpp"
#include "glyphzero/config.hpp"
#include "glyphzero/glyphs.hpp"
#include "glyphzero/inference.hpp"
#include "glyphzero/rng.hpp"
#include "glyphzero/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::string timestamp_dir(const std::string& cmd) {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
#ifdef _WIN32
  localtime_s(&tm, &t);
#else
  localtime_r(&t, &tm);
#endif
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return "runs/" + cmd + "-" + buf;
}

void write_effective_config(const gz::RunConfig& rc, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream f(dir + "/effective_config.json", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write effective config into " + dir);
  f << gz::run_config_to_json(rc).dump(2) << "\n";
}

gz::Dataset load_dataset_or_fail(const std::string& dir) {
  if (!fs::exists(dir + "/manifest.json")) {
    throw std::runtime_error("dataset manifest not found: " + dir + "/manifest.json");
  }
  return gz::load_manifest(dir);
}

gz::ProtocolConfig protocol_from(const gz::RunConfig& rc) {
  gz::ProtocolConfig pc;
  pc.model = rc.model;
  pc.train = rc.train;
  pc.train.seed = rc.seed;
  pc.eval_blur_sigma = rc.eval_blur_sigma;
  pc.eval_rot_range = rc.eval_rot_range;
  pc.normalize_embeddings = rc.eval_normalize;
  return pc;
}

std::string require_checkpoint(const gz::RunConfig& rc) {
  if (rc.eval_checkpoint.empty()) {
    throw std::runtime_error("no checkpoint given (set eval.checkpoint or pass --checkpoint)");
  }
  if (!fs::exists(rc.eval_checkpoint)) {
    throw std::runtime_error("checkpoint not found: " + rc.eval_checkpoint);
  }
  return rc.eval_checkpoint;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  if (const char* tn = std::getenv("GLYPHZERO_THREADS")) {
    int n = std::atoi(tn);
    if (n > 0) omp_set_num_threads(n);
  }
#endif

  CLI::App app{"glyphzero: zero-shot compositional glyph recognition"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path;
  uint64_t seed_flag = 0;
  bool force = false;
  app.add_option("--config", config_path, "run config JSON file");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  CLI::Option* seed_opt = app.add_option("--seed", seed_flag, "global seed (overrides config)");
  app.add_flag("--force", force, "overwrite existing outputs");
  app.add_option("--checkpoint", checkpoint_path, "checkpoint file for eval/report");

  CLI::App* c_gen = app.add_subcommand("gen-data", "generate the synthetic glyph dataset");
  CLI::App* c_train = app.add_subcommand("train", "train a model on a dataset");
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  CLI::App* c_sweep = app.add_subcommand("sweep", "accuracy vs training-set size");
  CLI::App* c_ablate = app.add_subcommand("ablate", "loss or extra-block ablation grid");
  CLI::App* c_report = app.add_subcommand("report", "parameter/memory/speed report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    gz::RunConfig rc =
        config_path.empty() ? gz::default_run_config() : gz::load_run_config(config_path);
    if (*seed_opt) rc.seed = seed_flag;
    if (!out_dir.empty()) rc.out = out_dir;
    if (!checkpoint_path.empty()) rc.eval_checkpoint = checkpoint_path;
    rc.train.seed = rc.seed;
    rc.validate();

    if (c_gen->parsed()) {
      std::string dir = rc.out.empty() ? rc.data_dir : rc.out;
      if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw std::runtime_error("output directory " + dir +
                                 " is not empty (pass --force to overwrite)");
      }
      gz::Dataset ds = gz::generate_dataset(rc.data, rc.seed);
      gz::save_dataset(ds, dir, force);
      write_effective_config(rc, dir);
      std::cout << "dataset: " << ds.chars.size() << " characters, "
                << ds.atlas.n_radicals << " radicals -> " << dir << "\n";
    } else if (c_train->parsed()) {
      gz::Dataset ds = load_dataset_or_fail(rc.data_dir);
      std::string dir = rc.out.empty() ? timestamp_dir("train") : rc.out;
      write_effective_config(rc, dir);
      gz::ProtocolConfig pc = protocol_from(rc);
      // The checkpoint embeds the run config minus its output location, so
      // identical runs into different directories stay byte-identical.
      gz::RunConfig embedded = rc;
      embedded.out.clear();
      gz::TrainOutcome to =
          gz::train(ds, pc.model, pc.train, pc.eval_blur_sigma, pc.eval_rot_range, dir,
                    gz::run_config_to_json(embedded).dump());
      std::printf("trained %d steps; best val accuracy %.6f at epoch %d\ncheckpoint: %s\n",
                  to.steps, to.best_val_accuracy, to.best_epoch, to.checkpoint_path.c_str());
    } else if (c_eval->parsed()) {
      gz::Dataset ds = load_dataset_or_fail(rc.data_dir);
      std::string ckpt = require_checkpoint(rc);
      std::string dir = rc.out.empty() ? timestamp_dir("eval") : rc.out;
      write_effective_config(rc, dir);
      gz::EvalReport rep =
          gz::evaluate_checkpoint(ds, ckpt, rc.train.train_style, rc.eval_blur_sigma,
                                  rc.eval_rot_range, rc.eval_normalize, rc.seed, dir);
      std::printf("AR%% = %.6f (%d/%d)\n", 100.0 * rep.accuracy, rep.correct, rep.total);
    } else if (c_sweep->parsed()) {
      gz::Dataset ds = load_dataset_or_fail(rc.data_dir);
      std::string dir = rc.out.empty() ? timestamp_dir("sweep") : rc.out;
      write_effective_config(rc, dir);
      auto rows = gz::run_unseen_sweep(ds, rc.sweep_sizes, protocol_from(rc), dir);
      std::cout << gz::sweep_csv(rows);
    } else if (c_ablate->parsed()) {
      gz::Dataset ds = load_dataset_or_fail(rc.data_dir);
      std::string dir = rc.out.empty() ? timestamp_dir("ablate") : rc.out;
      write_effective_config(rc, dir);
      if (rc.ablate_axis == "loss") {
        auto rows = gz::run_loss_ablation(ds, protocol_from(rc), gz::default_loss_cells(), dir);
        std::cout << gz::loss_ablation_csv(rows);
      } else {
        auto rows = gz::run_extra_block_ablation(ds, protocol_from(rc), rc.ablate_cells, dir);
        std::cout << gz::extra_block_csv(rows);
      }
    } else if (c_report->parsed()) {
      gz::Dataset ds = load_dataset_or_fail(rc.data_dir);
      std::string ckpt = require_checkpoint(rc);
      std::string dir = rc.out.empty() ? timestamp_dir("report") : rc.out;
      write_effective_config(rc, dir);
      gz::LoadedCheckpoint lc = gz::load_checkpoint(ckpt);
      lc.model.set_train(false);
      std::vector<int> all_ids;
      for (const auto& ch : ds.chars) all_ids.push_back(ch.char_id);
      gz::EmbeddingBank bank = gz::build_bank(lc.model, all_ids, ds, rc.eval_normalize);
      gz::ComplexityReport rep = gz::complexity_report(lc.model, bank, ds, ckpt);
      std::string text = gz::complexity_text(rep);
      std::ofstream tf(dir + "/report.txt", std::ios::trunc);
      tf << text;
      std::ofstream cf(dir + "/report.csv", std::ios::trunc);
      cf << "param_count,param_bytes,checkpoint_bytes,bank_entries,bank_bytes,mean_ms_per_char,"
            "timed_chars\n"
         << rep.param_count << ',' << rep.param_bytes << ',' << rep.checkpoint_bytes << ','
         << rep.bank_entries << ',' << rep.bank_bytes << ',' << rep.mean_ms_per_char << ','
         << rep.timed_chars << "\n";
      if (!tf || !cf) throw std::runtime_error("cannot write report files into " + dir);
      std::cout << text;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
