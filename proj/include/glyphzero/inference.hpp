#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glyphzero/glyphs.hpp"
#include "glyphzero/model.hpp"
#include "glyphzero/trainer.hpp"

namespace gz {

// Canonical-style embeddings of every candidate character, L1-searched at
// inference. char_ids are strictly ascending so argmin ties resolve to the
// lowest char id.
struct EmbeddingBank {
  std::vector<int> char_ids;
  int c = 0, h = 0, w = 0;
  std::vector<float> data;  // [n][c*h*w], row per character
  bool normalized = false;  // rows L2-normalized; queries get the same treatment
  uint64_t checkpoint_digest = 0;
  uint64_t dataset_digest = 0;

  int size() const { return static_cast<int>(char_ids.size()); }
  int64_t dim() const { return static_cast<int64_t>(c) * h * w; }
  const float* row(int i) const { return data.data() + static_cast<size_t>(i) * dim(); }
};

EmbeddingBank build_bank(Model<float>& model, const std::vector<int>& candidate_ids,
                         const Dataset& ds, bool normalize = false);

void save_bank(const EmbeddingBank& bank, const std::string& path);
EmbeddingBank load_bank(const std::string& path);

// Nearest canonical embedding under summed absolute difference; returns the
// char id. Ties break to the lowest id.
int classify(Model<float>& model, const EmbeddingBank& bank, const GlyphImage& img);
std::vector<int> classify_batch(Model<float>& model, const EmbeddingBank& bank,
                                const std::vector<const GlyphImage*>& imgs);

struct EvalItem {
  GlyphImage image;
  int char_id = -1;
};

struct Confusion {
  int truth = -1, predicted = -1, count = 0;
};

struct EvalReport {
  std::string protocol;
  int correct = 0, total = 0;
  double accuracy = 0.0;  // correct / total
  std::vector<int> item_char_ids;
  std::vector<int> predictions;
  std::vector<Confusion> top_confusions;  // at most 5, deterministic order
  double ms_per_char = 0.0;               // wall clock; kept out of the CSV
};

EvalReport evaluate(Model<float>& model, const EmbeddingBank& bank,
                    const std::vector<EvalItem>& items, const std::string& protocol);

std::string eval_report_csv(const EvalReport& rep);
std::string eval_report_text(const EvalReport& rep);

// Test-split items for a dataset: styled renders with optional augmentation,
// seeded per character.
std::vector<EvalItem> make_eval_items(const Dataset& ds, const std::vector<int>& char_ids,
                                      Style style, double blur_sigma, double rot_range,
                                      uint64_t seed, const char* stream_tag);

struct ProtocolConfig {
  ModelConfig model;
  TrainConfig train;
  double eval_blur_sigma = 0.0;
  double eval_rot_range = 0.0;
  bool normalize_embeddings = false;  // L1 over raw embeddings by default
};

struct ProtocolOutcome {
  TrainOutcome train;
  EvalReport report;
  std::string bank_path;
};

// Full experiment: train on ds's split, rebuild the best checkpoint, embed all
// candidates, evaluate the test split. Writes checkpoint.bin, train_log.csv,
// bank.bin, eval_report.csv, eval_summary.txt under out_dir.
ProtocolOutcome train_and_evaluate(const Dataset& ds, const ProtocolConfig& pc,
                                   const std::string& out_dir, const std::string& run_json = "");

// Evaluate an existing checkpoint against ds's test split.
EvalReport evaluate_checkpoint(const Dataset& ds, const std::string& checkpoint_path,
                               Style style, double eval_blur_sigma, double eval_rot_range,
                               bool normalize, uint64_t seed, const std::string& out_dir);

struct SweepRow {
  int train_size = 0;
  bool skipped = false;  // infeasible for this dataset
  double ar_percent = 0.0;
};

// Accuracy vs number of training characters, fixed validation and test sets.
// Training sets are nested prefixes of one coverage-first ordering so every
// size shares the same evaluation target.
std::vector<SweepRow> run_unseen_sweep(const Dataset& ds, const std::vector<int>& sizes,
                                       const ProtocolConfig& pc, const std::string& out_dir);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct LossAblationRow {
  int row = 0;
  bool hpe = false, kcls = false, center = false, race = false;
  bool invalid = false;  // all losses off: recorded, never trained
  double ar_percent = 0.0;
};

struct LossCell {
  bool hpe = false, kcls = false, center = false, race = false;
};

// The 15 non-empty loss combinations by default (kcls toggles both branches).
std::vector<LossCell> default_loss_cells();
std::vector<LossAblationRow> run_loss_ablation(const Dataset& ds, const ProtocolConfig& pc,
                                               const std::vector<LossCell>& cells,
                                               const std::string& out_dir);
std::string loss_ablation_csv(const std::vector<LossAblationRow>& rows);

struct ExtraBlockRow {
  double blur_sigma = 0.0, rot_range = 0.0;
  double ar_with = 0.0, ar_without = 0.0, diff = 0.0;
};

// Degradation grid x {with, without} the training-branch extra block; the
// same augmentation is applied at train and test time.
std::vector<ExtraBlockRow> run_extra_block_ablation(
    const Dataset& ds, const ProtocolConfig& pc,
    const std::vector<std::pair<double, double>>& cells, const std::string& out_dir);
std::string extra_block_csv(const std::vector<ExtraBlockRow>& rows);

struct ComplexityReport {
  int64_t param_count = 0;
  int64_t param_bytes = 0;
  int64_t checkpoint_bytes = 0;
  int64_t bank_entries = 0;
  int64_t bank_bytes = 0;
  double mean_ms_per_char = 0.0;
  int timed_chars = 0;
};

ComplexityReport complexity_report(Model<float>& model, const EmbeddingBank& bank,
                                   const Dataset& ds, const std::string& checkpoint_path);
std::string complexity_text(const ComplexityReport& rep);

uint64_t file_digest(const std::string& path);
uint64_t dataset_digest(const Dataset& ds);

}  // namespace gz
