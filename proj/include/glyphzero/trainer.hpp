#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyphzero/glyphs.hpp"
#include "glyphzero/losses.hpp"
#include "glyphzero/model.hpp"

namespace gz {

// One training example: the same character in two styles. The training branch
// sees the degraded rendering, the target branch the canonical one.
struct SamplePair {
  GlyphImage training;  // styled (+ optional blur/rotation)
  GlyphImage target;    // canonical
  int char_id = -1;
  LabelSet labels;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;  // >= 2 (batch norm)
  double lr = 1e-3;
  std::string optimizer = "adam";     // or "sgd"
  std::string lr_schedule = "cosine";  // or "constant"; cosine anneals to ~0
  double momentum = 0.9;           // sgd only
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double weight_decay = 1e-4;  // L2, skipped for norm/activation params
  Style train_style = Style::kVariant;
  double blur_sigma = 0.0;  // training-branch augmentation
  double rot_range = 0.0;   // degrees, symmetric
  double center_alpha = 0.5;
  LossWeights loss;
  uint64_t seed = 0;

  void validate() const;
};

// Deterministic pair scheduler: renders are cached once, epoch order is a
// seeded shuffle, trailing batches smaller than 2 are dropped.
class PairStream {
 public:
  PairStream(const Dataset& ds, const TrainConfig& tc);

  int pairs_per_epoch() const { return static_cast<int>(train_ids_.size()); }
  int batches_per_epoch() const;
  // All batches for one epoch, in order. Augmentation (if any) is re-sampled
  // per epoch from a substream keyed by epoch and char id.
  std::vector<std::vector<SamplePair>> epoch_batches(int epoch) const;

 private:
  const Dataset* ds_;
  TrainConfig tc_;
  std::vector<int> train_ids_;
  std::vector<GlyphImage> canonical_;  // indexed like train_ids_
  std::vector<GlyphImage> styled_;
};

// Adam or SGD-with-momentum over float parameters. Parameters whose gradient
// buffer is empty or identically zero are skipped outright: no weight decay,
// no momentum/step-count update.
class Optimizer {
 public:
  Optimizer(std::vector<Parameter<float>*> params, const TrainConfig& tc);
  void step();
  // Multiplies the configured learning rate for subsequent steps (LR
  // schedules live in the train loop, not here).
  void set_lr_scale(double s) { lr_scale_ = s; }

 private:
  struct Slot {
    std::vector<float> m, v;
    int64_t t = 0;
  };
  std::vector<Parameter<float>*> params_;
  std::vector<Slot> slots_;
  std::vector<bool> no_decay_;
  bool adam_ = true;
  double lr_, momentum_, beta1_, beta2_, eps_, weight_decay_;
  double lr_scale_ = 1.0;
};

struct TrainOutcome {
  std::string checkpoint_path;
  std::string log_path;
  int n_known = 0;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  double final_total_loss = 0.0;
  int steps = 0;
  std::vector<int> category_ids;  // sorted train char ids; index = local category
};

// Trains a model on the dataset's train split and writes:
//   <out_dir>/checkpoint.bin   best-validation-accuracy weights + centers
//   <out_dir>/train_log.csv    per-step losses and per-epoch val accuracy
// eval_blur/eval_rot control the validation-time augmentation.
TrainOutcome train(const Dataset& ds, const ModelConfig& base_cfg, const TrainConfig& tc,
                   double eval_blur_sigma, double eval_rot_range, const std::string& out_dir,
                   const std::string& run_json = "");

// Sorted train char ids; index in this list is the local category label.
std::vector<int> category_map(const SplitSpec& split);

}  // namespace gz
