#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "glyphzero/glyphs.hpp"
#include "glyphzero/model.hpp"
#include "glyphzero/trainer.hpp"

namespace gz {

// Everything a run needs, loadable from one JSON document. Unknown keys are
// rejected with the full key path so typos never pass silently.
struct RunConfig {
  uint64_t seed = 1;
  std::string out;  // output root; empty -> timestamped directory under runs/

  std::string data_dir = "data/default";
  DataGenParams data;

  ModelConfig model;  // n_known / n_radical_channels stay derived, not keys

  TrainConfig train;

  double eval_blur_sigma = 0.0;
  double eval_rot_range = 0.0;
  bool eval_normalize = false;  // L2-normalize embeddings before the L1 search
  std::string eval_checkpoint;

  std::vector<int> sweep_sizes = {100, 200, 400};

  std::string ablate_axis = "loss";  // or "extra-block"
  std::vector<std::pair<double, double>> ablate_cells = {
      {0.0, 0.0}, {0.5, 0.0}, {0.5, 15.0}, {0.5, 30.0}, {0.5, 45.0}};

  void validate() const;
};

RunConfig default_run_config();

// Strict parse: every key must be known, every value well-typed. `path` is
// used in error messages ("train.loss.w_hpe").
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Inverse of run_config_from_json; dump(2) of this is the effective config
// written into each run directory.
nlohmann::json run_config_to_json(const RunConfig& rc);

nlohmann::json model_config_to_json(const ModelConfig& mc);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Raises invalid_argument naming `path` and the offending key if `j` holds
// keys outside `allowed`.
void require_known_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                        const std::string& path);

}  // namespace gz
