#include "glyphzero/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gz {

using nlohmann::json;

void require_known_keys(const json& j, const std::vector<std::string>& allowed,
                        const std::string& path) {
  if (!j.is_object()) {
    throw std::invalid_argument("config section '" + path + "' must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("unknown config key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
    }
  }
}

namespace {

std::string key_path(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

int get_int(const json& j, const char* key, const std::string& path, int def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    throw std::invalid_argument("config key '" + key_path(path, key) + "' must be an integer");
  return v.get<int>();
}

uint64_t get_u64_val(const json& j, const char* key, const std::string& path, uint64_t def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<int64_t>() >= 0)))
    throw std::invalid_argument("config key '" + key_path(path, key) +
                                "' must be a non-negative integer");
  return v.get<uint64_t>();
}

double get_num(const json& j, const char* key, const std::string& path, double def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number())
    throw std::invalid_argument("config key '" + key_path(path, key) + "' must be a number");
  return v.get<double>();
}

bool get_bool(const json& j, const char* key, const std::string& path, bool def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_boolean())
    throw std::invalid_argument("config key '" + key_path(path, key) + "' must be a boolean");
  return v.get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& path,
                    const std::string& def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string())
    throw std::invalid_argument("config key '" + key_path(path, key) + "' must be a string");
  return v.get<std::string>();
}

std::vector<int> get_int_array(const json& j, const char* key, const std::string& path,
                               std::vector<int> def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_array())
    throw std::invalid_argument("config key '" + key_path(path, key) +
                                "' must be an array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw std::invalid_argument("config key '" + key_path(path, key) +
                                  "' must be an array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

}  // namespace

json model_config_to_json(const ModelConfig& mc) {
  json j;
  j["input_size"] = mc.input_size;
  j["stem_channels"] = mc.stem_channels;
  j["stage_channels"] = mc.stage_channels;
  j["embedding_h"] = mc.embedding_h;
  j["embedding_w"] = mc.embedding_w;
  j["embedding_c"] = mc.embedding_c;
  j["n_known"] = mc.n_known;
  j["n_radical_channels"] = mc.n_radical_channels;
  j["prelu_init_slope"] = mc.prelu_init_slope;
  j["extra_cells"] = mc.extra_cells;
  j["seed"] = mc.seed;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  require_known_keys(j,
                     {"input_size", "stem_channels", "stage_channels", "embedding_h",
                      "embedding_w", "embedding_c", "n_known", "n_radical_channels",
                      "prelu_init_slope", "extra_cells", "seed"},
                     "model");
  ModelConfig mc;
  mc.input_size = get_int(j, "input_size", "model", mc.input_size);
  mc.stem_channels = get_int(j, "stem_channels", "model", mc.stem_channels);
  mc.stage_channels = get_int_array(j, "stage_channels", "model", mc.stage_channels);
  mc.embedding_h = get_int(j, "embedding_h", "model", mc.embedding_h);
  mc.embedding_w = get_int(j, "embedding_w", "model", mc.embedding_w);
  mc.embedding_c = get_int(j, "embedding_c", "model", mc.embedding_c);
  mc.n_known = get_int(j, "n_known", "model", mc.n_known);
  mc.n_radical_channels = get_int(j, "n_radical_channels", "model", mc.n_radical_channels);
  mc.prelu_init_slope = get_num(j, "prelu_init_slope", "model", mc.prelu_init_slope);
  mc.extra_cells = get_int(j, "extra_cells", "model", mc.extra_cells);
  mc.seed = get_u64_val(j, "seed", "model", mc.seed);
  return mc;
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig run_config_from_json(const json& j) {
  require_known_keys(j, {"seed", "out", "data", "model", "train", "eval", "sweep", "ablate"}, "");
  RunConfig rc;
  rc.seed = get_u64_val(j, "seed", "", rc.seed);
  rc.out = get_str(j, "out", "", rc.out);

  if (j.contains("data")) {
    const json& d = j.at("data");
    require_known_keys(d,
                       {"dir", "n_radicals", "cell_px", "n_chars", "image_size", "train_n",
                        "val_n", "test_n", "policy"},
                       "data");
    rc.data_dir = get_str(d, "dir", "data", rc.data_dir);
    rc.data.n_radicals = get_int(d, "n_radicals", "data", rc.data.n_radicals);
    rc.data.cell_px = get_int(d, "cell_px", "data", rc.data.cell_px);
    rc.data.n_chars = get_int(d, "n_chars", "data", rc.data.n_chars);
    rc.data.image_size = get_int(d, "image_size", "data", rc.data.image_size);
    rc.data.train_n = get_int(d, "train_n", "data", rc.data.train_n);
    rc.data.val_n = get_int(d, "val_n", "data", rc.data.val_n);
    rc.data.test_n = get_int(d, "test_n", "data", rc.data.test_n);
    rc.data.policy = split_policy_from_name(
        get_str(d, "policy", "data", std::string(split_policy_name(rc.data.policy))));
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    require_known_keys(m,
                       {"input_size", "stem_channels", "stage_channels", "embedding",
                        "prelu_init_slope", "extra_cells"},
                       "model");
    rc.model.input_size = get_int(m, "input_size", "model", rc.model.input_size);
    rc.model.stem_channels = get_int(m, "stem_channels", "model", rc.model.stem_channels);
    rc.model.stage_channels = get_int_array(m, "stage_channels", "model", rc.model.stage_channels);
    std::vector<int> emb = get_int_array(
        m, "embedding", "model", {rc.model.embedding_h, rc.model.embedding_w, rc.model.embedding_c});
    if (emb.size() != 3)
      throw std::invalid_argument("config key 'model.embedding' must be [h, w, channels]");
    rc.model.embedding_h = emb[0];
    rc.model.embedding_w = emb[1];
    rc.model.embedding_c = emb[2];
    rc.model.prelu_init_slope = get_num(m, "prelu_init_slope", "model", rc.model.prelu_init_slope);
    rc.model.extra_cells = get_int(m, "extra_cells", "model", rc.model.extra_cells);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    require_known_keys(t,
                       {"epochs", "batch_size", "lr", "optimizer", "lr_schedule", "momentum",
                        "beta1", "beta2", "weight_decay", "style", "blur_sigma", "rotation",
                        "center_alpha", "loss"},
                       "train");
    rc.train.epochs = get_int(t, "epochs", "train", rc.train.epochs);
    rc.train.batch_size = get_int(t, "batch_size", "train", rc.train.batch_size);
    rc.train.lr = get_num(t, "lr", "train", rc.train.lr);
    rc.train.optimizer = get_str(t, "optimizer", "train", rc.train.optimizer);
    rc.train.lr_schedule = get_str(t, "lr_schedule", "train", rc.train.lr_schedule);
    rc.train.momentum = get_num(t, "momentum", "train", rc.train.momentum);
    rc.train.beta1 = get_num(t, "beta1", "train", rc.train.beta1);
    rc.train.beta2 = get_num(t, "beta2", "train", rc.train.beta2);
    rc.train.weight_decay = get_num(t, "weight_decay", "train", rc.train.weight_decay);
    rc.train.train_style =
        style_from_name(get_str(t, "style", "train", std::string(style_name(rc.train.train_style))));
    rc.train.blur_sigma = get_num(t, "blur_sigma", "train", rc.train.blur_sigma);
    rc.train.rot_range = get_num(t, "rotation", "train", rc.train.rot_range);
    rc.train.center_alpha = get_num(t, "center_alpha", "train", rc.train.center_alpha);
    if (t.contains("loss")) {
      const json& l = t.at("loss");
      require_known_keys(
          l, {"hpe", "kcls", "center", "race", "w_hpe", "w_kcls_d", "w_kcls_t", "w_center", "w_race"},
          "train.loss");
      LossWeights& w = rc.train.loss;
      w.use_hpe = get_bool(l, "hpe", "train.loss", w.use_hpe);
      bool kcls = get_bool(l, "kcls", "train.loss", w.use_kcls_d);
      w.use_kcls_d = kcls;
      w.use_kcls_t = kcls;
      w.use_center = get_bool(l, "center", "train.loss", w.use_center);
      w.use_race = get_bool(l, "race", "train.loss", w.use_race);
      w.w_hpe = get_num(l, "w_hpe", "train.loss", w.w_hpe);
      w.w_kcls_d = get_num(l, "w_kcls_d", "train.loss", w.w_kcls_d);
      w.w_kcls_t = get_num(l, "w_kcls_t", "train.loss", w.w_kcls_t);
      w.w_center = get_num(l, "w_center", "train.loss", w.w_center);
      w.w_race = get_num(l, "w_race", "train.loss", w.w_race);
    }
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_known_keys(e, {"blur_sigma", "rotation", "normalize", "checkpoint"}, "eval");
    rc.eval_blur_sigma = get_num(e, "blur_sigma", "eval", rc.eval_blur_sigma);
    rc.eval_rot_range = get_num(e, "rotation", "eval", rc.eval_rot_range);
    rc.eval_normalize = get_bool(e, "normalize", "eval", rc.eval_normalize);
    rc.eval_checkpoint = get_str(e, "checkpoint", "eval", rc.eval_checkpoint);
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    require_known_keys(s, {"sizes"}, "sweep");
    rc.sweep_sizes = get_int_array(s, "sizes", "sweep", rc.sweep_sizes);
  }

  if (j.contains("ablate")) {
    const json& a = j.at("ablate");
    require_known_keys(a, {"axis", "cells"}, "ablate");
    rc.ablate_axis = get_str(a, "axis", "ablate", rc.ablate_axis);
    if (a.contains("cells")) {
      const json& cells = a.at("cells");
      if (!cells.is_array())
        throw std::invalid_argument("config key 'ablate.cells' must be an array of [blur, rotation] pairs");
      rc.ablate_cells.clear();
      for (const auto& cell : cells) {
        if (!cell.is_array() || cell.size() != 2 || !cell[0].is_number() || !cell[1].is_number())
          throw std::invalid_argument(
              "config key 'ablate.cells' must be an array of [blur, rotation] pairs");
        rc.ablate_cells.emplace_back(cell[0].get<double>(), cell[1].get<double>());
      }
    }
  }

  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config file " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json run_config_to_json(const RunConfig& rc) {
  json j;
  j["seed"] = rc.seed;
  j["out"] = rc.out;
  j["data"] = {{"dir", rc.data_dir},
               {"n_radicals", rc.data.n_radicals},
               {"cell_px", rc.data.cell_px},
               {"n_chars", rc.data.n_chars},
               {"image_size", rc.data.image_size},
               {"train_n", rc.data.train_n},
               {"val_n", rc.data.val_n},
               {"test_n", rc.data.test_n},
               {"policy", std::string(split_policy_name(rc.data.policy))}};
  j["model"] = {{"input_size", rc.model.input_size},
                {"stem_channels", rc.model.stem_channels},
                {"stage_channels", rc.model.stage_channels},
                {"embedding", {rc.model.embedding_h, rc.model.embedding_w, rc.model.embedding_c}},
                {"prelu_init_slope", rc.model.prelu_init_slope},
                {"extra_cells", rc.model.extra_cells}};
  j["train"] = {{"epochs", rc.train.epochs},
                {"batch_size", rc.train.batch_size},
                {"lr", rc.train.lr},
                {"optimizer", rc.train.optimizer},
                {"lr_schedule", rc.train.lr_schedule},
                {"momentum", rc.train.momentum},
                {"beta1", rc.train.beta1},
                {"beta2", rc.train.beta2},
                {"weight_decay", rc.train.weight_decay},
                {"style", std::string(style_name(rc.train.train_style))},
                {"blur_sigma", rc.train.blur_sigma},
                {"rotation", rc.train.rot_range},
                {"center_alpha", rc.train.center_alpha},
                {"loss",
                 {{"hpe", rc.train.loss.use_hpe},
                  {"kcls", rc.train.loss.use_kcls_d},
                  {"center", rc.train.loss.use_center},
                  {"race", rc.train.loss.use_race},
                  {"w_hpe", rc.train.loss.w_hpe},
                  {"w_kcls_d", rc.train.loss.w_kcls_d},
                  {"w_kcls_t", rc.train.loss.w_kcls_t},
                  {"w_center", rc.train.loss.w_center},
                  {"w_race", rc.train.loss.w_race}}}};
  j["eval"] = {{"blur_sigma", rc.eval_blur_sigma},
               {"rotation", rc.eval_rot_range},
               {"normalize", rc.eval_normalize},
               {"checkpoint", rc.eval_checkpoint}};
  j["sweep"] = {{"sizes", rc.sweep_sizes}};
  json cells = json::array();
  for (const auto& [b, r] : rc.ablate_cells) cells.push_back({b, r});
  j["ablate"] = {{"axis", rc.ablate_axis}, {"cells", cells}};
  return j;
}

void RunConfig::validate() const {
  if (data.n_radicals < 1 || data.cell_px < 2 || data.n_chars < 1 || data.image_size < 2)
    throw std::invalid_argument("config: data section has non-positive geometry");
  if (data.train_n < 1 || data.val_n < 0 || data.test_n < 1)
    throw std::invalid_argument("config: split sizes must be positive (train/test) and non-negative (val)");
  if (data.train_n + data.val_n + data.test_n > data.n_chars)
    throw std::invalid_argument("config: split sizes sum to " +
                                std::to_string(data.train_n + data.val_n + data.test_n) +
                                " but data.n_chars is " + std::to_string(data.n_chars));
  ModelConfig mc = model;
  mc.n_known = 1;
  mc.n_radical_channels = 2;
  mc.validate();
  if (model.input_size != data.image_size)
    throw std::invalid_argument("config: model.input_size " + std::to_string(model.input_size) +
                                " != data.image_size " + std::to_string(data.image_size));
  train.validate();
  if (train.loss.use_kcls_d != train.loss.use_kcls_t)
    throw std::invalid_argument("config: the category loss toggles both branches together");
  if (eval_blur_sigma < 0 || eval_rot_range < 0)
    throw std::invalid_argument("config: eval augmentation magnitudes must be non-negative");
  if (ablate_axis != "loss" && ablate_axis != "extra-block")
    throw std::invalid_argument("config: ablate.axis must be \"loss\" or \"extra-block\", got \"" +
                                ablate_axis + "\"");
  for (int s : sweep_sizes) {
    if (s < 1) throw std::invalid_argument("config: sweep sizes must be positive");
  }
  for (const auto& [b, r] : ablate_cells) {
    if (b < 0 || r < 0)
      throw std::invalid_argument("config: ablate cells must have non-negative blur and rotation");
  }
}

}  // namespace gz
