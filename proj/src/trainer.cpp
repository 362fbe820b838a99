#include "glyphzero/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "glyphzero/checkpoint.hpp"
#include "glyphzero/inference.hpp"
#include "glyphzero/ops.hpp"
#include "glyphzero/rng.hpp"

namespace gz {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 2) {
    throw std::invalid_argument("TrainConfig: batch_size must be >= 2 (batch norm), got " +
                                std::to_string(batch_size));
  }
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
  if (optimizer != "adam" && optimizer != "sgd") {
    throw std::invalid_argument("TrainConfig: optimizer must be \"adam\" or \"sgd\", got \"" +
                                optimizer + "\"");
  }
  if (lr_schedule != "constant" && lr_schedule != "cosine") {
    throw std::invalid_argument(
        "TrainConfig: lr schedule must be \"constant\" or \"cosine\", got \"" + lr_schedule +
        "\"");
  }
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("TrainConfig: momentum out of [0,1)");
  if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1) {
    throw std::invalid_argument("TrainConfig: betas must lie in (0,1)");
  }
  if (weight_decay < 0) throw std::invalid_argument("TrainConfig: negative weight_decay");
  if (train_style == Style::kCanonical) {
    throw std::invalid_argument("TrainConfig: training style must be variant or complex");
  }
  if (blur_sigma < 0) throw std::invalid_argument("TrainConfig: negative blur_sigma");
  if (rot_range < 0) throw std::invalid_argument("TrainConfig: negative rotation range");
  if (center_alpha < 0 || center_alpha > 1) {
    throw std::invalid_argument("TrainConfig: center_alpha must lie in [0,1]");
  }
  loss.validate();
}

std::vector<int> category_map(const SplitSpec& split) {
  std::vector<int> ids = split.train_ids;
  std::sort(ids.begin(), ids.end());
  return ids;
}

PairStream::PairStream(const Dataset& ds, const TrainConfig& tc) : ds_(&ds), tc_(tc) {
  if (ds.split.train_ids.empty()) {
    throw std::invalid_argument("PairStream: training split is empty");
  }
  if (tc.train_style == Style::kCanonical) {
    throw std::invalid_argument("PairStream: training style must be variant or complex");
  }
  train_ids_ = ds.split.train_ids;
  canonical_.reserve(train_ids_.size());
  styled_.reserve(train_ids_.size());
  for (int id : train_ids_) {
    const CharacterSpec& spec = ds.chars.at(static_cast<size_t>(id));
    canonical_.push_back(render_glyph(spec, ds.atlas, Style::kCanonical, ds.image_size, ds.seed));
    styled_.push_back(render_glyph(spec, ds.atlas, tc.train_style, ds.image_size, ds.seed));
  }
}

int PairStream::batches_per_epoch() const {
  int n = static_cast<int>(train_ids_.size());
  int full = n / tc_.batch_size;
  int rest = n % tc_.batch_size;
  return full + (rest >= 2 ? 1 : 0);
}

std::vector<std::vector<SamplePair>> PairStream::epoch_batches(int epoch) const {
  std::vector<int> order(train_ids_.size());
  std::iota(order.begin(), order.end(), 0);
  RandomStream rng(substream_seed(tc_.seed, "train.epoch." + std::to_string(epoch)));
  rng.shuffle(order);

  std::vector<std::vector<SamplePair>> batches;
  for (size_t at = 0; at < order.size(); at += static_cast<size_t>(tc_.batch_size)) {
    size_t end = std::min(order.size(), at + static_cast<size_t>(tc_.batch_size));
    if (end - at < 2) break;  // batch norm needs at least 2
    std::vector<SamplePair> batch;
    batch.reserve(end - at);
    for (size_t k = at; k < end; ++k) {
      int idx = order[k];
      int id = train_ids_[static_cast<size_t>(idx)];
      SamplePair sp;
      sp.char_id = id;
      sp.target = canonical_[static_cast<size_t>(idx)];
      sp.training = augment(styled_[static_cast<size_t>(idx)], tc_.blur_sigma, -tc_.rot_range,
                            tc_.rot_range,
                            substream_seed(tc_.seed, "augment." + std::to_string(epoch) + "." +
                                                         std::to_string(id)));
      sp.labels = make_labels(ds_->chars.at(static_cast<size_t>(id)), ds_->atlas.n_radicals);
      batch.push_back(std::move(sp));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

Optimizer::Optimizer(std::vector<Parameter<float>*> params, const TrainConfig& tc)
    : params_(std::move(params)),
      adam_(tc.optimizer == "adam"),
      lr_(tc.lr),
      momentum_(tc.momentum),
      beta1_(tc.beta1),
      beta2_(tc.beta2),
      eps_(tc.adam_eps),
      weight_decay_(tc.weight_decay) {
  slots_.resize(params_.size());
  no_decay_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    size_t n = params_[i]->tensor.data().size();
    slots_[i].m.assign(n, 0.0f);
    if (adam_) slots_[i].v.assign(n, 0.0f);
    no_decay_[i] = params_[i]->no_decay;
  }
}

void Optimizer::step() {
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    const std::vector<float>& g = p.tensor.grad();
    bool any = false;
    for (float v : g) {
      if (v != 0.0f) {
        any = true;
        break;
      }
    }
    if (!any) continue;  // untouched by this step's graph: no decay, no moment update

    std::vector<float>& w = p.tensor.data();
    Slot& s = slots_[i];
    s.t += 1;
    const float wd = no_decay_[i] ? 0.0f : static_cast<float>(weight_decay_);
    if (adam_) {
      const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
      const float corr1 = 1.0f - std::pow(b1, static_cast<float>(s.t));
      const float corr2 = 1.0f - std::pow(b2, static_cast<float>(s.t));
      for (size_t k = 0; k < w.size(); ++k) {
        float gk = g[k] + wd * w[k];
        s.m[k] = b1 * s.m[k] + (1.0f - b1) * gk;
        s.v[k] = b2 * s.v[k] + (1.0f - b2) * gk * gk;
        float mhat = s.m[k] / corr1;
        float vhat = s.v[k] / corr2;
        w[k] -= static_cast<float>(lr_ * lr_scale_) * mhat / (std::sqrt(vhat) + static_cast<float>(eps_));
      }
    } else {
      const float mu = static_cast<float>(momentum_);
      for (size_t k = 0; k < w.size(); ++k) {
        float gk = g[k] + wd * w[k];
        s.m[k] = mu * s.m[k] + gk;
        w[k] -= static_cast<float>(lr_ * lr_scale_) * s.m[k];
      }
    }
  }
}

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TrainOutcome train(const Dataset& ds, const ModelConfig& base_cfg, const TrainConfig& tc,
                   double eval_blur_sigma, double eval_rot_range, const std::string& out_dir,
                   const std::string& run_json) {
  tc.validate();
  if (ds.split.train_ids.empty()) {
    throw std::invalid_argument("train: dataset has an empty training split");
  }
  std::filesystem::create_directories(out_dir);

  ModelConfig mc = base_cfg;
  mc.n_known = static_cast<int>(ds.split.train_ids.size());
  mc.n_radical_channels = ds.atlas.n_radicals + 1;
  mc.seed = substream_seed(tc.seed, "init");
  mc.validate();
  Model<float> model = build_model<float>(mc, mc.seed);

  Centers<float> centers = Centers<float>::zeros(mc.n_known, mc.embedding_c, mc.embedding_h,
                                                 mc.embedding_w, static_cast<float>(tc.center_alpha));

  TrainOutcome outcome;
  outcome.checkpoint_path = out_dir + "/checkpoint.bin";
  outcome.log_path = out_dir + "/train_log.csv";
  outcome.n_known = mc.n_known;
  outcome.category_ids = category_map(ds.split);

  std::vector<int> local_cat(ds.chars.size(), -1);
  for (size_t i = 0; i < outcome.category_ids.size(); ++i) {
    local_cat[static_cast<size_t>(outcome.category_ids[i])] = static_cast<int>(i);
  }

  PairStream stream(ds, tc);
  Optimizer opt(model.parameters(), tc);
  auto params = model.parameters();

  std::vector<int> all_ids;
  all_ids.reserve(ds.chars.size());
  for (const auto& ch : ds.chars) all_ids.push_back(ch.char_id);
  std::vector<EvalItem> val_items = make_eval_items(ds, ds.split.val_ids, tc.train_style,
                                                    eval_blur_sigma, eval_rot_range, tc.seed,
                                                    "val.aug");

  std::ofstream log(outcome.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log: " + outcome.log_path);
  log << "step,loss_hpe,loss_kcls_d,loss_kcls_t,loss_center,loss_race,loss_total,val_accuracy\n";

  const bool cosine = tc.lr_schedule == "cosine";
  const int64_t total_steps =
      static_cast<int64_t>(tc.epochs) * std::max(1, stream.batches_per_epoch());

  bool saved = false;
  double best = -1.0;
  int step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    model.set_train(true);
    for (const auto& batch : stream.epoch_batches(epoch)) {
      if (cosine) {
        opt.set_lr_scale(0.5 * (1.0 + std::cos(kPi * static_cast<double>(step) /
                                               static_cast<double>(total_steps))));
      }
      ++step;
      std::vector<const GlyphImage*> imgs_d, imgs_t;
      std::vector<int> cats;
      std::vector<std::vector<int>> counts;
      imgs_d.reserve(batch.size());
      imgs_t.reserve(batch.size());
      for (const SamplePair& sp : batch) {
        imgs_d.push_back(&sp.training);
        imgs_t.push_back(&sp.target);
        cats.push_back(local_cat[static_cast<size_t>(sp.char_id)]);
        counts.push_back(sp.labels.radical_counts);
      }
      Tensor<float> xt = make_batch<float>(imgs_t);
      Tensor<float> xd = make_batch<float>(imgs_d);
      ForwardOutputs<float> out_t = model.forward_target(xt);
      ForwardOutputs<float> out_d = model.forward_training(xd);

      LossTerms<float> terms;
      if (tc.loss.use_hpe) {
        // The alignment term trains the training branch only: the target
        // embedding enters as a constant, so the bank-side geometry is
        // shaped purely by the target-branch losses.
        Tensor<float> target_const(out_t.embedding.shape(), out_t.embedding.data());
        terms.hpe = loss_hpe(out_d.embedding, target_const);
      }
      if (tc.loss.use_kcls_d) terms.kcls_d = loss_kcls(out_d.category_logits, cats);
      if (tc.loss.use_kcls_t) terms.kcls_t = loss_kcls(out_t.category_logits, cats);
      if (tc.loss.use_center) terms.center = loss_center(out_t.embedding, cats, centers);
      if (tc.loss.use_race) terms.race = loss_race(out_t.radical_map, counts);
      LossReport<float> rep = loss_total(terms, tc.loss);

      if (!std::isfinite(rep.total)) {
        log.flush();
        throw std::runtime_error(
            "train: non-finite total loss at step " + std::to_string(step) +
            (saved ? "; last good checkpoint retained at " + outcome.checkpoint_path
                   : "; no checkpoint was saved yet"));
      }

      for (Parameter<float>* p : params) p->tensor.zero_grad();
      rep.total_tensor.backward();
      opt.step();
      update_centers(centers, out_t.embedding, cats, static_cast<float>(tc.center_alpha));

      log << step << ',' << fmt_g(rep.hpe) << ',' << fmt_g(rep.kcls_d) << ',' << fmt_g(rep.kcls_t)
          << ',' << fmt_g(rep.center) << ',' << fmt_g(rep.race) << ',' << fmt_g(rep.total)
          << ",\n";
      outcome.final_total_loss = rep.total;
      outcome.steps = step;
    }

    model.set_train(false);
    double acc = 0.0;
    if (!val_items.empty()) {
      EmbeddingBank bank = build_bank(model, all_ids, ds);
      std::vector<const GlyphImage*> vimgs;
      vimgs.reserve(val_items.size());
      for (const auto& it : val_items) vimgs.push_back(&it.image);
      std::vector<int> pred = classify_batch(model, bank, vimgs);
      int correct = 0;
      for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == val_items[i].char_id ? 1 : 0;
      acc = static_cast<double>(correct) / static_cast<double>(val_items.size());
    }
    log << step << ",,,,,,," << fmt_g(acc) << "\n";

    if (val_items.empty() || acc > best) {
      best = acc;
      outcome.best_epoch = epoch;
      outcome.best_val_accuracy = acc;
      save_checkpoint(model, centers, outcome.checkpoint_path, run_json);
      saved = true;
    }
  }
  log.flush();
  if (!log) throw std::runtime_error("short write to training log: " + outcome.log_path);
  return outcome;
}

}  // namespace gz
