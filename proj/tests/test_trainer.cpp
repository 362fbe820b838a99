#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "glyphzero/checkpoint.hpp"
#include "glyphzero/inference.hpp"
#include "glyphzero/losses.hpp"
#include "glyphzero/model.hpp"
#include "glyphzero/ops.hpp"
#include "glyphzero/trainer.hpp"

#include "gradcheck.hpp"

using namespace gz;
using namespace gztest;

namespace {

// 40 characters over 8 radicals, split 20/4/16. Small enough that a full
// train() run takes seconds.
Dataset small_dataset() {
  DataGenParams p;
  p.n_radicals = 8;
  p.cell_px = 12;
  p.n_chars = 40;
  p.image_size = 32;
  p.train_n = 20;
  p.val_n = 4;
  p.test_n = 16;
  return generate_dataset(p, 33);
}

ModelConfig small_model_config() {
  ModelConfig mc;
  mc.input_size = 32;
  mc.stem_channels = 4;
  mc.stage_channels = {4, 8};
  mc.embedding_c = 8;
  mc.embedding_h = 8;
  mc.embedding_w = 8;
  mc.n_known = 20;
  mc.n_radical_channels = 9;
  mc.extra_cells = 1;
  return mc;
}

TrainConfig fast_train_config() {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.seed = 5;
  return tc;
}

std::vector<int> batch_char_ids(const std::vector<std::vector<SamplePair>>& batches) {
  std::vector<int> ids;
  for (const auto& b : batches)
    for (const auto& sp : b) ids.push_back(sp.char_id);
  return ids;
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* tag) {
    path = std::filesystem::temp_directory_path() /
           (std::string("gz_trainer_") + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("trainer: config validation rejects out-of-range settings") {
  TrainConfig ok;
  ok.validate();  // defaults are fine

  auto reject = [](auto mutate, std::vector<std::string> frags) {
    TrainConfig tc;
    mutate(tc);
    CHECK(throws_containing([&] { tc.validate(); }, frags));
  };
  reject([](TrainConfig& t) { t.epochs = 0; }, {"epochs"});
  reject([](TrainConfig& t) { t.batch_size = 1; }, {"batch_size", ">= 2", "1"});
  reject([](TrainConfig& t) { t.lr = 0; }, {"learning rate"});
  reject([](TrainConfig& t) { t.optimizer = "rmsprop"; }, {"adam", "sgd", "rmsprop"});
  reject([](TrainConfig& t) { t.momentum = 1.0; }, {"momentum"});
  reject([](TrainConfig& t) { t.beta2 = 1.0; }, {"betas"});
  reject([](TrainConfig& t) { t.weight_decay = -0.1; }, {"weight_decay"});
  reject([](TrainConfig& t) { t.train_style = Style::kCanonical; }, {"variant or complex"});
  reject([](TrainConfig& t) { t.blur_sigma = -1; }, {"blur"});
  reject([](TrainConfig& t) { t.rot_range = -5; }, {"rotation"});
  reject([](TrainConfig& t) { t.center_alpha = 1.5; }, {"center_alpha"});
}

TEST_CASE("trainer: category map sorts the train split") {
  SplitSpec s;
  s.train_ids = {5, 2, 9};
  CHECK(category_map(s) == std::vector<int>{2, 5, 9});
}

TEST_CASE("trainer: batch layout covers every pair once and drops <2 leftovers") {
  Dataset ds = small_dataset();
  REQUIRE(ds.split.train_ids.size() == 20);

  TrainConfig tc = fast_train_config();
  tc.batch_size = 8;
  PairStream s8(ds, tc);
  CHECK(s8.pairs_per_epoch() == 20);
  CHECK(s8.batches_per_epoch() == 3);  // 8 + 8 + 4
  auto b8 = s8.epoch_batches(0);
  REQUIRE(b8.size() == 3);
  CHECK(b8[0].size() == 8);
  CHECK(b8[1].size() == 8);
  CHECK(b8[2].size() == 4);

  // one oversized batch holds the whole epoch
  tc.batch_size = 32;
  PairStream s32(ds, tc);
  CHECK(s32.batches_per_epoch() == 1);
  CHECK(s32.epoch_batches(0)[0].size() == 20);

  // remainder of 1 cannot feed batch norm and is dropped
  tc.batch_size = 19;
  PairStream s19(ds, tc);
  CHECK(s19.batches_per_epoch() == 1);
  auto b19 = s19.epoch_batches(4);
  REQUIRE(b19.size() == 1);
  CHECK(b19[0].size() == 19);

  // every training char appears exactly once per epoch (modulo drops)
  std::vector<int> seen = batch_char_ids(b8);
  std::sort(seen.begin(), seen.end());
  std::vector<int> want = ds.split.train_ids;
  std::sort(want.begin(), want.end());
  CHECK(seen == want);
}

TEST_CASE("trainer: pairs carry canonical targets and styled training renders") {
  Dataset ds = small_dataset();
  TrainConfig tc = fast_train_config();  // blur 0, rot 0: augment is a no-op
  PairStream stream(ds, tc);
  auto batches = stream.epoch_batches(1);
  for (const auto& batch : batches) {
    for (const SamplePair& sp : batch) {
      const CharacterSpec& spec = ds.chars.at(static_cast<size_t>(sp.char_id));
      GlyphImage canon = render_glyph(spec, ds.atlas, Style::kCanonical, ds.image_size, ds.seed);
      GlyphImage styled = render_glyph(spec, ds.atlas, tc.train_style, ds.image_size, ds.seed);
      CHECK(sp.target.pixels == canon.pixels);
      CHECK(sp.training.pixels == styled.pixels);
      LabelSet want = make_labels(spec, ds.atlas.n_radicals);
      CHECK(sp.labels.radical_counts == want.radical_counts);
    }
  }
}

TEST_CASE("trainer: epoch order is a seeded shuffle") {
  Dataset ds = small_dataset();
  TrainConfig tc = fast_train_config();
  PairStream a(ds, tc), b(ds, tc);

  CHECK(batch_char_ids(a.epoch_batches(3)) == batch_char_ids(b.epoch_batches(3)));
  CHECK(batch_char_ids(a.epoch_batches(0)) != batch_char_ids(a.epoch_batches(1)));

  TrainConfig other = tc;
  other.seed = tc.seed + 1;
  PairStream c(ds, other);
  CHECK(batch_char_ids(a.epoch_batches(0)) != batch_char_ids(c.epoch_batches(0)));
}

TEST_CASE("trainer: augmentation resamples per epoch, deterministically") {
  Dataset ds = small_dataset();
  TrainConfig tc = fast_train_config();
  tc.rot_range = 20.0;
  PairStream stream(ds, tc);

  auto find_char = [](const std::vector<std::vector<SamplePair>>& batches, int id) {
    for (const auto& b : batches)
      for (const auto& sp : b)
        if (sp.char_id == id) return sp.training.pixels;
    REQUIRE(false);
    return std::vector<float>{};
  };

  int probe_id = ds.split.train_ids[0];
  auto e0 = find_char(stream.epoch_batches(0), probe_id);
  auto e0_again = find_char(stream.epoch_batches(0), probe_id);
  auto e1 = find_char(stream.epoch_batches(1), probe_id);
  CHECK(e0 == e0_again);
  CHECK(e0 != e1);
}

TEST_CASE("trainer: stream rejects empty splits and canonical style") {
  Dataset ds = small_dataset();
  Dataset empty = ds;
  empty.split.train_ids.clear();
  TrainConfig tc = fast_train_config();
  CHECK(throws_containing([&] { PairStream s(empty, tc); }, {"training split is empty"}));

  TrainConfig canon = tc;
  canon.train_style = Style::kCanonical;
  CHECK(throws_containing([&] { PairStream s(ds, canon); }, {"variant or complex"}));
}

TEST_CASE("optimizer: adam first step moves by ~lr and is scale invariant") {
  auto run_one = [](float x0) {
    Parameter<float> p;
    p.tensor = Tensor<float>({1}, {x0});
    p.tensor.set_requires_grad(true);
    TrainConfig tc;
    tc.lr = 0.1;
    tc.weight_decay = 0.0;
    Optimizer opt({&p}, tc);
    Tensor<float> loss = sum_all(mul(p.tensor, p.tensor));
    loss.backward();  // d/dx x^2 = 2x
    opt.step();
    return p.tensor.data()[0];
  };
  // mhat = g, vhat = g^2, so the update is lr * sign(g) regardless of |g|
  CHECK(run_one(1.0f) == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(run_one(100.0f) == doctest::Approx(99.9).epsilon(1e-5));
}

TEST_CASE("optimizer: sgd momentum accumulates velocity") {
  Parameter<float> p;
  p.tensor = Tensor<float>({1}, {1.0f});
  p.tensor.set_requires_grad(true);
  TrainConfig tc;
  tc.optimizer = "sgd";
  tc.lr = 0.1;
  tc.momentum = 0.5;
  tc.weight_decay = 0.0;
  Optimizer opt({&p}, tc);

  auto step_once = [&] {
    p.tensor.zero_grad();
    Tensor<float> loss = sum_all(mul(p.tensor, p.tensor));
    loss.backward();
    opt.step();
  };
  step_once();  // g=2, v=2, w=1-0.2
  CHECK(p.tensor.data()[0] == doctest::Approx(0.8).epsilon(1e-6));
  step_once();  // g=1.6, v=0.5*2+1.6=2.6, w=0.8-0.26
  CHECK(p.tensor.data()[0] == doctest::Approx(0.54).epsilon(1e-6));
}

TEST_CASE("optimizer: weight decay folds into the gradient unless no_decay") {
  auto decayed = [](bool no_decay) {
    Parameter<float> p;
    p.tensor = Tensor<float>({1}, {1.0f});
    p.tensor.set_requires_grad(true);
    p.no_decay = no_decay;
    TrainConfig tc;
    tc.optimizer = "sgd";
    tc.lr = 0.1;
    tc.momentum = 0.0;
    tc.weight_decay = 0.1;
    Optimizer opt({&p}, tc);
    Tensor<float> loss = sum_all(mul(p.tensor, p.tensor));
    loss.backward();
    opt.step();  // g=2 (+0.2 decay unless excluded)
    return p.tensor.data()[0];
  };
  CHECK(decayed(false) == doctest::Approx(0.79).epsilon(1e-6));
  CHECK(decayed(true) == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("optimizer: zero or absent gradients skip the parameter entirely") {
  Parameter<float> live, idle, never;
  live.tensor = Tensor<float>({1}, {1.0f});
  live.tensor.set_requires_grad(true);
  idle.tensor = Tensor<float>({2}, {3.0f, -4.0f});
  idle.tensor.set_requires_grad(true);
  idle.tensor.zero_grad();  // allocated, identically zero
  never.tensor = Tensor<float>({2}, {5.0f, 6.0f});  // grad never touched

  TrainConfig tc;
  tc.optimizer = "sgd";
  tc.lr = 0.1;
  tc.momentum = 0.0;
  tc.weight_decay = 0.5;  // would visibly shrink idle/never if not skipped
  Optimizer opt({&live, &idle, &never}, tc);

  Tensor<float> loss = sum_all(mul(live.tensor, live.tensor));
  loss.backward();
  opt.step();

  CHECK(live.tensor.data()[0] != 1.0f);
  CHECK(idle.tensor.data() == std::vector<float>{3.0f, -4.0f});
  CHECK(never.tensor.data() == std::vector<float>{5.0f, 6.0f});
}

TEST_CASE("trainer: one batch is memorizable") {
  Dataset ds = small_dataset();
  TrainConfig tc = fast_train_config();
  tc.batch_size = 4;
  PairStream stream(ds, tc);
  std::vector<SamplePair> batch = stream.epoch_batches(0)[0];
  REQUIRE(batch.size() == 4);

  ModelConfig mc = small_model_config();
  mc.n_known = 4;
  Model<float> model = build_model<float>(mc, 11);
  model.set_train(true);
  Centers<float> centers = Centers<float>::zeros(4, mc.embedding_c, mc.embedding_h,
                                                 mc.embedding_w, 0.5f);

  std::vector<const GlyphImage*> imgs_d, imgs_t;
  std::vector<int> cats;
  std::vector<std::vector<int>> counts;
  for (size_t i = 0; i < batch.size(); ++i) {
    imgs_d.push_back(&batch[i].training);
    imgs_t.push_back(&batch[i].target);
    cats.push_back(static_cast<int>(i));
    counts.push_back(batch[i].labels.radical_counts);
  }
  Tensor<float> xd = make_batch<float>(imgs_d);
  Tensor<float> xt = make_batch<float>(imgs_t);

  TrainConfig otc;
  otc.lr = 3e-3;
  auto params = model.parameters();
  Optimizer opt(params, otc);
  LossWeights lw;

  double first = -1.0, last = -1.0;
  for (int step = 0; step < 150; ++step) {
    ForwardOutputs<float> out_t = model.forward_target(xt);
    ForwardOutputs<float> out_d = model.forward_training(xd);
    LossTerms<float> terms;
    Tensor<float> target_const(out_t.embedding.shape(), out_t.embedding.data());
    terms.hpe = loss_hpe(out_d.embedding, target_const);
    terms.kcls_d = loss_kcls(out_d.category_logits, cats);
    terms.kcls_t = loss_kcls(out_t.category_logits, cats);
    terms.center = loss_center(out_t.embedding, cats, centers);
    terms.race = loss_race(out_t.radical_map, counts);
    LossReport<float> rep = loss_total(terms, lw);
    REQUIRE(std::isfinite(rep.total));
    if (step == 0) first = rep.total;
    last = rep.total;
    for (Parameter<float>* p : params) p->tensor.zero_grad();
    rep.total_tensor.backward();
    opt.step();
    update_centers(centers, out_t.embedding, cats, 0.5f);
  }
  CHECK(first > 0.0);
  CHECK(last < 0.1 * first);

  // the memorized batch is also classified correctly by the known-char head
  model.set_train(false);
  ForwardOutputs<float> out = model.forward_training(xd);
  const auto& logits = out.category_logits.data();
  int n_correct = 0;
  for (int b = 0; b < 4; ++b) {
    int arg = 0;
    for (int k = 1; k < 4; ++k)
      if (logits[static_cast<size_t>(b * 4 + k)] > logits[static_cast<size_t>(b * 4 + arg)])
        arg = k;
    n_correct += arg == b ? 1 : 0;
  }
  CHECK(n_correct == 4);
}

TEST_CASE("trainer: full run writes a log and a reloadable best checkpoint") {
  TempDir dir("run");
  Dataset ds = small_dataset();
  ModelConfig mc = small_model_config();
  TrainConfig tc = fast_train_config();

  TrainOutcome out = train(ds, mc, tc, 0.0, 0.0, dir.str(), "{\"tag\":42}");
  CHECK(out.steps == 6);  // 2 epochs x 3 batches
  CHECK(out.n_known == 20);
  CHECK(out.best_epoch >= 0);
  CHECK(out.best_val_accuracy >= 0.0);
  CHECK(out.best_val_accuracy <= 1.0);
  std::vector<int> want = ds.split.train_ids;
  std::sort(want.begin(), want.end());
  CHECK(out.category_ids == want);

  // log shape: pinned header, 8 fields everywhere, one val row per epoch
  std::ifstream log(out.log_path);
  REQUIRE(log.good());
  std::string line;
  REQUIRE(std::getline(log, line));
  CHECK(line == "step,loss_hpe,loss_kcls_d,loss_kcls_t,loss_center,loss_race,loss_total,val_accuracy");
  int train_rows = 0, val_rows = 0;
  while (std::getline(log, line)) {
    auto f = split_csv_row(line);
    REQUIRE(f.size() == 8);
    if (f[1].empty()) {
      ++val_rows;
      CHECK(!f[7].empty());
      for (int k = 1; k <= 6; ++k) CHECK(f[k].empty());
    } else {
      ++train_rows;
      CHECK(f[7].empty());
      for (int k = 0; k <= 6; ++k) CHECK(!f[k].empty());
    }
  }
  CHECK(train_rows == 6);
  CHECK(val_rows == 2);

  // the checkpoint holds the best-epoch weights: re-scoring the validation
  // items from a fresh load reproduces the reported best accuracy
  LoadedCheckpoint lc = load_checkpoint(out.checkpoint_path);
  CHECK(lc.meta.run_json == "{\"tag\":42}");
  CHECK(lc.model.cfg.n_known == 20);
  lc.model.set_train(false);

  std::vector<int> all_ids;
  for (const auto& ch : ds.chars) all_ids.push_back(ch.char_id);
  EmbeddingBank bank = build_bank(lc.model, all_ids, ds);
  std::vector<EvalItem> items = make_eval_items(ds, ds.split.val_ids, tc.train_style, 0.0, 0.0,
                                                tc.seed, "val.aug");
  std::vector<const GlyphImage*> vimgs;
  for (const auto& it : items) vimgs.push_back(&it.image);
  std::vector<int> pred = classify_batch(lc.model, bank, vimgs);
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == items[i].char_id ? 1 : 0;
  double acc = static_cast<double>(correct) / static_cast<double>(items.size());
  CHECK(acc == doctest::Approx(out.best_val_accuracy).epsilon(1e-12));
}

TEST_CASE("trainer: empty validation split saves every epoch") {
  TempDir dir("noval");
  Dataset ds = small_dataset();
  ds.split.val_ids.clear();
  TrainConfig tc = fast_train_config();
  TrainOutcome out = train(ds, small_model_config(), tc, 0.0, 0.0, dir.str());
  CHECK(out.best_epoch == tc.epochs - 1);
  CHECK(out.best_val_accuracy == 0.0);
  CHECK(std::filesystem::exists(out.checkpoint_path));
}

TEST_CASE("checkpoint: save-load-save is byte identical") {
  TempDir dir("bytes");
  Dataset ds = small_dataset();
  TrainConfig tc = fast_train_config();
  tc.epochs = 1;
  TrainOutcome out = train(ds, small_model_config(), tc, 0.0, 0.0, dir.str(), "{\"r\":1}");

  LoadedCheckpoint lc = load_checkpoint(out.checkpoint_path);
  std::string second = dir.str() + "/again.bin";
  save_checkpoint(lc.model, lc.centers, second, lc.meta.run_json);
  CHECK(slurp(out.checkpoint_path) == slurp(second));

  LoadedCheckpoint lc2 = load_checkpoint(second);
  CHECK(lc2.meta.config_digest == lc.meta.config_digest);
  CHECK(lc2.meta.config_json == lc.meta.config_json);
  CHECK(lc2.centers.data == lc.centers.data);
}

TEST_CASE("checkpoint: corruption is named, not silently accepted") {
  TempDir dir("corrupt");
  Dataset ds = small_dataset();
  TrainConfig tc = fast_train_config();
  tc.epochs = 1;
  TrainOutcome out = train(ds, small_model_config(), tc, 0.0, 0.0, dir.str());
  std::string bytes = slurp(out.checkpoint_path);

  auto write_variant = [&](const std::string& name, const std::string& content) {
    std::string p = dir.str() + "/" + name;
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.close();
    return p;
  };

  std::string bad_magic = bytes;
  bad_magic[0] ^= 0x40;
  std::string p1 = write_variant("magic.bin", bad_magic);
  CHECK(throws_containing([&] { load_checkpoint(p1); }, {"bad magic", "magic.bin"}));

  std::string truncated = bytes.substr(0, 14);  // mid-header
  std::string p2 = write_variant("trunc.bin", truncated);
  CHECK(throws_containing([&] { load_checkpoint(p2); }, {"truncated"}));

  // flipping one byte inside the embedded config document breaks the digest
  size_t at = bytes.find("input_size");
  REQUIRE(at != std::string::npos);
  std::string tampered = bytes;
  tampered[at] = 'X';
  std::string p3 = write_variant("tamper.bin", tampered);
  CHECK(throws_containing([&] { load_checkpoint(p3); }, {"digest mismatch"}));

  std::string trailing = bytes + std::string(4, '\0');
  std::string p4 = write_variant("trail.bin", trailing);
  CHECK(throws_containing([&] { load_checkpoint(p4); }, {"trailing bytes"}));
}

TEST_CASE("trainer: adam and sgd both reduce the training loss") {
  Dataset ds = small_dataset();
  for (const char* name : {"adam", "sgd"}) {
    TempDir dir(name);
    TrainConfig tc = fast_train_config();
    tc.optimizer = name;
    tc.epochs = 3;
    TrainOutcome out = train(ds, small_model_config(), tc, 0.0, 0.0, dir.str());

    // compare mean total loss of first vs last epoch from the log
    std::ifstream log(out.log_path);
    std::string line;
    std::getline(log, line);  // header
    std::vector<double> totals;
    while (std::getline(log, line)) {
      auto f = split_csv_row(line);
      if (!f[6].empty()) totals.push_back(std::stod(f[6]));
    }
    REQUIRE(totals.size() == 9);
    double first_epoch = (totals[0] + totals[1] + totals[2]) / 3.0;
    double last_epoch = (totals[6] + totals[7] + totals[8]) / 3.0;
    INFO(name);
    CHECK(last_epoch < first_epoch);
  }
}
