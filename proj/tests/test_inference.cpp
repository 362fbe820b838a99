#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "glyphzero/checkpoint.hpp"
#include "glyphzero/inference.hpp"
#include "glyphzero/kernels.hpp"
#include "glyphzero/ops.hpp"

#include "gradcheck.hpp"

using namespace gz;
using namespace gztest;

namespace {

Dataset tiny_dataset() {
  DataGenParams p;
  p.n_radicals = 8;
  p.cell_px = 12;
  p.n_chars = 30;
  p.image_size = 32;
  p.train_n = 14;
  p.val_n = 4;
  p.test_n = 12;
  return generate_dataset(p, 21);
}

// extra_cells = 1: the two branches differ, as in a real run
Model<float> tiny_model(int extra_cells = 1, uint64_t seed = 9) {
  ModelConfig mc;
  mc.input_size = 32;
  mc.stem_channels = 4;
  mc.stage_channels = {4, 8};
  mc.embedding_c = 8;
  mc.embedding_h = 8;
  mc.embedding_w = 8;
  mc.n_known = 14;
  mc.n_radical_channels = 9;
  mc.extra_cells = extra_cells;
  Model<float> m = build_model<float>(mc, seed);
  m.set_train(false);
  return m;
}

std::vector<int> ids_of(const Dataset& ds) {
  std::vector<int> ids;
  for (const auto& ch : ds.chars) ids.push_back(ch.char_id);
  return ids;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* tag) {
    path = std::filesystem::temp_directory_path() /
           (std::string("gz_infer_") + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("inference: l1 distance kernel against a hand example and brute force") {
  // rows [0,0], [1,1], [5,5]; query [0.9, 1.2]
  std::vector<float> bank = {0, 0, 1, 1, 5, 5};
  std::vector<float> q = {0.9f, 1.2f};
  std::vector<float> d(3);
  kernels::l1_distances(bank.data(), q.data(), d.data(), 3, 2);
  CHECK(d[0] == doctest::Approx(2.1).epsilon(1e-6));
  CHECK(d[1] == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(d[2] == doctest::Approx(7.9).epsilon(1e-6));

  // random rows against an independent accumulation
  const int n = 7, dim = 33;
  Tensor<float> rb = random_tensor<float>({n, dim}, 100);
  Tensor<float> rq = random_tensor<float>({dim}, 101);
  std::vector<float> rd(n);
  kernels::l1_distances(rb.data().data(), rq.data().data(), rd.data(), n, dim);
  for (int i = 0; i < n; ++i) {
    double want = 0;
    for (int j = 0; j < dim; ++j)
      want += std::fabs(static_cast<double>(rb.data()[i * dim + j]) - rq.data()[j]);
    CHECK(rd[i] == doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("inference: exact distance ties resolve to the lowest char id") {
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model();
  // two identical rows: whatever the query, both distances are equal
  EmbeddingBank bank;
  bank.char_ids = {5, 9};
  bank.c = m.cfg.embedding_c;
  bank.h = m.cfg.embedding_h;
  bank.w = m.cfg.embedding_w;
  bank.data.assign(static_cast<size_t>(2 * bank.dim()), 0.25f);
  GlyphImage img = render_glyph(ds.chars[0], ds.atlas, Style::kVariant, ds.image_size, ds.seed);
  CHECK(classify(m, bank, img) == 5);
}

TEST_CASE("inference: weight-shared branches retrieve canonical renders exactly") {
  // with no extra cells the query branch equals the bank branch, so a
  // canonical render's embedding coincides with its own bank row even on an
  // untrained network
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model(/*extra_cells=*/0);
  EmbeddingBank bank = build_bank(m, ids_of(ds), ds);
  for (int id : {0, 7, 29}) {
    GlyphImage img =
        render_glyph(ds.chars[static_cast<size_t>(id)], ds.atlas, Style::kCanonical,
                     ds.image_size, ds.seed);
    CHECK(classify(m, bank, img) == id);
  }
}

TEST_CASE("inference: bank construction sorts, validates, and reproduces") {
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model();

  std::vector<int> shuffled = {9, 3, 27, 0, 14};
  EmbeddingBank bank = build_bank(m, shuffled, ds);
  CHECK(bank.char_ids == std::vector<int>{0, 3, 9, 14, 27});
  CHECK(bank.size() == 5);
  CHECK(bank.c == m.cfg.embedding_c);
  CHECK(bank.h == m.cfg.embedding_h);
  CHECK(bank.w == m.cfg.embedding_w);
  CHECK(!bank.normalized);

  // row k is the target-branch embedding of char_ids[k]'s canonical render
  GlyphImage canon = render_glyph(ds.chars[9], ds.atlas, Style::kCanonical, ds.image_size, ds.seed);
  NoGradGuard guard;
  ForwardOutputs<float> fo = m.forward_target(make_batch<float>({&canon}));
  const float* row = bank.row(2);
  for (int64_t j = 0; j < bank.dim(); ++j) CHECK(row[j] == fo.embedding.data()[static_cast<size_t>(j)]);

  EmbeddingBank again = build_bank(m, shuffled, ds);
  CHECK(again.data == bank.data);

  CHECK(throws_containing([&] { build_bank(m, {}, ds); }, {"candidate set is empty"}));
  CHECK(throws_containing([&] { build_bank(m, {4, 4}, ds); }, {"duplicate", "4"}));
  CHECK(throws_containing([&] { build_bank(m, {0, 30}, ds); }, {"30", "outside dataset"}));
}

TEST_CASE("inference: normalized banks carry unit rows") {
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model();
  EmbeddingBank bank = build_bank(m, ids_of(ds), ds, /*normalize=*/true);
  CHECK(bank.normalized);
  for (int i = 0; i < bank.size(); ++i) {
    double norm2 = 0;
    for (int64_t j = 0; j < bank.dim(); ++j)
      norm2 += static_cast<double>(bank.row(i)[j]) * bank.row(i)[j];
    CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("inference: eval items are seeded per character and tagged per stream") {
  Dataset ds = tiny_dataset();
  std::vector<int> ids = {2, 11, 5};

  auto plain = make_eval_items(ds, ids, Style::kVariant, 0.0, 0.0, 77, "test.aug");
  REQUIRE(plain.size() == 3);
  for (size_t i = 0; i < ids.size(); ++i) {
    CHECK(plain[i].char_id == ids[i]);
    GlyphImage want = render_glyph(ds.chars[static_cast<size_t>(ids[i])], ds.atlas,
                                   Style::kVariant, ds.image_size, ds.seed);
    CHECK(plain[i].image.pixels == want.pixels);  // no-op augmentation is exact
  }

  auto rot_a = make_eval_items(ds, ids, Style::kVariant, 0.0, 30.0, 77, "test.aug");
  auto rot_b = make_eval_items(ds, ids, Style::kVariant, 0.0, 30.0, 77, "test.aug");
  CHECK(rot_a[0].image.pixels == rot_b[0].image.pixels);
  auto rot_c = make_eval_items(ds, ids, Style::kVariant, 0.0, 30.0, 77, "val.aug");
  CHECK(rot_a[0].image.pixels != rot_c[0].image.pixels);

  CHECK(throws_containing(
      [&] { make_eval_items(ds, {99}, Style::kVariant, 0, 0, 1, "t"); },
      {"99", "outside dataset", "30"}));
}

TEST_CASE("inference: evaluation bookkeeping is exact") {
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model();
  EmbeddingBank bank = build_bank(m, ids_of(ds), ds);
  auto items = make_eval_items(ds, ds.split.test_ids, Style::kVariant, 0.0, 0.0, 3, "test.aug");
  EvalReport rep = evaluate(m, bank, items, "unit");

  CHECK(rep.protocol == "unit");
  CHECK(rep.total == static_cast<int>(items.size()));
  CHECK(rep.predictions.size() == items.size());
  int correct = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    CHECK(rep.item_char_ids[i] == items[i].char_id);
    bool in_bank = std::binary_search(bank.char_ids.begin(), bank.char_ids.end(),
                                      rep.predictions[i]);
    CHECK(in_bank);
    correct += rep.predictions[i] == items[i].char_id ? 1 : 0;
  }
  CHECK(rep.correct == correct);
  CHECK(rep.accuracy == doctest::Approx(static_cast<double>(correct) / rep.total));
  CHECK(rep.top_confusions.size() <= 5);
  for (const auto& c : rep.top_confusions) {
    CHECK(c.truth != c.predicted);
    CHECK(c.count >= 1);
  }

  CHECK(throws_containing([&] { evaluate(m, bank, {}, "x"); }, {"empty test set"}));

  EmbeddingBank small = build_bank(m, {0, 1}, ds);
  CHECK(throws_containing([&] { evaluate(m, small, items, "x"); }, {"not in the bank"}));
}

TEST_CASE("inference: report csv is deterministic and self-consistent") {
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model();
  EmbeddingBank bank = build_bank(m, ids_of(ds), ds);
  auto items = make_eval_items(ds, ds.split.test_ids, Style::kVariant, 0.0, 0.0, 3, "test.aug");
  EvalReport rep = evaluate(m, bank, items, "csv-check");
  std::string a = eval_report_csv(rep);
  std::string b = eval_report_csv(evaluate(m, bank, items, "csv-check"));
  CHECK(a == b);  // ms_per_char varies run to run but stays out of the csv

  CHECK(a.find("protocol,csv-check\n") == 0);
  CHECK(a.find("correct," + std::to_string(rep.correct) + "\n") != std::string::npos);
  CHECK(a.find("total," + std::to_string(rep.total) + "\n") != std::string::npos);
  CHECK(a.find("char_id,predicted,ok\n") != std::string::npos);

  // one line per item between the per-item header and the confusion header
  size_t items_at = a.find("char_id,predicted,ok\n");
  size_t conf_at = a.find("confusion_truth,confusion_predicted,count\n");
  REQUIRE(items_at != std::string::npos);
  REQUIRE(conf_at != std::string::npos);
  int lines = 0;
  for (size_t i = items_at; i < conf_at; ++i) lines += a[i] == '\n' ? 1 : 0;
  CHECK(lines == rep.total + 1);

  std::string txt = eval_report_text(rep);
  CHECK(txt.find("csv-check") != std::string::npos);
  CHECK(txt.find("accuracy") != std::string::npos);
}

TEST_CASE("inference: bank files round-trip and reject corruption") {
  TempDir dir("bank");
  Dataset ds = tiny_dataset();
  Model<float> m = tiny_model();
  EmbeddingBank bank = build_bank(m, ids_of(ds), ds, /*normalize=*/true);
  bank.checkpoint_digest = 0xDEADBEEFCAFEF00DULL;
  bank.dataset_digest = 42;

  std::string p = dir.str() + "/bank.bin";
  save_bank(bank, p);
  EmbeddingBank back = load_bank(p);
  CHECK(back.char_ids == bank.char_ids);
  CHECK(back.c == bank.c);
  CHECK(back.h == bank.h);
  CHECK(back.w == bank.w);
  CHECK(back.data == bank.data);
  CHECK(back.normalized == bank.normalized);
  CHECK(back.checkpoint_digest == bank.checkpoint_digest);
  CHECK(back.dataset_digest == bank.dataset_digest);

  // saving the loaded bank reproduces the file byte for byte
  std::string p2 = dir.str() + "/bank2.bin";
  save_bank(back, p2);
  std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  std::string bad = b1;
  bad[0] ^= 0x20;
  std::string pbad = dir.str() + "/bad.bin";
  std::ofstream(pbad, std::ios::binary) << bad;
  CHECK(throws_containing([&] { load_bank(pbad); }, {"bad magic", "bad.bin"}));

  std::string ptrunc = dir.str() + "/trunc.bin";
  std::ofstream(ptrunc, std::ios::binary) << b1.substr(0, 24);
  CHECK(throws_containing([&] { load_bank(ptrunc); }, {"truncated"}));

  CHECK(throws_containing([&] { load_bank(dir.str() + "/missing.bin"); },
                          {"missing.bin"}));
}

TEST_CASE("inference: full protocol writes every artifact and reloads consistently") {
  TempDir dir("protocol");
  Dataset ds = tiny_dataset();
  ProtocolConfig pc;
  pc.model.input_size = 32;
  pc.model.stem_channels = 4;
  pc.model.stage_channels = {4, 8};
  pc.model.embedding_c = 8;
  pc.model.embedding_h = 8;
  pc.model.embedding_w = 8;
  pc.model.extra_cells = 1;
  pc.train.epochs = 2;
  pc.train.batch_size = 8;
  pc.train.seed = 13;

  ProtocolOutcome out = train_and_evaluate(ds, pc, dir.str());
  for (const char* f : {"checkpoint.bin", "train_log.csv", "bank.bin", "eval_report.csv",
                        "eval_summary.txt"}) {
    CHECK(std::filesystem::exists(dir.path / f));
  }
  CHECK(out.report.total == 12);
  CHECK(out.report.accuracy >= 0.0);
  CHECK(out.report.accuracy <= 1.0);

  // the saved bank matches a bank rebuilt from the saved checkpoint
  EmbeddingBank saved = load_bank(out.bank_path);
  LoadedCheckpoint lc = load_checkpoint(out.train.checkpoint_path);
  lc.model.set_train(false);
  EmbeddingBank rebuilt = build_bank(lc.model, ids_of(ds), ds, pc.normalize_embeddings);
  CHECK(saved.char_ids == rebuilt.char_ids);
  CHECK(saved.data == rebuilt.data);

  // evaluating the checkpoint through the one-shot entry point agrees
  EvalReport again = evaluate_checkpoint(ds, out.train.checkpoint_path, pc.train.train_style,
                                         0.0, 0.0, false, pc.train.seed, dir.str() + "/re");
  CHECK(again.correct == out.report.correct);
  CHECK(again.predictions == out.report.predictions);
}
