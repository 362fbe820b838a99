#include "glyphzero/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "glyphzero/checkpoint.hpp"
#include "glyphzero/kernels.hpp"
#include "glyphzero/rng.hpp"

namespace gz {

namespace {

constexpr char kBankMagic[8] = {'G', 'Z', 'B', 'A', 'N', 'K', '0', '1'};
constexpr uint32_t kBankVersion = 1;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const CharacterSpec& char_by_id(const Dataset& ds, int id) {
  if (id < 0 || static_cast<size_t>(id) >= ds.chars.size()) {
    throw std::invalid_argument("char id " + std::to_string(id) + " outside dataset of " +
                                std::to_string(ds.chars.size()) + " characters");
  }
  return ds.chars[static_cast<size_t>(id)];
}

void l2_normalize_row(float* p, int64_t n) {
  double s = 0;
  for (int64_t i = 0; i < n; ++i) s += static_cast<double>(p[i]) * p[i];
  float inv = 1.0f / std::max(static_cast<float>(std::sqrt(s)), 1e-12f);
  for (int64_t i = 0; i < n; ++i) p[i] *= inv;
}

// Embeds images through the requested branch in eval mode, graph-free.
std::vector<float> embed_images(Model<float>& model, const std::vector<const GlyphImage*>& imgs,
                                bool training_branch, int64_t* dim_out) {
  const bool was_training = model.train_mode();
  model.set_train(false);
  NoGradGuard guard;
  const int64_t dim = static_cast<int64_t>(model.cfg.embedding_c) * model.cfg.embedding_h *
                      model.cfg.embedding_w;
  std::vector<float> out(imgs.size() * static_cast<size_t>(dim));
  constexpr size_t kChunk = 64;
  for (size_t at = 0; at < imgs.size(); at += kChunk) {
    size_t end = std::min(imgs.size(), at + kChunk);
    std::vector<const GlyphImage*> chunk(imgs.begin() + static_cast<std::ptrdiff_t>(at),
                                         imgs.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor<float> x = make_batch<float>(chunk);
    ForwardOutputs<float> fo = training_branch ? model.forward_training(x) : model.forward_target(x);
    std::memcpy(out.data() + at * static_cast<size_t>(dim), fo.embedding.data().data(),
                (end - at) * static_cast<size_t>(dim) * sizeof(float));
  }
  model.set_train(was_training);
  if (dim_out) *dim_out = dim;
  return out;
}

}  // namespace

uint64_t file_digest(const std::string& path) {
  std::string bytes = wire::read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

uint64_t dataset_digest(const Dataset& ds) {
  std::string m = manifest_json(ds);
  return fnv1a64(m.data(), m.size());
}

EmbeddingBank build_bank(Model<float>& model, const std::vector<int>& candidate_ids,
                         const Dataset& ds, bool normalize) {
  if (candidate_ids.empty()) {
    throw std::invalid_argument("build_bank: candidate set is empty");
  }
  std::vector<int> ids = candidate_ids;
  std::sort(ids.begin(), ids.end());
  for (size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == ids[i - 1]) {
      throw std::invalid_argument("build_bank: duplicate candidate char id " +
                                  std::to_string(ids[i]));
    }
  }

  std::vector<GlyphImage> renders;
  renders.reserve(ids.size());
  std::vector<const GlyphImage*> ptrs;
  ptrs.reserve(ids.size());
  for (int id : ids) {
    renders.push_back(
        render_glyph(char_by_id(ds, id), ds.atlas, Style::kCanonical, ds.image_size, ds.seed));
  }
  for (const auto& r : renders) ptrs.push_back(&r);

  EmbeddingBank bank;
  bank.char_ids = std::move(ids);
  bank.c = model.cfg.embedding_c;
  bank.h = model.cfg.embedding_h;
  bank.w = model.cfg.embedding_w;
  bank.normalized = normalize;
  int64_t dim = 0;
  bank.data = embed_images(model, ptrs, /*training_branch=*/false, &dim);
  if (normalize) {
    for (int i = 0; i < bank.size(); ++i) {
      l2_normalize_row(bank.data.data() + static_cast<size_t>(i) * dim, dim);
    }
  }
  return bank;
}

void save_bank(const EmbeddingBank& bank, const std::string& path) {
  std::string b;
  b.append(kBankMagic, 8);
  wire::put_u32(b, kBankVersion);
  wire::put_u64(b, bank.checkpoint_digest);
  wire::put_u64(b, bank.dataset_digest);
  wire::put_u32(b, 3);
  wire::put_entry(b, "char_ids", wire::kI32, {static_cast<int64_t>(bank.char_ids.size())}, nullptr,
                  bank.char_ids.data());
  wire::put_entry(b, "embeddings", wire::kF32,
                  {static_cast<int64_t>(bank.char_ids.size()), bank.c, bank.h, bank.w},
                  bank.data.data(), nullptr);
  int32_t norm = bank.normalized ? 1 : 0;
  wire::put_entry(b, "normalized", wire::kI32, {1}, nullptr, &norm);
  wire::write_file(path, b);
}

EmbeddingBank load_bank(const std::string& path) {
  std::string b = wire::read_file(path);
  if (b.size() < 8 || std::memcmp(b.data(), kBankMagic, 8) != 0) {
    throw std::runtime_error("not a bank file (bad magic): " + path);
  }
  size_t off = 8;
  uint32_t version = wire::get_u32(b, off, "bank version");
  if (version != kBankVersion) {
    throw std::runtime_error("unsupported bank version " + std::to_string(version) + " in " + path);
  }
  EmbeddingBank bank;
  bank.checkpoint_digest = wire::get_u64(b, off, "checkpoint digest");
  bank.dataset_digest = wire::get_u64(b, off, "dataset digest");
  uint32_t n_entries = wire::get_u32(b, off, "entry count");
  if (n_entries != 3) {
    throw std::runtime_error("bank file " + path + " holds " + std::to_string(n_entries) +
                             " entries, expected 3");
  }
  wire::Entry ids = wire::get_entry(b, off);
  wire::Entry emb = wire::get_entry(b, off);
  wire::Entry norm = wire::get_entry(b, off);
  if (ids.name != "char_ids" || emb.name != "embeddings" || norm.name != "normalized") {
    throw std::runtime_error("bank file " + path + " has unexpected entry names '" + ids.name +
                             "', '" + emb.name + "', '" + norm.name + "'");
  }
  if (emb.shape.size() != 4 || emb.shape[0] != static_cast<int64_t>(ids.i32.size())) {
    throw std::runtime_error("bank file " + path + ": embeddings shape disagrees with char_ids");
  }
  bank.char_ids.assign(ids.i32.begin(), ids.i32.end());
  bank.c = static_cast<int>(emb.shape[1]);
  bank.h = static_cast<int>(emb.shape[2]);
  bank.w = static_cast<int>(emb.shape[3]);
  bank.data = std::move(emb.f32);
  bank.normalized = norm.i32.at(0) != 0;
  if (off != b.size()) {
    throw std::runtime_error("trailing bytes after last entry in " + path);
  }
  return bank;
}

std::vector<int> classify_batch(Model<float>& model, const EmbeddingBank& bank,
                                const std::vector<const GlyphImage*>& imgs) {
  if (bank.size() == 0) throw std::invalid_argument("classify: bank is empty");
  if (imgs.empty()) return {};
  int64_t dim = 0;
  std::vector<float> q = embed_images(model, imgs, /*training_branch=*/true, &dim);
  if (dim != bank.dim()) {
    throw std::invalid_argument("classify: model embedding dim " + std::to_string(dim) +
                                " != bank dim " + std::to_string(bank.dim()));
  }
  std::vector<int> out(imgs.size());
  std::vector<float> dist(static_cast<size_t>(bank.size()));
  for (size_t b = 0; b < imgs.size(); ++b) {
    float* qb = q.data() + b * static_cast<size_t>(dim);
    if (bank.normalized) l2_normalize_row(qb, dim);
    kernels::l1_distances(bank.data.data(), qb, dist.data(), bank.size(), dim);
    // char_ids ascend, so strict less-than lands ties on the lowest id
    size_t arg = 0;
    for (size_t i = 1; i < dist.size(); ++i) {
      if (dist[i] < dist[arg]) arg = i;
    }
    out[b] = bank.char_ids[arg];
  }
  return out;
}

int classify(Model<float>& model, const EmbeddingBank& bank, const GlyphImage& img) {
  return classify_batch(model, bank, {&img}).at(0);
}

std::vector<EvalItem> make_eval_items(const Dataset& ds, const std::vector<int>& char_ids,
                                      Style style, double blur_sigma, double rot_range,
                                      uint64_t seed, const char* stream_tag) {
  std::vector<EvalItem> items;
  items.reserve(char_ids.size());
  for (int id : char_ids) {
    GlyphImage img = render_glyph(char_by_id(ds, id), ds.atlas, style, ds.image_size, ds.seed);
    img = augment(img, blur_sigma, -rot_range, rot_range,
                  substream_seed(seed, std::string(stream_tag) + "." + std::to_string(id)));
    items.push_back(EvalItem{std::move(img), id});
  }
  return items;
}

EvalReport evaluate(Model<float>& model, const EmbeddingBank& bank,
                    const std::vector<EvalItem>& items, const std::string& protocol) {
  if (items.empty()) throw std::invalid_argument("evaluate: empty test set");
  for (const auto& it : items) {
    if (!std::binary_search(bank.char_ids.begin(), bank.char_ids.end(), it.char_id)) {
      throw std::invalid_argument("evaluate: test char id " + std::to_string(it.char_id) +
                                  " is not in the bank");
    }
  }
  std::vector<const GlyphImage*> imgs;
  imgs.reserve(items.size());
  for (const auto& it : items) imgs.push_back(&it.image);

  auto t0 = std::chrono::steady_clock::now();
  std::vector<int> pred = classify_batch(model, bank, imgs);
  auto t1 = std::chrono::steady_clock::now();

  EvalReport rep;
  rep.protocol = protocol;
  rep.total = static_cast<int>(items.size());
  rep.predictions = pred;
  rep.item_char_ids.reserve(items.size());
  std::map<std::pair<int, int>, int> confusions;
  for (size_t i = 0; i < items.size(); ++i) {
    rep.item_char_ids.push_back(items[i].char_id);
    if (pred[i] == items[i].char_id) {
      ++rep.correct;
    } else {
      ++confusions[{items[i].char_id, pred[i]}];
    }
  }
  rep.accuracy = static_cast<double>(rep.correct) / static_cast<double>(rep.total);
  rep.ms_per_char = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                    static_cast<double>(items.size());

  std::vector<Confusion> all;
  all.reserve(confusions.size());
  for (const auto& [key, count] : confusions) all.push_back({key.first, key.second, count});
  std::stable_sort(all.begin(), all.end(), [](const Confusion& a, const Confusion& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.truth != b.truth) return a.truth < b.truth;
    return a.predicted < b.predicted;
  });
  if (all.size() > 5) all.resize(5);
  rep.top_confusions = std::move(all);
  return rep;
}

std::string eval_report_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "protocol," << rep.protocol << "\n";
  os << "correct," << rep.correct << "\n";
  os << "total," << rep.total << "\n";
  os << "accuracy_percent," << fmt("%.6f", 100.0 * rep.accuracy) << "\n";
  os << "char_id,predicted,ok\n";
  for (size_t i = 0; i < rep.item_char_ids.size(); ++i) {
    os << rep.item_char_ids[i] << ',' << rep.predictions[i] << ','
       << (rep.item_char_ids[i] == rep.predictions[i] ? 1 : 0) << "\n";
  }
  os << "confusion_truth,confusion_predicted,count\n";
  for (const auto& c : rep.top_confusions) {
    os << c.truth << ',' << c.predicted << ',' << c.count << "\n";
  }
  return os.str();
}

std::string eval_report_text(const EvalReport& rep) {
  std::ostringstream os;
  os << "protocol: " << rep.protocol << "\n";
  os << "test characters: " << rep.total << "\n";
  os << "correct: " << rep.correct << "\n";
  os << "accuracy: " << fmt("%.2f", 100.0 * rep.accuracy) << "%\n";
  os << "mean time per character: " << fmt("%.3f", rep.ms_per_char)
     << " ms (measured, varies run to run)\n";
  if (!rep.top_confusions.empty()) {
    os << "top confusions:\n";
    for (const auto& c : rep.top_confusions) {
      os << "  true " << c.truth << " -> predicted " << c.predicted << " (x" << c.count << ")\n";
    }
  }
  return os.str();
}

namespace {

std::string protocol_string(const Dataset& ds, const ProtocolConfig& pc) {
  std::ostringstream os;
  os << "style=" << style_name(pc.train.train_style) << " train_blur=" << pc.train.blur_sigma
     << " train_rot=" << pc.train.rot_range << " eval_blur=" << pc.eval_blur_sigma
     << " eval_rot=" << pc.eval_rot_range << " extra_cells=" << pc.model.extra_cells
     << " train=" << ds.split.train_ids.size() << " val=" << ds.split.val_ids.size()
     << " test=" << ds.split.test_ids.size() << " candidates=" << ds.chars.size()
     << " seed=" << pc.train.seed;
  if (pc.normalize_embeddings) os << " normalized=1";
  return os.str();
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << body;
  if (!f) throw std::runtime_error("short write to file: " + path);
}

std::vector<int> all_char_ids(const Dataset& ds) {
  std::vector<int> ids;
  ids.reserve(ds.chars.size());
  for (const auto& ch : ds.chars) ids.push_back(ch.char_id);
  return ids;
}

}  // namespace

ProtocolOutcome train_and_evaluate(const Dataset& ds, const ProtocolConfig& pc,
                                   const std::string& out_dir, const std::string& run_json) {
  std::filesystem::create_directories(out_dir);
  ProtocolOutcome po;
  po.train = train(ds, pc.model, pc.train, pc.eval_blur_sigma, pc.eval_rot_range, out_dir, run_json);

  LoadedCheckpoint lc = load_checkpoint(po.train.checkpoint_path);
  lc.model.set_train(false);
  EmbeddingBank bank = build_bank(lc.model, all_char_ids(ds), ds, pc.normalize_embeddings);
  bank.checkpoint_digest = file_digest(po.train.checkpoint_path);
  bank.dataset_digest = dataset_digest(ds);
  po.bank_path = out_dir + "/bank.bin";
  save_bank(bank, po.bank_path);

  std::vector<EvalItem> items =
      make_eval_items(ds, ds.split.test_ids, pc.train.train_style, pc.eval_blur_sigma,
                      pc.eval_rot_range, pc.train.seed, "test.aug");
  po.report = evaluate(lc.model, bank, items, protocol_string(ds, pc));
  write_text(out_dir + "/eval_report.csv", eval_report_csv(po.report));
  write_text(out_dir + "/eval_summary.txt", eval_report_text(po.report));
  return po;
}

EvalReport evaluate_checkpoint(const Dataset& ds, const std::string& checkpoint_path, Style style,
                               double eval_blur_sigma, double eval_rot_range, bool normalize,
                               uint64_t seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
  lc.model.set_train(false);
  EmbeddingBank bank = build_bank(lc.model, all_char_ids(ds), ds, normalize);
  bank.checkpoint_digest = file_digest(checkpoint_path);
  bank.dataset_digest = dataset_digest(ds);
  save_bank(bank, out_dir + "/bank.bin");

  std::vector<EvalItem> items = make_eval_items(ds, ds.split.test_ids, style, eval_blur_sigma,
                                                eval_rot_range, seed, "test.aug");
  std::ostringstream proto;
  proto << "checkpoint=" << checkpoint_path << " style=" << style_name(style)
        << " eval_blur=" << eval_blur_sigma << " eval_rot=" << eval_rot_range
        << " test=" << ds.split.test_ids.size() << " candidates=" << ds.chars.size()
        << " seed=" << seed;
  EvalReport rep = evaluate(lc.model, bank, items, proto.str());
  write_text(out_dir + "/eval_report.csv", eval_report_csv(rep));
  write_text(out_dir + "/eval_summary.txt", eval_report_text(rep));
  return rep;
}

std::vector<SweepRow> run_unseen_sweep(const Dataset& ds, const std::vector<int>& sizes,
                                       const ProtocolConfig& pc, const std::string& out_dir) {
  if (sizes.empty()) throw std::invalid_argument("sweep: no train sizes given");
  std::filesystem::create_directories(out_dir);
  const int n = static_cast<int>(ds.chars.size());
  int val_n = static_cast<int>(ds.split.val_ids.size());
  if (val_n == 0) val_n = std::max(1, n / 12);

  int max_size = 0;
  for (int s : sizes) {
    if (s >= 1 && s + val_n + 1 <= n) max_size = std::max(max_size, s);
  }
  if (max_size == 0) {
    throw std::invalid_argument("sweep: no feasible size for a dataset of " + std::to_string(n) +
                                " characters");
  }
  const int test_n = n - max_size - val_n;

  // One split at the largest size; smaller sizes reuse its leading train
  // characters (the cover-first ordering keeps every radical represented)
  // so all sizes share the identical val and test sets.
  SplitSpec pool = split_dataset(ds.chars, max_size, val_n, test_n, ds.split.policy,
                                 substream_seed(pc.train.seed, "sweep.split"));

  std::vector<SweepRow> rows;
  for (int s : sizes) {
    SweepRow row;
    row.train_size = s;
    if (s < 1 || s > max_size) {
      row.skipped = true;
      rows.push_back(row);
      continue;
    }
    Dataset sub = ds;
    sub.split.policy = pool.policy;
    sub.split.train_ids.assign(pool.train_ids.begin(), pool.train_ids.begin() + s);
    sub.split.val_ids = pool.val_ids;
    sub.split.test_ids = pool.test_ids;
    ProtocolOutcome po =
        train_and_evaluate(sub, pc, out_dir + "/size" + std::to_string(s));
    row.ar_percent = 100.0 * po.report.accuracy;
    rows.push_back(row);
  }
  write_text(out_dir + "/sweep.csv", sweep_csv(rows));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "train_size,ar_percent,note\n";
  for (const auto& r : rows) {
    if (r.skipped) {
      os << r.train_size << ",,skipped: infeasible for this dataset\n";
    } else {
      os << r.train_size << ',' << fmt("%.6f", r.ar_percent) << ",\n";
    }
  }
  return os.str();
}

std::vector<LossCell> default_loss_cells() {
  // Singles, pairs, triples, then the full combination.
  return {
      {false, false, false, true},  {false, false, true, false}, {false, true, false, false},
      {true, false, false, false},  {false, false, true, true},  {false, true, false, true},
      {false, true, true, false},   {true, false, false, true},  {true, false, true, false},
      {true, true, false, false},   {false, true, true, true},   {true, false, true, true},
      {true, true, false, true},    {true, true, true, false},   {true, true, true, true},
  };
}

std::vector<LossAblationRow> run_loss_ablation(const Dataset& ds, const ProtocolConfig& pc,
                                               const std::vector<LossCell>& cells,
                                               const std::string& out_dir) {
  if (cells.empty()) throw std::invalid_argument("ablation: no loss cells given");
  std::filesystem::create_directories(out_dir);
  std::vector<LossAblationRow> rows;
  for (size_t i = 0; i < cells.size(); ++i) {
    const LossCell& cell = cells[i];
    LossAblationRow row;
    row.row = static_cast<int>(i) + 1;
    row.hpe = cell.hpe;
    row.kcls = cell.kcls;
    row.center = cell.center;
    row.race = cell.race;
    if (!cell.hpe && !cell.kcls && !cell.center && !cell.race) {
      row.invalid = true;  // nothing to optimize; recorded, never trained
      rows.push_back(row);
      continue;
    }
    ProtocolConfig sub = pc;
    sub.train.loss.use_hpe = cell.hpe;
    sub.train.loss.use_kcls_d = cell.kcls;
    sub.train.loss.use_kcls_t = cell.kcls;
    sub.train.loss.use_center = cell.center;
    sub.train.loss.use_race = cell.race;
    char dir[32];
    std::snprintf(dir, sizeof dir, "/cell%02d", row.row);
    ProtocolOutcome po = train_and_evaluate(ds, sub, out_dir + dir);
    row.ar_percent = 100.0 * po.report.accuracy;
    rows.push_back(row);
  }
  write_text(out_dir + "/loss_ablation.csv", loss_ablation_csv(rows));
  return rows;
}

std::string loss_ablation_csv(const std::vector<LossAblationRow>& rows) {
  std::ostringstream os;
  os << "row,hpe,kcls,center,race,ar_percent,note\n";
  for (const auto& r : rows) {
    os << r.row << ',' << (r.hpe ? 1 : 0) << ',' << (r.kcls ? 1 : 0) << ',' << (r.center ? 1 : 0)
       << ',' << (r.race ? 1 : 0) << ',';
    if (r.invalid) {
      os << ",invalid: all losses disabled\n";
    } else {
      os << fmt("%.6f", r.ar_percent) << ",\n";
    }
  }
  return os.str();
}

std::vector<ExtraBlockRow> run_extra_block_ablation(
    const Dataset& ds, const ProtocolConfig& pc,
    const std::vector<std::pair<double, double>>& cells, const std::string& out_dir) {
  if (cells.empty()) throw std::invalid_argument("ablation: no degradation cells given");
  std::filesystem::create_directories(out_dir);
  std::vector<ExtraBlockRow> rows;
  for (size_t i = 0; i < cells.size(); ++i) {
    const auto& [blur, rot] = cells[i];
    ExtraBlockRow row;
    row.blur_sigma = blur;
    row.rot_range = rot;

    ProtocolConfig with = pc;
    with.model.extra_cells = std::max(1, pc.model.extra_cells);
    with.train.blur_sigma = blur;
    with.train.rot_range = rot;
    with.eval_blur_sigma = blur;
    with.eval_rot_range = rot;
    ProtocolConfig without = with;
    without.model.extra_cells = 0;

    char dir[48];
    std::snprintf(dir, sizeof dir, "/cell%02d_extra", static_cast<int>(i) + 1);
    row.ar_with = 100.0 * train_and_evaluate(ds, with, out_dir + dir).report.accuracy;
    std::snprintf(dir, sizeof dir, "/cell%02d_plain", static_cast<int>(i) + 1);
    row.ar_without = 100.0 * train_and_evaluate(ds, without, out_dir + dir).report.accuracy;
    row.diff = row.ar_with - row.ar_without;
    rows.push_back(row);
  }
  write_text(out_dir + "/extra_block_ablation.csv", extra_block_csv(rows));
  return rows;
}

std::string extra_block_csv(const std::vector<ExtraBlockRow>& rows) {
  std::ostringstream os;
  os << "blur_sigma,rotation,ar_with_extra,ar_without_extra,diff\n";
  for (const auto& r : rows) {
    os << fmt("%g", r.blur_sigma) << ',' << fmt("%g", r.rot_range) << ','
       << fmt("%.6f", r.ar_with) << ',' << fmt("%.6f", r.ar_without) << ','
       << fmt("%.6f", r.diff) << "\n";
  }
  return os.str();
}

ComplexityReport complexity_report(Model<float>& model, const EmbeddingBank& bank,
                                   const Dataset& ds, const std::string& checkpoint_path) {
  ComplexityReport rep;
  ParameterCount pcnt = count_parameters(model);
  rep.param_count = pcnt.count;
  rep.param_bytes = pcnt.bytes;
  std::error_code ec;
  auto sz = std::filesystem::file_size(checkpoint_path, ec);
  if (ec) throw std::runtime_error("cannot stat checkpoint file: " + checkpoint_path);
  rep.checkpoint_bytes = static_cast<int64_t>(sz);
  rep.bank_entries = bank.size();
  rep.bank_bytes = static_cast<int64_t>(bank.size()) * bank.dim() * 4;

  // Timing probe: at least 100 single-image classifications, cycling through
  // the dataset's styled renders.
  std::vector<GlyphImage> probes;
  const int want = std::max<size_t>(100, std::min<size_t>(ds.chars.size(), 128));
  for (int i = 0; i < want; ++i) {
    const CharacterSpec& spec = ds.chars[static_cast<size_t>(i) % ds.chars.size()];
    probes.push_back(render_glyph(spec, ds.atlas, Style::kVariant, ds.image_size, ds.seed));
  }
  auto t0 = std::chrono::steady_clock::now();
  for (const auto& img : probes) classify(model, bank, img);
  auto t1 = std::chrono::steady_clock::now();
  rep.timed_chars = static_cast<int>(probes.size());
  rep.mean_ms_per_char = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                         static_cast<double>(probes.size());
  return rep;
}

std::string complexity_text(const ComplexityReport& rep) {
  std::ostringstream os;
  os << "parameters: " << rep.param_count << " (" << rep.param_bytes
     << " bytes as 32-bit floats)\n";
  os << "checkpoint file: " << rep.checkpoint_bytes << " bytes\n";
  os << "bank: " << rep.bank_entries << " entries, " << rep.bank_bytes << " bytes\n";
  os << "mean classification time: " << fmt("%.3f", rep.mean_ms_per_char) << " ms/char over "
     << rep.timed_chars << " characters\n";
  os << "reference point at full scale (27,484 classes): 46.54 MB parameters, ~900 MB runtime "
        "memory, ~172 ms/character on CPU\n";
  return os.str();
}

}  // namespace gz
