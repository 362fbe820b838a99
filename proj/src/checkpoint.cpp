#include "glyphzero/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "glyphzero/config.hpp"
#include "glyphzero/rng.hpp"

namespace gz {
namespace wire {

void put_u8(std::string& b, uint8_t v) { b.push_back(static_cast<char>(v)); }

void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_i32(std::string& b, int32_t v) { put_u32(b, static_cast<uint32_t>(v)); }

void put_f32(std::string& b, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(b, u);
}

static void need(const std::string& b, size_t off, size_t n, const char* what) {
  if (off > b.size() || b.size() - off < n) {
    throw std::runtime_error("truncated file: reading " + std::string(what) + " needs " +
                             std::to_string(n) + " bytes at offset " + std::to_string(off) +
                             " but only " + std::to_string(b.size() - std::min(off, b.size())) +
                             " remain");
  }
}

uint8_t get_u8(const std::string& b, size_t& off, const char* what) {
  need(b, off, 1, what);
  return static_cast<uint8_t>(b[off++]);
}

uint32_t get_u32(const std::string& b, size_t& off, const char* what) {
  need(b, off, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(b[off + i])) << (8 * i);
  off += 4;
  return v;
}

uint64_t get_u64(const std::string& b, size_t& off, const char* what) {
  need(b, off, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(b[off + i])) << (8 * i);
  off += 8;
  return v;
}

int32_t get_i32(const std::string& b, size_t& off, const char* what) {
  return static_cast<int32_t>(get_u32(b, off, what));
}

int64_t Entry::numel() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void put_entry(std::string& b, const std::string& name, uint8_t dtype,
               const std::vector<int64_t>& shape, const float* fdata, const int32_t* idata) {
  put_u32(b, static_cast<uint32_t>(name.size()));
  b.append(name);
  put_u8(b, dtype);
  put_u8(b, static_cast<uint8_t>(shape.size()));
  int64_t n = 1;
  for (int64_t d : shape) {
    put_i32(b, static_cast<int32_t>(d));
    n *= d;
  }
  put_u64(b, static_cast<uint64_t>(n) * 4);
  if (dtype == kF32) {
    for (int64_t i = 0; i < n; ++i) put_f32(b, fdata[i]);
  } else {
    for (int64_t i = 0; i < n; ++i) put_i32(b, idata[i]);
  }
}

Entry get_entry(const std::string& b, size_t& off) {
  Entry e;
  uint32_t name_len = get_u32(b, off, "entry name length");
  need(b, off, name_len, "entry name");
  e.name = b.substr(off, name_len);
  off += name_len;
  e.dtype = get_u8(b, off, "entry dtype");
  if (e.dtype != kF32 && e.dtype != kI32) {
    throw std::runtime_error("entry '" + e.name + "': unknown dtype tag " +
                             std::to_string(int(e.dtype)));
  }
  uint8_t ndim = get_u8(b, off, "entry rank");
  for (int i = 0; i < ndim; ++i) {
    int32_t d = get_i32(b, off, "entry dim");
    if (d <= 0) {
      throw std::runtime_error("entry '" + e.name + "': non-positive dimension " +
                               std::to_string(d));
    }
    e.shape.push_back(d);
  }
  uint64_t payload = get_u64(b, off, "entry payload size");
  int64_t n = e.numel();
  if (payload != static_cast<uint64_t>(n) * 4) {
    throw std::runtime_error("entry '" + e.name + "': payload is " + std::to_string(payload) +
                             " bytes but the shape implies " + std::to_string(n * 4));
  }
  need(b, off, payload, "entry payload");
  if (e.dtype == kF32) {
    e.f32.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      uint32_t u = get_u32(b, off, "entry payload");
      float f;
      std::memcpy(&f, &u, 4);
      e.f32[static_cast<size_t>(i)] = f;
    }
  } else {
    e.i32.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) e.i32[static_cast<size_t>(i)] = get_i32(b, off, "entry payload");
  }
  return e;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to file: " + path);
}

}  // namespace wire

namespace {

constexpr char kMagic[8] = {'G', 'Z', 'C', 'K', 'P', 'T', '0', '1'};
constexpr uint32_t kVersion = 1;

std::vector<int64_t> to_i64(const std::vector<int>& v) {
  return std::vector<int64_t>(v.begin(), v.end());
}

}  // namespace

void save_checkpoint(const Model<float>& model, const Centers<float>& centers,
                     const std::string& path, const std::string& run_json) {
  nlohmann::json doc;
  doc["model"] = model_config_to_json(model.cfg);
  if (!run_json.empty()) doc["run"] = nlohmann::json::parse(run_json);
  std::string cfg = doc.dump();

  std::string b;
  b.append(kMagic, 8);
  wire::put_u32(b, kVersion);
  wire::put_u64(b, fnv1a64(cfg.data(), cfg.size()));
  wire::put_u32(b, static_cast<uint32_t>(cfg.size()));
  b.append(cfg);

  auto& m = const_cast<Model<float>&>(model);
  auto params = m.parameters();
  auto bufs = m.buffers();
  wire::put_u32(b, static_cast<uint32_t>(params.size() + bufs.size() + 2));
  for (auto* p : params) {
    wire::put_entry(b, p->name, wire::kF32, to_i64(p->tensor.shape()), p->tensor.data().data(),
                    nullptr);
  }
  for (auto& buf : bufs) {
    wire::put_entry(b, buf.name, wire::kF32, {static_cast<int64_t>(buf.data->size())},
                    buf.data->data(), nullptr);
  }
  wire::put_entry(b, "centers", wire::kF32,
                  {centers.n_categories, centers.c, centers.h, centers.w}, centers.data.data(),
                  nullptr);
  float alpha = centers.alpha;
  wire::put_entry(b, "centers.alpha", wire::kF32, {1}, &alpha, nullptr);

  wire::write_file(path, b);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::string b = wire::read_file(path);
  if (b.size() < 8 || std::memcmp(b.data(), kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  }
  size_t off = 8;
  uint32_t version = wire::get_u32(b, off, "version");
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path + " (supported: " + std::to_string(kVersion) + ")");
  }
  uint64_t digest = wire::get_u64(b, off, "config digest");
  uint32_t cfg_len = wire::get_u32(b, off, "config length");
  if (off > b.size() || b.size() - off < cfg_len) {
    throw std::runtime_error("truncated file: config document of " + std::to_string(cfg_len) +
                             " bytes does not fit in " + path);
  }
  std::string cfg = b.substr(off, cfg_len);
  off += cfg_len;
  uint64_t computed = fnv1a64(cfg.data(), cfg.size());
  if (computed != digest) {
    throw std::runtime_error("config digest mismatch in " + path + ": header says " +
                             std::to_string(digest) + ", content hashes to " +
                             std::to_string(computed));
  }

  nlohmann::json doc = nlohmann::json::parse(cfg);
  ModelConfig mc = model_config_from_json(doc.at("model"));
  mc.validate();

  LoadedCheckpoint out{build_model<float>(mc, mc.seed), Centers<float>{}, CheckpointMeta{}};
  out.meta.version = version;
  out.meta.config_digest = digest;
  out.meta.config_json = cfg;
  if (doc.contains("run")) out.meta.run_json = doc["run"].dump();

  uint32_t n_entries = wire::get_u32(b, off, "entry count");
  std::map<std::string, wire::Entry> entries;
  for (uint32_t i = 0; i < n_entries; ++i) {
    wire::Entry e = wire::get_entry(b, off);
    std::string name = e.name;
    if (!entries.emplace(name, std::move(e)).second) {
      throw std::runtime_error("duplicate checkpoint entry '" + name + "' in " + path);
    }
  }
  if (off != b.size()) {
    throw std::runtime_error("trailing bytes after last entry in " + path + ": offset " +
                             std::to_string(off) + " of " + std::to_string(b.size()));
  }

  std::set<std::string> consumed;
  auto take = [&](const std::string& name) -> wire::Entry& {
    auto it = entries.find(name);
    if (it == entries.end()) {
      throw std::runtime_error("checkpoint " + path + " is missing entry '" + name + "'");
    }
    consumed.insert(name);
    return it->second;
  };

  for (auto* p : out.model.parameters()) {
    wire::Entry& e = take(p->name);
    if (e.shape != to_i64(p->tensor.shape())) {
      throw std::runtime_error("entry '" + p->name + "': stored shape does not match model shape " +
                               shape_str(p->tensor.shape()));
    }
    p->tensor.data() = e.f32;
  }
  for (auto& buf : out.model.buffers()) {
    wire::Entry& e = take(buf.name);
    if (e.numel() != static_cast<int64_t>(buf.data->size())) {
      throw std::runtime_error("entry '" + buf.name + "': stored length " +
                               std::to_string(e.numel()) + " does not match expected " +
                               std::to_string(buf.data->size()));
    }
    *buf.data = e.f32;
  }

  {
    wire::Entry& e = take("centers");
    if (e.shape.size() != 4) {
      throw std::runtime_error("entry 'centers': expected rank 4, got rank " +
                               std::to_string(e.shape.size()));
    }
    out.centers.n_categories = static_cast<int>(e.shape[0]);
    out.centers.c = static_cast<int>(e.shape[1]);
    out.centers.h = static_cast<int>(e.shape[2]);
    out.centers.w = static_cast<int>(e.shape[3]);
    out.centers.data = e.f32;
  }
  {
    wire::Entry& e = take("centers.alpha");
    if (e.numel() != 1) {
      throw std::runtime_error("entry 'centers.alpha': expected a single value, got " +
                               std::to_string(e.numel()));
    }
    out.centers.alpha = e.f32[0];
  }

  for (auto& [name, e] : entries) {
    if (!consumed.count(name)) {
      throw std::runtime_error("unexpected checkpoint entry '" + name + "' in " + path);
    }
  }
  return out;
}

}  // namespace gz
