#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glyphzero/losses.hpp"
#include "glyphzero/model.hpp"

namespace gz {

// Low-level little-endian record encoding shared by checkpoint and bank files.
namespace wire {

enum Dtype : uint8_t { kF32 = 0, kI32 = 2 };

void put_u8(std::string& b, uint8_t v);
void put_u32(std::string& b, uint32_t v);
void put_u64(std::string& b, uint64_t v);
void put_i32(std::string& b, int32_t v);
void put_f32(std::string& b, float v);

uint8_t get_u8(const std::string& b, size_t& off, const char* what);
uint32_t get_u32(const std::string& b, size_t& off, const char* what);
uint64_t get_u64(const std::string& b, size_t& off, const char* what);
int32_t get_i32(const std::string& b, size_t& off, const char* what);

struct Entry {
  std::string name;
  uint8_t dtype = kF32;
  std::vector<int64_t> shape;
  std::vector<float> f32;
  std::vector<int32_t> i32;
  int64_t numel() const;
};

void put_entry(std::string& b, const std::string& name, uint8_t dtype,
               const std::vector<int64_t>& shape, const float* fdata, const int32_t* idata);
Entry get_entry(const std::string& b, size_t& off);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace wire

struct CheckpointMeta {
  uint32_t version = 0;
  uint64_t config_digest = 0;
  std::string config_json;  // embedded {"model":..., "run":...} document
  std::string run_json;     // optional caller blob ("" if absent)
};

// Binary checkpoint: magic "GZCKPT01", version, config digest, embedded config
// JSON, then named tensor entries (parameters in model order, batch-norm
// running stats, prototype centers). Byte-stable across save/load/save.
void save_checkpoint(const Model<float>& model, const Centers<float>& centers,
                     const std::string& path, const std::string& run_json = "");

struct LoadedCheckpoint {
  Model<float> model;
  Centers<float> centers;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace gz
