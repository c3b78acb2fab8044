#pragma once
// Single-archive checkpoint: JSON manifest + raw little-endian float32 arrays
// with explicit shape headers. Bit-exact, language-neutral, diffable manifest.
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cgan/tensor.hpp"
#include "json.hpp"

namespace cgan {

struct Checkpoint {
  int schema_version = 1;
  std::string phase;  // "phase1" or "phase2"
  int64_t step = 0;
  nlohmann::json config;  // full RunConfig echo
  std::string rng_state;
  std::vector<float> w_avg;  // truncation center (d_style)
  int64_t w_avg_count = 0;   // number of batches folded into w_avg

  std::vector<std::pair<std::string, Tensor<float>>> arrays;

  const Tensor<float>* find(const std::string& name) const;
  const Tensor<float>& require(const std::string& name) const;  // throws if missing
  void put(const std::string& name, Tensor<float> t);           // replaces on name clash
};

// Binary layout: magic "CGCKPT01" | u64 manifest_len | manifest JSON bytes |
// u32 array_count | per array: u16 name_len, name, u8 dtype (0 = f32),
// u8 ndim, u32 dims[ndim], u64 nbytes, raw LE payload. Readers reject
// unknown magic, schema_version mismatch, unknown dtype, byte-length
// mismatches, and truncated or over-long files.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Expected-parameter validation: every name in `expected` must be present
// with the given shape. Throws with the offending names listed.
void check_arrays(const Checkpoint& ckpt,
                  const std::vector<std::pair<std::string, std::vector<int64_t>>>& expected);

}  // namespace cgan
