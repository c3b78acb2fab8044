#include "cgan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cgan {

namespace {

constexpr char kMagic[8] = {'C', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kSchemaVersion = 1;

// The format is explicitly little-endian; this code asserts a LE host once
// instead of byte-swapping (the project targets x86-64).
void assert_little_endian() {
  uint16_t probe = 1;
  char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw std::runtime_error("checkpoint: big-endian hosts are not supported");
}

template <class T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error(std::string("checkpoint: truncated file while reading ") + what);
  return v;
}

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

const Tensor<float>& Checkpoint::require(const std::string& name) const {
  const Tensor<float>* t = find(name);
  if (!t) throw std::runtime_error("checkpoint: required array '" + name + "' is missing");
  return *t;
}

void Checkpoint::put(const std::string& name, Tensor<float> t) {
  for (auto& [n, old] : arrays)
    if (n == name) {
      old = std::move(t);
      return;
    }
  arrays.emplace_back(name, std::move(t));
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  assert_little_endian();
  if (ckpt.phase != "phase1" && ckpt.phase != "phase2")
    throw std::invalid_argument("checkpoint: phase must be 'phase1' or 'phase2', got '" +
                                ckpt.phase + "'");
  nlohmann::json manifest;
  manifest["schema_version"] = ckpt.schema_version;
  manifest["phase"] = ckpt.phase;
  manifest["step"] = ckpt.step;
  manifest["config"] = ckpt.config;
  manifest["rng_state"] = ckpt.rng_state;
  // Doubles in JSON carry float32 values exactly (shortest-roundtrip dump).
  nlohmann::json wavg = nlohmann::json::array();
  for (float v : ckpt.w_avg) wavg.push_back(static_cast<double>(v));
  manifest["w_avg"] = std::move(wavg);
  manifest["w_avg_count"] = ckpt.w_avg_count;
  std::string mbytes = manifest.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof kMagic);
  write_pod<uint64_t>(os, mbytes.size());
  os.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  write_pod<uint32_t>(os, static_cast<uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, t] : ckpt.arrays) {
    if (name.size() > 65535) throw std::invalid_argument("checkpoint: array name too long");
    write_pod<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint8_t>(os, 0);  // dtype 0 = float32
    write_pod<uint8_t>(os, static_cast<uint8_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<uint32_t>(os, static_cast<uint32_t>(t.dim(i)));
    uint64_t nbytes = static_cast<uint64_t>(t.numel()) * sizeof(float);
    write_pod<uint64_t>(os, nbytes);
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(nbytes));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  assert_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: file not found: '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file (bad magic)");

  uint64_t mlen = read_pod<uint64_t>(is, "manifest length");
  std::string mbytes(mlen, '\0');
  is.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw std::runtime_error("checkpoint: truncated file while reading manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mbytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: corrupt manifest JSON: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.schema_version = manifest.at("schema_version").get<int>();
  if (ckpt.schema_version != kSchemaVersion)
    throw std::runtime_error("checkpoint: incompatible schema_version " +
                             std::to_string(ckpt.schema_version) + " (this build reads " +
                             std::to_string(kSchemaVersion) + ")");
  ckpt.phase = manifest.at("phase").get<std::string>();
  if (ckpt.phase != "phase1" && ckpt.phase != "phase2")
    throw std::runtime_error("checkpoint: invalid phase '" + ckpt.phase +
                             "' (expected 'phase1' or 'phase2')");
  ckpt.step = manifest.at("step").get<int64_t>();
  ckpt.config = manifest.at("config");
  ckpt.rng_state = manifest.at("rng_state").get<std::string>();
  for (const auto& v : manifest.at("w_avg")) ckpt.w_avg.push_back(v.get<float>());
  ckpt.w_avg_count = manifest.at("w_avg_count").get<int64_t>();

  uint32_t count = read_pod<uint32_t>(is, "array count");
  ckpt.arrays.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t nlen = read_pod<uint16_t>(is, "array name length");
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (!is) throw std::runtime_error("checkpoint: truncated file while reading array name");
    uint8_t dtype = read_pod<uint8_t>(is, "dtype");
    if (dtype != 0)
      throw std::runtime_error("checkpoint: array '" + name + "' has unknown dtype " +
                               std::to_string(dtype));
    uint8_t ndim = read_pod<uint8_t>(is, "ndim");
    std::vector<int64_t> shape(ndim);
    int64_t numel = 1;
    for (int d = 0; d < ndim; ++d) {
      shape[d] = read_pod<uint32_t>(is, "dimension");
      numel *= shape[d];
    }
    uint64_t nbytes = read_pod<uint64_t>(is, "byte length");
    if (nbytes != static_cast<uint64_t>(numel) * sizeof(float))
      throw std::runtime_error("checkpoint: array '" + name +
                               "' byte length does not match its shape (corrupt file)");
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw std::runtime_error("checkpoint: truncated file while reading array '" + name + "'");
    ckpt.arrays.emplace_back(std::move(name), std::move(t));
  }
  // Exactly at end-of-file now; trailing bytes indicate corruption.
  is.peek();
  if (!is.eof()) throw std::runtime_error("checkpoint: trailing bytes after final array (corrupt file)");
  return ckpt;
}

void check_arrays(const Checkpoint& ckpt,
                  const std::vector<std::pair<std::string, std::vector<int64_t>>>& expected) {
  std::string missing, mismatched;
  for (const auto& [name, shape] : expected) {
    const Tensor<float>* t = ckpt.find(name);
    if (!t) {
      missing += (missing.empty() ? "" : ", ") + name;
    } else if (t->shape != shape) {
      mismatched += (mismatched.empty() ? "" : ", ") + name + " (have " + shape_str(t->shape) +
                    ", want " + shape_str(shape) + ")";
    }
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::string msg = "checkpoint: parameter table does not match the model";
    if (!missing.empty()) msg += "; missing: " + missing;
    if (!mismatched.empty()) msg += "; shape mismatch: " + mismatched;
    throw std::runtime_error(msg);
  }
}

}  // namespace cgan
