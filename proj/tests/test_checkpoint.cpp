// Checkpoint archive tests: bit-exact roundtrips (including denormals and
// extreme exponents), manifest fields, corruption detection, schema guard,
// and the array helpers.
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cgan/checkpoint.hpp"
#include "cgan/config.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace cgan;

namespace {

std::string scratch(const std::string& leaf) {
  std::string root = (fs::temp_directory_path() / "cgan_ut_ckpt").string();
  fs::create_directories(root);
  return root + "/" + leaf;
}

uint32_t bits_of(float f) {
  uint32_t u;
  std::memcpy(&u, &f, sizeof u);
  return u;
}

float float_from_bits(uint32_t u) {
  float f;
  std::memcpy(&f, &u, sizeof f);
  return f;
}

Checkpoint sample_ckpt() {
  Checkpoint c;
  c.phase = "phase1";
  c.step = 4321;
  c.config = config_to_json(RunConfig{});
  c.rng_state = "0123456789abcdef/fedcba98";
  c.w_avg = {0.25f, -1.5f, 3.0f};
  c.w_avg_count = 17;

  // Exotic bit patterns: negative zero, denormals, huge and tiny magnitudes.
  Tensor<float> exotic({2, 3}, {0.0f, -0.0f, 1e-39f, 3.4e38f, -1.17549435e-38f, 1.0f});
  exotic[2] = float_from_bits(0x00000001u);  // smallest positive denormal
  c.put("m.exotic", exotic);

  Tensor<float> grid({1, 2, 2, 2});
  for (int64_t i = 0; i < 8; ++i) grid[i] = static_cast<float>(i) * 0.125f - 0.4f;
  c.put("m.grid", grid);
  c.put("m.scalar", Tensor<float>({1}, {42.0f}));
  return c;
}

}  // namespace

TEST_CASE("save/load roundtrip is bitwise for every field") {
  Checkpoint c = sample_ckpt();
  std::string path = scratch("roundtrip.ckpt");
  save_checkpoint(c, path);
  Checkpoint r = load_checkpoint(path);

  CHECK(r.schema_version == c.schema_version);
  CHECK(r.phase == "phase1");
  CHECK(r.step == 4321);
  CHECK(r.rng_state == c.rng_state);
  CHECK(r.w_avg_count == 17);
  REQUIRE(r.w_avg.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(bits_of(r.w_avg[i]) == bits_of(c.w_avg[i]));
  CHECK(r.config == c.config);

  REQUIRE(r.arrays.size() == c.arrays.size());
  for (size_t i = 0; i < c.arrays.size(); ++i) {
    CHECK(r.arrays[i].first == c.arrays[i].first);  // order preserved
    const Tensor<float>& a = c.arrays[i].second;
    const Tensor<float>& b = r.arrays[i].second;
    REQUIRE(a.shape == b.shape);
    for (int64_t k = 0; k < a.numel(); ++k) CHECK(bits_of(a[k]) == bits_of(b[k]));
  }

  // Saving the loaded checkpoint reproduces the file byte for byte.
  std::string path2 = scratch("roundtrip2.ckpt");
  save_checkpoint(r, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
}

TEST_CASE("find, require, and put behave as documented") {
  Checkpoint c = sample_ckpt();
  CHECK(c.find("m.grid") != nullptr);
  CHECK(c.find("m.absent") == nullptr);
  CHECK(c.require("m.scalar")[0] == 42.0f);
  CHECK_THROWS_AS(c.require("m.absent"), std::runtime_error);

  size_t before = c.arrays.size();
  c.put("m.scalar", Tensor<float>({1}, {7.0f}));  // replaces, no duplicate
  CHECK(c.arrays.size() == before);
  CHECK(c.require("m.scalar")[0] == 7.0f);
  c.put("m.new", Tensor<float>({2}, {1.0f, 2.0f}));
  CHECK(c.arrays.size() == before + 1);
}

TEST_CASE("check_arrays validates presence and shape") {
  Checkpoint c = sample_ckpt();
  check_arrays(c, {{"m.exotic", {2, 3}}, {"m.scalar", {1}}});
  CHECK_THROWS_AS(check_arrays(c, {{"m.absent", {1}}}), std::runtime_error);
  CHECK_THROWS_AS(check_arrays(c, {{"m.exotic", {3, 2}}}), std::runtime_error);
}

TEST_CASE("corrupted or missing files are rejected with checkpoint errors") {
  auto expect_checkpoint_error = [](const std::string& path) {
    try {
      load_checkpoint(path);
      FAIL("expected a checkpoint error for " << path);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).rfind("checkpoint:", 0) == 0);
    }
  };

  expect_checkpoint_error(scratch("does_not_exist.ckpt"));

  // Wrong magic.
  std::string badmagic = scratch("badmagic.ckpt");
  {
    std::ofstream out(badmagic, std::ios::binary);
    out << "NOTMAGIC" << std::string(64, '\0');
  }
  expect_checkpoint_error(badmagic);

  // Truncations at several byte lengths of a valid file.
  Checkpoint c = sample_ckpt();
  std::string good = scratch("good.ckpt");
  save_checkpoint(c, good);
  std::ifstream in(good, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() > 64);
  for (size_t cut : {size_t(4), size_t(12), bytes.size() / 2, bytes.size() - 3}) {
    std::string t = scratch("trunc_" + std::to_string(cut) + ".ckpt");
    std::ofstream out(t, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(cut));
    out.close();
    expect_checkpoint_error(t);
  }

  // Trailing garbage (over-long file).
  std::string overlong = scratch("overlong.ckpt");
  {
    std::ofstream out(overlong, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out << "extra";
  }
  expect_checkpoint_error(overlong);
}

TEST_CASE("future schema versions are refused on load") {
  Checkpoint c = sample_ckpt();
  c.schema_version = 2;
  std::string path = scratch("schema2.ckpt");
  save_checkpoint(c, path);
  try {
    load_checkpoint(path);
    FAIL("expected a schema error");
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.rfind("checkpoint:", 0) == 0);
    CHECK(msg.find("schema_version") != std::string::npos);
  }
}

TEST_CASE("empty-array and no-array checkpoints still roundtrip") {
  Checkpoint c;
  c.phase = "phase2";
  c.step = 0;
  c.config = nlohmann::json::object();
  c.rng_state = "";
  std::string path = scratch("empty.ckpt");
  save_checkpoint(c, path);
  Checkpoint r = load_checkpoint(path);
  CHECK(r.phase == "phase2");
  CHECK(r.arrays.empty());
  CHECK(r.w_avg.empty());
}
