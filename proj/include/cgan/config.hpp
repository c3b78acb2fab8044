#pragma once
// Run configuration: one strict-validated JSON document covering synthesis,
// encoder, both training phases, the band filter, data, and metric settings.
#include <cstdint>
#include <string>

#include "cgan/data.hpp"
#include "cgan/encoder.hpp"
#include "cgan/freqsel.hpp"
#include "cgan/synthesis.hpp"
#include "json.hpp"

namespace cgan {

struct Phase1Config {
  double lr = 2e-4, beta1 = 0.0, beta2 = 0.99;
  int batch = 16;  // desk-scale default; larger rigs typically use 32
  double r1_lambda = 5.0;
  double ema_decay = 0.999;
  int ema_interval = 10;  // generator iterations per EMA update
  double mix_prob = 0.9;
  int64_t total_steps = 10000;
  int lazy_r1_interval = 1;        // 1 = R1 every D-step; k>1 = lazy with weight lambda*k
  double mapping_lr_factor = 0.01;  // mapping network learning-rate multiplier
  double w_avg_decay = 0.995;       // running truncation-center decay
  std::vector<int64_t> snapshot_steps = {500};
  int log_interval = 10;
  void validate() const;
};

struct Phase2Config {
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999;
  int batch = 16;
  int64_t epochs = 50;
  int64_t pairs_per_epoch = 2000;
  void validate() const;
};

struct MetricsConfig {
  std::string extractor = "pixel-pca-64";
  int64_t n_real = 2000, n_fake = 2000;
  int knn_k = 3;
  double continuous_tolerance = 0.02;
  void validate() const;
};

struct RunConfig {
  int schema_version = 1;
  uint64_t seed = 1;
  SynthesisConfig synthesis;
  EncoderConfig encoder;
  Phase1Config phase1;
  Phase2Config phase2;
  FilterSpec filter;
  DatasetSpec data;
  MetricsConfig metrics;

  // Cross-module checks (e.g. encoder input = half the image size) plus each
  // sub-config's own validation. Throws std::invalid_argument with an
  // actionable message.
  void validate() const;
};

// Strict parse: unknown keys anywhere are rejected with their JSON path;
// missing keys keep defaults. to_json emits every field (canonical,
// key-sorted via nlohmann's ordered std::map storage).
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& rc);
RunConfig load_config_file(const std::string& path);

// FNV-1a 64-bit over the canonical JSON dump; stamped on every sweep CSV row.
uint64_t config_hash(const RunConfig& rc);
std::string config_hash_hex(const RunConfig& rc);

}  // namespace cgan
