#include "cgan/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cgan {

namespace {

using nlohmann::json;

// Rejects keys in `j` that are not in `allowed`, reporting the JSON path.
void reject_unknown(const json& j, const char* path, std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) { ok = true; break; }
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + path + "." + key +
                                  "' (remove it or check the spelling against the documented schema)");
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void Phase1Config::validate() const {
  if (lr <= 0) throw std::invalid_argument("config: phase1.lr must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw std::invalid_argument("config: phase1 Adam betas must lie in [0, 1)");
  if (batch < 1) throw std::invalid_argument("config: phase1.batch must be >= 1");
  if (r1_lambda < 0) throw std::invalid_argument("config: phase1.r1_lambda must be >= 0");
  if (ema_decay < 0 || ema_decay >= 1)
    throw std::invalid_argument("config: phase1.ema_decay must lie in [0, 1)");
  if (ema_interval < 1) throw std::invalid_argument("config: phase1.ema_interval must be >= 1");
  if (mix_prob < 0 || mix_prob > 1)
    throw std::invalid_argument("config: phase1.mix_prob must lie in [0, 1]");
  if (total_steps < 0) throw std::invalid_argument("config: phase1.total_steps must be >= 0");
  if (lazy_r1_interval < 1)
    throw std::invalid_argument("config: phase1.lazy_r1_interval must be >= 1 (1 = every step)");
  if (mapping_lr_factor <= 0)
    throw std::invalid_argument("config: phase1.mapping_lr_factor must be > 0");
  if (w_avg_decay < 0 || w_avg_decay >= 1)
    throw std::invalid_argument("config: phase1.w_avg_decay must lie in [0, 1)");
  if (log_interval < 1) throw std::invalid_argument("config: phase1.log_interval must be >= 1");
}

void Phase2Config::validate() const {
  if (lr <= 0) throw std::invalid_argument("config: phase2.lr must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw std::invalid_argument("config: phase2 Adam betas must lie in [0, 1)");
  if (batch < 1) throw std::invalid_argument("config: phase2.batch must be >= 1");
  if (epochs < 1) throw std::invalid_argument("config: phase2.epochs must be >= 1");
  if (pairs_per_epoch < 1)
    throw std::invalid_argument("config: phase2.pairs_per_epoch must be >= 1");
}

void MetricsConfig::validate() const {
  if (extractor != "pixel-pca-64")
    throw std::invalid_argument("config: metrics.extractor '" + extractor +
                                "' is not available (known extractors: pixel-pca-64)");
  if (n_real < 2 || n_fake < 2)
    throw std::invalid_argument("config: metrics.n_real and n_fake must be >= 2");
  if (knn_k < 1) throw std::invalid_argument("config: metrics.knn_k must be >= 1");
  if (continuous_tolerance < 0)
    throw std::invalid_argument("config: metrics.continuous_tolerance must be >= 0");
}

void RunConfig::validate() const {
  if (schema_version != 1)
    throw std::invalid_argument("config: schema_version must be 1 for this build");
  synthesis.validate();
  encoder.validate();
  phase1.validate();
  phase2.validate();
  filter.validate();
  metrics.validate();
  if (data.count < 1) throw std::invalid_argument("config: data.count must be >= 1");
  if (data.image_size != synthesis.image_size)
    throw std::invalid_argument(
        "config: data.image_size (" + std::to_string(data.image_size) +
        ") must equal synthesis.image_size (" + std::to_string(synthesis.image_size) + ")");
  if (encoder.input_size != synthesis.image_size / 2)
    throw std::invalid_argument(
        "config: encoder.input_size (" + std::to_string(encoder.input_size) +
        ") must equal synthesis.image_size / 2 (" + std::to_string(synthesis.image_size / 2) +
        "), the side of the frequency-refined image");
  if (encoder.d_style != synthesis.d_style)
    throw std::invalid_argument("config: encoder.d_style must equal synthesis.d_style");
  int64_t max_cut = (std::max(encoder.input_size, encoder.input_size) + 1) / 2;
  if (filter.cutoff > max_cut)
    throw std::invalid_argument("config: filter.cutoff " + std::to_string(filter.cutoff) +
                                " exceeds ceil(max(M,N)/2) = " + std::to_string(max_cut) +
                                " for the " + std::to_string(encoder.input_size) + "x" +
                                std::to_string(encoder.input_size) + " refined input");
}

RunConfig config_from_json(const json& j) {
  RunConfig rc;
  reject_unknown(j, "$", {"schema_version", "seed", "synthesis", "encoder", "phase1", "phase2",
                          "filter", "data", "metrics"});
  get_if(j, "schema_version", rc.schema_version);
  get_if(j, "seed", rc.seed);

  if (j.contains("synthesis")) {
    const json& s = j.at("synthesis");
    reject_unknown(s, "$.synthesis",
                   {"image_size", "d_z", "d_style", "channels", "style_split_resolution",
                    "noise_enabled", "mapping_depth", "mbstd_group"});
    get_if(s, "image_size", rc.synthesis.image_size);
    get_if(s, "d_z", rc.synthesis.d_z);
    get_if(s, "d_style", rc.synthesis.d_style);
    if (s.contains("channels")) {
      rc.synthesis.channels.clear();
      for (const auto& [res, ch] : s.at("channels").items()) {
        size_t pos = 0;
        int64_t r;
        try {
          r = std::stoll(res, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != res.size())
          throw std::invalid_argument("config: synthesis.channels key '" + res +
                                      "' is not a resolution integer");
        rc.synthesis.channels[r] = ch.get<int64_t>();
      }
    }
    get_if(s, "style_split_resolution", rc.synthesis.style_split_resolution);
    get_if(s, "noise_enabled", rc.synthesis.noise_enabled);
    get_if(s, "mapping_depth", rc.synthesis.mapping_depth);
    get_if(s, "mbstd_group", rc.synthesis.mbstd_group);
  }

  // Unless overridden, the encoder follows the synthesis geometry.
  rc.encoder.d_style = rc.synthesis.d_style;
  rc.encoder.input_size = rc.synthesis.image_size / 2;
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    reject_unknown(e, "$.encoder", {"depths", "d_style", "input_size"});
    if (e.contains("depths")) rc.encoder.depths = e.at("depths").get<std::vector<int64_t>>();
    get_if(e, "d_style", rc.encoder.d_style);
    get_if(e, "input_size", rc.encoder.input_size);
  }

  if (j.contains("phase1")) {
    const json& p = j.at("phase1");
    reject_unknown(p, "$.phase1",
                   {"lr", "beta1", "beta2", "batch", "r1_lambda", "ema_decay", "ema_interval",
                    "mix_prob", "total_steps", "lazy_r1_interval", "mapping_lr_factor",
                    "w_avg_decay", "snapshot_steps", "log_interval"});
    get_if(p, "lr", rc.phase1.lr);
    get_if(p, "beta1", rc.phase1.beta1);
    get_if(p, "beta2", rc.phase1.beta2);
    get_if(p, "batch", rc.phase1.batch);
    get_if(p, "r1_lambda", rc.phase1.r1_lambda);
    get_if(p, "ema_decay", rc.phase1.ema_decay);
    get_if(p, "ema_interval", rc.phase1.ema_interval);
    get_if(p, "mix_prob", rc.phase1.mix_prob);
    get_if(p, "total_steps", rc.phase1.total_steps);
    get_if(p, "lazy_r1_interval", rc.phase1.lazy_r1_interval);
    get_if(p, "mapping_lr_factor", rc.phase1.mapping_lr_factor);
    get_if(p, "w_avg_decay", rc.phase1.w_avg_decay);
    get_if(p, "snapshot_steps", rc.phase1.snapshot_steps);
    get_if(p, "log_interval", rc.phase1.log_interval);
  }

  if (j.contains("phase2")) {
    const json& p = j.at("phase2");
    reject_unknown(p, "$.phase2", {"lr", "beta1", "beta2", "batch", "epochs", "pairs_per_epoch"});
    get_if(p, "lr", rc.phase2.lr);
    get_if(p, "beta1", rc.phase2.beta1);
    get_if(p, "beta2", rc.phase2.beta2);
    get_if(p, "batch", rc.phase2.batch);
    get_if(p, "epochs", rc.phase2.epochs);
    get_if(p, "pairs_per_epoch", rc.phase2.pairs_per_epoch);
  }

  if (j.contains("filter")) {
    const json& f = j.at("filter");
    reject_unknown(f, "$.filter", {"mode", "cutoff", "combiner"});
    if (f.contains("mode")) rc.filter.mode = FilterSpec::mode_from_string(f.at("mode").get<std::string>());
    if (f.contains("cutoff")) rc.filter.cutoff = f.at("cutoff").get<int64_t>();
    if (f.contains("combiner"))
      rc.filter.combiner = FilterSpec::combiner_from_string(f.at("combiner").get<std::string>());
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, "$.data", {"source", "path", "count", "seed", "image_size"});
    if (d.contains("source")) {
      std::string src = d.at("source").get<std::string>();
      if (src == "folder")
        rc.data.source = DatasetSpec::Source::folder;
      else if (src == "synthetic")
        rc.data.source = DatasetSpec::Source::synthetic;
      else
        throw std::invalid_argument("config: data.source must be 'folder' or 'synthetic', got '" +
                                    src + "'");
    }
    get_if(d, "path", rc.data.path);
    get_if(d, "count", rc.data.count);
    get_if(d, "seed", rc.data.seed);
    if (d.contains("image_size"))
      rc.data.image_size = d.at("image_size").get<int>();
    else
      rc.data.image_size = static_cast<int>(rc.synthesis.image_size);
  } else {
    rc.data.image_size = static_cast<int>(rc.synthesis.image_size);
  }

  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    reject_unknown(m, "$.metrics",
                   {"extractor", "n_real", "n_fake", "knn_k", "continuous_tolerance"});
    get_if(m, "extractor", rc.metrics.extractor);
    get_if(m, "n_real", rc.metrics.n_real);
    get_if(m, "n_fake", rc.metrics.n_fake);
    get_if(m, "knn_k", rc.metrics.knn_k);
    get_if(m, "continuous_tolerance", rc.metrics.continuous_tolerance);
  }

  rc.validate();
  return rc;
}

nlohmann::json config_to_json(const RunConfig& rc) {
  json j;
  j["schema_version"] = rc.schema_version;
  j["seed"] = rc.seed;
  json s;
  s["image_size"] = rc.synthesis.image_size;
  s["d_z"] = rc.synthesis.d_z;
  s["d_style"] = rc.synthesis.d_style;
  json ch;
  for (const auto& [res, c] : rc.synthesis.channels) ch[std::to_string(res)] = c;
  s["channels"] = std::move(ch);
  s["style_split_resolution"] = rc.synthesis.style_split_resolution;
  s["noise_enabled"] = rc.synthesis.noise_enabled;
  s["mapping_depth"] = rc.synthesis.mapping_depth;
  s["mbstd_group"] = rc.synthesis.mbstd_group;
  j["synthesis"] = std::move(s);
  json e;
  e["depths"] = rc.encoder.depths;
  e["d_style"] = rc.encoder.d_style;
  e["input_size"] = rc.encoder.input_size;
  j["encoder"] = std::move(e);
  json p1;
  p1["lr"] = rc.phase1.lr;
  p1["beta1"] = rc.phase1.beta1;
  p1["beta2"] = rc.phase1.beta2;
  p1["batch"] = rc.phase1.batch;
  p1["r1_lambda"] = rc.phase1.r1_lambda;
  p1["ema_decay"] = rc.phase1.ema_decay;
  p1["ema_interval"] = rc.phase1.ema_interval;
  p1["mix_prob"] = rc.phase1.mix_prob;
  p1["total_steps"] = rc.phase1.total_steps;
  p1["lazy_r1_interval"] = rc.phase1.lazy_r1_interval;
  p1["mapping_lr_factor"] = rc.phase1.mapping_lr_factor;
  p1["w_avg_decay"] = rc.phase1.w_avg_decay;
  p1["snapshot_steps"] = rc.phase1.snapshot_steps;
  p1["log_interval"] = rc.phase1.log_interval;
  j["phase1"] = std::move(p1);
  json p2;
  p2["lr"] = rc.phase2.lr;
  p2["beta1"] = rc.phase2.beta1;
  p2["beta2"] = rc.phase2.beta2;
  p2["batch"] = rc.phase2.batch;
  p2["epochs"] = rc.phase2.epochs;
  p2["pairs_per_epoch"] = rc.phase2.pairs_per_epoch;
  j["phase2"] = std::move(p2);
  json f;
  f["mode"] = FilterSpec::mode_to_string(rc.filter.mode);
  f["cutoff"] = rc.filter.cutoff;
  f["combiner"] = FilterSpec::combiner_to_string(rc.filter.combiner);
  j["filter"] = std::move(f);
  json d;
  d["source"] = rc.data.source == DatasetSpec::Source::folder ? "folder" : "synthetic";
  d["path"] = rc.data.path;
  d["count"] = rc.data.count;
  d["seed"] = rc.data.seed;
  d["image_size"] = rc.data.image_size;
  j["data"] = std::move(d);
  json m;
  m["extractor"] = rc.metrics.extractor;
  m["n_real"] = rc.metrics.n_real;
  m["n_fake"] = rc.metrics.n_fake;
  m["knn_k"] = rc.metrics.knn_k;
  m["continuous_tolerance"] = rc.metrics.continuous_tolerance;
  j["metrics"] = std::move(m);
  return j;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

uint64_t config_hash(const RunConfig& rc) {
  std::string dump = config_to_json(rc).dump();
  uint64_t h = 14695981039346656037ull;  // FNV-1a 64 offset basis
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash_hex(const RunConfig& rc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(config_hash(rc)));
  return std::string(buf);
}

}  // namespace cgan
