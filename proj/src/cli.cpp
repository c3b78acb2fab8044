#include "cgan/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <functional>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cgan/checkpoint.hpp"
#include "cgan/config.hpp"
#include "cgan/data.hpp"
#include "cgan/freqsel.hpp"
#include "cgan/image_io.hpp"
#include "cgan/metrics.hpp"
#include "cgan/svg.hpp"
#include "cgan/training.hpp"

namespace fs = std::filesystem;

namespace cgan {
namespace {

// --------------------------------------------------------------------------
// Config assembly: optional JSON file, then repeated --set path.to.key=value
// overrides (value parsed as JSON when possible, else taken as a string),
// then the --seed flag. Unknown paths are rejected by the strict parser.
// --------------------------------------------------------------------------

void apply_set(nlohmann::json& j, const std::string& expr) {
  auto eq = expr.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("--set expects path.to.key=value, got '" + expr + "'");
  std::string path = expr.substr(0, eq);
  std::string value = expr.substr(eq + 1);
  std::string ptr = "/";
  for (char c : path) ptr += (c == '.') ? '/' : c;
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    v = value;  // plain string
  }
  j[nlohmann::json::json_pointer(ptr)] = v;
}

RunConfig assemble_config(const std::string& config_path, const std::vector<std::string>& sets,
                          std::optional<uint64_t> seed) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::invalid_argument("cannot open config file '" + config_path + "'");
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config file '" + config_path + "' is not valid JSON: " +
                                  e.what());
    }
  }
  for (const auto& s : sets) apply_set(j, s);
  RunConfig rc = config_from_json(j);
  if (seed) rc.seed = *seed;
  rc.validate();
  return rc;
}

RunConfig config_from_ckpt(const Checkpoint& ckpt, const std::vector<std::string>& sets,
                           std::optional<uint64_t> seed) {
  nlohmann::json j = ckpt.config;
  for (const auto& s : sets) apply_set(j, s);
  RunConfig rc = config_from_json(j);
  if (seed) rc.seed = *seed;
  rc.validate();
  return rc;
}

void write_resolved_config(const RunConfig& rc, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream f(dir + "/config.json", std::ios::trunc);
  f << config_to_json(rc).dump(2) << "\n";
}

// --------------------------------------------------------------------------
// Small tensor/report helpers
// --------------------------------------------------------------------------

Tensor<float> nth_image(const Tensor<float>& batch, int64_t i) {
  int64_t c = batch.shape[1], h = batch.shape[2], w = batch.shape[3];
  Tensor<float> out({c, h, w});
  const float* src = batch.data() + i * c * h * w;
  std::copy(src, src + c * h * w, out.data());
  return out;
}

Tensor<double> pm1_to_unit01(const Tensor<float>& img) {
  Tensor<double> out(img.shape);
  for (int64_t i = 0; i < img.numel(); ++i) {
    double v = (static_cast<double>(img[i]) + 1.0) * 0.5;
    out[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
  return out;
}

ImageU8 gray_to_image(const Tensor<double>& g) {
  ImageU8 img;
  img.height = static_cast<int>(g.shape[0]);
  img.width = static_cast<int>(g.shape[1]);
  img.pixels.assign(static_cast<size_t>(img.width) * img.height * 3, 0);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double v = g[static_cast<int64_t>(y) * img.width + x];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      auto b = static_cast<uint8_t>(std::lround(v * 255.0));
      img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = b;
    }
  return img;
}

// Log-scaled magnitude of a centered spectrum, normalized to [0,1].
Tensor<double> log_magnitude01(const Spectrum& s) {
  Tensor<double> g({s.M, s.N});
  double mx = 0.0;
  for (int64_t i = 0; i < g.numel(); ++i) {
    g[i] = std::log1p(std::abs(s.data[static_cast<size_t>(i)]));
    mx = std::max(mx, g[i]);
  }
  if (mx > 0)
    for (int64_t i = 0; i < g.numel(); ++i) g[i] /= mx;
  return g;
}

constexpr uint64_t kTagEvalFakes = 0x65766166ull;   // plain-sample stream
constexpr uint64_t kTagGuidePair = 0x67706169ull;   // per-guide generation
constexpr uint64_t kTagSweepNoise = 0x746E6F69ull;  // shared noise for trunc sweep

const std::vector<std::string> kContentKeys = {"shape_class", "cx", "cy", "size"};

// --------------------------------------------------------------------------
// Shared evaluation machinery
// --------------------------------------------------------------------------

struct RealEval {
  Dataset ds;           // full dataset (guides + ground-truth attrs)
  PcaBasis basis;       // fit on the first n_real images
  FeatureSet features;  // real embedding
  int64_t n_real = 0;
};

RealEval prepare_real(const RunConfig& rc) {
  if (rc.metrics.extractor != "pixel-pca-64")
    throw std::invalid_argument("unknown feature extractor '" + rc.metrics.extractor + "'");
  RealEval re;
  re.ds = load_dataset(rc.data);
  re.n_real = std::min<int64_t>(rc.metrics.n_real, static_cast<int64_t>(re.ds.images.size()));
  if (re.n_real < 65)
    throw std::invalid_argument("need at least 65 real images for 64-d FID, have " +
                                std::to_string(re.n_real));
  std::vector<Tensor<float>> imgs(re.ds.images.begin(), re.ds.images.begin() + re.n_real);
  std::vector<Tensor<double>> descs;
  descs.reserve(imgs.size());
  for (const auto& im : imgs) descs.push_back(pixel_descriptor(im));
  re.basis = fit_pca(descs, 64);
  re.features = feature_embed(imgs, re.basis);
  return re;
}

struct DistEval {
  double fid_v = 0.0;
  double precision = 0.0;
};

DistEval eval_plain(SamplerContext& sc, const RealEval& re, const MetricsConfig& mc, double psi,
                    uint64_t seed) {
  std::vector<Tensor<float>> fakes = sc.sample_for_eval(mc.n_fake, psi, mix_seed(seed, kTagEvalFakes));
  FeatureSet ff = feature_embed(fakes, re.basis);
  return {fid(re.features, ff), knn_precision(re.features, ff, mc.knn_k)};
}

struct GuidedEval {
  double fid_v = 0.0;
  double precision = 0.0;
  bool has_distribution = false;
  bool has_content = false;
  AttributeMatchReport match;
  int64_t shape_successes = 0;
  int64_t pairs = 0;
};

// One output per guide (content q at coarse sites, fresh truncated w2 at
// fine sites), embedded against the real features; content match uses the
// dataset's ground-truth attributes when available.
GuidedEval eval_guided(SamplerContext& sc, const RealEval& re, const RunConfig& rc, double psi,
                       uint64_t seed, int64_t pairs, bool need_distribution) {
  GuidedEval ge;
  ge.pairs = std::min<int64_t>(pairs, static_cast<int64_t>(re.ds.images.size()));
  if (ge.pairs < 1) throw std::invalid_argument("guided evaluation needs at least one pair");
  std::vector<Tensor<float>> outputs;
  outputs.reserve(static_cast<size_t>(ge.pairs));
  for (int64_t i = 0; i < ge.pairs; ++i) {
    Tensor<float> q = sc.encode_guide(re.ds.images[static_cast<size_t>(i)]);
    Tensor<float> out =
        sc.sample_with_guide(q, 1, psi, mix_seed(seed, mix_seed(kTagGuidePair, static_cast<uint64_t>(i))));
    outputs.push_back(nth_image(out, 0));
  }
  if (need_distribution || ge.pairs >= 65) {
    FeatureSet ff = feature_embed(outputs, re.basis);
    ge.fid_v = fid(re.features, ff);  // throws if the set is degenerate
    ge.precision = knn_precision(re.features, ff, rc.metrics.knn_k);
    ge.has_distribution = true;
  }

  if (!re.ds.attrs.empty()) {
    ge.has_content = true;
    std::vector<AttributeRecord> guide_attrs(re.ds.attrs.begin(),
                                             re.ds.attrs.begin() + ge.pairs);
    std::vector<AttributeRecord> out_attrs;
    out_attrs.reserve(static_cast<size_t>(ge.pairs));
    for (const auto& img : outputs) out_attrs.push_back(extract_attributes_oracle(pm1_to_unit01(img)));
    ge.match = attribute_match_rate(guide_attrs, out_attrs, kContentKeys,
                                    rc.metrics.continuous_tolerance);
    for (int64_t i = 0; i < ge.pairs; ++i)
      if (guide_attrs[static_cast<size_t>(i)].valid && out_attrs[static_cast<size_t>(i)].valid &&
          guide_attrs[static_cast<size_t>(i)].shape_class == out_attrs[static_cast<size_t>(i)].shape_class)
        ++ge.shape_successes;
  }
  return ge;
}

// Sweep-row execution with an opt-in worker pool. GradMode is thread-local
// and rows never share checkpoints or output files, so rows are independent.
void run_rows(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        int64_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<size_t>(i)] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::mutex g_print_mutex;
void print_line(const std::string& s) {
  std::lock_guard<std::mutex> lock(g_print_mutex);
  std::cout << s << "\n";
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

// --------------------------------------------------------------------------
// Subcommand bodies
// --------------------------------------------------------------------------

int cmd_synth_data(const std::string& out, int64_t count, uint64_t seed, int image_size) {
  write_synthetic_dataset(out, count, seed, image_size);
  std::cout << "wrote " << count << " images (" << image_size << "x" << image_size
            << ") and attributes.csv to " << out << "\n";
  return 0;
}

int cmd_train_phase1(const std::string& config_path, const std::vector<std::string>& sets,
                     std::optional<uint64_t> seed, const std::string& data_dir,
                     const std::string& out) {
  RunConfig rc = assemble_config(config_path, sets, seed);
  if (!data_dir.empty()) {
    rc.data.source = DatasetSpec::Source::folder;
    rc.data.path = data_dir;
    rc.validate();
  }
  write_resolved_config(rc, out);
  Dataset ds = load_dataset(rc.data);
  std::cout << "phase 1: " << rc.phase1.total_steps << " steps, batch " << rc.phase1.batch
            << ", " << ds.images.size() << " training images, seed " << rc.seed << "\n";
  Checkpoint ckpt = train_phase1(rc, ds, out);
  std::cout << "phase 1 complete at step " << ckpt.step << "; checkpoint: " << out
            << "/phase1_final.ckpt\n";
  return 0;
}

int cmd_train_phase2(const std::string& ckpt_path, const std::vector<std::string>& sets,
                     std::optional<uint64_t> seed, const std::string& out) {
  Checkpoint p1 = load_checkpoint(ckpt_path);
  RunConfig rc = config_from_ckpt(p1, sets, seed);
  write_resolved_config(rc, out);
  std::cout << "phase 2: " << rc.phase2.epochs << " epochs x " << rc.phase2.pairs_per_epoch
            << " pairs, batch " << rc.phase2.batch << ", filter "
            << FilterSpec::mode_to_string(rc.filter.mode) << "/" << rc.filter.cutoff << "\n";
  Checkpoint out_ckpt = train_phase2(rc, p1, out);
  std::cout << "phase 2 complete; checkpoint: " << out << "/phase2_final.ckpt\n";
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& guide_path, int count,
                 double psi, uint64_t seed, const std::string& out, bool print_styles) {
  if (count < 1) throw std::invalid_argument("--count must be >= 1");
  if (psi < 0.0 || psi > 1.0) throw std::invalid_argument("--psi must lie in [0,1]");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  SamplerContext sc = SamplerContext::from_checkpoint(ckpt);
  fs::create_directories(out);
  const int64_t S = sc.rc.synthesis.image_size;

  StyleAssignment rec;
  Tensor<float> outputs;
  if (guide_path.empty()) {
    outputs = sc.sample_batch(count, psi, mix_seed(seed, 0x7A5EEDull),
                              mix_seed(seed, 0x6E5EEDull), &rec);
  } else {
    Tensor<float> guide = load_image_pm1(guide_path, static_cast<int>(S));
    write_png(out + "/guide.png", pm1_to_image(guide));
    Tensor<float> q = sc.encode_guide(guide);
    outputs = sc.sample_with_guide(q, count, psi, seed, &rec);
    // Grid row: guide first, then the styled outputs (one row, count+1 cols).
    Tensor<float> row({static_cast<int64_t>(count) + 1, 3, S, S});
    std::copy(guide.data(), guide.data() + guide.numel(), row.data());
    std::copy(outputs.data(), outputs.data() + outputs.numel(), row.data() + guide.numel());
    write_png(out + "/grid.png", make_grid(row, 1, count + 1));
  }
  if (guide_path.empty()) {
    int cols = std::min(count, 8);
    int rows = (count + cols - 1) / cols;
    write_png(out + "/grid.png", make_grid(outputs, rows, cols));
  }
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "/sample_%03d.png", i);
    write_png(out + name, pm1_to_image(nth_image(outputs, i)));
  }
  if (print_styles) {
    for (size_t i = 0; i < rec.site_resolution.size(); ++i)
      std::cout << "site " << i << ": resolution " << rec.site_resolution[i] << " <- "
                << (rec.source[i] == 0 ? (guide_path.empty() ? "w1" : "content q") : "style w2")
                << "\n";
  }
  std::cout << "wrote " << count << " samples and grid.png to " << out
            << (guide_path.empty() ? "" : " (guided)") << "\n";
  return 0;
}

int cmd_freq_analyze(const std::string& input, const std::string& mode_name, int64_t cutoff,
                     const std::string& out) {
  ImageU8 img = read_image(input);
  fs::create_directories(out);
  // Crop to even dimensions (the refinement pipeline halves the resolution).
  int H = img.height - (img.height % 2), W = img.width - (img.width % 2);
  if (H < 2 || W < 2) throw std::invalid_argument("image too small for analysis");
  Tensor<double> rgb({3, H, W});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        rgb[(static_cast<int64_t>(c) * H + y) * W + x] = img.at(y, x, c) / 255.0;

  FilterSpec f;
  f.mode = FilterSpec::mode_from_string(mode_name);
  f.cutoff = cutoff;
  f.validate();

  Tensor<double> intensity = to_intensity(rgb, kDefaultLuma);
  Tensor<double> down = downsample_half(intensity);
  Spectrum centered = shift_center(dft2(down));
  write_png(out + "/spectrum.png", gray_to_image(log_magnitude01(centered)));
  Spectrum masked = band_filter(centered, f);
  write_png(out + "/spectrum_filtered.png", gray_to_image(log_magnitude01(masked)));
  double residue = 0.0;
  Tensor<double> xf = idft2(masked, &residue);
  write_png(out + "/refined.png", gray_to_image(xf));
  std::cout << "analyzed " << input << " (" << W << "x" << H << " -> " << down.shape[1] << "x"
            << down.shape[0] << " refined), mode " << mode_name << ", cutoff " << cutoff
            << ", max imaginary residue " << fmt_g(residue) << "\n"
            << "wrote spectrum.png, spectrum_filtered.png, refined.png to " << out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::vector<std::string>& sets,
                 uint64_t seed, double psi, int64_t pairs, const std::string& out) {
  if (psi < 0.0 || psi > 1.0) throw std::invalid_argument("--psi must lie in [0,1]");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig rc = config_from_ckpt(ckpt, sets, std::nullopt);
  SamplerContext sc = SamplerContext::from_checkpoint(ckpt);
  fs::create_directories(out);

  RealEval re = prepare_real(rc);
  DistEval de = eval_plain(sc, re, rc.metrics, psi, seed);

  MetricReport rep;
  rep.set("extractor", rc.metrics.extractor);
  rep.set("n_real", static_cast<double>(re.n_real));
  rep.set("n_fake", static_cast<double>(rc.metrics.n_fake));
  rep.set("knn_k", static_cast<double>(rc.metrics.knn_k));
  rep.set("psi", psi);
  rep.set("seed", static_cast<double>(seed));
  rep.set("ckpt_phase", ckpt.phase);
  rep.set("ckpt_step", static_cast<double>(ckpt.step));
  rep.set("config_hash", config_hash_hex(rc));
  rep.set("fid", de.fid_v);
  rep.set("precision", de.precision);

  if (sc.has_encoder && pairs > 0) {
    GuidedEval ge = eval_guided(sc, re, rc, psi, seed, pairs, /*need_distribution=*/false);
    if (ge.has_distribution) {
      rep.set("guided_fid", ge.fid_v);
      rep.set("guided_precision", ge.precision);
    }
    rep.set("content_pairs", static_cast<double>(ge.pairs));
    if (ge.has_content) {
      for (const auto& [key, rate] : ge.match.per_key) rep.set("match_" + key, rate);
      rep.set("match_mean", ge.match.mean);
      double rate = static_cast<double>(ge.shape_successes) / static_cast<double>(ge.pairs);
      auto [wl, wh] = wilson_interval(ge.shape_successes, ge.pairs);
      rep.set("shape_match_rate", rate);
      rep.set("shape_chance_level", 1.0 / 3.0);
      rep.set("shape_binomial_p", binomial_tail_p(ge.shape_successes, ge.pairs, 1.0 / 3.0));
      rep.set("shape_wilson_low95", wl);
      rep.set("shape_wilson_high95", wh);
    } else {
      rep.set("content_metrics", "skipped (dataset has no ground-truth attributes)");
    }
  } else if (pairs > 0) {
    rep.set("content_metrics", "skipped (checkpoint has no trained encoder)");
  }

  rep.write(out + "/report");
  std::cout << rep.to_text();
  std::cout << "wrote report.txt and report.csv to " << out << "\n";
  return 0;
}

int cmd_sweep_freq(const std::string& ckpt_path, const std::vector<std::string>& sets,
                   std::optional<uint64_t> seed, std::vector<int64_t> cutoffs,
                   std::vector<std::string> modes, const std::string& out, int workers) {
  if (cutoffs.empty()) throw std::invalid_argument("--cutoffs must list at least one cutoff");
  if (modes.empty()) throw std::invalid_argument("--modes must list at least one mode");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig base = config_from_ckpt(ckpt, sets, seed);
  fs::create_directories(out);

  struct Row {
    std::string mode;
    int64_t cutoff = 0;
    RunConfig rc;
    double fid_v = 0, precision = 0, content = 0;
    bool has_content = false;
  };
  std::vector<Row> rows;
  {
    Row none;  // baseline: refinement without band masking
    none.mode = "none";
    none.cutoff = 0;
    none.rc = base;
    none.rc.filter.mode = FilterSpec::Mode::none;
    rows.push_back(none);
  }
  for (const auto& mname : modes) {
    FilterSpec::Mode mode = FilterSpec::mode_from_string(mname);
    if (mode == FilterSpec::Mode::none) continue;  // baseline is always present
    for (int64_t c : cutoffs) {
      Row r;
      r.mode = mname;
      r.cutoff = c;
      r.rc = base;
      r.rc.filter.mode = mode;
      r.rc.filter.cutoff = c;
      r.rc.validate();
      rows.push_back(r);
    }
  }

  const RealEval re = prepare_real(base);
  const uint64_t eval_seed = base.seed;
  run_rows(static_cast<int64_t>(rows.size()), workers, [&](int64_t i) {
    Row& r = rows[static_cast<size_t>(i)];
    std::string dir = out + "/row_" + r.mode + "_" + std::to_string(r.cutoff);
    Checkpoint trained = train_phase2(r.rc, ckpt, dir);
    SamplerContext sc = SamplerContext::from_checkpoint(trained);
    GuidedEval ge = eval_guided(sc, re, r.rc, /*psi=*/1.0, eval_seed, r.rc.metrics.n_fake,
                                /*need_distribution=*/true);
    r.fid_v = ge.fid_v;
    r.precision = ge.precision;
    r.has_content = ge.has_content;
    r.content = ge.match.mean;
    print_line("[freq " + r.mode + "/" + std::to_string(r.cutoff) + "] fid=" + fmt_g(r.fid_v) +
               " precision=" + fmt_g(r.precision) +
               (r.has_content ? " content=" + fmt_g(r.content) : ""));
  });

  const double fid_baseline = rows[0].fid_v;
  std::ofstream csv(out + "/sweep_freq.csv", std::ios::trunc);
  csv << "mode,cutoff,fid,fid_ratio,precision,content_match,config_hash\n";
  for (const auto& r : rows)
    csv << r.mode << "," << r.cutoff << "," << fmt_g(r.fid_v) << ","
        << fmt_g(fid_baseline > 0 ? r.fid_v / fid_baseline : 0.0) << "," << fmt_g(r.precision)
        << "," << (r.has_content ? fmt_g(r.content) : "") << "," << config_hash_hex(r.rc)
        << "\n";
  csv.close();

  std::vector<PlotSeries> ratio_series, prec_series;
  for (const auto& mname : modes) {
    PlotSeries rs{mname, {}, {}}, ps{mname, {}, {}};
    for (const auto& r : rows)
      if (r.mode == mname) {
        rs.x.push_back(static_cast<double>(r.cutoff));
        rs.y.push_back(fid_baseline > 0 ? r.fid_v / fid_baseline : 0.0);
        ps.x.push_back(static_cast<double>(r.cutoff));
        ps.y.push_back(r.precision);
      }
    if (!rs.x.empty()) {
      ratio_series.push_back(rs);
      prec_series.push_back(ps);
    }
  }
  write_line_chart(out + "/sweep_freq_fid_ratio.svg", "FID ratio vs cutoff", "cutoff",
                   "fid / fid_baseline", ratio_series);
  write_line_chart(out + "/sweep_freq_precision.svg", "Precision vs cutoff", "cutoff",
                   "precision", prec_series);
  std::cout << "wrote sweep_freq.csv and plots to " << out << "\n";
  return 0;
}

int cmd_sweep_trunc(const std::string& ckpt_path, const std::vector<std::string>& sets,
                    std::optional<uint64_t> seed, std::vector<double> psis,
                    const std::string& out, int workers) {
  if (psis.empty()) throw std::invalid_argument("--psis must list at least one value");
  for (double p : psis)
    if (p < 0.0 || p > 1.0)
      throw std::invalid_argument("psi " + fmt_g(p) + " outside [0,1]");
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig rc = config_from_ckpt(ckpt, sets, seed);
  fs::create_directories(out);

  const RealEval re = prepare_real(rc);
  const std::string hash = config_hash_hex(rc);
  const int64_t n_fake = rc.metrics.n_fake;
  const uint64_t eval_seed = rc.seed;

  struct Row {
    double psi = 0, fid_v = 0, precision = 0;
  };
  std::vector<Row> rows(psis.size());
  run_rows(static_cast<int64_t>(psis.size()), workers, [&](int64_t i) {
    // Chunked sampling with one shared noise stream: at psi = 0 every sample
    // is bitwise identical (pure truncation collapse; styles carry all the
    // remaining variation across the sweep).
    SamplerContext sc = SamplerContext::from_checkpoint(ckpt);
    const double psi = psis[static_cast<size_t>(i)];
    const uint64_t noise_seed = mix_seed(eval_seed, kTagSweepNoise);
    std::vector<Tensor<float>> fakes;
    fakes.reserve(static_cast<size_t>(n_fake));
    int64_t done = 0, chunk_id = 0;
    while (done < n_fake) {
      int64_t b = std::min<int64_t>(64, n_fake - done);
      Tensor<float> batch = sc.sample_batch(
          static_cast<int>(b), psi,
          mix_seed(eval_seed, mix_seed(static_cast<uint64_t>(i), static_cast<uint64_t>(chunk_id))),
          noise_seed);
      for (int64_t j = 0; j < b; ++j) fakes.push_back(nth_image(batch, j));
      done += b;
      ++chunk_id;
    }
    FeatureSet ff = feature_embed(fakes, re.basis);
    Row r;
    r.psi = psi;
    r.fid_v = fid(re.features, ff);
    r.precision = knn_precision(re.features, ff, rc.metrics.knn_k);
    rows[static_cast<size_t>(i)] = r;
    print_line("[trunc psi=" + fmt_g(psi) + "] fid=" + fmt_g(r.fid_v) +
               " precision=" + fmt_g(r.precision));
  });

  double fmin = rows[0].fid_v, fmax = rows[0].fid_v;
  for (const auto& r : rows) {
    fmin = std::min(fmin, r.fid_v);
    fmax = std::max(fmax, r.fid_v);
  }
  const double span = fmax - fmin;
  auto norm = [&](double v) { return span > 0 ? (v - fmin) / span : 0.0; };

  std::ofstream csv(out + "/sweep_trunc.csv", std::ios::trunc);
  csv << "psi,fid,fid_normalized,precision,one_minus_precision,config_hash\n";
  for (const auto& r : rows)
    csv << fmt_g(r.psi) << "," << fmt_g(r.fid_v) << "," << fmt_g(norm(r.fid_v)) << ","
        << fmt_g(r.precision) << "," << fmt_g(1.0 - r.precision) << "," << hash << "\n";
  csv.close();

  PlotSeries sf{"normalized FID", {}, {}}, sp{"1 - precision", {}, {}};
  for (const auto& r : rows) {
    sf.x.push_back(r.psi);
    sf.y.push_back(norm(r.fid_v));
    sp.x.push_back(r.psi);
    sp.y.push_back(1.0 - r.precision);
  }
  write_line_chart(out + "/sweep_trunc.svg", "Truncation tradeoff", "psi", "normalized value",
                   {sf, sp});
  std::cout << "wrote sweep_trunc.csv and sweep_trunc.svg to " << out << "\n";
  return 0;
}

int cmd_sweep_emblocks(const std::string& ckpt_path, const std::vector<std::string>& sets,
                       std::optional<uint64_t> seed, std::vector<int64_t> blocks,
                       const std::string& out, int workers) {
  if (blocks.empty()) throw std::invalid_argument("--blocks must list at least one count");
  for (int64_t n : blocks)
    if (n < 1) throw std::invalid_argument("EM block count must be >= 1, got " + std::to_string(n));
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig base = config_from_ckpt(ckpt, sets, seed);
  fs::create_directories(out);

  const RealEval re = prepare_real(base);
  const uint64_t eval_seed = base.seed;

  struct Row {
    int64_t n = 0, params = 0;
    RunConfig rc;
    double fid_v = 0, precision = 0, content = 0;
    bool has_content = false;
  };
  std::vector<Row> rows;
  for (int64_t n : blocks) {
    Row r;
    r.n = n;
    r.rc = base;
    r.rc.encoder.depths = em_depth_schedule(n);
    r.rc.validate();
    r.params = encoder_param_count(r.rc.encoder);
    rows.push_back(r);
  }

  run_rows(static_cast<int64_t>(rows.size()), workers, [&](int64_t i) {
    Row& r = rows[static_cast<size_t>(i)];
    std::string dir = out + "/row_em" + std::to_string(r.n);
    Checkpoint trained = train_phase2(r.rc, ckpt, dir);
    SamplerContext sc = SamplerContext::from_checkpoint(trained);
    GuidedEval ge = eval_guided(sc, re, r.rc, /*psi=*/1.0, eval_seed, r.rc.metrics.n_fake,
                                /*need_distribution=*/true);
    r.fid_v = ge.fid_v;
    r.precision = ge.precision;
    r.has_content = ge.has_content;
    r.content = ge.match.mean;
    print_line("[emblocks n=" + std::to_string(r.n) + "] params=" + std::to_string(r.params) +
               " fid=" + fmt_g(r.fid_v) + " precision=" + fmt_g(r.precision));
  });

  std::ofstream csv(out + "/sweep_emblocks.csv", std::ios::trunc);
  csv << "n_blocks,param_count,fid,precision,content_match,config_hash\n";
  for (const auto& r : rows)
    csv << r.n << "," << r.params << "," << fmt_g(r.fid_v) << "," << fmt_g(r.precision) << ","
        << (r.has_content ? fmt_g(r.content) : "") << "," << config_hash_hex(r.rc) << "\n";
  csv.close();

  PlotSeries sf{"fid", {}, {}};
  for (const auto& r : rows) {
    sf.x.push_back(static_cast<double>(r.n));
    sf.y.push_back(r.fid_v);
  }
  write_line_chart(out + "/sweep_emblocks_fid.svg", "FID vs EM blocks", "EM blocks", "fid", {sf});
  std::cout << "wrote sweep_emblocks.csv and sweep_emblocks_fid.svg to " << out << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Content-preserving style-based image synthesis"};
  app.require_subcommand(1);

  // Shared option storage.
  std::string config_path, data_dir, out_dir, ckpt_path, guide_path, input_path;
  std::vector<std::string> sets;
  uint64_t seed_val = 0;
  bool seed_given = false;
  int count = 8, workers = 1, image_size = 32;
  int64_t ds_count = 5000, pairs = 500, cutoff = 5;
  double gen_psi = 0.7, eval_psi = 1.0;
  std::vector<int64_t> cutoffs, blocks{1, 2, 3, 4};
  std::vector<double> psis{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<std::string> modes{"low", "high"};
  std::string mode_name = "low";

  auto add_seed = [&](CLI::App* c) {
    c->add_option("--seed", seed_val, "Run seed (reproducible artifacts)")
        ->each([&](const std::string&) { seed_given = true; });
  };
  auto add_sets = [&](CLI::App* c) {
    c->add_option("--set", sets,
                  "Config override path.to.key=value (repeatable; JSON or string value)");
  };

  CLI::App* synth = app.add_subcommand("synth-data", "Write the procedural shape dataset");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--count", ds_count, "Number of images (default 5000)");
  synth->add_option("--image-size", image_size, "Image side length (default 32)");
  add_seed(synth);

  CLI::App* tp1 = app.add_subcommand("train-phase1", "Adversarial training of the synthesis networks");
  tp1->add_option("--out", out_dir, "Output directory")->required();
  tp1->add_option("--config", config_path, "RunConfig JSON file");
  tp1->add_option("--data", data_dir, "Train on a folder of PNG/JPEG images");
  add_sets(tp1);
  add_seed(tp1);

  CLI::App* tp2 = app.add_subcommand("train-phase2", "Self-supervised encoder training");
  tp2->add_option("--ckpt", ckpt_path, "Phase 1 checkpoint")->required();
  tp2->add_option("--out", out_dir, "Output directory")->required();
  add_sets(tp2);
  add_seed(tp2);

  CLI::App* gen = app.add_subcommand("generate", "Sample images (optionally content-guided)");
  gen->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--guide", guide_path, "Guide image (requires a phase 2 checkpoint)");
  gen->add_option("--count", count, "Number of samples (default 8)");
  gen->add_option("--psi", gen_psi, "Truncation factor in [0,1] (default 0.7)");
  bool print_styles = false;
  gen->add_flag("--print-styles", print_styles, "Print the per-site style assignment");
  add_seed(gen);

  CLI::App* freq = app.add_subcommand("freq", "Frequency-domain tools");
  freq->require_subcommand(1);
  CLI::App* analyze = freq->add_subcommand("analyze", "Spectrum and band-filtered refinement");
  analyze->add_option("--input", input_path, "PNG/JPEG image")->required();
  analyze->add_option("--out", out_dir, "Output directory")->required();
  analyze->add_option("--mode", mode_name, "Filter mode: low, high, none (default low)");
  analyze->add_option("--cutoff", cutoff, "Band cutoff (default 5)");

  CLI::App* ev = app.add_subcommand("evaluate", "FID, precision, and content-match report");
  ev->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--psi", eval_psi, "Truncation for sampling (default 1.0)");
  ev->add_option("--pairs", pairs, "Guide/output pairs for content metrics (default 500; 0 = skip)");
  add_sets(ev);
  add_seed(ev);

  CLI::App* sweep = app.add_subcommand("sweep", "Configuration sweeps with CSV + plot output");
  sweep->require_subcommand(1);
  CLI::App* sw_freq = sweep->add_subcommand("freq", "Band-filter sweep (retrains the encoder per row)");
  sw_freq->add_option("--ckpt", ckpt_path, "Phase 1 checkpoint")->required();
  sw_freq->add_option("--out", out_dir, "Output directory")->required();
  sw_freq->add_option("--cutoffs", cutoffs, "Cutoff list")->required()->delimiter(',');
  sw_freq->add_option("--modes", modes, "Mode list (default low,high)")->delimiter(',');
  sw_freq->add_option("--workers", workers, "Parallel rows (default 1)");
  add_sets(sw_freq);
  add_seed(sw_freq);

  CLI::App* sw_trunc = sweep->add_subcommand("trunc", "Truncation tradeoff sweep");
  sw_trunc->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  sw_trunc->add_option("--out", out_dir, "Output directory")->required();
  sw_trunc->add_option("--psis", psis, "Psi grid (default 0,0.25,0.5,0.75,1)")->delimiter(',');
  sw_trunc->add_option("--workers", workers, "Parallel rows (default 1)");
  add_sets(sw_trunc);
  add_seed(sw_trunc);

  CLI::App* sw_em = sweep->add_subcommand("emblocks", "Encoder EM-block-count sweep");
  sw_em->add_option("--ckpt", ckpt_path, "Phase 1 checkpoint")->required();
  sw_em->add_option("--out", out_dir, "Output directory")->required();
  sw_em->add_option("--blocks", blocks, "EM block counts (default 1,2,3,4)")->delimiter(',');
  sw_em->add_option("--workers", workers, "Parallel rows (default 1)");
  add_sets(sw_em);
  add_seed(sw_em);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::optional<uint64_t> seed_opt;
  if (seed_given) seed_opt = seed_val;

  try {
    if (app.got_subcommand(synth))
      return cmd_synth_data(out_dir, ds_count, seed_given ? seed_val : 7, image_size);
    if (app.got_subcommand(tp1))
      return cmd_train_phase1(config_path, sets, seed_opt, data_dir, out_dir);
    if (app.got_subcommand(tp2)) return cmd_train_phase2(ckpt_path, sets, seed_opt, out_dir);
    if (app.got_subcommand(gen))
      return cmd_generate(ckpt_path, guide_path, count, gen_psi, seed_given ? seed_val : 1,
                          out_dir, print_styles);
    if (app.got_subcommand(freq))
      return cmd_freq_analyze(input_path, mode_name, cutoff, out_dir);
    if (app.got_subcommand(ev))
      return cmd_evaluate(ckpt_path, sets, seed_given ? seed_val : 1, eval_psi, pairs, out_dir);
    if (app.got_subcommand(sweep)) {
      if (sweep->got_subcommand(sw_freq))
        return cmd_sweep_freq(ckpt_path, sets, seed_opt, cutoffs, modes, out_dir, workers);
      if (sweep->got_subcommand(sw_trunc))
        return cmd_sweep_trunc(ckpt_path, sets, seed_opt, psis, out_dir, workers);
      if (sweep->got_subcommand(sw_em))
        return cmd_sweep_emblocks(ckpt_path, sets, seed_opt, blocks, out_dir, workers);
    }
    std::cerr << "error [usage]: no subcommand selected\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error [invalid-input]: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    if (msg.rfind("checkpoint:", 0) == 0) {
      std::cerr << "error [invalid-checkpoint]: " << msg << "\n";
      return 3;
    }
    std::cerr << "error [runtime]: " << msg << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [runtime]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cgan
