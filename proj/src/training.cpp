#include "cgan/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgan/adam.hpp"
#include "cgan/image_io.hpp"
#include "cgan/losses.hpp"

namespace fs = std::filesystem;

namespace cgan {

namespace {

// Stream tags keep the independent RNG roles decorrelated under one run seed.
constexpr uint64_t kTagInitMapping = 0x6D617000ull;
constexpr uint64_t kTagInitGenerator = 0x67656E00ull;
constexpr uint64_t kTagInitDiscriminator = 0x64697300ull;
constexpr uint64_t kTagInitEncoder = 0x656E6300ull;
constexpr uint64_t kTagPhase1 = 0x70683100ull;
constexpr uint64_t kTagPhase2 = 0x70683200ull;
constexpr uint64_t kTagPhase2Eval = 0x70656500ull;
constexpr uint64_t kTagGridZ = 0x67726964ull;
constexpr uint64_t kTagGridNoise = 0x676E6F69ull;
constexpr uint64_t kTagGuideZ = 0x67756964ull;
constexpr uint64_t kTagGuideNoise = 0x676E6F32ull;

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.8g", v);
  return buf;
}

void shuffle_indices(std::vector<int64_t>& idx, Rng& rng) {
  for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i > 0; --i) {
    int64_t j = rng.uniform_int(0, i);
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
}

double fraction_above(const Tensor<float>& t, float thresh) {
  if (t.numel() == 0) return 0.0;
  int64_t c = 0;
  for (int64_t i = 0; i < t.numel(); ++i)
    if (t[i] > thresh) ++c;
  return static_cast<double>(c) / static_cast<double>(t.numel());
}

void set_requires(ParamList<float>& params, bool on) {
  for (auto& np : params) np.p.set_requires_grad(on);
}

// (count, d) rows copied out of a 2-d tensor.
Tensor<float> take_row(const Tensor<float>& m, int64_t row) {
  int64_t d = m.shape[1];
  Tensor<float> out({1, d});
  const float* src = m.data() + row * d;
  std::copy(src, src + d, out.data());
  return out;
}

// (N,3,S,S) batch -> the i-th (3,S,S) image.
Tensor<float> take_image(const Tensor<float>& batch, int64_t i) {
  int64_t c = batch.shape[1], h = batch.shape[2], w = batch.shape[3];
  Tensor<float> out({c, h, w});
  const float* src = batch.data() + i * c * h * w;
  std::copy(src, src + c * h * w, out.data());
  return out;
}

struct CsvLog {
  std::ofstream f;
  CsvLog(const std::string& path, const std::string& header) : f(path, std::ios::trunc) {
    if (!f) throw std::runtime_error("cannot open log file: " + path);
    f << header << "\n";
  }
  void row(const std::string& line) {
    f << line << "\n";
    f.flush();
  }
};

}  // namespace

void Models::init(const RunConfig& rc) {
  scfg = rc.synthesis;
  ecfg = rc.encoder;
  Rng master(rc.seed);
  Rng rm = master.child(kTagInitMapping);
  Rng rg = master.child(kTagInitGenerator);
  Rng rd = master.child(kTagInitDiscriminator);
  Rng re = master.child(kTagInitEncoder);
  mapping.init(rm, scfg);
  generator.init(rg, scfg);
  discriminator.init(rd, scfg);
  encoder.init(re, ecfg);
}

ParamList<float> Models::g_params() {
  ParamList<float> out;
  mapping.collect(out);
  generator.collect(out);
  return out;
}
ParamList<float> Models::map_params() {
  ParamList<float> out;
  mapping.collect(out);
  return out;
}
ParamList<float> Models::gen_params() {
  ParamList<float> out;
  generator.collect(out);
  return out;
}
ParamList<float> Models::d_params() {
  ParamList<float> out;
  discriminator.collect(out);
  return out;
}
ParamList<float> Models::e_params() {
  ParamList<float> out;
  encoder.collect(out);
  return out;
}
BufferList<float> Models::e_buffers() {
  BufferList<float> out;
  encoder.collect_buffers(out);
  return out;
}

void load_params(ParamList<float>& params, const Checkpoint& ckpt,
                 const std::string& prefix_in_ckpt) {
  for (auto& np : params) {
    const std::string name = prefix_in_ckpt + np.name;
    const Tensor<float>& src = ckpt.require(name);
    if (!src.same_shape(np.p.val()))
      throw std::runtime_error("checkpoint: array " + name + " has shape " + shape_str(src.shape) +
                               ", model expects " + shape_str(np.p.val().shape));
    np.p.val() = src;
  }
}

Tensor<float> refine_pm1(const Tensor<float>& img_pm1, const FilterSpec& filter) {
  if (img_pm1.ndim() != 3 || img_pm1.shape[0] != 3)
    throw std::runtime_error("refine_pm1: expected (3,H,W), got " + shape_str(img_pm1.shape));
  Tensor<double> rgb(img_pm1.shape);
  for (int64_t i = 0; i < rgb.numel(); ++i) {
    double v = (static_cast<double>(img_pm1[i]) + 1.0) * 0.5;
    rgb[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  }
  Tensor<double> xf = frequency_refine(rgb, filter);
  Tensor<float> out({1, xf.shape[0], xf.shape[1]});
  for (int64_t i = 0; i < xf.numel(); ++i) out[i] = static_cast<float>(xf[i]);
  return out;
}

int64_t encoder_param_count(const EncoderConfig& cfg) {
  int64_t n = 0;
  n += cfg.depths[0] * 1 * 3 * 3 + cfg.depths[0];  // stem conv + bias
  int64_t in_ch = cfg.depths[0];
  for (int64_t d : cfg.depths) {
    n += d * in_ch * 3 * 3;      // cmb.conv1 (no bias)
    n += 2 * d;                  // bn1 gamma+beta
    n += d * d * 3 * 3;          // cmb.conv2 (no bias)
    n += 2 * d;                  // bn2
    n += d * in_ch * 1 * 1 + d;  // residual 1x1 + bias
    n += (2 * cfg.d_style) * d + 2 * cfg.d_style;  // pb.fc
    in_ch = d;
  }
  n += cfg.d_style;  // cfm.p0
  n += static_cast<int64_t>(cfg.depths.size()) * (cfg.d_style * cfg.d_style + cfg.d_style);
  return n;
}

// ---------------------------------------------------------------------------
// Phase I
// ---------------------------------------------------------------------------

namespace {

Checkpoint assemble_phase1_ckpt(const RunConfig& rc, int64_t step, const Rng& rng,
                                const Tensor<float>& w_avg, int64_t w_avg_count,
                                ParamList<float>& g_live, ParamList<float>& d_live,
                                const EmaState<float>& ema) {
  Checkpoint c;
  c.schema_version = 1;
  c.phase = "phase1";
  c.step = step;
  c.config = config_to_json(rc);
  c.rng_state = rng.state();
  c.w_avg.assign(w_avg.data(), w_avg.data() + w_avg.numel());
  c.w_avg_count = w_avg_count;
  for (auto& np : g_live) c.put(np.name, np.p.val());
  for (auto& np : d_live) c.put(np.name, np.p.val());
  for (size_t i = 0; i < ema.names.size(); ++i) c.put("ema." + ema.names[i], ema.shadow[i]);
  return c;
}

// Renders a 4x4 grid of EMA samples (fixed z stream, psi = 0.7).
void write_sample_grid(const std::string& path, const RunConfig& rc, const EmaState<float>& ema,
                       const Tensor<float>& w_avg) {
  Models ms;
  ms.init(rc);
  ParamList<float> g = ms.g_params();
  ema.apply_to(g);
  NoGradGuard ng;
  Rng zr(mix_seed(rc.seed, kTagGridZ));
  Tensor<float> z({16, rc.synthesis.d_z});
  zr.fill_normal(z);
  Var<float> w = ms.mapping.forward(Var<float>::constant(std::move(z)));
  w = truncate(w, w_avg, 0.7f);
  auto sites = assign_styles(w, Var<float>(), rc.synthesis);
  Tensor<float> imgs = ms.generator.forward(sites, mix_seed(rc.seed, kTagGridNoise)).val();
  write_png(path, make_grid(imgs, 4, 4));
}

}  // namespace

Checkpoint train_phase1(const RunConfig& rc, const Dataset& data, const std::string& out_dir) {
  rc.validate();
  const int64_t S = rc.synthesis.image_size;
  if (data.images.empty()) throw std::invalid_argument("train_phase1: dataset is empty");
  for (const auto& img : data.images)
    if (img.ndim() != 3 || img.shape[0] != 3 || img.shape[1] != S || img.shape[2] != S)
      throw std::invalid_argument("train_phase1: dataset image shape " + shape_str(img.shape) +
                                  " does not match configured image size " + std::to_string(S));
  fs::create_directories(out_dir);

  const Phase1Config& p1 = rc.phase1;
  const int B = p1.batch;
  const int64_t d_z = rc.synthesis.d_z;
  const int64_t d_style = rc.synthesis.d_style;

  Models m;
  m.init(rc);
  ParamList<float> g_live = m.g_params();
  ParamList<float> d_live = m.d_params();

  EmaState<float> ema;
  ema.init(g_live, static_cast<float>(p1.ema_decay));

  Adam<float> g_opt, d_opt;
  g_opt.init({{m.map_params(), static_cast<float>(p1.mapping_lr_factor)}, {m.gen_params(), 1.0f}},
             static_cast<float>(p1.lr), static_cast<float>(p1.beta1),
             static_cast<float>(p1.beta2));
  d_opt.init({{d_live, 1.0f}}, static_cast<float>(p1.lr), static_cast<float>(p1.beta1),
             static_cast<float>(p1.beta2));

  Rng rng(mix_seed(rc.seed, kTagPhase1));

  Tensor<float> w_avg({d_style});
  int64_t w_avg_count = 0;

  // Epoch-shuffled data order; the cursor starts exhausted to force the first
  // shuffle through the training stream (keeps runs a pure function of seed).
  const int64_t n_data = static_cast<int64_t>(data.images.size());
  std::vector<int64_t> perm(static_cast<size_t>(n_data));
  for (int64_t i = 0; i < n_data; ++i) perm[static_cast<size_t>(i)] = i;
  int64_t cursor = n_data;
  auto next_real = [&]() {
    Tensor<float> batch({B, 3, S, S});
    const int64_t stride = 3 * S * S;
    for (int i = 0; i < B; ++i) {
      if (cursor >= n_data) {
        shuffle_indices(perm, rng);
        cursor = 0;
      }
      const Tensor<float>& img = data.images[static_cast<size_t>(perm[static_cast<size_t>(cursor++)])];
      std::copy(img.data(), img.data() + stride, batch.data() + i * stride);
    }
    return batch;
  };

  auto sample_w = [&](int n) {
    Tensor<float> z({n, d_z});
    rng.fill_normal(z);
    return m.mapping.forward(Var<float>::constant(std::move(z)));
  };

  auto diagnostic_abort = [&](int64_t step, const std::string& what) {
    const std::string path = out_dir + "/phase1_nan_diagnostic.ckpt";
    Checkpoint c = assemble_phase1_ckpt(rc, step, rng, w_avg, w_avg_count, g_live, d_live, ema);
    save_checkpoint(c, path);
    throw std::runtime_error("train_phase1: non-finite " + what + " at step " +
                             std::to_string(step) + "; diagnostic checkpoint written to " + path);
  };

  CsvLog log(out_dir + "/phase1_log.csv",
             "step,d_loss,g_loss,r1_penalty,real_acc,fake_acc,real_acc_ema,fake_acc_ema");
  double racc_ema = 0.5, facc_ema = 0.5;
  constexpr double kAccSmooth = 0.98;

  const bool use_r1 = p1.r1_lambda > 0.0;
  const float lambda_eff = static_cast<float>(p1.r1_lambda * p1.lazy_r1_interval);

  for (int64_t step = 1; step <= p1.total_steps; ++step) {
    // ---- Discriminator step: fakes are detached, R1 gradient is exact.
    double d_loss, racc, facc;
    float r1_val = 0.0f;
    {
      d_opt.zero_grad();
      Tensor<float> real = next_real();
      Tensor<float> fake;
      {
        NoGradGuard ng;
        Var<float> w1 = sample_w(B);
        Var<float> w2;
        if (rng.uniform() < p1.mix_prob) w2 = sample_w(B);
        auto sites = assign_styles(w1, w2, rc.synthesis);
        fake = m.generator.forward(sites, rng.raw()).val();
      }
      Var<float> real_logits = m.discriminator.forward(Var<float>::constant(real));
      Var<float> fake_logits = m.discriminator.forward(Var<float>::constant(std::move(fake)));
      Var<float> adv = discriminator_adversarial_loss(real_logits, fake_logits);
      backward(adv);
      const bool r1_now = use_r1 && ((step - 1) % p1.lazy_r1_interval == 0);
      if (r1_now) r1_val = r1_penalty_and_backward(m.discriminator, d_live, real, lambda_eff);
      d_opt.step();
      d_loss = static_cast<double>(adv.val()[0]) +
               (r1_now ? static_cast<double>(lambda_eff) * r1_val : 0.0);
      racc = fraction_above(real_logits.val(), 0.0f);
      facc = 1.0 - fraction_above(fake_logits.val(), 0.0f);
    }
    if (!std::isfinite(d_loss)) diagnostic_abort(step, "discriminator loss");

    // ---- Generator step: discriminator frozen, fresh latents.
    double g_loss;
    {
      g_opt.zero_grad();
      set_requires(d_live, false);
      Var<float> w1 = sample_w(B);
      Var<float> w2;
      if (rng.uniform() < p1.mix_prob) w2 = sample_w(B);
      auto sites = assign_styles(w1, w2, rc.synthesis);
      Var<float> img = m.generator.forward(sites, rng.raw());
      Var<float> gl = generator_loss(m.discriminator.forward(img));
      backward(gl);
      set_requires(d_live, true);
      g_opt.step();
      g_loss = static_cast<double>(gl.val()[0]);

      const Tensor<float>& w1v = w1.val();
      const float k = 1.0f - static_cast<float>(p1.w_avg_decay);
      for (int64_t j = 0; j < d_style; ++j) {
        float mean_j = 0.0f;
        for (int64_t i = 0; i < w1v.shape[0]; ++i) mean_j += w1v[i * d_style + j];
        mean_j /= static_cast<float>(w1v.shape[0]);
        w_avg[j] = static_cast<float>(p1.w_avg_decay) * w_avg[j] + k * mean_j;
      }
      ++w_avg_count;
    }
    if (!std::isfinite(g_loss)) diagnostic_abort(step, "generator loss");

    if (step % p1.ema_interval == 0) ema.update(g_live);

    racc_ema = kAccSmooth * racc_ema + (1.0 - kAccSmooth) * racc;
    facc_ema = kAccSmooth * facc_ema + (1.0 - kAccSmooth) * facc;

    if (step == 1 || step == p1.total_steps || step % p1.log_interval == 0)
      log.row(std::to_string(step) + "," + fmt_g(d_loss) + "," + fmt_g(g_loss) + "," +
              fmt_g(r1_val) + "," + fmt_g(racc) + "," + fmt_g(facc) + "," + fmt_g(racc_ema) +
              "," + fmt_g(facc_ema));

    for (int64_t snap : p1.snapshot_steps)
      if (snap == step) {
        Checkpoint c =
            assemble_phase1_ckpt(rc, step, rng, w_avg, w_avg_count, g_live, d_live, ema);
        save_checkpoint(c, out_dir + "/phase1_step" + std::to_string(step) + ".ckpt");
        write_sample_grid(out_dir + "/samples_step" + std::to_string(step) + ".png", rc, ema,
                          w_avg);
      }
  }

  Checkpoint final_ckpt =
      assemble_phase1_ckpt(rc, p1.total_steps, rng, w_avg, w_avg_count, g_live, d_live, ema);
  save_checkpoint(final_ckpt, out_dir + "/phase1_final.ckpt");
  if (p1.total_steps > 0) write_sample_grid(out_dir + "/samples_final.png", rc, ema, w_avg);
  return final_ckpt;
}

// ---------------------------------------------------------------------------
// Phase II
// ---------------------------------------------------------------------------

namespace {

struct PairPool {
  Tensor<float> xf;  // (n, 1, S/2, S/2)
  Tensor<float> w1;  // (n, d_style)
};

// Pairs from the frozen EMA synthesis path: every pair is mixed (content w1
// at coarse sites, style w2 at fine sites) so the encoder sees exactly the
// inputs guided generation will feed it.
PairPool generate_pairs(Models& ms, const RunConfig& rc, int64_t n, Rng& rng) {
  NoGradGuard ng;
  const int64_t d_z = rc.synthesis.d_z;
  const int64_t d_style = rc.synthesis.d_style;
  const int64_t half = rc.synthesis.image_size / 2;
  PairPool pool{Tensor<float>({n, 1, half, half}), Tensor<float>({n, d_style})};

  Tensor<float> z1({n, d_z}), z2({n, d_z});
  rng.fill_normal(z1);
  rng.fill_normal(z2);
  Tensor<float> w1 = ms.mapping.forward(Var<float>::constant(std::move(z1))).val();
  Tensor<float> w2 = ms.mapping.forward(Var<float>::constant(std::move(z2))).val();

  for (int64_t i = 0; i < n; ++i) {
    Tensor<float> w1i = take_row(w1, i);
    Tensor<float> w2i = take_row(w2, i);
    auto sites = assign_styles(Var<float>::constant(w1i), Var<float>::constant(std::move(w2i)),
                               rc.synthesis);
    Tensor<float> img = ms.generator.forward(sites, rng.raw()).val();
    Tensor<float> xf = refine_pm1(take_image(img, 0), rc.filter);
    std::copy(xf.data(), xf.data() + xf.numel(), pool.xf.data() + i * half * half);
    std::copy(w1i.data(), w1i.data() + d_style, pool.w1.data() + i * d_style);
  }
  return pool;
}

Tensor<float> gather_rows(const Tensor<float>& src, const std::vector<int64_t>& order,
                          int64_t begin, int64_t count) {
  std::vector<int64_t> shape = src.shape;
  shape[0] = count;
  int64_t stride = src.numel() / src.shape[0];
  Tensor<float> out(shape);
  for (int64_t i = 0; i < count; ++i) {
    const float* s = src.data() + order[static_cast<size_t>(begin + i)] * stride;
    std::copy(s, s + stride, out.data() + i * stride);
  }
  return out;
}

double eval_encoder_loss(ContentEncoder<float>& enc, const PairPool& pool, int batch) {
  NoGradGuard ng;
  const int64_t n = pool.xf.shape[0];
  const int64_t stride_x = pool.xf.numel() / n;
  const int64_t d = pool.w1.shape[1];
  double total = 0.0;
  int64_t done = 0;
  while (done < n) {
    int64_t b = std::min<int64_t>(batch, n - done);
    Tensor<float> xb({b, 1, pool.xf.shape[2], pool.xf.shape[3]});
    std::copy(pool.xf.data() + done * stride_x, pool.xf.data() + (done + b) * stride_x,
              xb.data());
    Tensor<float> wb({b, d});
    std::copy(pool.w1.data() + done * d, pool.w1.data() + (done + b) * d, wb.data());
    Var<float> q = enc.encode(Var<float>::constant(std::move(xb)), /*training=*/false);
    Var<float> l = encoder_loss(q, Var<float>::constant(std::move(wb)));
    total += static_cast<double>(l.val()[0]) * static_cast<double>(b);
    done += b;
  }
  return total / static_cast<double>(n);
}

}  // namespace

Checkpoint train_phase2(const RunConfig& rc, const Checkpoint& phase1_ckpt,
                        const std::string& out_dir) {
  rc.validate();
  if (phase1_ckpt.phase != "phase1" && phase1_ckpt.phase != "phase2")
    throw std::runtime_error("checkpoint: phase '" + phase1_ckpt.phase +
                             "' is not a trained synthesis checkpoint");
  fs::create_directories(out_dir);

  const Phase2Config& p2 = rc.phase2;
  const int64_t d_style = rc.synthesis.d_style;

  // Live weights (pass through unchanged) and a separate EMA copy that
  // generates the training pairs.
  Models m;
  m.init(rc);
  ParamList<float> g_live = m.g_params();
  ParamList<float> d_live = m.d_params();
  ParamList<float> e_live = m.e_params();
  load_params(g_live, phase1_ckpt);
  load_params(d_live, phase1_ckpt);

  Models ms;
  ms.init(rc);
  ParamList<float> ms_g = ms.g_params();
  load_params(ms_g, phase1_ckpt, "ema.");

  if (static_cast<int64_t>(phase1_ckpt.w_avg.size()) != d_style)
    throw std::runtime_error("checkpoint: w_avg has dimension " +
                             std::to_string(phase1_ckpt.w_avg.size()) + ", expected " +
                             std::to_string(d_style));

  Adam<float> e_opt;
  e_opt.init({{e_live, 1.0f}}, static_cast<float>(p2.lr), static_cast<float>(p2.beta1),
             static_cast<float>(p2.beta2));

  Rng rng(mix_seed(rc.seed, kTagPhase2));
  Rng eval_rng(mix_seed(rc.seed, kTagPhase2Eval));

  // Held-out pool: fixed across the run so initial/final losses are
  // measured on identical inputs.
  const int64_t n_eval = 256;
  PairPool eval_pool = generate_pairs(ms, rc, n_eval, eval_rng);
  const double initial_eval = eval_encoder_loss(m.encoder, eval_pool, p2.batch);

  CsvLog log(out_dir + "/phase2_log.csv", "epoch,train_loss,eval_loss");
  log.row("0,," + fmt_g(initial_eval));

  double final_eval = initial_eval;
  for (int64_t epoch = 1; epoch <= p2.epochs; ++epoch) {
    PairPool pool = generate_pairs(ms, rc, p2.pairs_per_epoch, rng);
    std::vector<int64_t> order(static_cast<size_t>(p2.pairs_per_epoch));
    for (int64_t i = 0; i < p2.pairs_per_epoch; ++i) order[static_cast<size_t>(i)] = i;
    shuffle_indices(order, rng);

    const int64_t n_batches = p2.pairs_per_epoch / p2.batch;  // full batches only
    if (n_batches == 0)
      throw std::invalid_argument("train_phase2: pairs_per_epoch smaller than batch size");
    double train_total = 0.0;
    for (int64_t b = 0; b < n_batches; ++b) {
      e_opt.zero_grad();
      Tensor<float> xb = gather_rows(pool.xf, order, b * p2.batch, p2.batch);
      Tensor<float> wb = gather_rows(pool.w1, order, b * p2.batch, p2.batch);
      Var<float> q = m.encoder.encode(Var<float>::constant(std::move(xb)), /*training=*/true);
      Var<float> loss = encoder_loss(q, Var<float>::constant(std::move(wb)));
      backward(loss);
      e_opt.step();
      double lv = static_cast<double>(loss.val()[0]);
      if (!std::isfinite(lv))
        throw std::runtime_error("train_phase2: non-finite loss in epoch " +
                                 std::to_string(epoch));
      train_total += lv;
    }
    const double train_mean = train_total / static_cast<double>(n_batches);
    final_eval = eval_encoder_loss(m.encoder, eval_pool, p2.batch);
    log.row(std::to_string(epoch) + "," + fmt_g(train_mean) + "," + fmt_g(final_eval));
  }

  {
    std::ofstream summary(out_dir + "/phase2_summary.txt", std::ios::trunc);
    summary << "initial_eval_loss = " << fmt_g(initial_eval) << "\n"
            << "final_eval_loss = " << fmt_g(final_eval) << "\n"
            << "ratio = " << fmt_g(initial_eval > 0 ? final_eval / initial_eval : 0.0) << "\n";
  }

  Checkpoint out;
  out.schema_version = 1;
  out.phase = "phase2";
  out.step = phase1_ckpt.step;
  out.config = config_to_json(rc);
  out.rng_state = rng.state();
  out.w_avg = phase1_ckpt.w_avg;
  out.w_avg_count = phase1_ckpt.w_avg_count;
  out.arrays = phase1_ckpt.arrays;  // frozen synthesis bytes pass through verbatim
  for (auto& np : e_live) out.put(np.name, np.p.val());
  BufferList<float> bufs = m.e_buffers();
  for (auto& nb : bufs) out.put(nb.name, *nb.t);
  save_checkpoint(out, out_dir + "/phase2_final.ckpt");
  return out;
}

// ---------------------------------------------------------------------------
// Sampling context
// ---------------------------------------------------------------------------

SamplerContext SamplerContext::from_checkpoint(const Checkpoint& ckpt) {
  SamplerContext s;
  s.rc = config_from_json(ckpt.config);
  s.rc.validate();
  s.m.init(s.rc);

  ParamList<float> g = s.m.g_params();
  load_params(g, ckpt, "ema.");  // sampling path uses the averaged weights
  ParamList<float> d = s.m.d_params();
  load_params(d, ckpt);

  s.has_encoder = ckpt.find("e.cfm.p0") != nullptr;
  if (s.has_encoder) {
    ParamList<float> e = s.m.e_params();
    load_params(e, ckpt);
    BufferList<float> bufs = s.m.e_buffers();
    for (auto& nb : bufs) {
      const Tensor<float>& src = ckpt.require(nb.name);
      if (!src.same_shape(*nb.t))
        throw std::runtime_error("checkpoint: buffer " + nb.name + " has shape " +
                                 shape_str(src.shape) + ", model expects " +
                                 shape_str(nb.t->shape));
      *nb.t = src;
    }
  }

  const int64_t d_style = s.rc.synthesis.d_style;
  if (static_cast<int64_t>(ckpt.w_avg.size()) != d_style)
    throw std::runtime_error("checkpoint w_avg has dimension " +
                             std::to_string(ckpt.w_avg.size()) + ", expected " +
                             std::to_string(d_style));
  s.w_avg = Tensor<float>({d_style});
  std::copy(ckpt.w_avg.begin(), ckpt.w_avg.end(), s.w_avg.data());
  return s;
}

Tensor<float> SamplerContext::sample_batch(int n, double psi, uint64_t z_seed,
                                           uint64_t noise_seed, StyleAssignment* rec) {
  NoGradGuard ng;
  Rng zr(z_seed);
  Tensor<float> z({n, rc.synthesis.d_z});
  zr.fill_normal(z);
  Var<float> w = m.mapping.forward(Var<float>::constant(std::move(z)));
  if (psi != 1.0) w = truncate(w, w_avg, static_cast<float>(psi));
  auto sites = assign_styles(w, Var<float>(), rc.synthesis, rec);
  return m.generator.forward(sites, noise_seed).val();
}

std::vector<Tensor<float>> SamplerContext::sample_for_eval(int64_t n, double psi, uint64_t seed) {
  std::vector<Tensor<float>> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Tensor<float> img = sample_batch(1, psi, mix_seed(seed, static_cast<uint64_t>(2 * i)),
                                     mix_seed(seed, static_cast<uint64_t>(2 * i + 1)));
    out.push_back(take_image(img, 0));
  }
  return out;
}

Tensor<float> SamplerContext::encode_guide(const Tensor<float>& guide_pm1) {
  if (!has_encoder)
    throw std::runtime_error("checkpoint: no trained encoder present (run train-phase2 first)");
  Tensor<float> xf = refine_pm1(guide_pm1, rc.filter);
  Tensor<float> xb({1, 1, xf.shape[1], xf.shape[2]});
  std::copy(xf.data(), xf.data() + xf.numel(), xb.data());
  NoGradGuard ng;
  return m.encoder.encode(Var<float>::constant(std::move(xb)), /*training=*/false).val();
}

Tensor<float> SamplerContext::sample_with_guide(const Tensor<float>& q, int count, double psi,
                                                uint64_t seed, StyleAssignment* rec) {
  if (q.ndim() != 2 || q.shape[0] != 1 || q.shape[1] != rc.synthesis.d_style)
    throw std::runtime_error("sample_with_guide: q must be (1, d_style)");
  NoGradGuard ng;
  const int64_t d_style = rc.synthesis.d_style;
  Tensor<float> qb({count, d_style});
  for (int i = 0; i < count; ++i)
    std::copy(q.data(), q.data() + d_style, qb.data() + static_cast<int64_t>(i) * d_style);

  Rng zr(mix_seed(seed, kTagGuideZ));
  Tensor<float> z({count, rc.synthesis.d_z});
  zr.fill_normal(z);
  Var<float> w2 = m.mapping.forward(Var<float>::constant(std::move(z)));
  if (psi != 1.0) w2 = truncate(w2, w_avg, static_cast<float>(psi));
  auto sites = assign_styles(Var<float>::constant(std::move(qb)), w2, rc.synthesis, rec);
  return m.generator.forward(sites, mix_seed(seed, kTagGuideNoise)).val();
}

}  // namespace cgan
