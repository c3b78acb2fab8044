#pragma once
// Two-phase training orchestration: Phase I adversarial training of the
// mapping/generator/discriminator with R1 and EMA; Phase II self-supervised
// regression of the content encoder onto known style embeddings. Also the
// checkpoint-backed sampling context shared by generation, evaluation, and
// the sweep harness.
#include <string>
#include <vector>

#include "cgan/checkpoint.hpp"
#include "cgan/config.hpp"
#include "cgan/data.hpp"
#include "cgan/encoder.hpp"
#include "cgan/synthesis.hpp"

namespace cgan {

// All four networks, built from one config with a fixed seeding order
// (mapping, generator, discriminator, encoder) so identical configs give
// bitwise-identical initializations.
struct Models {
  SynthesisConfig scfg;
  EncoderConfig ecfg;
  MappingNetwork<float> mapping;
  Generator<float> generator;
  Discriminator<float> discriminator;
  ContentEncoder<float> encoder;

  void init(const RunConfig& rc);

  ParamList<float> g_params();  // map.* then g.*
  ParamList<float> map_params();
  ParamList<float> gen_params();
  ParamList<float> d_params();
  ParamList<float> e_params();
  BufferList<float> e_buffers();
};

// Copies checkpoint arrays into the given parameters (exact name and shape
// match required). `prefix_in_ckpt` lets EMA shadows ("ema." + name) load
// into live parameter slots.
void load_params(ParamList<float>& params, const Checkpoint& ckpt,
                 const std::string& prefix_in_ckpt = "");

// Phase I. Returns the final checkpoint (also written to
// <out_dir>/phase1_final.ckpt; snapshots at cfg.phase1.snapshot_steps go to
// <out_dir>/phase1_step<N>.ckpt). Emits phase1_log.csv and periodic sample
// grids. Aborts with a diagnostic checkpoint on NaN loss.
Checkpoint train_phase1(const RunConfig& rc, const Dataset& data, const std::string& out_dir);

// Phase II. Requires a Phase I (or Phase II) checkpoint; generator, mapping,
// and discriminator bytes pass through unchanged (the freeze contract).
// Training pairs are regenerated from the frozen EMA generator each epoch.
// Emits phase2_log.csv (per-epoch train loss + held-out eval loss).
Checkpoint train_phase2(const RunConfig& rc, const Checkpoint& phase1_ckpt,
                        const std::string& out_dir);

// Sampling/evaluation context over a checkpoint: mapping and generator carry
// the EMA weights, the encoder (when present) carries trained weights and
// runs with running batch-norm statistics.
struct SamplerContext {
  RunConfig rc;
  Models m;
  Tensor<float> w_avg{std::vector<int64_t>{1}};
  bool has_encoder = false;

  static SamplerContext from_checkpoint(const Checkpoint& ckpt);

  // Plain sampling with truncation: w = truncate(map(z), psi) at every site.
  // One forward; noise maps are drawn from noise_seed and shared across the
  // batch, so psi = 0 with a fixed noise_seed collapses the batch to
  // identical images. Per-sample z streams come from z_seed.
  Tensor<float> sample_batch(int n, double psi, uint64_t z_seed, uint64_t noise_seed,
                             StyleAssignment* rec = nullptr);

  // Evaluation sampling: n images generated one by one, each with its own
  // z and noise stream derived from seed.
  std::vector<Tensor<float>> sample_for_eval(int64_t n, double psi, uint64_t seed);

  // Content-guiding vector from a guide image in [-1,1]: q = encode(
  // frequency_refine(guide)) with the checkpoint's filter spec.
  Tensor<float> encode_guide(const Tensor<float>& guide_pm1);

  // Guided generation: q at every coarse site (identical across samples),
  // fresh truncated w2 per sample at fine sites.
  Tensor<float> sample_with_guide(const Tensor<float>& q, int count, double psi, uint64_t seed,
                                  StyleAssignment* rec = nullptr);
};

// The frequency-refined encoder input for a generated image in [-1,1]:
// clamp to [0,1], band-filter, return (1, S/2, S/2) in model precision.
Tensor<float> refine_pm1(const Tensor<float>& img_pm1, const FilterSpec& filter);

// Analytic parameter-count oracle for the encoder (used by the EM-block
// sweep's parameter-count column).
int64_t encoder_param_count(const EncoderConfig& cfg);

}  // namespace cgan
