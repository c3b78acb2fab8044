#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cgan/layers.hpp"

namespace cgan {

struct SynthesisConfig {
  int64_t image_size = 32;
  int64_t d_z = 512;
  int64_t d_style = 512;
  std::map<int64_t, int64_t> channels = {{4, 256}, {8, 256}, {16, 128}, {32, 128}, {64, 64}};
  int64_t style_split_resolution = 8;  // sites at resolution <= split get w1/q
  bool noise_enabled = true;
  int64_t mapping_depth = 8;
  int64_t mbstd_group = 4;

  void validate() const;
  std::vector<int64_t> resolutions() const;  // {4, 8, ..., image_size}
  int64_t ch(int64_t res) const;
  int64_t num_sites() const { return 2 * static_cast<int64_t>(resolutions().size()); }
};

// Which vector each style-injection site received: 0 = content (w1 or q),
// 1 = style (w2). Two sites per resolution block, coarse first.
struct StyleAssignment {
  std::vector<int64_t> site_resolution;
  std::vector<int> source;
};

// Effective weights after modulation + demodulation, as a plain tensor
// utility: w'_{ocjk} = s_c * w_{ocjk}; w''_{ocjk} = w'_{ocjk} / sqrt(sum_{ck} w'^2_{ocjk} + eps).
template <class T>
Tensor<T> mod_demod_weights(const Tensor<T>& base, const std::vector<T>& scales, T eps) {
  if (base.ndim() != 4) throw std::runtime_error("mod_demod_weights: expects 4-d weights");
  int64_t O = base.shape[0], C = base.shape[1], KK = base.shape[2] * base.shape[3];
  if (static_cast<int64_t>(scales.size()) != C)
    throw std::runtime_error("mod_demod_weights: scale count mismatch");
  Tensor<T> out = base;
  for (int64_t o = 0; o < O; ++o)
    for (int64_t c = 0; c < C; ++c) {
      T* p = out.data() + (o * C + c) * KK;
      for (int64_t k = 0; k < KK; ++k) p[k] *= scales[c];
    }
  for (int64_t o = 0; o < O; ++o) {
    T acc = 0;
    const T* p = out.data() + o * C * KK;
    for (int64_t j = 0; j < C * KK; ++j) acc += p[j] * p[j];
    T d = T(1) / std::sqrt(acc + eps);
    T* q = out.data() + o * C * KK;
    for (int64_t j = 0; j < C * KK; ++j) q[j] *= d;
  }
  return out;
}

// Modulated 3x3 (or 1x1) convolution in the folded form: scale the input
// per-channel by the style projection, convolve with the shared weight, then
// demodulate outputs by rsqrt of the summed squared scaled weights + eps.
// Mathematically identical to building per-sample demodulated kernels.
template <class T>
Var<T> modulated_conv(const Var<T>& x, const Conv2dLayer<T>& conv,
                      const LinearLayer<T>& affine, const Var<T>& w_style,
                      T eps = T(1e-8)) {
  using namespace ops;
  Var<T> s = affine.forward(w_style);  // (N, Cin), bias initialized to 1
  Var<T> y = conv2d(mul_channel(x, s), conv.W, Var<T>(), 1, conv.pad, conv.scale);
  Var<T> M = sqsum_kernel(conv.W, conv.scale);          // (Cin, Cout)
  Var<T> d = rsqrt_eps(matmul(mul(s, s), M), eps);      // (N, Cout)
  return mul_channel(y, d);
}

// w' = w_avg + psi * (w - w_avg), with w_avg a constant buffer.
template <class T>
Var<T> truncate(const Var<T>& w, const Tensor<T>& w_avg, T psi) {
  if (w.shape()[1] != w_avg.numel()) throw std::runtime_error("truncate: dimension mismatch");
  Tensor<T> rest({w_avg.numel()});
  for (int64_t i = 0; i < rest.numel(); ++i) rest[i] = (T(1) - psi) * w_avg[i];
  return ops::add_rowvec(ops::mul_scalar(w, psi), Var<T>::constant(std::move(rest)));
}

template <class T>
struct MappingNetwork {
  SynthesisConfig cfg;
  std::vector<LinearLayer<T>> fcs;

  void init(Rng& rng, const SynthesisConfig& c) {
    cfg = c;
    fcs.clear();
    fcs.resize(static_cast<size_t>(cfg.mapping_depth));
    for (int64_t i = 0; i < cfg.mapping_depth; ++i) {
      int64_t in = (i == 0) ? cfg.d_z : cfg.d_style;
      fcs[static_cast<size_t>(i)].init(rng, cfg.d_style, in, /*equalized=*/true);
    }
  }

  // (N, d_z) -> (N, d_style): RMS-normalize then mapping_depth FC + lrelu 0.2.
  Var<T> forward(const Var<T>& z) const {
    if (z.val().ndim() != 2 || z.shape()[1] != cfg.d_z)
      throw std::runtime_error("map_latent: latent dimension mismatch, expected " +
                               std::to_string(cfg.d_z));
    Var<T> x = rms_normalize(z);
    for (auto& fc : fcs) x = ops::leaky_relu(fc.forward(x), T(0.2), T(1));
    return x;
  }

  void collect(ParamList<T>& out) const {
    for (size_t i = 0; i < fcs.size(); ++i) fcs[i].collect(out, "map.fc" + std::to_string(i));
  }
};

template <class T>
struct GenBlock {
  int64_t res = 0;
  LinearLayer<T> affine0, affine1;
  Conv2dLayer<T> conv0, conv1;
  Var<T> noise_strength0, noise_strength1;
  Conv2dLayer<T> torgb;
};

template <class T>
struct Generator {
  SynthesisConfig cfg;
  Var<T> const_input;  // (1, ch(4), 4, 4)
  std::vector<GenBlock<T>> blocks;

  void init(Rng& rng, const SynthesisConfig& c) {
    cfg = c;
    cfg.validate();
    Tensor<T> ci({1, cfg.ch(4), 4, 4});
    rng.fill_normal(ci, 1.0);
    const_input = Var<T>::param(std::move(ci));
    blocks.clear();
    for (int64_t res : cfg.resolutions()) {
      GenBlock<T> b;
      b.res = res;
      int64_t in_ch = (res == 4) ? cfg.ch(4) : cfg.ch(res / 2);
      int64_t out_ch = cfg.ch(res);
      b.affine0.init(rng, in_ch, cfg.d_style, true, T(1));
      b.conv0.init(rng, out_ch, in_ch, 3, 1, 1, true, true);
      b.affine1.init(rng, out_ch, cfg.d_style, true, T(1));
      b.conv1.init(rng, out_ch, out_ch, 3, 1, 1, true, true);
      b.noise_strength0 = Var<T>::param(Tensor<T>({1}));
      b.noise_strength1 = Var<T>::param(Tensor<T>({1}));
      b.torgb.init(rng, 3, out_ch, 1, 1, 0, true, true);
      blocks.push_back(std::move(b));
    }
  }

  // One style vector per injection site (2 per block, coarse-to-fine order).
  // Noise maps are drawn from noise_seed and shared across the batch, so a
  // fixed seed yields bitwise-reproducible synthesis.
  Var<T> forward(const std::vector<Var<T>>& site_styles, uint64_t noise_seed) const {
    if (site_styles.size() != static_cast<size_t>(cfg.num_sites()))
      throw std::runtime_error("synthesize: expected " + std::to_string(cfg.num_sites()) +
                               " style vectors, got " + std::to_string(site_styles.size()));
    int64_t N = site_styles[0].shape()[0];
    for (auto& s : site_styles)
      if (s.shape()[0] != N || s.shape()[1] != cfg.d_style)
        throw std::runtime_error("synthesize: style shape mismatch");
    Rng noise_rng(noise_seed);
    using namespace ops;
    Var<T> x = group_broadcast(const_input, N);
    Var<T> rgb;
    for (size_t i = 0; i < blocks.size(); ++i) {
      const GenBlock<T>& b = blocks[i];
      if (b.res > 4) x = upsample2(x);
      int64_t hw = b.res;
      Var<T> w0 = site_styles[2 * i], w1 = site_styles[2 * i + 1];
      x = modulated_conv(x, b.conv0, b.affine0, w0);
      if (cfg.noise_enabled) {
        Tensor<T> nz({hw, hw});
        noise_rng.fill_normal(nz, 1.0);
        x = add_noise(x, nz, b.noise_strength0);
      }
      x = leaky_relu(add_channel_bias(x, b.conv0.b), T(0.2), T(M_SQRT2));
      x = modulated_conv(x, b.conv1, b.affine1, w1);
      if (cfg.noise_enabled) {
        Tensor<T> nz({hw, hw});
        noise_rng.fill_normal(nz, 1.0);
        x = add_noise(x, nz, b.noise_strength1);
      }
      x = leaky_relu(add_channel_bias(x, b.conv1.b), T(0.2), T(M_SQRT2));
      Var<T> t = b.torgb.forward(x);
      rgb = (i == 0) ? t : add(upsample2(rgb), t);
    }
    return rgb;
  }

  void collect(ParamList<T>& out) const {
    out.push_back({"g.const", const_input});
    for (auto& b : blocks) {
      std::string p = "g.block" + std::to_string(b.res);
      b.affine0.collect(out, p + ".affine0");
      b.conv0.collect(out, p + ".conv0");
      b.affine1.collect(out, p + ".affine1");
      b.conv1.collect(out, p + ".conv1");
      out.push_back({p + ".noise0.strength", b.noise_strength0});
      out.push_back({p + ".noise1.strength", b.noise_strength1});
      b.torgb.collect(out, p + ".torgb");
    }
  }
};

// Per-site assignment honoring the coarse/fine split. w2 may be undefined, in
// which case every site receives w1.
template <class T>
std::vector<Var<T>> assign_styles(const Var<T>& w1, const Var<T>& w2,
                                  const SynthesisConfig& cfg, StyleAssignment* rec = nullptr) {
  std::vector<Var<T>> sites;
  if (rec) {
    rec->site_resolution.clear();
    rec->source.clear();
  }
  for (int64_t res : cfg.resolutions()) {
    for (int rep = 0; rep < 2; ++rep) {
      bool coarse = res <= cfg.style_split_resolution;
      bool use_w1 = coarse || !w2.defined();
      sites.push_back(use_w1 ? w1 : w2);
      if (rec) {
        rec->site_resolution.push_back(res);
        rec->source.push_back(use_w1 ? 0 : 1);
      }
    }
  }
  return sites;
}

template <class T>
struct DiscBlock {
  int64_t res = 0;
  Conv2dLayer<T> conv0, conv1, skip;
};

template <class T>
struct Discriminator {
  SynthesisConfig cfg;
  Conv2dLayer<T> from_rgb;
  std::vector<DiscBlock<T>> blocks;  // image_size down to 8 (each halves)
  Conv2dLayer<T> final_conv;
  LinearLayer<T> fc0, fc1;

  void init(Rng& rng, const SynthesisConfig& c) {
    cfg = c;
    cfg.validate();
    from_rgb.init(rng, cfg.ch(cfg.image_size), 3, 1, 1, 0, true, true);
    blocks.clear();
    for (int64_t res = cfg.image_size; res >= 8; res /= 2) {
      DiscBlock<T> b;
      b.res = res;
      int64_t in_ch = cfg.ch(res), out_ch = cfg.ch(res / 2);
      b.conv0.init(rng, in_ch, in_ch, 3, 1, 1, true, true);
      b.conv1.init(rng, out_ch, in_ch, 3, 2, 1, true, true);
      b.skip.init(rng, out_ch, in_ch, 1, 1, 0, true, false);
      blocks.push_back(std::move(b));
    }
    final_conv.init(rng, cfg.ch(4), cfg.ch(4) + 1, 3, 1, 1, true, true);
    fc0.init(rng, cfg.ch(4), cfg.ch(4) * 16, true);
    fc1.init(rng, 1, cfg.ch(4), true);
  }

  Var<T> forward(const Var<T>& img) const {
    check_input(img);
    using namespace ops;
    const T g2 = T(M_SQRT2), inv_r2 = T(1) / T(M_SQRT2);
    Var<T> x = leaky_relu(from_rgb.forward(img), T(0.2), g2);
    for (auto& b : blocks) {
      Var<T> t = leaky_relu(b.conv0.forward(x), T(0.2), g2);
      t = leaky_relu(b.conv1.forward(t), T(0.2), g2);
      Var<T> s = b.skip.forward(avgpool2(x));
      x = mul_scalar(add(t, s), inv_r2);
    }
    x = minibatch_stddev(x, cfg.mbstd_group);
    x = leaky_relu(final_conv.forward(x), T(0.2), g2);
    int64_t N = x.shape()[0];
    x = reshape(x, {N, cfg.ch(4) * 16});
    x = leaky_relu(fc0.forward(x), T(0.2), g2);
    x = fc1.forward(x);
    return reshape(x, {N});
  }

  // Dual-number forward used by the R1 penalty: carries (value, tangent)
  // so that the tangent output is <grad_input D, tangent_input>.
  Dual<T> forward_dual(const Dual<T>& img) const {
    check_input(img.v);
    using namespace ops;
    const T g2 = T(M_SQRT2), inv_r2 = T(1) / T(M_SQRT2);
    Dual<T> x = dual_leaky_relu(from_rgb.forward_dual(img), T(0.2), g2);
    for (auto& b : blocks) {
      Dual<T> t = dual_leaky_relu(b.conv0.forward_dual(x), T(0.2), g2);
      t = dual_leaky_relu(b.conv1.forward_dual(t), T(0.2), g2);
      Dual<T> s = b.skip.forward_dual(dual_avgpool2(x));
      x = dual_mul_scalar(dual_add(t, s), inv_r2);
    }
    x = minibatch_stddev_dual(x, cfg.mbstd_group);
    x = dual_leaky_relu(final_conv.forward_dual(x), T(0.2), g2);
    int64_t N = x.v.shape()[0];
    x = dual_reshape(x, {N, cfg.ch(4) * 16});
    x = dual_leaky_relu(fc0.forward_dual(x), T(0.2), g2);
    x = fc1.forward_dual(x);
    return dual_reshape(x, {N});
  }

  void collect(ParamList<T>& out) const {
    from_rgb.collect(out, "d.from_rgb");
    for (auto& b : blocks) {
      std::string p = "d.block" + std::to_string(b.res);
      b.conv0.collect(out, p + ".conv0");
      b.conv1.collect(out, p + ".conv1");
      b.skip.collect(out, p + ".skip");
    }
    final_conv.collect(out, "d.final_conv");
    fc0.collect(out, "d.fc0");
    fc1.collect(out, "d.fc1");
  }

 private:
  void check_input(const Var<T>& img) const {
    if (img.val().ndim() != 4 || img.shape()[1] != 3 || img.shape()[2] != cfg.image_size ||
        img.shape()[3] != cfg.image_size)
      throw std::runtime_error("discriminate: input shape mismatch, expected (N,3," +
                               std::to_string(cfg.image_size) + "," +
                               std::to_string(cfg.image_size) + ") got " +
                               shape_str(img.val().shape));
  }
};

}  // namespace cgan
