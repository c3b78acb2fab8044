#pragma once

#include <string>
#include <vector>

#include "cgan/layers.hpp"

namespace cgan {

struct EncoderConfig {
  std::vector<int64_t> depths = {128, 256, 512, 512};
  int64_t d_style = 512;
  int64_t input_size = 16;  // spatial side of x_f = image_size / 2

  void validate() const;
  int64_t num_ems() const { return static_cast<int64_t>(depths.size()); }
};

// Depth schedule for a given EM count: start at 128 and double, capped at 512.
std::vector<int64_t> em_depth_schedule(int64_t n);

// Global average pool (N,C,H,W) -> (N,C), composed from primitives.
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Var<T> r = ops::reshape(x, {N * C, 1, H, W});
  return ops::reshape(ops::mean_chw(r), {N, C});
}

// Feature transform (elementwise affine): q = s_a ⊙ p + s_b where the
// distilled vector s = [s_a | s_b] has dimension 2*d_style.
template <class T>
Var<T> ft_transform(const Var<T>& p, const Var<T>& s) {
  int64_t d = p.shape()[1];
  if (s.shape()[1] != 2 * d)
    throw std::runtime_error("ft_transform: distilled vector must have dimension 2*d_style");
  if (s.shape()[0] != p.shape()[0]) throw std::runtime_error("ft_transform: batch mismatch");
  Var<T> sa = ops::slice_cols(s, 0, d);
  Var<T> sb = ops::slice_cols(s, d, d);
  return ops::add(ops::mul(sa, p), sb);
}

// Component manipulation block: two conv-BN-lReLU stages (stride 2 on the
// second) plus a 1x1 stride-2 residual shortcut.
template <class T>
struct Cmb {
  Conv2dLayer<T> conv1, conv2, res;
  BatchNormLayer<T> bn1, bn2;

  void init(Rng& rng, int64_t in_ch, int64_t out_ch) {
    conv1.init(rng, out_ch, in_ch, 3, 1, 1, /*equalized=*/false, /*bias=*/false);
    bn1.init(out_ch);
    conv2.init(rng, out_ch, out_ch, 3, 2, 1, false, false);
    bn2.init(out_ch);
    res.init(rng, out_ch, in_ch, 1, 2, 0, false, true);
  }

  Var<T> forward(const Var<T>& x, bool training) {
    if (x.shape()[2] % 2 != 0 || x.shape()[3] % 2 != 0)
      throw std::runtime_error("cmb_forward: spatial size must be even, got " +
                               shape_str(x.val().shape));
    Var<T> t = ops::leaky_relu(bn1.forward(conv1.forward(x), training), T(0.2), T(1));
    t = ops::leaky_relu(bn2.forward(conv2.forward(t), training), T(0.2), T(1));
    return ops::add(t, res.forward(x));
  }

  void collect(ParamList<T>& out, const std::string& p) const {
    conv1.collect(out, p + ".conv1");
    bn1.collect(out, p + ".bn1");
    conv2.collect(out, p + ".conv2");
    bn2.collect(out, p + ".bn2");
    res.collect(out, p + ".res");
  }
  void collect_buffers(BufferList<T>& out, const std::string& p) {
    bn1.collect_buffers(out, p + ".bn1");
    bn2.collect_buffers(out, p + ".bn2");
  }
};

// Projecting block: global average pool then FC to 2*d_style.
template <class T>
struct Pb {
  LinearLayer<T> fc;

  void init(Rng& rng, int64_t in_ch, int64_t d_style) {
    fc.init(rng, 2 * d_style, in_ch, /*equalized=*/false);
  }
  Var<T> forward(const Var<T>& features) const {
    return fc.forward(global_avg_pool(features));
  }
  void collect(ParamList<T>& out, const std::string& p) const { fc.collect(out, p + ".fc"); }
};

// The frequency encoding module: stem conv, sequential EMs (CMB+PB) yielding
// distilled vectors s^i, and the content fusion module producing q.
template <class T>
struct ContentEncoder {
  EncoderConfig cfg;
  Conv2dLayer<T> stem;
  std::vector<Cmb<T>> cmbs;
  std::vector<Pb<T>> pbs;
  Var<T> p0;                        // learnable constant, init N(0,1)
  std::vector<LinearLayer<T>> fcs;  // fusion chain, one per EM

  void init(Rng& rng, const EncoderConfig& c) {
    cfg = c;
    cfg.validate();
    stem.init(rng, cfg.depths[0], 1, 3, 1, 1, /*equalized=*/false, /*bias=*/true);
    cmbs.clear();
    pbs.clear();
    fcs.clear();
    int64_t in_ch = cfg.depths[0];
    for (size_t i = 0; i < cfg.depths.size(); ++i) {
      Cmb<T> cmb;
      cmb.init(rng, in_ch, cfg.depths[i]);
      cmbs.push_back(std::move(cmb));
      Pb<T> pb;
      pb.init(rng, cfg.depths[i], cfg.d_style);
      pbs.push_back(std::move(pb));
      in_ch = cfg.depths[i];
    }
    Tensor<T> p({1, cfg.d_style});
    rng.fill_normal(p, 1.0);
    p0 = Var<T>::param(std::move(p));
    fcs.resize(cfg.depths.size());
    for (auto& fc : fcs) fc.init(rng, cfg.d_style, cfg.d_style, /*equalized=*/false);
  }

  // x_f: (N,1,S,S) with S = cfg.input_size. Returns q (N, d_style). When
  // `distilled` is non-null the per-EM s vectors are exposed for inspection.
  Var<T> encode(const Var<T>& x_f, bool training, std::vector<Var<T>>* distilled = nullptr) {
    if (x_f.val().ndim() != 4 || x_f.shape()[1] != 1 || x_f.shape()[2] != cfg.input_size ||
        x_f.shape()[3] != cfg.input_size)
      throw std::runtime_error("encode: expected input (N,1," + std::to_string(cfg.input_size) +
                               "," + std::to_string(cfg.input_size) + "), got " +
                               shape_str(x_f.val().shape));
    int64_t N = x_f.shape()[0];
    Var<T> x = stem.forward(x_f);
    std::vector<Var<T>> svecs;
    for (size_t i = 0; i < cmbs.size(); ++i) {
      x = cmbs[i].forward(x, training);
      svecs.push_back(pbs[i].forward(x));
    }
    if (distilled) *distilled = svecs;
    Var<T> q = ops::group_broadcast(p0, N);  // q^0 := p^0
    for (size_t i = 0; i < fcs.size(); ++i) {
      Var<T> p = fcs[i].forward(q);
      q = ft_transform(p, svecs[i]);
    }
    return q;
  }

  void collect(ParamList<T>& out) const {
    stem.collect(out, "e.stem");
    for (size_t i = 0; i < cmbs.size(); ++i) {
      std::string p = "e.em" + std::to_string(i + 1);
      cmbs[i].collect(out, p + ".cmb");
      pbs[i].collect(out, p + ".pb");
    }
    out.push_back({"e.cfm.p0", p0});
    for (size_t i = 0; i < fcs.size(); ++i)
      fcs[i].collect(out, "e.cfm.fc" + std::to_string(i + 1));
  }
  void collect_buffers(BufferList<T>& out) {
    for (size_t i = 0; i < cmbs.size(); ++i)
      cmbs[i].collect_buffers(out, "e.em" + std::to_string(i + 1) + ".cmb");
  }
};

}  // namespace cgan
