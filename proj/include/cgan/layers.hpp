#pragma once

#include <string>
#include <vector>

#include "cgan/dual.hpp"
#include "cgan/ops.hpp"
#include "cgan/rng.hpp"

namespace cgan {

template <class T>
struct NamedParam {
  std::string name;
  Var<T> p;
};
template <class T>
using ParamList = std::vector<NamedParam<T>>;

// Named non-trainable state (e.g. batch-norm running stats) that checkpoints
// alongside parameters.
template <class T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* t;
};
template <class T>
using BufferList = std::vector<NamedBuffer<T>>;

// Fully connected layer. With `equalized` the stored weight is N(0,1) and the
// runtime multiplier gain/sqrt(fan_in) is applied in the forward pass;
// otherwise He initialization with fan-in scaling baked into the stored weight.
template <class T>
struct LinearLayer {
  Var<T> W, b;
  T scale = 1;
  bool has_bias = true;

  void init(Rng& rng, int64_t out, int64_t in, bool equalized, T bias_init = 0,
            bool bias = true) {
    Tensor<T> w({out, in});
    if (equalized) {
      rng.fill_normal(w, 1.0);
      scale = T(1) / std::sqrt(static_cast<T>(in));
    } else {
      rng.fill_normal(w, std::sqrt(2.0 / static_cast<double>(in)));
      scale = 1;
    }
    W = Var<T>::param(std::move(w));
    has_bias = bias;
    if (bias) {
      Tensor<T> bb({out});
      bb.fill(bias_init);
      b = Var<T>::param(std::move(bb));
    }
  }

  Var<T> forward(const Var<T>& x) const {
    return ops::linear(x, W, has_bias ? b : Var<T>(), scale);
  }

  Dual<T> forward_dual(const Dual<T>& x) const {
    return ops::dual_linear(x, W, has_bias ? b : Var<T>(), scale);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", W});
    if (has_bias) out.push_back({prefix + ".bias", b});
  }
};

template <class T>
struct Conv2dLayer {
  Var<T> W, b;
  T scale = 1;
  int64_t stride = 1, pad = 1;
  bool has_bias = true;

  void init(Rng& rng, int64_t out_ch, int64_t in_ch, int64_t k, int64_t stride_,
            int64_t pad_, bool equalized, bool bias = true) {
    stride = stride_;
    pad = pad_;
    Tensor<T> w({out_ch, in_ch, k, k});
    int64_t fan = in_ch * k * k;
    if (equalized) {
      rng.fill_normal(w, 1.0);
      scale = T(1) / std::sqrt(static_cast<T>(fan));
    } else {
      rng.fill_normal(w, std::sqrt(2.0 / static_cast<double>(fan)));
      scale = 1;
    }
    W = Var<T>::param(std::move(w));
    has_bias = bias;
    if (bias) b = Var<T>::param(Tensor<T>({out_ch}));
  }

  Var<T> forward(const Var<T>& x) const {
    return ops::conv2d(x, W, has_bias ? b : Var<T>(), stride, pad, scale);
  }

  Dual<T> forward_dual(const Dual<T>& x) const {
    return ops::dual_conv2d(x, W, has_bias ? b : Var<T>(), stride, pad, scale);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", W});
    if (has_bias) out.push_back({prefix + ".bias", b});
  }
};

// Fused batch normalization over (N,H,W) per channel. Training mode
// normalizes with batch statistics and updates the running buffers as a side
// effect: running <- momentum*running + (1-momentum)*batch (biased variance).
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps,
                  bool training) {
  if (x.val().ndim() != 4) throw std::runtime_error("batch_norm: expects 4-d input");
  int64_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  if (gamma.numel() != C || beta.numel() != C)
    throw std::runtime_error("batch_norm: affine parameter length mismatch");
  int64_t m = N * HW;

  Tensor<T> mean({C}), var({C});
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      T s = 0;
      for (int64_t nn = 0; nn < N; ++nn) {
        const T* p = x.val().data() + (nn * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) s += p[j];
      }
      mean[c] = s / static_cast<T>(m);
    }
    for (int64_t c = 0; c < C; ++c) {
      T s = 0;
      for (int64_t nn = 0; nn < N; ++nn) {
        const T* p = x.val().data() + (nn * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) {
          T d = p[j] - mean[c];
          s += d * d;
        }
      }
      var[c] = s / static_cast<T>(m);
    }
    for (int64_t c = 0; c < C; ++c) {
      running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * mean[c];
      running_var[c] = momentum * running_var[c] + (T(1) - momentum) * var[c];
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  auto xhat = std::make_shared<Tensor<T>>(x.val().shape);
  Tensor<T> inv({C});
  for (int64_t c = 0; c < C; ++c) inv[c] = T(1) / std::sqrt(var[c] + eps);
  Tensor<T> out(x.val().shape);
  for (int64_t nn = 0; nn < N; ++nn)
    for (int64_t c = 0; c < C; ++c) {
      const T* p = x.val().data() + (nn * C + c) * HW;
      T* xh = xhat->data() + (nn * C + c) * HW;
      T* q = out.data() + (nn * C + c) * HW;
      T g = gamma.val()[c], bb = beta.val()[c], mu = mean[c], iv = inv[c];
      for (int64_t j = 0; j < HW; ++j) {
        xh[j] = (p[j] - mu) * iv;
        q[j] = g * xh[j] + bb;
      }
    }

  auto n = ops::detail::new_node(std::move(out), {x, gamma, beta});
  if (n->needs_grad) {
    auto px = x.ptr(), pg = gamma.ptr(), pb = beta.ptr();
    Node<T>* o = n.get();
    Tensor<T> inv_c = inv;
    n->backprop = [o, px, pg, pb, xhat, inv_c, N, C, HW, m, training]() {
      if (pg->needs_grad) {
        pg->ensure_grad();
        for (int64_t nn = 0; nn < N; ++nn)
          for (int64_t c = 0; c < C; ++c) {
            const T* g = o->grad.data() + (nn * C + c) * HW;
            const T* xh = xhat->data() + (nn * C + c) * HW;
            T s = 0;
            for (int64_t j = 0; j < HW; ++j) s += g[j] * xh[j];
            pg->grad[c] += s;
          }
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t nn = 0; nn < N; ++nn)
          for (int64_t c = 0; c < C; ++c) {
            const T* g = o->grad.data() + (nn * C + c) * HW;
            T s = 0;
            for (int64_t j = 0; j < HW; ++j) s += g[j];
            pb->grad[c] += s;
          }
      }
      if (px->needs_grad) {
        px->ensure_grad();
        if (training) {
          // dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
          for (int64_t c = 0; c < C; ++c) {
            T gam = pg->val[c], iv = inv_c[c];
            T s1 = 0, s2 = 0;
            for (int64_t nn = 0; nn < N; ++nn) {
              const T* g = o->grad.data() + (nn * C + c) * HW;
              const T* xh = xhat->data() + (nn * C + c) * HW;
              for (int64_t j = 0; j < HW; ++j) {
                T dxh = g[j] * gam;
                s1 += dxh;
                s2 += dxh * xh[j];
              }
            }
            s1 /= static_cast<T>(m);
            s2 /= static_cast<T>(m);
            for (int64_t nn = 0; nn < N; ++nn) {
              const T* g = o->grad.data() + (nn * C + c) * HW;
              const T* xh = xhat->data() + (nn * C + c) * HW;
              T* dx = px->grad.data() + (nn * C + c) * HW;
              for (int64_t j = 0; j < HW; ++j)
                dx[j] += iv * (g[j] * gam - s1 - xh[j] * s2);
            }
          }
        } else {
          for (int64_t c = 0; c < C; ++c) {
            T f = pg->val[c] * inv_c[c];
            for (int64_t nn = 0; nn < N; ++nn) {
              const T* g = o->grad.data() + (nn * C + c) * HW;
              T* dx = px->grad.data() + (nn * C + c) * HW;
              for (int64_t j = 0; j < HW; ++j) dx[j] += g[j] * f;
            }
          }
        }
      }
    };
  }
  return Var<T>(n);
}

template <class T>
struct BatchNormLayer {
  Var<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  T momentum = T(0.9);
  T eps = T(1e-5);

  void init(int64_t C) {
    Tensor<T> g({C});
    g.fill(T(1));
    gamma = Var<T>::param(std::move(g));
    beta = Var<T>::param(Tensor<T>({C}));
    running_mean = Tensor<T>({C});
    running_var = Tensor<T>({C});
    running_var.fill(T(1));
  }

  Var<T> forward(const Var<T>& x, bool training) {
    return batch_norm(x, gamma, beta, running_mean, running_var, momentum, eps, training);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
  void collect_buffers(BufferList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".running_mean", &running_mean});
    out.push_back({prefix + ".running_var", &running_var});
  }
};

// Minibatch standard deviation: append a channel holding the per-group mean
// (over channels and pixels) of the per-feature population stddev.
// Batch sizes not divisible by group_size fall back to one group.
template <class T>
Var<T> minibatch_stddev(const Var<T>& x, int64_t group_size) {
  int64_t N = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
  int64_t gs = (group_size > 0 && N % group_size == 0) ? group_size : N;
  using namespace ops;
  Var<T> mu = group_broadcast(group_mean(x, gs), gs);
  Var<T> d = sub(x, mu);
  Var<T> var_g = group_mean(mul(d, d), gs);
  Var<T> sd = sqrt_eps(var_g, T(1e-8));
  Var<T> s_g = mean_chw(sd);                      // (G,)
  Var<T> s_n = group_broadcast(s_g, gs);          // (N,)
  Var<T> map = broadcast_nchw(s_n, H, W);         // (N,1,H,W)
  return concat_ch(x, map);
}

template <class T>
Dual<T> minibatch_stddev_dual(const Dual<T>& x, int64_t group_size) {
  int64_t N = x.v.shape()[0], H = x.v.shape()[2], W = x.v.shape()[3];
  int64_t gs = (group_size > 0 && N % group_size == 0) ? group_size : N;
  using namespace ops;
  Dual<T> mu = dual_group_broadcast(dual_group_mean(x, gs), gs);
  Dual<T> d = dual_sub(x, mu);
  Dual<T> var_g = dual_group_mean(dual_mul(d, d), gs);
  Dual<T> sd = dual_sqrt_eps(var_g, T(1e-8));
  Dual<T> s_g = dual_mean_chw(sd);
  Dual<T> s_n = dual_group_broadcast(s_g, gs);
  Dual<T> map = dual_broadcast_nchw(s_n, H, W);
  return dual_concat_ch(x, map);
}

// x / sqrt(mean(x^2) + eps), row-wise over (N,K).
template <class T>
Var<T> rms_normalize(const Var<T>& x, T eps = T(1e-8)) {
  using namespace ops;
  int64_t K = x.shape()[1];
  Var<T> ms = mul_scalar(sum_cols(mul(x, x)), T(1) / static_cast<T>(K));
  Var<T> r = rsqrt_eps(ms, eps);
  return mul_bycol(x, r);
}

}  // namespace cgan
