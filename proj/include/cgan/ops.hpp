#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cgan/autodiff.hpp"
#include "cgan/tensor.hpp"

// Differentiable primitive operations. Every op builds one graph node with an
// explicit backward closure; no op mutates its inputs. All loops are single
// threaded and run in a fixed order, so gradients are bitwise reproducible.

namespace cgan {
namespace ops {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

namespace detail {

template <class T>
std::shared_ptr<Node<T>> new_node(Tensor<T> val, std::vector<Var<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->id = node_counter().fetch_add(1);
  n->val = std::move(val);
  bool req = grad_mode();
  if (req) {
    bool any = false;
    for (auto& p : parents)
      if (p.defined() && p.node().needs_grad) any = true;
    req = any;
  }
  n->needs_grad = req;
  if (req) {
    for (auto& p : parents)
      if (p.defined()) n->parents.push_back(p.ptr());
  }
  return n;
}

template <class T>
bool wants(const Var<T>& p) {
  return p.defined() && p.node().needs_grad;
}

}  // namespace detail

// ---------- elementwise binary ----------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::runtime_error("add: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += bp[i];
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    auto pa = a.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pb]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pb->grad[i] += o->grad[i];
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::runtime_error("sub: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bp[i];
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    auto pa = a.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pb]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pb->grad[i] -= o->grad[i];
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::runtime_error("mul: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bp[i];
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    auto pa = a.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pb]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i] * pb->val[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pb->grad[i] += o->grad[i] * pa->val[i];
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  if (!a.val().same_shape(b.val())) throw std::runtime_error("divide: shape mismatch");
  Tensor<T> out = a.val();
  const T* bp = b.val().data();
  for (int64_t i = 0; i < out.numel(); ++i) out[i] /= bp[i];
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    auto pa = a.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pb]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i] / pb->val[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) {
          T q = pa->val[i] / pb->val[i];
          pb->grad[i] -= o->grad[i] * q / pb->val[i];
        }
      }
    };
  }
  return Var<T>(n);
}

// ---------- scalar variants ----------

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x += c;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i];
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> mul_scalar(const Var<T>& a, T c) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x *= c;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, c]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i] * c;
    };
  }
  return Var<T>(n);
}

// ---------- unary ----------

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope, T gain) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = (x >= T(0) ? x : x * slope) * gain;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, slope, gain]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) {
        T m = (pa->val[i] >= T(0) ? T(1) : slope) * gain;
        pa->grad[i] += o->grad[i] * m;
      }
    };
  }
  return Var<T>(n);
}

template <class T>
T softplus_val(T x) {
  if (x > T(30)) return x;
  if (x < T(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

template <class T>
T sigmoid_val(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Var<T> softplus(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = softplus_val(x);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i)
        pa->grad[i] += o->grad[i] * sigmoid_val(pa->val[i]);
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = sigmoid_val(x);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) {
        T y = o->val[i];
        pa->grad[i] += o->grad[i] * y * (T(1) - y);
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> sqrt_eps(const Var<T>& a, T eps) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = std::sqrt(x + eps);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i)
        pa->grad[i] += o->grad[i] * T(0.5) / o->val[i];
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> rsqrt_eps(const Var<T>& a, T eps) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = T(1) / std::sqrt(x + eps);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) {
        T y = o->val[i];
        pa->grad[i] += o->grad[i] * T(-0.5) * y * y * y;
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> recip(const Var<T>& a) {
  Tensor<T> out = a.val();
  for (auto& x : out.v) x = T(1) / x;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) {
        T y = o->val[i];
        pa->grad[i] -= o->grad[i] * y * y;
      }
    };
  }
  return Var<T>(n);
}

// ---------- reductions ----------

template <class T>
Var<T> sum_all(const Var<T>& a) {
  Tensor<T> out({1});
  T s = 0;
  for (auto x : a.val().v) s += x;
  out[0] = s;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      T g = o->grad[0];
      for (int64_t i = 0; i < pa->grad.numel(); ++i) pa->grad[i] += g;
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
  return mul_scalar(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

// (N,K) -> (N,): sum over columns.
template <class T>
Var<T> sum_cols(const Var<T>& a) {
  if (a.val().ndim() != 2) throw std::runtime_error("sum_cols: expects 2-d");
  int64_t N = a.shape()[0], K = a.shape()[1];
  Tensor<T> out({N});
  for (int64_t i = 0; i < N; ++i) {
    T s = 0;
    const T* row = a.val().data() + i * K;
    for (int64_t j = 0; j < K; ++j) s += row[j];
    out[i] = s;
  }
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, N, K]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < N; ++i) {
        T g = o->grad[i];
        T* row = pa->grad.data() + i * K;
        for (int64_t j = 0; j < K; ++j) row[j] += g;
      }
    };
  }
  return Var<T>(n);
}

// (N,C,H,W) -> (N,): mean over C,H,W.
template <class T>
Var<T> mean_chw(const Var<T>& a) {
  if (a.val().ndim() != 4) throw std::runtime_error("mean_chw: expects 4-d");
  int64_t N = a.shape()[0];
  int64_t M = a.numel() / N;
  Tensor<T> out({N});
  for (int64_t i = 0; i < N; ++i) {
    T s = 0;
    const T* p = a.val().data() + i * M;
    for (int64_t j = 0; j < M; ++j) s += p[j];
    out[i] = s / static_cast<T>(M);
  }
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, N, M]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < N; ++i) {
        T g = o->grad[i] / static_cast<T>(M);
        T* p = pa->grad.data() + i * M;
        for (int64_t j = 0; j < M; ++j) p[j] += g;
      }
    };
  }
  return Var<T>(n);
}

// ---------- structure ----------

template <class T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
  if (Tensor<T>::count(shape) != a.numel()) throw std::runtime_error("reshape: element count mismatch");
  Tensor<T> out(shape, a.val().v);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i];
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int64_t off, int64_t len) {
  if (a.val().ndim() != 2) throw std::runtime_error("slice_cols: expects 2-d");
  int64_t N = a.shape()[0], K = a.shape()[1];
  if (off < 0 || off + len > K) throw std::runtime_error("slice_cols: out of range");
  Tensor<T> out({N, len});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < len; ++j) out.at2(i, j) = a.val().at2(i, off + j);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, N, K, off, len]() {
      pa->ensure_grad();
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < len; ++j) pa->grad[i * K + off + j] += o->grad[i * len + j];
    };
  }
  return Var<T>(n);
}

// Concatenate along channel axis: (N,C1,H,W) ++ (N,C2,H,W).
template <class T>
Var<T> concat_ch(const Var<T>& a, const Var<T>& b) {
  auto& sa = a.shape();
  auto& sb = b.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw std::runtime_error("concat_ch: incompatible shapes");
  int64_t N = sa[0], C1 = sa[1], C2 = sb[1], H = sa[2], W = sa[3], HW = H * W;
  Tensor<T> out({N, C1 + C2, H, W});
  for (int64_t i = 0; i < N; ++i) {
    std::copy(a.val().data() + i * C1 * HW, a.val().data() + (i + 1) * C1 * HW,
              out.data() + i * (C1 + C2) * HW);
    std::copy(b.val().data() + i * C2 * HW, b.val().data() + (i + 1) * C2 * HW,
              out.data() + i * (C1 + C2) * HW + C1 * HW);
  }
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    auto pa = a.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pb, N, C1, C2, HW]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
          for (int64_t j = 0; j < C1 * HW; ++j)
            pa->grad[i * C1 * HW + j] += o->grad[i * (C1 + C2) * HW + j];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
          for (int64_t j = 0; j < C2 * HW; ++j)
            pb->grad[i * C2 * HW + j] += o->grad[i * (C1 + C2) * HW + C1 * HW + j];
      }
    };
  }
  return Var<T>(n);
}

// ---------- broadcasts ----------

// (N,K) + (K,)
template <class T>
Var<T> add_rowvec(const Var<T>& a, const Var<T>& v) {
  int64_t N = a.shape()[0], K = a.shape()[1];
  if (v.numel() != K) throw std::runtime_error("add_rowvec: length mismatch");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < K; ++j) out[i * K + j] += v.val()[j];
  auto n = detail::new_node(std::move(out), {a, v});
  if (n->needs_grad) {
    auto pa = a.ptr(), pv = v.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pv, N, K]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) pa->grad[i] += o->grad[i];
      }
      if (pv->needs_grad) {
        pv->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
          for (int64_t j = 0; j < K; ++j) pv->grad[j] += o->grad[i * K + j];
      }
    };
  }
  return Var<T>(n);
}

// (N,K) * (N,): scale each row by a per-row factor.
template <class T>
Var<T> mul_bycol(const Var<T>& a, const Var<T>& s) {
  int64_t N = a.shape()[0], K = a.shape()[1];
  if (s.numel() != N) throw std::runtime_error("mul_bycol: length mismatch");
  Tensor<T> out = a.val();
  for (int64_t i = 0; i < N; ++i) {
    T f = s.val()[i];
    for (int64_t j = 0; j < K; ++j) out[i * K + j] *= f;
  }
  auto n = detail::new_node(std::move(out), {a, s});
  if (n->needs_grad) {
    auto pa = a.ptr(), ps = s.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, ps, N, K]() {
      if (pa->needs_grad) {
        pa->ensure_grad();
        for (int64_t i = 0; i < N; ++i) {
          T f = ps->val[i];
          for (int64_t j = 0; j < K; ++j) pa->grad[i * K + j] += o->grad[i * K + j] * f;
        }
      }
      if (ps->needs_grad) {
        ps->ensure_grad();
        for (int64_t i = 0; i < N; ++i) {
          T s2 = 0;
          for (int64_t j = 0; j < K; ++j) s2 += o->grad[i * K + j] * pa->val[i * K + j];
          ps->grad[i] += s2;
        }
      }
    };
  }
  return Var<T>(n);
}

// (N,) -> (N,1,H,W)
template <class T>
Var<T> broadcast_nchw(const Var<T>& s, int64_t H, int64_t W) {
  int64_t N = s.numel();
  Tensor<T> out({N, 1, H, W});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < H * W; ++j) out[i * H * W + j] = s.val()[i];
  auto n = detail::new_node(std::move(out), {s});
  if (n->needs_grad) {
    auto ps = s.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, ps, N, H, W]() {
      ps->ensure_grad();
      for (int64_t i = 0; i < N; ++i) {
        T g = 0;
        for (int64_t j = 0; j < H * W; ++j) g += o->grad[i * H * W + j];
        ps->grad[i] += g;
      }
    };
  }
  return Var<T>(n);
}

// Group mean across the batch axis: (N,C,H,W) -> (G,C,H,W), N = G*gs.
template <class T>
Var<T> group_mean(const Var<T>& a, int64_t gs) {
  int64_t N = a.shape()[0];
  if (N % gs != 0) throw std::runtime_error("group_mean: batch not divisible by group size");
  int64_t G = N / gs, M = a.numel() / N;
  std::vector<int64_t> os = a.shape();
  os[0] = G;
  Tensor<T> out(os);
  for (int64_t g = 0; g < G; ++g)
    for (int64_t k = 0; k < gs; ++k) {
      const T* p = a.val().data() + (g * gs + k) * M;
      T* q = out.data() + g * M;
      for (int64_t j = 0; j < M; ++j) q[j] += p[j];
    }
  T inv = T(1) / static_cast<T>(gs);
  for (auto& x : out.v) x *= inv;
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, G, gs, M]() {
      pa->ensure_grad();
      T inv2 = T(1) / static_cast<T>(gs);
      for (int64_t g = 0; g < G; ++g)
        for (int64_t k = 0; k < gs; ++k) {
          T* p = pa->grad.data() + (g * gs + k) * M;
          const T* q = o->grad.data() + g * M;
          for (int64_t j = 0; j < M; ++j) p[j] += q[j] * inv2;
        }
    };
  }
  return Var<T>(n);
}

// Inverse of group_mean's shape change: (G,...) -> (N,...), replicating per group.
template <class T>
Var<T> group_broadcast(const Var<T>& a, int64_t gs) {
  int64_t G = a.shape()[0];
  int64_t M = a.numel() / G;
  std::vector<int64_t> os = a.shape();
  os[0] = G * gs;
  Tensor<T> out(os);
  for (int64_t g = 0; g < G; ++g)
    for (int64_t k = 0; k < gs; ++k)
      std::copy(a.val().data() + g * M, a.val().data() + (g + 1) * M,
                out.data() + (g * gs + k) * M);
  auto n = detail::new_node(std::move(out), {a});
  if (n->needs_grad) {
    auto pa = a.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, G, gs, M]() {
      pa->ensure_grad();
      for (int64_t g = 0; g < G; ++g)
        for (int64_t k = 0; k < gs; ++k) {
          const T* q = o->grad.data() + (g * gs + k) * M;
          T* p = pa->grad.data() + g * M;
          for (int64_t j = 0; j < M; ++j) p[j] += q[j];
        }
    };
  }
  return Var<T>(n);
}

// ---------- linear algebra ----------

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.val().ndim() != 2 || b.val().ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw std::runtime_error("matmul: incompatible shapes");
  int64_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
  Tensor<T> out({M, N});
  {
    CMapRM<T> A(a.val().data(), M, K), B(b.val().data(), K, N);
    MapRM<T> C(out.data(), M, N);
    C.noalias() = A * B;
  }
  auto n = detail::new_node(std::move(out), {a, b});
  if (n->needs_grad) {
    auto pa = a.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pa, pb, M, K, N]() {
      CMapRM<T> G(o->grad.data(), M, N);
      if (pa->needs_grad) {
        pa->ensure_grad();
        CMapRM<T> B(pb->val.data(), K, N);
        MapRM<T> dA(pa->grad.data(), M, K);
        dA.noalias() += G * B.transpose();
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        CMapRM<T> A(pa->val.data(), M, K);
        MapRM<T> dB(pb->grad.data(), K, N);
        dB.noalias() += A.transpose() * G;
      }
    };
  }
  return Var<T>(n);
}

// Fully connected layer: y = x * (scale*W)^T + b, W stored (out, in).
// `scale` is the runtime equalized-learning-rate multiplier.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b, T scale) {
  if (x.val().ndim() != 2 || W.val().ndim() != 2 || x.shape()[1] != W.shape()[1])
    throw std::runtime_error("linear: incompatible shapes");
  int64_t N = x.shape()[0], K = x.shape()[1], O = W.shape()[0];
  if (b.defined() && b.numel() != O) throw std::runtime_error("linear: bias length mismatch");
  Tensor<T> out({N, O});
  {
    CMapRM<T> X(x.val().data(), N, K), Wm(W.val().data(), O, K);
    MapRM<T> Y(out.data(), N, O);
    Y.noalias() = X * Wm.transpose() * scale;
  }
  if (b.defined()) {
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < O; ++j) out[i * O + j] += b.val()[j];
  }
  auto n = detail::new_node(std::move(out), {x, W, b});
  if (n->needs_grad) {
    auto px = x.ptr(), pw = W.ptr();
    auto pb = b.defined() ? b.ptr() : nullptr;
    Node<T>* o = n.get();
    n->backprop = [o, px, pw, pb, N, K, O, scale]() {
      CMapRM<T> G(o->grad.data(), N, O);
      if (px->needs_grad) {
        px->ensure_grad();
        CMapRM<T> Wm(pw->val.data(), O, K);
        MapRM<T> dX(px->grad.data(), N, K);
        dX.noalias() += G * Wm * scale;
      }
      if (pw->needs_grad) {
        pw->ensure_grad();
        CMapRM<T> X(px->val.data(), N, K);
        MapRM<T> dW(pw->grad.data(), O, K);
        dW.noalias() += G.transpose() * X * scale;
      }
      if (pb && pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
          for (int64_t j = 0; j < O; ++j) pb->grad[j] += o->grad[i * O + j];
      }
    };
  }
  return Var<T>(n);
}

// Per-kernel squared sums scaled by the eq-lr multiplier squared:
// (O,C,kh,kw) -> (C,O) with M[c,o] = scale^2 * sum_k W[o,c,k]^2.
// Used by demodulation so the whole thing stays differentiable.
template <class T>
Var<T> sqsum_kernel(const Var<T>& W, T scale) {
  if (W.val().ndim() != 4) throw std::runtime_error("sqsum_kernel: expects 4-d kernel");
  int64_t O = W.shape()[0], C = W.shape()[1], KK = W.shape()[2] * W.shape()[3];
  Tensor<T> out({C, O});
  T s2 = scale * scale;
  for (int64_t o = 0; o < O; ++o)
    for (int64_t c = 0; c < C; ++c) {
      const T* p = W.val().data() + (o * C + c) * KK;
      T acc = 0;
      for (int64_t k = 0; k < KK; ++k) acc += p[k] * p[k];
      out.at2(c, o) = acc * s2;
    }
  auto n = detail::new_node(std::move(out), {W});
  if (n->needs_grad) {
    auto pw = W.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, pw, O, C, KK, s2]() {
      pw->ensure_grad();
      for (int64_t oc = 0; oc < O; ++oc)
        for (int64_t c = 0; c < C; ++c) {
          T g = o->grad[c * O + oc] * T(2) * s2;
          const T* p = pw->val.data() + (oc * C + c) * KK;
          T* q = pw->grad.data() + (oc * C + c) * KK;
          for (int64_t k = 0; k < KK; ++k) q[k] += g * p[k];
        }
    };
  }
  return Var<T>(n);
}

// ---------- convolution ----------

namespace detail {

// im2col: x (N,C,H,W) -> col (K x N*H2*W2), K = C*kh*kw, column-major in the
// sense that col(k, n*P + y*W2 + x) walks output positions fastest.
template <class T>
void im2col(const Tensor<T>& x, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
            int64_t H2, int64_t W2, T* col) {
  int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  int64_t P = H2 * W2, NP = N * P;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        int64_t krow = (c * kh + ki) * kw + kj;
        T* dst = col + krow * NP;
        for (int64_t nn = 0; nn < N; ++nn) {
          const T* src = x.data() + (nn * C + c) * H * W;
          for (int64_t oy = 0; oy < H2; ++oy) {
            int64_t iy = oy * stride - pad + ki;
            T* d = dst + nn * P + oy * W2;
            if (iy < 0 || iy >= H) {
              std::fill(d, d + W2, T(0));
              continue;
            }
            const T* s = src + iy * W;
            for (int64_t ox = 0; ox < W2; ++ox) {
              int64_t ix = ox * stride - pad + kj;
              d[ox] = (ix >= 0 && ix < W) ? s[ix] : T(0);
            }
          }
        }
      }
}

template <class T>
void col2im_add(const T* col, int64_t N, int64_t C, int64_t H, int64_t W, int64_t kh,
                int64_t kw, int64_t stride, int64_t pad, int64_t H2, int64_t W2,
                Tensor<T>& dx) {
  int64_t P = H2 * W2, NP = N * P;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        int64_t krow = (c * kh + ki) * kw + kj;
        const T* src = col + krow * NP;
        for (int64_t nn = 0; nn < N; ++nn) {
          T* dst = dx.data() + (nn * C + c) * H * W;
          for (int64_t oy = 0; oy < H2; ++oy) {
            int64_t iy = oy * stride - pad + ki;
            if (iy < 0 || iy >= H) continue;
            const T* s = src + nn * P + oy * W2;
            T* d = dst + iy * W;
            for (int64_t ox = 0; ox < W2; ++ox) {
              int64_t ix = ox * stride - pad + kj;
              if (ix >= 0 && ix < W) d[ix] += s[ox];
            }
          }
        }
      }
}

}  // namespace detail

// 2-d convolution, weight (O,C,kh,kw), optional bias (O), symmetric padding.
// `scale` is the runtime eq-lr multiplier applied to the weight.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& W, const Var<T>& b, int64_t stride,
              int64_t pad, T scale) {
  if (x.val().ndim() != 4 || W.val().ndim() != 4) throw std::runtime_error("conv2d: expects 4-d");
  int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], Wd = x.shape()[3];
  int64_t O = W.shape()[0], kh = W.shape()[2], kw = W.shape()[3];
  if (W.shape()[1] != C) throw std::runtime_error("conv2d: channel mismatch");
  int64_t H2 = (H + 2 * pad - kh) / stride + 1;
  int64_t W2 = (Wd + 2 * pad - kw) / stride + 1;
  if (H2 < 1 || W2 < 1) throw std::runtime_error("conv2d: output would be empty");
  int64_t K = C * kh * kw, P = H2 * W2, NP = N * P;

  Tensor<T> out({N, O, H2, W2});
  bool fast11 = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  // Column buffer is shared with backward; only materialized for k>1 kernels.
  auto col = std::make_shared<std::vector<T>>();
  if (fast11) {
    CMapRM<T> Wm(W.val().data(), O, C);
    for (int64_t nn = 0; nn < N; ++nn) {
      CMapRM<T> X(x.val().data() + nn * C * P, C, P);
      MapRM<T> Y(out.data() + nn * O * P, O, P);
      Y.noalias() = (Wm * scale) * X;
    }
  } else {
    col->resize(static_cast<size_t>(K * NP));
    detail::im2col(x.val(), kh, kw, stride, pad, H2, W2, col->data());
    MatRM<T> Ws = CMapRM<T>(W.val().data(), O, K) * scale;
    CMapRM<T> Cm(col->data(), K, NP);
    // GEMM gives (O x NP) with columns ordered n-major; scatter to NCHW.
    MatRM<T> Y = Ws * Cm;
    for (int64_t nn = 0; nn < N; ++nn)
      for (int64_t o = 0; o < O; ++o)
        std::copy(Y.data() + o * NP + nn * P, Y.data() + o * NP + (nn + 1) * P,
                  out.data() + (nn * O + o) * P);
  }
  if (b.defined()) {
    if (b.numel() != O) throw std::runtime_error("conv2d: bias length mismatch");
    for (int64_t nn = 0; nn < N; ++nn)
      for (int64_t o = 0; o < O; ++o) {
        T bv = b.val()[o];
        T* p = out.data() + (nn * O + o) * P;
        for (int64_t j = 0; j < P; ++j) p[j] += bv;
      }
  }

  auto n = detail::new_node(std::move(out), {x, W, b});
  if (n->needs_grad) {
    auto px = x.ptr(), pw = W.ptr();
    auto pb = b.defined() ? b.ptr() : nullptr;
    Node<T>* o = n.get();
    n->backprop = [o, px, pw, pb, col, N, C, H, Wd, O, kh, kw, stride, pad, H2, W2, K, P,
                   NP, scale, fast11]() {
      // Gather dY as (O x NP), n-major columns.
      MatRM<T> dY(O, NP);
      for (int64_t nn = 0; nn < N; ++nn)
        for (int64_t oc = 0; oc < O; ++oc)
          std::copy(o->grad.data() + (nn * O + oc) * P, o->grad.data() + (nn * O + oc + 1) * P,
                    dY.data() + oc * NP + nn * P);
      if (pb && pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t oc = 0; oc < O; ++oc) {
          T s = 0;
          const T* p = dY.data() + oc * NP;
          for (int64_t j = 0; j < NP; ++j) s += p[j];
          pb->grad[oc] += s;
        }
      }
      if (fast11) {
        if (pw->needs_grad) {
          pw->ensure_grad();
          MapRM<T> dW(pw->grad.data(), O, C);
          for (int64_t nn = 0; nn < N; ++nn) {
            CMapRM<T> X(px->val.data() + nn * C * P, C, P);
            Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> dYn(
                dY.data() + nn * P, O, P, Eigen::OuterStride<>(NP));
            dW.noalias() += (dYn * X.transpose()) * scale;
          }
        }
        if (px->needs_grad) {
          px->ensure_grad();
          CMapRM<T> Wm(pw->val.data(), O, C);
          for (int64_t nn = 0; nn < N; ++nn) {
            Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>> dYn(
                dY.data() + nn * P, O, P, Eigen::OuterStride<>(NP));
            MapRM<T> dX(px->grad.data() + nn * C * P, C, P);
            dX.noalias() += (Wm.transpose() * scale) * dYn;
          }
        }
      } else {
        CMapRM<T> Cm(col->data(), K, NP);
        if (pw->needs_grad) {
          pw->ensure_grad();
          MapRM<T> dW(pw->grad.data(), O, K);
          dW.noalias() += (dY * Cm.transpose()) * scale;
        }
        if (px->needs_grad) {
          px->ensure_grad();
          MatRM<T> dCol(K, NP);
          CMapRM<T> Wm(pw->val.data(), O, K);
          dCol.noalias() = (Wm.transpose() * scale) * dY;
          detail::col2im_add(dCol.data(), N, C, H, Wd, kh, kw, stride, pad, H2, W2, px->grad);
        }
      }
    };
  } else {
    col->clear();
    col->shrink_to_fit();
  }
  return Var<T>(n);
}

// (N,C,H,W) + (C,)
template <class T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& b) {
  int64_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  if (b.numel() != C) throw std::runtime_error("add_channel_bias: length mismatch");
  Tensor<T> out = x.val();
  for (int64_t nn = 0; nn < N; ++nn)
    for (int64_t c = 0; c < C; ++c) {
      T bv = b.val()[c];
      T* p = out.data() + (nn * C + c) * HW;
      for (int64_t j = 0; j < HW; ++j) p[j] += bv;
    }
  auto n = detail::new_node(std::move(out), {x, b});
  if (n->needs_grad) {
    auto px = x.ptr(), pb = b.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, px, pb, N, C, HW]() {
      if (px->needs_grad) {
        px->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) px->grad[i] += o->grad[i];
      }
      if (pb->needs_grad) {
        pb->ensure_grad();
        for (int64_t nn = 0; nn < N; ++nn)
          for (int64_t c = 0; c < C; ++c) {
            T s = 0;
            const T* p = o->grad.data() + (nn * C + c) * HW;
            for (int64_t j = 0; j < HW; ++j) s += p[j];
            pb->grad[c] += s;
          }
      }
    };
  }
  return Var<T>(n);
}

// (N,C,H,W) * (N,C): per-sample per-channel scaling (modulation/demodulation).
template <class T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& s) {
  int64_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
  if (s.val().ndim() != 2 || s.shape()[0] != N || s.shape()[1] != C)
    throw std::runtime_error("mul_channel: shape mismatch");
  Tensor<T> out = x.val();
  for (int64_t nn = 0; nn < N; ++nn)
    for (int64_t c = 0; c < C; ++c) {
      T f = s.val().at2(nn, c);
      T* p = out.data() + (nn * C + c) * HW;
      for (int64_t j = 0; j < HW; ++j) p[j] *= f;
    }
  auto n = detail::new_node(std::move(out), {x, s});
  if (n->needs_grad) {
    auto px = x.ptr(), ps = s.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, px, ps, N, C, HW]() {
      if (px->needs_grad) {
        px->ensure_grad();
        for (int64_t nn = 0; nn < N; ++nn)
          for (int64_t c = 0; c < C; ++c) {
            T f = ps->val.at2(nn, c);
            const T* g = o->grad.data() + (nn * C + c) * HW;
            T* p = px->grad.data() + (nn * C + c) * HW;
            for (int64_t j = 0; j < HW; ++j) p[j] += g[j] * f;
          }
      }
      if (ps->needs_grad) {
        ps->ensure_grad();
        for (int64_t nn = 0; nn < N; ++nn)
          for (int64_t c = 0; c < C; ++c) {
            const T* g = o->grad.data() + (nn * C + c) * HW;
            const T* xv = px->val.data() + (nn * C + c) * HW;
            T acc = 0;
            for (int64_t j = 0; j < HW; ++j) acc += g[j] * xv[j];
            ps->grad.at2(nn, c) += acc;
          }
      }
    };
  }
  return Var<T>(n);
}

// ---------- resampling ----------

template <class T>
Var<T> upsample2(const Var<T>& x) {
  int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Tensor<T> out({N, C, H * 2, W * 2});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* src = x.val().data() + nc * H * W;
    T* dst = out.data() + nc * 4 * H * W;
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        T v = src[i * W + j];
        T* d = dst + (2 * i) * (2 * W) + 2 * j;
        d[0] = v;
        d[1] = v;
        d[2 * W] = v;
        d[2 * W + 1] = v;
      }
  }
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    auto px = x.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, px, N, C, H, W]() {
      px->ensure_grad();
      for (int64_t nc = 0; nc < N * C; ++nc) {
        T* dst = px->grad.data() + nc * H * W;
        const T* g = o->grad.data() + nc * 4 * H * W;
        for (int64_t i = 0; i < H; ++i)
          for (int64_t j = 0; j < W; ++j) {
            const T* s = g + (2 * i) * (2 * W) + 2 * j;
            dst[i * W + j] += s[0] + s[1] + s[2 * W] + s[2 * W + 1];
          }
      }
    };
  }
  return Var<T>(n);
}

template <class T>
Var<T> avgpool2(const Var<T>& x) {
  int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H % 2 || W % 2) throw std::runtime_error("avgpool2: odd spatial size");
  int64_t H2 = H / 2, W2 = W / 2;
  Tensor<T> out({N, C, H2, W2});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* src = x.val().data() + nc * H * W;
    T* dst = out.data() + nc * H2 * W2;
    for (int64_t i = 0; i < H2; ++i)
      for (int64_t j = 0; j < W2; ++j) {
        const T* s = src + (2 * i) * W + 2 * j;
        dst[i * W2 + j] = (s[0] + s[1] + s[W] + s[W + 1]) * T(0.25);
      }
  }
  auto n = detail::new_node(std::move(out), {x});
  if (n->needs_grad) {
    auto px = x.ptr();
    Node<T>* o = n.get();
    n->backprop = [o, px, N, C, H, W, H2, W2]() {
      px->ensure_grad();
      for (int64_t nc = 0; nc < N * C; ++nc) {
        T* dst = px->grad.data() + nc * H * W;
        const T* g = o->grad.data() + nc * H2 * W2;
        for (int64_t i = 0; i < H2; ++i)
          for (int64_t j = 0; j < W2; ++j) {
            T q = g[i * W2 + j] * T(0.25);
            T* d = dst + (2 * i) * W + 2 * j;
            d[0] += q;
            d[1] += q;
            d[W] += q;
            d[W + 1] += q;
          }
      }
    };
  }
  return Var<T>(n);
}

// x + strength * noise, noise (H,W) broadcast over batch and channels.
// strength is a trainable scalar (shape {1}).
template <class T>
Var<T> add_noise(const Var<T>& x, const Tensor<T>& noise, const Var<T>& strength) {
  int64_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (noise.ndim() != 2 || noise.shape[0] != H || noise.shape[1] != W)
    throw std::runtime_error("add_noise: noise shape mismatch");
  if (strength.numel() != 1) throw std::runtime_error("add_noise: strength must be scalar");
  Tensor<T> out = x.val();
  T st = strength.val()[0];
  for (int64_t nc = 0; nc < N * C; ++nc) {
    T* p = out.data() + nc * H * W;
    for (int64_t j = 0; j < H * W; ++j) p[j] += st * noise[j];
  }
  auto n = detail::new_node(std::move(out), {x, strength});
  if (n->needs_grad) {
    auto px = x.ptr(), ps = strength.ptr();
    Node<T>* o = n.get();
    Tensor<T> nz = noise;
    n->backprop = [o, px, ps, nz, N, C, H, W]() {
      if (px->needs_grad) {
        px->ensure_grad();
        for (int64_t i = 0; i < o->grad.numel(); ++i) px->grad[i] += o->grad[i];
      }
      if (ps->needs_grad) {
        ps->ensure_grad();
        T acc = 0;
        for (int64_t nc = 0; nc < N * C; ++nc) {
          const T* g = o->grad.data() + nc * H * W;
          for (int64_t j = 0; j < H * W; ++j) acc += g[j] * nz[j];
        }
        ps->grad[0] += acc;
      }
    };
  }
  return Var<T>(n);
}

}  // namespace ops
}  // namespace cgan
