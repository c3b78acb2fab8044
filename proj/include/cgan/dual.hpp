#pragma once

#include "cgan/ops.hpp"

// Forward-over-reverse machinery. A Dual carries a primal value v and a
// directional derivative (tangent) t through the network; both live on the
// ordinary reverse-mode graph, so backpropagating from a function of the
// tangent yields exact parameter gradients of gradient penalties.
//
// Leaky-ReLU masks are treated as constants of the primal values (the map is
// piecewise linear, so this is exact almost everywhere and matches what
// standard double-backprop frameworks compute).

namespace cgan {

template <class T>
struct Dual {
  Var<T> v;  // primal
  Var<T> t;  // tangent
};

namespace ops {

template <class T>
Dual<T> dual_conv2d(const Dual<T>& x, const Var<T>& W, const Var<T>& b, int64_t stride,
                    int64_t pad, T scale) {
  Dual<T> r;
  r.v = conv2d(x.v, W, b, stride, pad, scale);
  r.t = conv2d(x.t, W, Var<T>(), stride, pad, scale);
  return r;
}

template <class T>
Dual<T> dual_linear(const Dual<T>& x, const Var<T>& W, const Var<T>& b, T scale) {
  Dual<T> r;
  r.v = linear(x.v, W, b, scale);
  r.t = linear(x.t, W, Var<T>(), scale);
  return r;
}

template <class T>
Dual<T> dual_leaky_relu(const Dual<T>& x, T slope, T gain) {
  Dual<T> r;
  r.v = leaky_relu(x.v, slope, gain);
  Tensor<T> mask(x.v.shape());
  for (int64_t i = 0; i < mask.numel(); ++i)
    mask[i] = (x.v.val()[i] >= T(0) ? T(1) : slope) * gain;
  r.t = mul(x.t, Var<T>::constant(std::move(mask)));
  return r;
}

template <class T>
Dual<T> dual_avgpool2(const Dual<T>& x) {
  return {avgpool2(x.v), avgpool2(x.t)};
}

template <class T>
Dual<T> dual_add(const Dual<T>& a, const Dual<T>& b) {
  return {add(a.v, b.v), add(a.t, b.t)};
}

template <class T>
Dual<T> dual_mul_scalar(const Dual<T>& a, T c) {
  return {mul_scalar(a.v, c), mul_scalar(a.t, c)};
}

template <class T>
Dual<T> dual_mul(const Dual<T>& a, const Dual<T>& b) {
  Dual<T> r;
  r.v = mul(a.v, b.v);
  r.t = add(mul(a.t, b.v), mul(a.v, b.t));
  return r;
}

template <class T>
Dual<T> dual_sub(const Dual<T>& a, const Dual<T>& b) {
  return {sub(a.v, b.v), sub(a.t, b.t)};
}

template <class T>
Dual<T> dual_sqrt_eps(const Dual<T>& a, T eps) {
  Dual<T> r;
  r.v = sqrt_eps(a.v, eps);
  r.t = mul(a.t, mul_scalar(recip(r.v), T(0.5)));
  return r;
}

template <class T>
Dual<T> dual_reshape(const Dual<T>& a, std::vector<int64_t> shape) {
  return {reshape(a.v, shape), reshape(a.t, shape)};
}

template <class T>
Dual<T> dual_group_mean(const Dual<T>& a, int64_t gs) {
  return {group_mean(a.v, gs), group_mean(a.t, gs)};
}

template <class T>
Dual<T> dual_group_broadcast(const Dual<T>& a, int64_t gs) {
  return {group_broadcast(a.v, gs), group_broadcast(a.t, gs)};
}

template <class T>
Dual<T> dual_mean_chw(const Dual<T>& a) {
  return {mean_chw(a.v), mean_chw(a.t)};
}

template <class T>
Dual<T> dual_broadcast_nchw(const Dual<T>& a, int64_t H, int64_t W) {
  return {broadcast_nchw(a.v, H, W), broadcast_nchw(a.t, H, W)};
}

template <class T>
Dual<T> dual_concat_ch(const Dual<T>& a, const Dual<T>& b) {
  return {concat_ch(a.v, b.v), concat_ch(a.t, b.t)};
}

template <class T>
Dual<T> dual_add_channel_bias(const Dual<T>& x, const Var<T>& b) {
  return {add_channel_bias(x.v, b), x.t};
}

}  // namespace ops
}  // namespace cgan
