#pragma once

#include "cgan/autodiff.hpp"
#include "cgan/dual.hpp"
#include "cgan/layers.hpp"
#include "cgan/ops.hpp"

namespace cgan {

// Non-saturating generator loss: L_G = -(1/N) Σ log σ(logit) = mean softplus(-logit).
template <class T>
Var<T> generator_loss(const Var<T>& fake_logits) {
  return ops::mean_all(ops::softplus(ops::mul_scalar(fake_logits, T(-1))));
}

// Adversarial part of the discriminator loss:
// (1/N) Σ [softplus(-real) + softplus(fake)].
template <class T>
Var<T> discriminator_adversarial_loss(const Var<T>& real_logits, const Var<T>& fake_logits) {
  Var<T> lr = ops::mean_all(ops::softplus(ops::mul_scalar(real_logits, T(-1))));
  Var<T> lf = ops::mean_all(ops::softplus(fake_logits));
  return ops::add(lr, lf);
}

// Full discriminator objective value with a precomputed R1 penalty value.
// The R1 parameter gradient is produced separately (see r1_penalty_and_backward);
// this composition gives the reported scalar: adv + lambda*r1.
template <class T>
Var<T> discriminator_loss(const Var<T>& real_logits, const Var<T>& fake_logits, T r1,
                          T lambda) {
  return ops::add_scalar(discriminator_adversarial_loss(real_logits, fake_logits),
                         lambda * r1);
}

// Encoder regression loss: (1/N) Σ_j ||q_j - w1_j||².
template <class T>
Var<T> encoder_loss(const Var<T>& q, const Var<T>& w1) {
  if (!(q.shape() == w1.shape()) || q.val().ndim() != 2)
    throw std::runtime_error("encoder_loss: shape mismatch");
  int64_t N = q.shape()[0];
  Var<T> d = ops::sub(q, w1);
  return ops::mul_scalar(ops::sum_all(ops::mul(d, d)), T(1) / static_cast<T>(N));
}

// R1 penalty via forward-over-reverse:
//   pass 1 (parameters frozen): g = ∇_x Σ_j D(x)_j by ordinary backprop;
//   value  = (1/N) Σ ||g||².
//   pass 2 (parameters live): dual forward with tangent u = g gives
//   φ(θ) = <g, ∇_x Σ D_θ>; since ∇_θ ||h(θ)||² = 2 ∇_θ <g, h(θ)>|_{g=h},
//   seeding backward(φ) with grad_scale*2/N accumulates grad_scale * ∇_θ r1
//   into the parameter gradients. grad_scale = 0 skips pass 2.
// The discriminator type must provide forward(Var) and forward_dual(Dual).
template <class T, class D>
T r1_penalty_and_backward(D& disc, ParamList<T>& dparams, const Tensor<T>& real_batch,
                          T grad_scale) {
  int64_t N = real_batch.shape[0];
  std::vector<bool> saved;
  saved.reserve(dparams.size());
  for (auto& p : dparams) {
    saved.push_back(p.p.requires_grad());
    p.p.set_requires_grad(false);
  }
  Tensor<T> g;
  {
    Var<T> x = Var<T>::leaf(real_batch, /*requires_grad=*/true);
    Var<T> logits = disc.forward(x);
    Var<T> total = ops::sum_all(logits);
    if (!total.requires_grad())
      throw std::runtime_error("r1_penalty: gradient unavailable (input not differentiable)");
    backward(total);
    g = x.grad();
  }
  for (size_t i = 0; i < dparams.size(); ++i) dparams[i].p.set_requires_grad(saved[i]);

  T value = 0;
  for (int64_t i = 0; i < g.numel(); ++i) value += g[i] * g[i];
  value /= static_cast<T>(N);

  if (grad_scale != T(0)) {
    Dual<T> x;
    x.v = Var<T>::constant(real_batch);
    x.t = Var<T>::constant(g);
    Dual<T> out = disc.forward_dual(x);
    Var<T> phi = ops::sum_all(out.t);
    if (phi.requires_grad()) backward(phi, grad_scale * T(2) / static_cast<T>(N));
  }
  return value;
}

}  // namespace cgan
