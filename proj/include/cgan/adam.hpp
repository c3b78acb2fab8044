#pragma once

#include <cmath>
#include <vector>

#include "cgan/layers.hpp"

namespace cgan {

// Adam with per-group learning-rate factors (used to slow the mapping
// network). Single-threaded updates in registration order: deterministic.
template <class T>
class Adam {
 public:
  struct Group {
    ParamList<T> params;
    T lr_factor = 1;
  };

  void init(std::vector<Group> groups, T lr, T beta1, T beta2, T eps = T(1e-8)) {
    groups_ = std::move(groups);
    lr_ = lr;
    beta1_ = beta1;
    beta2_ = beta2;
    eps_ = eps;
    t_ = 0;
    slots_.clear();
    for (auto& g : groups_)
      for (auto& p : g.params)
        slots_.push_back({Tensor<T>(p.p.shape()), Tensor<T>(p.p.shape())});
  }

  void zero_grad() {
    for (auto& g : groups_)
      for (auto& p : g.params) p.p.zero_grad();
  }

  void step() {
    ++t_;
    T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    size_t s = 0;
    for (auto& g : groups_) {
      T lr = lr_ * g.lr_factor;
      for (auto& np : g.params) {
        Tensor<T>& m = slots_[s].m;
        Tensor<T>& v = slots_[s].v;
        ++s;
        Tensor<T>& grad = np.p.grad();
        Tensor<T>& val = np.p.val();
        for (int64_t i = 0; i < val.numel(); ++i) {
          T gi = grad[i];
          m[i] = beta1_ * m[i] + (T(1) - beta1_) * gi;
          v[i] = beta2_ * v[i] + (T(1) - beta2_) * gi * gi;
          T mh = m[i] / bc1;
          T vh = v[i] / bc2;
          val[i] -= lr * mh / (std::sqrt(vh) + eps_);
        }
      }
    }
  }

  int64_t steps() const { return t_; }

 private:
  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<Group> groups_;
  std::vector<Slot> slots_;
  T lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
  int64_t t_ = 0;
};

// Exponential moving average of a parameter list. Shadows are plain tensors
// ordered like the source list.
template <class T>
struct EmaState {
  std::vector<std::string> names;
  std::vector<Tensor<T>> shadow;
  T decay = T(0.999);

  void init(const ParamList<T>& live, T decay_) {
    decay = decay_;
    names.clear();
    shadow.clear();
    for (auto& p : live) {
      names.push_back(p.name);
      shadow.push_back(p.p.val());
    }
  }

  void update(const ParamList<T>& live) {
    if (live.size() != shadow.size()) throw std::runtime_error("ema_update: size mismatch");
    for (size_t i = 0; i < shadow.size(); ++i) {
      Tensor<T>& s = shadow[i];
      const Tensor<T>& l = live[i].p.val();
      if (!s.same_shape(l)) throw std::runtime_error("ema_update: shape mismatch at " + names[i]);
      for (int64_t j = 0; j < s.numel(); ++j)
        s[j] = decay * s[j] + (T(1) - decay) * l[j];
    }
  }

  // Copy shadows into a parameter list (e.g. a sampling copy of the models).
  void apply_to(ParamList<T>& target) const {
    if (target.size() != shadow.size()) throw std::runtime_error("ema apply: size mismatch");
    for (size_t i = 0; i < shadow.size(); ++i) target[i].p.val() = shadow[i];
  }
};

}  // namespace cgan
