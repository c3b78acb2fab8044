#pragma once
// Shared helpers for the unit tests: finite-difference gradient checking and
// tolerance predicates used across modules.

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cgan/autodiff.hpp"
#include "cgan/rng.hpp"
#include "cgan/tensor.hpp"

namespace testutil {

// |a-b| <= tol * max(|a|, |b|, floor). The floor keeps near-zero pairs from
// demanding impossible relative agreement.
inline bool rel_close(double a, double b, double tol, double floor = 1e-3) {
  double scale = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) <= tol * scale;
}

inline double max_abs_diff(const cgan::Tensor<double>& a, const cgan::Tensor<double>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Central finite difference of `value()` w.r.t. one scalar slot.
inline double fd_slot(const std::function<double()>& value, double& slot, double h) {
  double orig = slot;
  slot = orig + h;
  double up = value();
  slot = orig - h;
  double down = value();
  slot = orig;
  return (up - down) / (2 * h);
}

struct GradCheckResult {
  double worst_rel = 0;
  std::string worst_at;
  int64_t checked = 0;
};

// Compares an already-populated analytic gradient tensor against central
// finite differences of `value()`, probing at most `max_coords` coordinates
// (deterministically chosen). `theta` must be the same storage the value
// function reads.
inline GradCheckResult fd_check_tensor(const std::function<double()>& value,
                                       cgan::Tensor<double>& theta,
                                       const cgan::Tensor<double>& analytic,
                                       const std::string& label, int64_t max_coords,
                                       uint64_t seed, double h = 1e-5) {
  GradCheckResult r;
  cgan::Rng rng(seed);
  int64_t n = theta.numel();
  std::vector<int64_t> coords;
  if (n <= max_coords) {
    for (int64_t i = 0; i < n; ++i) coords.push_back(i);
  } else {
    for (int64_t i = 0; i < max_coords; ++i) coords.push_back(rng.uniform_int(0, n - 1));
  }
  for (int64_t c : coords) {
    double step = h * std::max(1.0, std::fabs(theta[c]));
    double fd = fd_slot(value, theta.data()[c], step);
    double ad = analytic[c];
    double scale = std::max({std::fabs(fd), std::fabs(ad), 1e-3});
    double rel = std::fabs(fd - ad) / scale;
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_at = label + "[" + std::to_string(c) + "]";
    }
    ++r.checked;
  }
  return r;
}

}  // namespace testutil
