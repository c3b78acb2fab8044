#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

// 2-d spectrum with an explicit "DC moved to center" flag. All spectral math
// is double precision regardless of the model's precision.
struct Spectrum {
  int64_t M = 0, N = 0;
  std::vector<std::complex<double>> data;  // row-major (M,N)
  bool centered = false;

  std::complex<double>& at(int64_t u, int64_t v) { return data[static_cast<size_t>(u * N + v)]; }
  const std::complex<double>& at(int64_t u, int64_t v) const {
    return data[static_cast<size_t>(u * N + v)];
  }
};

struct FilterSpec {
  enum class Mode { none, low, high };
  enum class Combiner { band_and, band_or };
  Mode mode = Mode::low;
  int64_t cutoff = 5;
  Combiner combiner = Combiner::band_and;

  static Mode mode_from_string(const std::string& s);
  static std::string mode_to_string(Mode m);
  static Combiner combiner_from_string(const std::string& s);
  static std::string combiner_to_string(Combiner c);

  void validate() const {
    if (cutoff < 0) throw std::invalid_argument("filter: cutoff must be >= 0");
  }
};

inline constexpr std::array<double, 3> kDefaultLuma = {0.299, 0.587, 0.114};

// (3,H,W) RGB in [0,1] -> (H,W) intensity via the luma weighted sum.
Tensor<double> to_intensity(const Tensor<double>& rgb, const std::array<double, 3>& luma);

// 2x2 block mean; both sides must be even.
Tensor<double> downsample_half(const Tensor<double>& x);

// Forward DFT: X(u,v) = Σ_m Σ_n x(m,n) e^{-j2π(um/M + vn/N)}.
Spectrum dft2(const Tensor<double>& x);

// Roll so the DC bin lands at (floor(M/2), floor(N/2)).
Spectrum shift_center(const Spectrum& s);

// Centered band mask per the low/high definitions; mode none is identity.
Spectrum band_filter(const Spectrum& s, const FilterSpec& f);

// Inverse DFT with 1/(MN) normalization; returns the real part. A centered
// spectrum is un-rolled internally before inversion. The maximum absolute
// imaginary residue is written to *imag_residue when provided; residues above
// 1e-6 of the max output magnitude print a numeric-symmetry warning.
Tensor<double> idft2(const Spectrum& s, double* imag_residue = nullptr);

// Full pipeline: to_intensity -> downsample_half -> dft2 -> shift_center ->
// band_filter -> idft2. Output side lengths are half the input's.
Tensor<double> frequency_refine(const Tensor<double>& rgb, const FilterSpec& f,
                                const std::array<double, 3>& luma = kDefaultLuma);

}  // namespace cgan
