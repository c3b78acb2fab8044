#include "cgan/freqsel.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cgan/fft.hpp"

namespace cgan {

FilterSpec::Mode FilterSpec::mode_from_string(const std::string& s) {
  if (s == "none") return Mode::none;
  if (s == "low") return Mode::low;
  if (s == "high") return Mode::high;
  throw std::runtime_error("filter: unknown mode '" + s + "' (expected none|low|high)");
}
std::string FilterSpec::mode_to_string(Mode m) {
  switch (m) {
    case Mode::none: return "none";
    case Mode::low: return "low";
    case Mode::high: return "high";
  }
  return "?";
}
FilterSpec::Combiner FilterSpec::combiner_from_string(const std::string& s) {
  if (s == "and") return Combiner::band_and;
  if (s == "or") return Combiner::band_or;
  throw std::runtime_error("filter: unknown combiner '" + s + "' (expected and|or)");
}
std::string FilterSpec::combiner_to_string(Combiner c) {
  return c == Combiner::band_and ? "and" : "or";
}

Tensor<double> to_intensity(const Tensor<double>& rgb, const std::array<double, 3>& luma) {
  if (rgb.ndim() != 3 || rgb.shape[0] != 3)
    throw std::runtime_error("to_intensity: expected (3,H,W) RGB input, got " +
                             shape_str(rgb.shape));
  double lsum = luma[0] + luma[1] + luma[2];
  if (luma[0] < 0 || luma[1] < 0 || luma[2] < 0 || std::abs(lsum - 1.0) > 1e-6)
    throw std::runtime_error("to_intensity: luma weights must be nonnegative and sum to 1");
  int64_t H = rgb.shape[1], W = rgb.shape[2];
  Tensor<double> out({H, W});
  const double* r = rgb.data();
  const double* g = rgb.data() + H * W;
  const double* b = rgb.data() + 2 * H * W;
  for (int64_t i = 0; i < H * W; ++i) out[i] = luma[0] * r[i] + luma[1] * g[i] + luma[2] * b[i];
  return out;
}

Tensor<double> downsample_half(const Tensor<double>& x) {
  if (x.ndim() != 2) throw std::runtime_error("downsample_half: expected rank-2 input");
  int64_t M = x.shape[0], N = x.shape[1];
  if (M % 2 || N % 2)
    throw std::runtime_error("downsample_half: dimensions must be even, got " +
                             shape_str(x.shape));
  Tensor<double> out({M / 2, N / 2});
  for (int64_t i = 0; i < M / 2; ++i)
    for (int64_t j = 0; j < N / 2; ++j) {
      const double* p = x.data() + (2 * i) * N + 2 * j;
      out.at2(i, j) = 0.25 * (p[0] + p[1] + p[N] + p[N + 1]);
    }
  return out;
}

Spectrum dft2(const Tensor<double>& x) {
  if (x.ndim() != 2) throw std::runtime_error("dft2: expected rank-2 input");
  Spectrum s;
  s.M = x.shape[0];
  s.N = x.shape[1];
  s.centered = false;
  s.data.resize(static_cast<size_t>(s.M * s.N));
  for (int64_t i = 0; i < s.M * s.N; ++i) s.data[static_cast<size_t>(i)] = {x[i], 0.0};
  // Row-column decomposition.
  std::vector<std::complex<double>> buf;
  for (int64_t m = 0; m < s.M; ++m) {
    buf.assign(s.data.begin() + m * s.N, s.data.begin() + (m + 1) * s.N);
    fft::transform(buf, false);
    std::copy(buf.begin(), buf.end(), s.data.begin() + m * s.N);
  }
  buf.resize(static_cast<size_t>(s.M));
  for (int64_t n = 0; n < s.N; ++n) {
    for (int64_t m = 0; m < s.M; ++m) buf[static_cast<size_t>(m)] = s.at(m, n);
    fft::transform(buf, false);
    for (int64_t m = 0; m < s.M; ++m) s.at(m, n) = buf[static_cast<size_t>(m)];
  }
  return s;
}

Spectrum shift_center(const Spectrum& s) {
  if (s.centered) throw std::runtime_error("shift_center: spectrum is already centered");
  Spectrum out;
  out.M = s.M;
  out.N = s.N;
  out.centered = true;
  out.data.resize(s.data.size());
  int64_t rm = s.M / 2, rn = s.N / 2;
  for (int64_t k = 0; k < s.M; ++k)
    for (int64_t l = 0; l < s.N; ++l) out.at(k, l) = s.at((k + rm) % s.M, (l + rn) % s.N);
  return out;
}

Spectrum band_filter(const Spectrum& s, const FilterSpec& f) {
  if (!s.centered) throw std::runtime_error("band_filter: spectrum must be centered");
  int64_t maxdim = std::max(s.M, s.N);
  int64_t limit = (maxdim + 1) / 2;
  if (f.cutoff < 0 || f.cutoff > limit)
    throw std::runtime_error("band_filter: cutoff " + std::to_string(f.cutoff) +
                             " out of range [0," + std::to_string(limit) + "]");
  Spectrum out = s;
  if (f.mode == FilterSpec::Mode::none) return out;
  int64_t uc = s.M / 2, vc = s.N / 2, b = f.cutoff;
  for (int64_t u = 0; u < s.M; ++u)
    for (int64_t v = 0; v < s.N; ++v) {
      int64_t du = std::llabs(u - uc), dv = std::llabs(v - vc);
      bool keep;
      if (f.mode == FilterSpec::Mode::low) {
        keep = du <= b && dv <= b;
      } else {
        keep = (f.combiner == FilterSpec::Combiner::band_and) ? (du >= b && dv >= b)
                                                              : (du >= b || dv >= b);
      }
      if (!keep) out.at(u, v) = {0.0, 0.0};
    }
  return out;
}

Tensor<double> idft2(const Spectrum& s_in, double* imag_residue) {
  const Spectrum* sp = &s_in;
  Spectrum unrolled;
  if (s_in.centered) {
    // Invert the center roll before applying the inverse transform.
    unrolled.M = s_in.M;
    unrolled.N = s_in.N;
    unrolled.centered = false;
    unrolled.data.resize(s_in.data.size());
    int64_t rm = s_in.M / 2, rn = s_in.N / 2;
    for (int64_t u = 0; u < s_in.M; ++u)
      for (int64_t v = 0; v < s_in.N; ++v)
        unrolled.at(u, v) = s_in.at(((u - rm) % s_in.M + s_in.M) % s_in.M,
                                    ((v - rn) % s_in.N + s_in.N) % s_in.N);
    sp = &unrolled;
  }
  const Spectrum& s = *sp;
  std::vector<std::complex<double>> work = s.data;
  std::vector<std::complex<double>> buf;
  for (int64_t m = 0; m < s.M; ++m) {
    buf.assign(work.begin() + m * s.N, work.begin() + (m + 1) * s.N);
    fft::transform(buf, true);
    std::copy(buf.begin(), buf.end(), work.begin() + m * s.N);
  }
  buf.resize(static_cast<size_t>(s.M));
  for (int64_t n = 0; n < s.N; ++n) {
    for (int64_t m = 0; m < s.M; ++m) buf[static_cast<size_t>(m)] = work[static_cast<size_t>(m * s.N + n)];
    fft::transform(buf, true);
    for (int64_t m = 0; m < s.M; ++m) work[static_cast<size_t>(m * s.N + n)] = buf[static_cast<size_t>(m)];
  }
  double inv = 1.0 / static_cast<double>(s.M * s.N);
  Tensor<double> out({s.M, s.N});
  double max_im = 0, max_mag = 0;
  for (int64_t i = 0; i < s.M * s.N; ++i) {
    std::complex<double> z = work[static_cast<size_t>(i)] * inv;
    out[i] = z.real();
    max_im = std::max(max_im, std::abs(z.imag()));
    max_mag = std::max(max_mag, std::abs(z));
  }
  if (imag_residue) *imag_residue = max_im;
  if (max_mag > 0 && max_im > 1e-6 * max_mag)
    std::fprintf(stderr,
                 "warning: idft2 imaginary residue %.3e exceeds 1e-6 of max magnitude %.3e\n",
                 max_im, max_mag);
  return out;
}

Tensor<double> frequency_refine(const Tensor<double>& rgb, const FilterSpec& f,
                                const std::array<double, 3>& luma) {
  if (rgb.ndim() != 3 || rgb.shape[1] % 2 || rgb.shape[2] % 2)
    throw std::runtime_error("frequency_refine: image sides must be even, got " +
                             shape_str(rgb.shape));
  Tensor<double> x = downsample_half(to_intensity(rgb, luma));
  Spectrum spec = shift_center(dft2(x));
  Spectrum masked = band_filter(spec, f);
  return idft2(masked);
}

}  // namespace cgan
