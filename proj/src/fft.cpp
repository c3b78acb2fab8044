#include "cgan/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace cgan {
namespace fft {

namespace {

bool is_pow2(size_t n) { return n && (n & (n - 1)) == 0; }

void radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<double> u = a[i + j];
        std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Bluestein's algorithm: express the length-n DFT as a convolution and
// evaluate it with a power-of-two FFT of size >= 2n-1.
void bluestein(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  double sign = inverse ? 1.0 : -1.0;

  std::vector<std::complex<double>> w(n);  // chirp: e^{sign*i*pi*k^2/n}
  for (size_t k = 0; k < n; ++k) {
    // k^2 mod 2n avoids precision loss for large k.
    unsigned long long k2 = (static_cast<unsigned long long>(k) * k) % (2ull * n);
    double ang = sign * M_PI * static_cast<double>(k2) / static_cast<double>(n);
    w[k] = std::complex<double>(std::cos(ang), std::sin(ang));
  }

  std::vector<std::complex<double>> x(m, {0.0, 0.0}), y(m, {0.0, 0.0});
  for (size_t k = 0; k < n; ++k) x[k] = a[k] * w[k];
  y[0] = std::conj(w[0]);
  for (size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(w[k]);

  radix2(x, false);
  radix2(y, false);
  for (size_t i = 0; i < m; ++i) x[i] *= y[i];
  radix2(x, true);
  double inv_m = 1.0 / static_cast<double>(m);
  for (size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * w[k];
}

}  // namespace

void transform(std::vector<std::complex<double>>& a, bool inverse) {
  if (a.empty()) throw std::runtime_error("fft: empty input");
  if (a.size() == 1) return;
  if (is_pow2(a.size()))
    radix2(a, inverse);
  else
    bluestein(a, inverse);
}

}  // namespace fft
}  // namespace cgan
