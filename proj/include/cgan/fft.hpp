#pragma once

#include <complex>
#include <vector>

namespace cgan {
namespace fft {

// In-place complex FFT of arbitrary length (iterative radix-2 for powers of
// two, Bluestein otherwise). inverse=true uses the e^{+i...} kernel WITHOUT
// the 1/N normalization — callers apply their own convention.
void transform(std::vector<std::complex<double>>& a, bool inverse);

}  // namespace fft
}  // namespace cgan
