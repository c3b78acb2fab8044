#include "cgan/encoder.hpp"

#include <stdexcept>
#include <string>

namespace cgan {

void EncoderConfig::validate() const {
  if (depths.empty()) throw std::runtime_error("config: encoder depths must be nonempty");
  for (int64_t d : depths)
    if (d < 1) throw std::runtime_error("config: encoder depths must be positive");
  if (d_style < 1) throw std::runtime_error("config: d_style must be positive");
  int64_t s = input_size;
  for (size_t i = 0; i < depths.size(); ++i) {
    if (s % 2 != 0)
      throw std::runtime_error("config: encoder input size " + std::to_string(input_size) +
                               " is not divisible by 2^" + std::to_string(depths.size()) +
                               " (needed for " + std::to_string(depths.size()) + " EMs)");
    s /= 2;
  }
  if (s < 1) throw std::runtime_error("config: too many EMs for the encoder input size");
}

std::vector<int64_t> em_depth_schedule(int64_t n) {
  if (n < 1) throw std::runtime_error("config: EM count must be >= 1");
  std::vector<int64_t> d;
  int64_t cur = 128;
  for (int64_t i = 0; i < n; ++i) {
    d.push_back(cur);
    cur = std::min<int64_t>(cur * 2, 512);
  }
  return d;
}

}  // namespace cgan
