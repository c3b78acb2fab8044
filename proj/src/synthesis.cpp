#include "cgan/synthesis.hpp"

#include <stdexcept>
#include <string>

namespace cgan {

namespace {
bool power_of_two(int64_t x) { return x > 0 && (x & (x - 1)) == 0; }
}  // namespace

void SynthesisConfig::validate() const {
  if (!power_of_two(image_size) || image_size < 16)
    throw std::runtime_error("config: image_size must be a power of two >= 16, got " +
                             std::to_string(image_size));
  if (d_z < 1 || d_style < 1)
    throw std::runtime_error("config: d_z and d_style must be positive");
  if (!power_of_two(style_split_resolution) || style_split_resolution >= image_size)
    throw std::runtime_error(
        "config: style_split_resolution must be a power of two smaller than image_size");
  if (mapping_depth < 1) throw std::runtime_error("config: mapping_depth must be >= 1");
  if (mbstd_group < 1) throw std::runtime_error("config: mbstd_group must be >= 1");
  int64_t prev = INT64_MAX;
  for (int64_t res = 4; res <= image_size; res *= 2) {
    auto it = channels.find(res);
    if (it == channels.end())
      throw std::runtime_error("config: channel schedule missing resolution " +
                               std::to_string(res));
    if (it->second < 1)
      throw std::runtime_error("config: channel count must be positive at resolution " +
                               std::to_string(res));
    if (it->second > prev)
      throw std::runtime_error(
          "config: channel schedule must be nonincreasing with resolution (violated at " +
          std::to_string(res) + ")");
    prev = it->second;
  }
}

std::vector<int64_t> SynthesisConfig::resolutions() const {
  std::vector<int64_t> r;
  for (int64_t res = 4; res <= image_size; res *= 2) r.push_back(res);
  return r;
}

int64_t SynthesisConfig::ch(int64_t res) const {
  auto it = channels.find(res);
  if (it == channels.end())
    throw std::runtime_error("config: no channel entry for resolution " + std::to_string(res));
  return it->second;
}

}  // namespace cgan
