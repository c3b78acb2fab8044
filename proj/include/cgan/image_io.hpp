#pragma once
// 8-bit RGB image I/O (PNG/JPEG) and conversions to/from model tensors.
#include <cstdint>
#include <string>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

// Interleaved 8-bit RGB, row-major, top-left origin.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // size = width * height * 3

  uint8_t& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

// PNG writing uses pinned encoder settings (fixed compression level, no
// ancillary chunks) so identical pixels produce identical files.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);
ImageU8 read_jpeg(const std::string& path);
// Dispatch by extension (.png/.jpg/.jpeg, case-insensitive). Throws on
// unknown extension or undecodable content.
ImageU8 read_image(const std::string& path);

// (3,H,W) in [-1,1]  <->  8-bit RGB. 0 -> -1.0 and 255 -> +1.0 exactly;
// export rounds to nearest and clamps, making import(export(t)) idempotent
// at 8-bit precision.
Tensor<float> image_to_pm1(const ImageU8& img);
ImageU8 pm1_to_image(const Tensor<float>& t);
// (3,H,W) in [0,1] <-> 8-bit RGB (same rounding rules).
Tensor<double> image_to_unit(const ImageU8& img);
ImageU8 unit_to_image(const Tensor<double>& t);

// Tile a batch (N,3,H,W) in [-1,1] into a rows x cols grid with a 2-px black
// gutter. rows*cols must be >= N; missing cells stay black.
ImageU8 make_grid(const Tensor<float>& batch, int rows, int cols);

}  // namespace cgan
