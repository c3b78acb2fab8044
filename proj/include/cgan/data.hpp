#pragma once
// Procedural synthetic shape dataset with exact attribute ground truth, the
// attribute-recovery oracle, and folder ingestion for real image datasets.
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cgan/tensor.hpp"

namespace cgan {

enum class ShapeClass { circle = 0, square = 1, triangle = 2, unknown = 3 };
const char* shape_name(ShapeClass s);
ShapeClass shape_from_name(const std::string& name);  // throws on unknown name

struct AttributeRecord {
  ShapeClass shape_class = ShapeClass::unknown;
  double cx = 0.5, cy = 0.5;   // center, fraction of image width/height
  double size = 0.25;          // max radial extent, fraction of half-width
  double rotation = 0.0;       // radians in [0, 2pi)
  int fg_hue = 0, bg_hue = 1;  // hue buckets 0..5 (60 degrees apart)
  bool valid = true;           // false = extraction-failure marker
  bool rotation_known = true;  // the oracle cannot recover rotation
};

// Pure function of (seed, index): independent uniform draws over the field
// ranges; fg_hue is drawn uniformly from the five buckets != bg_hue.
AttributeRecord sample_attributes(uint64_t seed, uint64_t index);

// Flat background + anti-aliased shape (8x8 subpixel coverage). Returns
// (3,S,S) RGB in [0,1]. Deterministic.
Tensor<double> render_synthetic(const AttributeRecord& attrs, int image_size);

// Shared palette: foreground HSV(hue*60, 0.85, 0.95), background
// HSV(hue*60, 0.55, 0.45), quantized to 8-bit and mapped back to [0,1] so the
// reference colors match PNG roundtrips exactly.
std::array<double, 3> palette_fg(int hue);
std::array<double, 3> palette_bg(int hue);

// Attribute recovery from an RGB image in [0,1] (shape (3,S,S)). Background
// hue = modal border-pixel bucket; foreground bucket by residual fit over the
// palette; alpha coverage by projection; shape class from rotation-invariant
// radial moments; rotation reported unknown. No-foreground images return a
// record with valid=false instead of throwing.
AttributeRecord extract_attributes_oracle(const Tensor<double>& rgb01);

struct DatasetSpec {
  enum class Source { folder, synthetic };
  Source source = Source::synthetic;
  std::string path;      // folder source
  int64_t count = 5000;  // synthetic source
  uint64_t seed = 7;
  int image_size = 32;
};

struct Dataset {
  std::vector<Tensor<float>> images;  // each (3,S,S) in [-1,1]
  std::vector<std::string> names;
  std::vector<AttributeRecord> attrs;  // empty when ground truth is unknown
};

// folder: decodable PNG/JPEG files in stable filename order, center-cropped
// to square, resized to image_size, mapped to [-1,1]; unreadable files are
// skipped with a warning; an empty result is an error. synthetic: renders
// `count` records from `seed` in memory.
Dataset load_dataset(const DatasetSpec& spec);

// Single image through the same crop/resample/[-1,1] path as folder loading.
Tensor<float> load_image_pm1(const std::string& path, int image_size);

// Writes %05d.png plus an attributes.csv manifest
// (index,shape_class,cx,cy,size,rotation,fg_hue,bg_hue).
void write_synthetic_dataset(const std::string& dir, int64_t count, uint64_t seed, int image_size);
std::vector<AttributeRecord> load_attributes_csv(const std::string& path);

}  // namespace cgan
