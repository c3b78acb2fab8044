#pragma once
// Distribution metrics (FID, k-NN precision) over deterministic pixel-PCA
// features, attribute match rates, and the flat/CSV metric report.
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cgan/data.hpp"
#include "cgan/tensor.hpp"

namespace cgan {

struct FeatureSet {
  // (n_samples, d_feat), double precision.
  Tensor<double> features{std::vector<int64_t>{0, 0}};
  std::string extractor_id;

  int64_t n() const { return features.dim(0); }
  int64_t d() const { return features.dim(1); }
  // FID needs a full-rank covariance estimate: n >= d + 1.
  bool degenerate() const { return n() < d() + 1; }
};

// PCA basis fit once on the real set and reused for fake (mean + top-k
// eigenvectors with a deterministic sign convention).
struct PcaBasis {
  Tensor<double> mean{std::vector<int64_t>{0}};       // (d_in)
  Tensor<double> components{std::vector<int64_t>{0, 0}};  // (k, d_in), rows orthonormal
};

// Raw per-image descriptor behind "pixel-pca-64": [-1,1] RGB -> [0,1] ->
// luma -> 16x16 area mean -> flattened 256-vector.
Tensor<double> pixel_descriptor(const Tensor<float>& img_pm1);

PcaBasis fit_pca(const std::vector<Tensor<double>>& descriptors, int64_t k);

// Default extractor "pixel-pca-64" (k = 64). The basis must come from
// fit_pca over the REAL set; passing a basis whose input width does not
// match the descriptors is an invalid-state error.
FeatureSet feature_embed(const std::vector<Tensor<float>>& images_pm1, const PcaBasis& basis,
                         const std::string& extractor_id = "pixel-pca-64");

// Frechet distance between Gaussian fits; symmetric eigen route, double
// precision, eigenvalue dust clamped. Throws on degenerate or non-finite
// inputs.
double fid(const FeatureSet& real, const FeatureSet& fake);

// Fraction of fake features inside the union of balls around real features
// (radius = distance to the k-th nearest real neighbor, self excluded).
// Exact O(n^2) computation. Throws if k >= n_real.
double knn_precision(const FeatureSet& real, const FeatureSet& fake, int k = 3);

struct AttributeMatchReport {
  std::map<std::string, double> per_key;  // key -> agreement rate
  double mean = 0.0;
  int64_t pairs = 0;
};

// Per-key agreement over record pairs. Known keys: shape_class, fg_hue,
// bg_hue (exact agreement) and cx, cy, size (within continuous_tolerance).
// Pairs where either record carries the extraction-failure marker count as
// disagreement on every key. Unknown keys or length mismatch throw.
AttributeMatchReport attribute_match_rate(const std::vector<AttributeRecord>& guide_attrs,
                                          const std::vector<AttributeRecord>& output_attrs,
                                          const std::vector<std::string>& content_keys,
                                          double continuous_tolerance = 0.02);

// One-sided exact binomial tail P[X >= successes | n, p0] and the 95% Wilson
// score interval for the observed rate.
double binomial_tail_p(int64_t successes, int64_t n, double p0);
std::pair<double, double> wilson_interval(int64_t successes, int64_t n);

// Flat key/value metric report; serializes as "key = value" lines and as a
// single CSV row (keys sorted, stable).
struct MetricReport {
  std::map<std::string, std::string> values;

  void set(const std::string& key, double v);
  void set(const std::string& key, const std::string& v);
  std::string to_text() const;
  std::string csv_header() const;
  std::string csv_row() const;
  void write(const std::string& path_prefix) const;  // writes .txt and .csv
};

}  // namespace cgan
