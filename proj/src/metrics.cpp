#include "cgan/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "cgan/freqsel.hpp"

namespace cgan {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd to_eigen(const Tensor<double>& t) {
  MatrixXd m(t.dim(0), t.dim(1));
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j) m(i, j) = t[static_cast<size_t>(i * t.dim(1) + j)];
  return m;
}

void check_finite(const FeatureSet& fs, const char* which) {
  for (double v : fs.features.v)
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string("fid: non-finite value in ") + which + " features");
}

}  // namespace

Tensor<double> pixel_descriptor(const Tensor<float>& img_pm1) {
  if (img_pm1.ndim() != 3 || img_pm1.dim(0) != 3)
    throw std::invalid_argument("pixel_descriptor: expected (3,H,W) image");
  const int64_t H = img_pm1.dim(1), W = img_pm1.dim(2);
  const int64_t G = 16;  // 16x16 grayscale grid -> 256-d descriptor
  Tensor<double> out({G * G});
  // Luma on [0,1] values, then area mean over each output cell.
  for (int64_t gy = 0; gy < G; ++gy)
    for (int64_t gx = 0; gx < G; ++gx) {
      double ys = static_cast<double>(gy) * H / G, ye = static_cast<double>(gy + 1) * H / G;
      double xs = static_cast<double>(gx) * W / G, xe = static_cast<double>(gx + 1) * W / G;
      double acc = 0, area = 0;
      for (int64_t y = static_cast<int64_t>(ys); y < static_cast<int64_t>(std::ceil(ye)); ++y) {
        double wy = std::min<double>(ye, static_cast<double>(y + 1)) - std::max<double>(ys, static_cast<double>(y));
        if (wy <= 0) continue;
        for (int64_t x = static_cast<int64_t>(xs); x < static_cast<int64_t>(std::ceil(xe)); ++x) {
          double wx = std::min<double>(xe, static_cast<double>(x + 1)) - std::max<double>(xs, static_cast<double>(x));
          if (wx <= 0) continue;
          double lum = 0;
          for (int c = 0; c < 3; ++c)
            lum += kDefaultLuma[static_cast<size_t>(c)] *
                   ((static_cast<double>(img_pm1[(static_cast<size_t>(c) * H + y) * W + x]) + 1.0) / 2.0);
          acc += wy * wx * lum;
          area += wy * wx;
        }
      }
      out[static_cast<size_t>(gy * G + gx)] = acc / area;
    }
  return out;
}

PcaBasis fit_pca(const std::vector<Tensor<double>>& descriptors, int64_t k) {
  if (descriptors.empty()) throw std::invalid_argument("fit_pca: no descriptors");
  const int64_t n = static_cast<int64_t>(descriptors.size());
  const int64_t d = descriptors[0].numel();
  if (k < 1 || k > d) throw std::invalid_argument("fit_pca: k must lie in [1, d]");
  MatrixXd X(n, d);
  for (int64_t i = 0; i < n; ++i) {
    if (descriptors[static_cast<size_t>(i)].numel() != d)
      throw std::invalid_argument("fit_pca: inconsistent descriptor widths");
    for (int64_t j = 0; j < d; ++j) X(i, j) = descriptors[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  VectorXd mean = X.colwise().mean();
  X.rowwise() -= mean.transpose();
  MatrixXd cov = (X.transpose() * X) / std::max<int64_t>(1, n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigen decomposition failed");

  PcaBasis basis;
  basis.mean = Tensor<double>({d});
  for (int64_t j = 0; j < d; ++j) basis.mean[static_cast<size_t>(j)] = mean(j);
  basis.components = Tensor<double>({k, d});
  // Eigenvalues ascend in Eigen's solver; take the top k descending. Sign
  // convention: the entry with the largest magnitude is made positive
  // (first such index on ties) so the basis is deterministic.
  for (int64_t r = 0; r < k; ++r) {
    VectorXd v = eig.eigenvectors().col(d - 1 - r);
    int64_t arg = 0;
    double best = -1;
    for (int64_t j = 0; j < d; ++j)
      if (std::fabs(v(j)) > best) { best = std::fabs(v(j)); arg = j; }
    if (v(arg) < 0) v = -v;
    for (int64_t j = 0; j < d; ++j) basis.components[static_cast<size_t>(r * d + j)] = v(j);
  }
  return basis;
}

FeatureSet feature_embed(const std::vector<Tensor<float>>& images_pm1, const PcaBasis& basis,
                         const std::string& extractor_id) {
  const int64_t n = static_cast<int64_t>(images_pm1.size());
  const int64_t d_in = basis.mean.numel();
  const int64_t k = basis.components.dim(0);
  if (d_in == 0 || k == 0)
    throw std::runtime_error("feature_embed: PCA basis is empty (fit it on the real set first)");
  FeatureSet fs;
  fs.extractor_id = extractor_id;
  fs.features = Tensor<double>({n, k});
  for (int64_t i = 0; i < n; ++i) {
    Tensor<double> desc = pixel_descriptor(images_pm1[static_cast<size_t>(i)]);
    if (desc.numel() != d_in)
      throw std::runtime_error("feature_embed: descriptor width " + std::to_string(desc.numel()) +
                               " does not match the PCA basis width " + std::to_string(d_in));
    for (int64_t r = 0; r < k; ++r) {
      double acc = 0;
      for (int64_t j = 0; j < d_in; ++j)
        acc += basis.components[static_cast<size_t>(r * d_in + j)] *
               (desc[static_cast<size_t>(j)] - basis.mean[static_cast<size_t>(j)]);
      fs.features[static_cast<size_t>(i * k + r)] = acc;
    }
  }
  return fs;
}

double fid(const FeatureSet& real, const FeatureSet& fake) {
  if (real.degenerate() || fake.degenerate())
    throw std::invalid_argument(
        "fid: degenerate feature set (need n_samples >= d_feat + 1; have real " +
        std::to_string(real.n()) + ", fake " + std::to_string(fake.n()) + " at d " +
        std::to_string(real.d()) + ")");
  if (real.d() != fake.d()) throw std::invalid_argument("fid: feature widths differ");
  check_finite(real, "real");
  check_finite(fake, "fake");

  MatrixXd R = to_eigen(real.features), F = to_eigen(fake.features);
  VectorXd mu_r = R.colwise().mean(), mu_f = F.colwise().mean();
  R.rowwise() -= mu_r.transpose();
  F.rowwise() -= mu_f.transpose();
  MatrixXd cov_r = (R.transpose() * R) / static_cast<double>(real.n() - 1);
  MatrixXd cov_f = (F.transpose() * F) / static_cast<double>(fake.n() - 1);

  // tr((cov_r cov_f)^(1/2)) via the symmetric route: eigenvalues of
  // cov_r^(1/2) cov_f cov_r^(1/2).
  Eigen::SelfAdjointEigenSolver<MatrixXd> er(cov_r);
  if (er.info() != Eigen::Success) throw std::runtime_error("fid: eigen decomposition failed");
  VectorXd lam = er.eigenvalues();
  for (int64_t i = 0; i < lam.size(); ++i) lam(i) = lam(i) > 0 ? std::sqrt(lam(i)) : 0.0;
  MatrixXd sqrt_r = er.eigenvectors() * lam.asDiagonal() * er.eigenvectors().transpose();
  MatrixXd inner = sqrt_r * cov_f * sqrt_r;
  inner = ((inner + inner.transpose()) / 2).eval();  // symmetrize rounding residue
  Eigen::SelfAdjointEigenSolver<MatrixXd> ei(inner);
  if (ei.info() != Eigen::Success) throw std::runtime_error("fid: eigen decomposition failed");
  double tr_sqrt = 0;
  for (int64_t i = 0; i < ei.eigenvalues().size(); ++i) {
    double v = ei.eigenvalues()(i);
    if (v < 1e-8) v = 0;  // clamp eigenvalue dust
    tr_sqrt += std::sqrt(v);
  }
  double value = (mu_r - mu_f).squaredNorm() + cov_r.trace() + cov_f.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, value);
}

double knn_precision(const FeatureSet& real, const FeatureSet& fake, int k) {
  const int64_t nr = real.n(), nf = fake.n(), d = real.d();
  if (k < 1) throw std::invalid_argument("knn_precision: k must be >= 1");
  if (k >= nr)
    throw std::invalid_argument("knn_precision: k (" + std::to_string(k) +
                                ") must be < n_real (" + std::to_string(nr) + ")");
  if (fake.d() != d) throw std::invalid_argument("knn_precision: feature widths differ");

  auto row = [&](const FeatureSet& fs, int64_t i) { return fs.features.data() + i * d; };
  auto dist2 = [&](const double* a, const double* b) {
    double s = 0;
    for (int64_t j = 0; j < d; ++j) {
      double diff = a[j] - b[j];
      s += diff * diff;
    }
    return s;
  };

  // Radius of each real ball: squared distance to the k-th nearest other real.
  std::vector<double> radius2(static_cast<size_t>(nr));
  std::vector<double> dists(static_cast<size_t>(nr - 1));
  for (int64_t i = 0; i < nr; ++i) {
    size_t m = 0;
    for (int64_t j = 0; j < nr; ++j)
      if (j != i) dists[m++] = dist2(row(real, i), row(real, j));
    std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
    radius2[static_cast<size_t>(i)] = dists[static_cast<size_t>(k - 1)];
  }

  int64_t inside = 0;
  for (int64_t j = 0; j < nf; ++j) {
    for (int64_t i = 0; i < nr; ++i)
      if (dist2(row(fake, j), row(real, i)) <= radius2[static_cast<size_t>(i)]) {
        ++inside;
        break;
      }
  }
  return static_cast<double>(inside) / static_cast<double>(nf);
}

AttributeMatchReport attribute_match_rate(const std::vector<AttributeRecord>& guide_attrs,
                                          const std::vector<AttributeRecord>& output_attrs,
                                          const std::vector<std::string>& content_keys,
                                          double continuous_tolerance) {
  if (guide_attrs.size() != output_attrs.size())
    throw std::invalid_argument("attribute_match_rate: sequences have different lengths");
  if (guide_attrs.empty()) throw std::invalid_argument("attribute_match_rate: empty sequences");
  if (content_keys.empty()) throw std::invalid_argument("attribute_match_rate: no keys requested");

  AttributeMatchReport rep;
  rep.pairs = static_cast<int64_t>(guide_attrs.size());
  for (const std::string& key : content_keys) {
    int64_t hits = 0;
    for (size_t i = 0; i < guide_attrs.size(); ++i) {
      const AttributeRecord& a = guide_attrs[i];
      const AttributeRecord& b = output_attrs[i];
      if (!a.valid || !b.valid) continue;  // failure marker counts as mismatch
      bool match;
      if (key == "shape_class")
        match = a.shape_class == b.shape_class;
      else if (key == "fg_hue")
        match = a.fg_hue == b.fg_hue;
      else if (key == "bg_hue")
        match = a.bg_hue == b.bg_hue;
      else if (key == "cx")
        match = std::fabs(a.cx - b.cx) <= continuous_tolerance;
      else if (key == "cy")
        match = std::fabs(a.cy - b.cy) <= continuous_tolerance;
      else if (key == "size")
        match = std::fabs(a.size - b.size) <= continuous_tolerance;
      else
        throw std::invalid_argument("attribute_match_rate: unknown key '" + key +
                                    "' (known: shape_class, fg_hue, bg_hue, cx, cy, size)");
      if (match) ++hits;
    }
    double rate = static_cast<double>(hits) / static_cast<double>(rep.pairs);
    rep.per_key[key] = rate;
    rep.mean += rate;
  }
  rep.mean /= static_cast<double>(content_keys.size());
  return rep;
}

double binomial_tail_p(int64_t successes, int64_t n, double p0) {
  if (n < 1 || successes < 0 || successes > n)
    throw std::invalid_argument("binomial_tail_p: invalid counts");
  if (p0 <= 0 || p0 >= 1) throw std::invalid_argument("binomial_tail_p: p0 must lie in (0,1)");
  // P[X >= successes] summed in log space for numerical range.
  double log_p = std::log(p0), log_q = std::log1p(-p0);
  double tail = 0;
  for (int64_t x = successes; x <= n; ++x) {
    double lc = std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(x + 1)) -
                std::lgamma(static_cast<double>(n - x + 1));
    tail += std::exp(lc + x * log_p + (n - x) * log_q);
  }
  return std::min(1.0, tail);
}

std::pair<double, double> wilson_interval(int64_t successes, int64_t n) {
  if (n < 1) throw std::invalid_argument("wilson_interval: n must be >= 1");
  const double z = 1.959963984540054;  // 97.5th normal percentile
  double phat = static_cast<double>(successes) / static_cast<double>(n);
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (phat + z2 / (2 * n)) / denom;
  double half = z * std::sqrt(phat * (1 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

void MetricReport::set(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  values[key] = buf;
}

void MetricReport::set(const std::string& key, const std::string& v) { values[key] = v; }

std::string MetricReport::to_text() const {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

std::string MetricReport::csv_header() const {
  std::string out;
  for (const auto& [k, v] : values) {
    if (!out.empty()) out += ",";
    out += k;
  }
  return out;
}

std::string MetricReport::csv_row() const {
  std::string out;
  for (const auto& [k, v] : values) {
    if (!out.empty()) out += ",";
    out += v;
  }
  return out;
}

void MetricReport::write(const std::string& path_prefix) const {
  {
    std::ofstream txt(path_prefix + ".txt");
    if (!txt) throw std::runtime_error("MetricReport: cannot write '" + path_prefix + ".txt'");
    txt << to_text();
  }
  std::ofstream csv(path_prefix + ".csv");
  if (!csv) throw std::runtime_error("MetricReport: cannot write '" + path_prefix + ".csv'");
  csv << csv_header() << "\n" << csv_row() << "\n";
}

}  // namespace cgan
