#include "cgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "cgan/image_io.hpp"
#include "cgan/rng.hpp"

namespace cgan {

namespace {

constexpr double kPi = 3.14159265358979323846;

// HSV (h in degrees, s/v in [0,1]) -> RGB in [0,1].
std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  int i = static_cast<int>(h / 60.0) % 6;
  double f = h / 60.0 - std::floor(h / 60.0);
  double p = v * (1.0 - s);
  double q = v * (1.0 - f * s);
  double t = v * (1.0 - (1.0 - f) * s);
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

std::array<double, 3> quantize8(const std::array<double, 3>& c) {
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i)
    out[i] = std::lround(std::clamp(c[i], 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

void check_hue(int hue) {
  if (hue < 0 || hue > 5) throw std::invalid_argument("palette: hue bucket must be in 0..5");
}

// Point-inside test for a shape with center offset (dx, dy), rotation rot,
// and max radial extent R.
bool inside_shape(ShapeClass cls, double rot, double dx, double dy, double R) {
  switch (cls) {
    case ShapeClass::circle:
      return dx * dx + dy * dy <= R * R;
    case ShapeClass::square: {
      double c = std::cos(-rot), s = std::sin(-rot);
      double x = c * dx - s * dy, y = s * dx + c * dy;
      double h = R / std::sqrt(2.0);
      return std::fabs(x) <= h && std::fabs(y) <= h;
    }
    case ShapeClass::triangle: {
      // Equilateral triangle with circumradius R; one vertex points toward
      // -y (up in image coordinates) when rotation = 0.
      double vx[3], vy[3];
      for (int k = 0; k < 3; ++k) {
        double ang = rot - kPi / 2.0 + 2.0 * kPi * k / 3.0;
        vx[k] = R * std::cos(ang);
        vy[k] = R * std::sin(ang);
      }
      double s0 = 0;
      for (int k = 0; k < 3; ++k) {
        int k2 = (k + 1) % 3;
        double cross = (vx[k2] - vx[k]) * (dy - vy[k]) - (vy[k2] - vy[k]) * (dx - vx[k]);
        if (k == 0)
          s0 = cross;
        else if (cross * s0 < 0)
          return false;
      }
      return true;
    }
    default:
      return false;
  }
}

// Exact anti-aliased coverage of one pixel (center offset (dx, dy) from the
// shape center) by 8x8 subsampling -- the same measurement operator the
// renderer uses, applied to pure geometry.
double pixel_coverage(ShapeClass cls, double rot, double dx, double dy, double R) {
  if (dx * dx + dy * dy > (R + 0.71) * (R + 0.71)) return 0.0;
  int hits = 0;
  for (int sy = 0; sy < 8; ++sy)
    for (int sx = 0; sx < 8; ++sx)
      if (inside_shape(cls, rot, dx + (sx + 0.5) / 8.0 - 0.5, dy + (sy + 0.5) / 8.0 - 0.5, R))
        ++hits;
  return hits / 64.0;
}

// Area of each shape divided by R^2 (R = max radial extent): pi, 2, 3*sqrt(3)/4.
constexpr double kAreaOverR2[3] = {kPi, 2.0, 1.29903810567666};
// Rotational symmetry period of each class (circle: any angle works).
constexpr double kRotPeriod[3] = {1.0, kPi / 2.0, 2.0 * kPi / 3.0};
constexpr int kRotSteps[3] = {1, 24, 36};

}  // namespace

const char* shape_name(ShapeClass s) {
  switch (s) {
    case ShapeClass::circle: return "circle";
    case ShapeClass::square: return "square";
    case ShapeClass::triangle: return "triangle";
    default: return "unknown";
  }
}

ShapeClass shape_from_name(const std::string& name) {
  if (name == "circle") return ShapeClass::circle;
  if (name == "square") return ShapeClass::square;
  if (name == "triangle") return ShapeClass::triangle;
  if (name == "unknown") return ShapeClass::unknown;
  throw std::invalid_argument("shape_from_name: unknown shape class '" + name + "'");
}

std::array<double, 3> palette_fg(int hue) {
  check_hue(hue);
  return quantize8(hsv_to_rgb(hue * 60.0, 0.85, 0.95));
}

std::array<double, 3> palette_bg(int hue) {
  check_hue(hue);
  return quantize8(hsv_to_rgb(hue * 60.0, 0.55, 0.45));
}

AttributeRecord sample_attributes(uint64_t seed, uint64_t index) {
  Rng r(mix_seed(seed, index));
  AttributeRecord a;
  a.shape_class = static_cast<ShapeClass>(r.uniform_int(0, 2));
  a.cx = r.uniform(0.2, 0.8);
  a.cy = r.uniform(0.2, 0.8);
  a.size = r.uniform(0.15, 0.35);
  a.rotation = r.uniform(0.0, 2.0 * kPi);
  a.bg_hue = static_cast<int>(r.uniform_int(0, 5));
  // Uniform over the five buckets different from bg_hue.
  a.fg_hue = static_cast<int>((a.bg_hue + r.uniform_int(1, 5)) % 6);
  return a;
}

Tensor<double> render_synthetic(const AttributeRecord& attrs, int image_size) {
  if (image_size < 4) throw std::invalid_argument("render_synthetic: image_size too small");
  if (attrs.shape_class == ShapeClass::unknown)
    throw std::invalid_argument("render_synthetic: record has unknown shape class");
  const int S = image_size;
  const int sub = 8;  // 8x8 coverage supersampling
  const double ox = attrs.cx * S, oy = attrs.cy * S;
  const double R = attrs.size * (S / 2.0);
  auto fg = palette_fg(attrs.fg_hue), bg = palette_bg(attrs.bg_hue);

  Tensor<double> img({3, S, S});
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      // Quick reject: pixel square entirely outside the bounding circle.
      double pcx = x + 0.5 - ox, pcy = y + 0.5 - oy;
      double alpha = 0.0;
      if (pcx * pcx + pcy * pcy <= (R + 0.71) * (R + 0.71)) {
        int hits = 0;
        for (int sy = 0; sy < sub; ++sy)
          for (int sx = 0; sx < sub; ++sx) {
            double px = x + (sx + 0.5) / sub - ox;
            double py = y + (sy + 0.5) / sub - oy;
            if (inside_shape(attrs.shape_class, attrs.rotation, px, py, R)) ++hits;
          }
        alpha = static_cast<double>(hits) / (sub * sub);
      }
      for (int c = 0; c < 3; ++c)
        img[(static_cast<size_t>(c) * S + y) * S + x] = alpha * fg[c] + (1.0 - alpha) * bg[c];
    }
  }
  return img;
}

AttributeRecord extract_attributes_oracle(const Tensor<double>& rgb01) {
  if (rgb01.ndim() != 3 || rgb01.dim(0) != 3 || rgb01.dim(1) != rgb01.dim(2))
    throw std::invalid_argument("extract_attributes_oracle: expected square (3,S,S) image");
  const int S = static_cast<int>(rgb01.dim(1));
  auto px = [&](int y, int x, int c) { return rgb01[(static_cast<size_t>(c) * S + y) * S + x]; };

  AttributeRecord out;
  out.rotation_known = false;
  out.rotation = 0.0;

  // Background hue: modal border-pixel bucket (each border pixel classified
  // to its nearest background palette color).
  int votes[6] = {0};
  auto vote = [&](int y, int x) {
    double best = 1e30;
    int bh = 0;
    for (int h = 0; h < 6; ++h) {
      auto c = palette_bg(h);
      double d = 0;
      for (int k = 0; k < 3; ++k) d += (px(y, x, k) - c[k]) * (px(y, x, k) - c[k]);
      if (d < best) { best = d; bh = h; }
    }
    ++votes[bh];
  };
  for (int x = 0; x < S; ++x) { vote(0, x); vote(S - 1, x); }
  for (int y = 1; y < S - 1; ++y) { vote(y, 0); vote(y, S - 1); }
  out.bg_hue = static_cast<int>(std::max_element(votes, votes + 6) - votes);
  auto bg = palette_bg(out.bg_hue);

  // Foreground hue: among the five other buckets, pick the candidate whose
  // alpha-composite best explains the image (least-squares residual after
  // projecting every pixel onto the bg->fg segment).
  double best_res = 1e300;
  std::vector<double> alpha(static_cast<size_t>(S) * S, 0.0);
  std::vector<double> cand_alpha(alpha.size());
  for (int h = 0; h < 6; ++h) {
    if (h == out.bg_hue) continue;
    auto fg = palette_fg(h);
    double dir[3], len2 = 0;
    for (int k = 0; k < 3; ++k) { dir[k] = fg[k] - bg[k]; len2 += dir[k] * dir[k]; }
    double res = 0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += (px(y, x, k) - bg[k]) * dir[k];
        double a = std::clamp(dot / len2, 0.0, 1.0);
        cand_alpha[static_cast<size_t>(y) * S + x] = a;
        for (int k = 0; k < 3; ++k) {
          double e = px(y, x, k) - (bg[k] + a * dir[k]);
          res += e * e;
        }
      }
    if (res < best_res) {
      best_res = res;
      out.fg_hue = h;
      alpha.swap(cand_alpha);
    }
  }
  // Suppress phantom coverage from 8-bit quantization noise on background
  // pixels (projection noise is < 0.01); real boundary pixels keep their mass.
  for (auto& a : alpha)
    if (a < 0.02) a = 0.0;

  // Coverage mass and centroid.
  double mass = 0, mx = 0, my = 0;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      double a = alpha[static_cast<size_t>(y) * S + x];
      mass += a;
      mx += a * (x + 0.5);
      my += a * (y + 0.5);
    }
  if (mass < 3.0) {  // fewer than ~3 pixels of coverage: nothing to extract
    out.valid = false;
    out.shape_class = ShapeClass::unknown;
    return out;
  }
  double cx = mx / mass, cy = my / mass;
  out.cx = cx / S;
  out.cy = cy / S;

  // Shape class by template fit: for each class, the coverage mass fixes the
  // radial extent R exactly (area = kAreaOverR2 * R^2), the centroid fixes
  // the position, and rotation is scanned over the class's symmetry period.
  // The winning class minimizes the L2 distance between the measured coverage
  // map and the ideal anti-aliased coverage map. Unlike scalar moment
  // features, this stays reliable at radii of only a few pixels.
  int best_cls = 0;
  double best_fit = 1e300;
  for (int c = 0; c < 3; ++c) {
    double R = std::sqrt(mass / kAreaOverR2[c]);
    int half = static_cast<int>(std::ceil(R + 2.0));
    int x_lo = std::max(0, static_cast<int>(cx) - half);
    int x_hi = std::min(S - 1, static_cast<int>(cx) + half);
    int y_lo = std::max(0, static_cast<int>(cy) - half);
    int y_hi = std::min(S - 1, static_cast<int>(cy) + half);
    // Measured coverage outside the template window counts fully against the
    // candidate (its ideal coverage there is zero).
    double outside = 0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        if (y < y_lo || y > y_hi || x < x_lo || x > x_hi) {
          double a = alpha[static_cast<size_t>(y) * S + x];
          outside += a * a;
        }
    auto cls = static_cast<ShapeClass>(c);
    for (int t = 0; t < kRotSteps[c]; ++t) {
      double rot = kRotPeriod[c] * t / kRotSteps[c];
      double res = outside;
      for (int y = y_lo; y <= y_hi && res < best_fit; ++y)
        for (int x = x_lo; x <= x_hi; ++x) {
          double ideal = pixel_coverage(cls, rot, x + 0.5 - cx, y + 0.5 - cy, R);
          double e = alpha[static_cast<size_t>(y) * S + x] - ideal;
          res += e * e;
        }
      if (res < best_fit) { best_fit = res; best_cls = c; }
    }
  }
  out.shape_class = static_cast<ShapeClass>(best_cls);

  // Size from coverage area and the class-specific area/R^2 ratio.
  double R = std::sqrt(mass / kAreaOverR2[best_cls]);
  out.size = R / (S / 2.0);
  out.valid = true;
  return out;
}

// Center-crop to square, area-average resample (exact box weights) to
// image_size, map to [-1,1].
static Tensor<float> crop_resize_pm1(const ImageU8& img, int image_size) {
  int side = std::min(img.width, img.height);
  int x0 = (img.width - side) / 2, y0 = (img.height - side) / 2;
  const int S = image_size;
  Tensor<float> t({3, S, S});
  double scale = static_cast<double>(side) / S;
  for (int c = 0; c < 3; ++c)
    for (int oy = 0; oy < S; ++oy)
      for (int ox = 0; ox < S; ++ox) {
        double ys = oy * scale, ye = (oy + 1) * scale;
        double xs = ox * scale, xe = (ox + 1) * scale;
        double acc = 0;
        for (int yy = static_cast<int>(ys); yy < static_cast<int>(std::ceil(ye)); ++yy) {
          double wy = std::min<double>(ye, yy + 1) - std::max<double>(ys, yy);
          if (wy <= 0) continue;
          for (int xx = static_cast<int>(xs); xx < static_cast<int>(std::ceil(xe)); ++xx) {
            double wx = std::min<double>(xe, xx + 1) - std::max<double>(xs, xx);
            if (wx <= 0) continue;
            acc += wy * wx *
                   img.at(std::min(y0 + yy, img.height - 1), std::min(x0 + xx, img.width - 1), c);
          }
        }
        t[(static_cast<size_t>(c) * S + oy) * S + ox] =
            static_cast<float>(acc / (scale * scale) / 255.0 * 2.0 - 1.0);
      }
  return t;
}

Tensor<float> load_image_pm1(const std::string& path, int image_size) {
  return crop_resize_pm1(read_image(path), image_size);
}

Dataset load_dataset(const DatasetSpec& spec) {
  Dataset ds;
  if (spec.source == DatasetSpec::Source::synthetic) {
    if (spec.count < 1) throw std::invalid_argument("load_dataset: synthetic count must be >= 1");
    ds.images.reserve(spec.count);
    ds.attrs.reserve(spec.count);
    for (int64_t i = 0; i < spec.count; ++i) {
      AttributeRecord a = sample_attributes(spec.seed, static_cast<uint64_t>(i));
      Tensor<double> img = render_synthetic(a, spec.image_size);
      Tensor<float> t({3, spec.image_size, spec.image_size});
      for (size_t k = 0; k < t.v.size(); ++k)
        t[k] = static_cast<float>(img[k] * 2.0 - 1.0);
      ds.images.push_back(std::move(t));
      ds.attrs.push_back(a);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%05lld", static_cast<long long>(i));
      ds.names.emplace_back(buf);
    }
    return ds;
  }

  namespace fs = std::filesystem;
  if (!fs::is_directory(spec.path))
    throw std::invalid_argument("load_dataset: '" + spec.path + "' is not a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(spec.path)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    ImageU8 img;
    try {
      img = read_image(f);
    } catch (const std::exception& ex) {
      std::cerr << "warning: skipping unreadable image '" << f << "': " << ex.what() << "\n";
      continue;
    }
    ds.images.push_back(crop_resize_pm1(img, spec.image_size));
    ds.names.push_back(fs::path(f).filename().string());
  }
  if (ds.images.empty())
    throw std::invalid_argument("load_dataset: no decodable images in '" + spec.path + "'");
  return ds;
}

void write_synthetic_dataset(const std::string& dir, int64_t count, uint64_t seed, int image_size) {
  if (count < 1) throw std::invalid_argument("write_synthetic_dataset: count must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream csv(dir + "/attributes.csv");
  if (!csv) throw std::runtime_error("write_synthetic_dataset: cannot write to '" + dir + "'");
  csv << "index,shape_class,cx,cy,size,rotation,fg_hue,bg_hue\n";
  char name[32];
  for (int64_t i = 0; i < count; ++i) {
    AttributeRecord a = sample_attributes(seed, static_cast<uint64_t>(i));
    Tensor<double> img = render_synthetic(a, image_size);
    std::snprintf(name, sizeof name, "%05lld.png", static_cast<long long>(i));
    write_png(dir + "/" + name, unit_to_image(img));
    char row[256];
    std::snprintf(row, sizeof row, "%lld,%s,%.8f,%.8f,%.8f,%.8f,%d,%d\n",
                  static_cast<long long>(i), shape_name(a.shape_class), a.cx, a.cy, a.size,
                  a.rotation, a.fg_hue, a.bg_hue);
    csv << row;
  }
}

std::vector<AttributeRecord> load_attributes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_attributes_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_attributes_csv: empty file");
  if (line != "index,shape_class,cx,cy,size,rotation,fg_hue,bg_hue")
    throw std::runtime_error("load_attributes_csv: unexpected header '" + line + "'");
  std::vector<AttributeRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    AttributeRecord a;
    std::getline(ss, field, ',');  // index (implicit by order)
    std::getline(ss, field, ',');
    a.shape_class = shape_from_name(field);
    std::getline(ss, field, ',');
    a.cx = std::stod(field);
    std::getline(ss, field, ',');
    a.cy = std::stod(field);
    std::getline(ss, field, ',');
    a.size = std::stod(field);
    std::getline(ss, field, ',');
    a.rotation = std::stod(field);
    std::getline(ss, field, ',');
    a.fg_hue = std::stoi(field);
    if (!std::getline(ss, field, ','))
      throw std::runtime_error("load_attributes_csv: malformed row '" + line + "'");
    a.bg_hue = std::stoi(field);
    out.push_back(a);
  }
  return out;
}

}  // namespace cgan
