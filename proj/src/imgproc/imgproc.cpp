#include "her2/imgproc.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "her2/error.hpp"

namespace her2::img {

Hsb rgb_to_hsb(Rgb p) noexcept {
  const int mx = std::max({p.r, p.g, p.b});
  const int mn = std::min({p.r, p.g, p.b});
  const double d = mx - mn;
  Hsb out;
  out.brightness = mx / 255.0;
  out.saturation = mx == 0 ? 0.0 : d / mx;
  if (d == 0) return out;
  double h;
  if (mx == p.r) {
    h = 60.0 * std::fmod((p.g - p.b) / d, 6.0);
  } else if (mx == p.g) {
    h = 60.0 * ((p.b - p.r) / d + 2.0);
  } else {
    h = 60.0 * ((p.r - p.g) / d + 4.0);
  }
  if (h < 0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.hue = h;
  return out;
}

namespace {

double srgb_to_linear(std::uint8_t v) {
  const double c = v / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
}

}  // namespace

Lab rgb_to_lab(Rgb p) noexcept {
  const double r = srgb_to_linear(p.r), g = srgb_to_linear(p.g), b = srgb_to_linear(p.b);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / 0.95047), fy = lab_f(y / 1.0), fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double intensity_to_od(double intensity, double i0, double eps) noexcept {
  return -std::log10(std::max(intensity, eps) / i0);
}

OdImage rgb_to_od(const RgbImage& img, Vec3 i0, double eps) {
  for (double v : i0) {
    if (!(v > 0)) throw Error(ErrorKind::range, "background intensity must be positive");
  }
  // 256-entry lookup per channel
  std::array<std::array<double, 256>, 3> lut;
  for (int c = 0; c < 3; ++c) {
    for (int v = 0; v < 256; ++v) lut[c][v] = intensity_to_od(v, i0[c], eps);
  }
  OdImage od{img.width, img.height, std::vector<double>(img.data.size())};
  for (std::size_t i = 0; i < img.data.size(); ++i) od.data[i] = lut[i % 3][img.data[i]];
  return od;
}

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (n == 0) throw Error(ErrorKind::degenerate_input, "zero vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

double angle_degrees(const Vec3& a, const Vec3& b) noexcept {
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  const double na = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  const double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
  return std::acos(std::clamp(dot / (na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

StainModel default_stain_model() {
  return {normalized({0.650, 0.704, 0.286}), normalized({0.15, 0.45, 0.88}), {kDefaultI0, kDefaultI0, kDefaultI0}};
}

StainModel estimate_stain_vectors(std::span<const Vec3> od_pixels, const StainEstimateOptions& opts) {
  std::vector<Eigen::Vector3d> tissue;
  for (const auto& p : od_pixels) {
    const Eigen::Vector3d v(p[0], p[1], p[2]);
    if (v.norm() > opts.od_floor) tissue.push_back(v);
  }
  if (tissue.size() < 100) {
    throw Error(ErrorKind::degenerate_input,
                "stain estimation needs at least 100 tissue pixels, found " + std::to_string(tissue.size()));
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& v : tissue) mean += v;
  mean /= static_cast<double>(tissue.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& v : tissue) cov += (v - mean) * (v - mean).transpose();
  cov /= static_cast<double>(tissue.size());

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d lambda = es.eigenvalues();  // ascending
  if (!(lambda(2) > 0) || lambda(1) < 1e-8 * lambda(2)) {
    throw Error(ErrorKind::degenerate_input, "optical-density cloud is rank deficient");
  }
  Eigen::Vector3d e1 = es.eigenvectors().col(2);
  Eigen::Vector3d e2 = es.eigenvectors().col(1);
  if (e1.sum() < 0) e1 = -e1;
  if (e2.sum() < 0) e2 = -e2;

  std::vector<double> phi;
  phi.reserve(tissue.size());
  for (const auto& v : tissue) phi.push_back(std::atan2(v.dot(e2), v.dot(e1)));
  auto percentile = [&](double pct) {
    const auto k = static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(phi.size() - 1)));
    std::nth_element(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(k), phi.end());
    return phi[k];
  };
  const double lo = percentile(opts.percentile);
  const double hi = percentile(100.0 - opts.percentile);

  auto to_stain = [&](double a) -> Vec3 {
    const Eigen::Vector3d v = e1 * std::cos(a) + e2 * std::sin(a);
    Vec3 out{std::max(v(0), 0.0), std::max(v(1), 0.0), std::max(v(2), 0.0)};
    return normalized(out);
  };
  Vec3 a = to_stain(lo), b = to_stain(hi);
  if (angle_degrees(a, b) < 1.0) {
    throw Error(ErrorKind::degenerate_input, "recovered stain directions coincide");
  }
  if (a[0] < b[0]) std::swap(a, b);
  return {a, b, {kDefaultI0, kDefaultI0, kDefaultI0}};
}

StainModel estimate_stain_vectors(const OdImage& od, const StainEstimateOptions& opts) {
  std::vector<Vec3> px(od.pixel_count());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = od.at(i);
  return estimate_stain_vectors(px, opts);
}

namespace {

// Rows of the 2x3 pseudo-inverse (M^T M)^-1 M^T.
std::array<Vec3, 2> pseudo_inverse(const StainModel& m) {
  const Vec3& h = m.hematoxylin;
  const Vec3& d = m.dab;
  const double a = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
  const double b = h[0] * d[0] + h[1] * d[1] + h[2] * d[2];
  const double c = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
  const double det = a * c - b * b;
  if (!(std::fabs(det) > 1e-12 * std::max(a * c, 1e-300))) {
    throw Error(ErrorKind::degenerate_input, "stain matrix is singular");
  }
  std::array<Vec3, 2> p;
  for (int k = 0; k < 3; ++k) {
    p[0][k] = (c * h[k] - b * d[k]) / det;
    p[1][k] = (a * d[k] - b * h[k]) / det;
  }
  return p;
}

}  // namespace

std::array<double, 2> deconvolve_pixel(const Vec3& od, const StainModel& model) {
  const auto p = pseudo_inverse(model);
  const double ch = p[0][0] * od[0] + p[0][1] * od[1] + p[0][2] * od[2];
  const double cd = p[1][0] * od[0] + p[1][1] * od[1] + p[1][2] * od[2];
  return {std::max(ch, 0.0), std::max(cd, 0.0)};
}

ConcentrationMaps deconvolve(const OdImage& od, const StainModel& model) {
  const auto p = pseudo_inverse(model);
  ConcentrationMaps out{Field(od.width, od.height), Field(od.width, od.height)};
  const std::size_t n = od.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = od.data[3 * i], g = od.data[3 * i + 1], b = od.data[3 * i + 2];
    out.hematoxylin.data[i] = static_cast<float>(std::max(p[0][0] * r + p[0][1] * g + p[0][2] * b, 0.0));
    out.dab.data[i] = static_cast<float>(std::max(p[1][0] * r + p[1][1] * g + p[1][2] * b, 0.0));
  }
  return out;
}

Histogram histogram(const GrayImage& img) {
  Histogram h{};
  for (auto v : img.data) ++h[v];
  return h;
}

OtsuResult otsu_threshold(const Histogram& hist) {
  std::uint64_t total = 0, sum = 0;
  int nonzero = 0, only = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    sum += hist[i] * static_cast<std::uint64_t>(i);
    if (hist[i]) {
      ++nonzero;
      only = i;
    }
  }
  if (total == 0) throw Error(ErrorKind::empty_collection, "empty histogram");
  if (nonzero == 1) return {only, true};

  // w0*w1*(mu0-mu1)^2 = (s0*w1 - s1*w0)^2 / (w0*w1)
  long double best = -1;
  int level = 0;
  std::uint64_t w0 = 0, s0 = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    s0 += hist[t] * static_cast<std::uint64_t>(t);
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    __extension__ const __int128 diff = static_cast<__int128>(s0) * w1 - static_cast<__int128>(sum - s0) * w0;
    const long double num = static_cast<long double>(diff) * static_cast<long double>(diff);
    const long double v = num / (static_cast<long double>(w0) * static_cast<long double>(w1));
    if (v > best) {
      best = v;
      level = t;
    }
  }
  return {level, false};
}

BinaryMask adaptive_threshold(const GrayImage& img, int window, double offset) {
  if (window < 3 || window % 2 == 0) throw Error(ErrorKind::range, "window must be odd and at least 3");
  const int w = img.width, h = img.height;
  std::vector<std::int64_t> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto I = [&](int x, int y) -> std::int64_t& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y) {
    std::int64_t row = 0;
    for (int x = 0; x < w; ++x) {
      row += img.at(x, y);
      I(x + 1, y + 1) = I(x + 1, y) + row;
    }
  }
  const int r = window / 2;
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
      const std::int64_t s = I(x1, y1) - I(x0, y1) - I(x1, y0) + I(x0, y0);
      const double n = static_cast<double>(x1 - x0) * (y1 - y0);
      out.set(x, y, (img.at(x, y) + offset) * n > static_cast<double>(s));
    }
  }
  return out;
}

Labeling label_components(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  Labeling out{w, h, std::vector<int>(mask.data.size(), 0), {}};
  std::vector<std::pair<int, int>> stack;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (!mask.at(x0, y0) || out.labels[static_cast<std::size_t>(y0) * w + x0]) continue;
      const int label = static_cast<int>(out.regions.size()) + 1;
      RegionStats rs;
      rs.label = label;
      rs.min_x = rs.max_x = x0;
      rs.min_y = rs.max_y = y0;
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      stack.assign(1, {x0, y0});
      out.labels[static_cast<std::size_t>(y0) * w + x0] = label;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        ++rs.area;
        sx += x;
        sy += y;
        sxx += static_cast<double>(x) * x;
        syy += static_cast<double>(y) * y;
        sxy += static_cast<double>(x) * y;
        rs.min_x = std::min(rs.min_x, x);
        rs.max_x = std::max(rs.max_x, x);
        rs.min_y = std::min(rs.min_y, y);
        rs.max_y = std::max(rs.max_y, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            auto& l = out.labels[static_cast<std::size_t>(ny) * w + nx];
            if (l || !mask.at(nx, ny)) continue;
            l = label;
            stack.emplace_back(nx, ny);
          }
        }
      }
      const double n = static_cast<double>(rs.area);
      rs.cx = sx / n;
      rs.cy = sy / n;
      // pixel-extent convention: each pixel contributes a unit square
      const double a = sxx / n - rs.cx * rs.cx + 1.0 / 12.0;
      const double c = syy / n - rs.cy * rs.cy + 1.0 / 12.0;
      const double b = sxy / n - rs.cx * rs.cy;
      const double root = std::sqrt((a - c) * (a - c) + 4 * b * b);
      const double l1 = (a + c + root) / 2, l2 = (a + c - root) / 2;
      rs.eccentricity = l1 > 0 ? std::sqrt(std::clamp(1.0 - l2 / l1, 0.0, 1.0)) : 0.0;
      out.regions.push_back(rs);
    }
  }
  return out;
}

std::vector<RegionStats> connected_components(const BinaryMask& mask) { return label_components(mask).regions; }

BinaryMask skeletonize(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  const int pw = w + 2;
  std::vector<std::uint8_t> g(static_cast<std::size_t>(pw) * (h + 2), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) g[static_cast<std::size_t>(y + 1) * pw + x + 1] = mask.at(x, y);
  }
  std::vector<std::size_t> kill;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      kill.clear();
      for (int y = 1; y <= h; ++y) {
        for (int x = 1; x <= w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * pw + x;
          if (!g[i]) continue;
          // P2..P9 clockwise from north
          const int p[8] = {g[i - pw], g[i - pw + 1], g[i + 1], g[i + pw + 1],
                            g[i + pw], g[i + pw - 1], g[i - 1], g[i - pw - 1]};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += p[k];
            if (!p[k] && p[(k + 1) % 8]) ++a;
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0) {
            if ((p[0] && p[2] && p[4]) || (p[2] && p[4] && p[6])) continue;
          } else {
            if ((p[0] && p[2] && p[6]) || (p[0] && p[4] && p[6])) continue;
          }
          kill.push_back(i);
        }
      }
      for (auto i : kill) g[i] = 0;
      if (!kill.empty()) changed = true;
    }
  }
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.set(x, y, g[static_cast<std::size_t>(y + 1) * pw + x + 1]);
  }
  return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<std::uint8_t> outside(mask.data.size(), 0);
  std::vector<std::pair<int, int>> stack;
  auto seed = [&](int x, int y) {
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    if (!mask.data[i] && !outside[i]) {
      outside[i] = 1;
      stack.emplace_back(x, y);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    if (x > 0) seed(x - 1, y);
    if (x + 1 < w) seed(x + 1, y);
    if (y > 0) seed(x, y - 1);
    if (y + 1 < h) seed(x, y + 1);
  }
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = outside[i] ? 0 : 1;
  return out;
}

GlcmFeatures glcm_features(const GrayImage& patch, int dx, int dy, int levels) {
  if (levels < 2 || levels > 256) throw Error(ErrorKind::range, "glcm levels must be in [2,256]");
  std::vector<double> m(static_cast<std::size_t>(levels) * levels, 0.0);
  double pairs = 0;
  for (int y = std::max(0, -dy); y < std::min(patch.height, patch.height - dy); ++y) {
    for (int x = std::max(0, -dx); x < std::min(patch.width, patch.width - dx); ++x) {
      const int i = patch.at(x, y) * levels / 256;
      const int j = patch.at(x + dx, y + dy) * levels / 256;
      m[static_cast<std::size_t>(i) * levels + j] += 1;
      m[static_cast<std::size_t>(j) * levels + i] += 1;
      pairs += 2;
    }
  }
  if (pairs == 0) throw Error(ErrorKind::shape, "patch is not larger than the glcm offset");
  double mu = 0;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) mu += i * m[static_cast<std::size_t>(i) * levels + j] / pairs;
  }
  GlcmFeatures f;
  double var = 0, cov = 0;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      const double p = m[static_cast<std::size_t>(i) * levels + j] / pairs;
      if (p == 0) continue;
      const double d = i - j;
      f.contrast += d * d * p;
      f.energy += p * p;
      f.homogeneity += p / (1 + d * d);
      var += (i - mu) * (i - mu) * p;
      cov += (i - mu) * (j - mu) * p;
    }
  }
  f.correlation = var > 1e-15 ? cov / var : 1.0;
  return f;
}

GlcmFeatures glcm_features(const GrayImage& patch, int levels) {
  const auto a = glcm_features(patch, 1, 0, levels);
  const auto b = glcm_features(patch, 0, 1, levels);
  return {(a.contrast + b.contrast) / 2, (a.energy + b.energy) / 2, (a.homogeneity + b.homogeneity) / 2,
          (a.correlation + b.correlation) / 2};
}

HistogramStats histogram_stats(std::span<const double> values, double lo, double hi) {
  if (values.empty()) throw Error(ErrorKind::empty_collection, "histogram_stats on empty field");
  if (!(hi > lo)) throw Error(ErrorKind::range, "histogram range must be non-empty");
  const long double n = static_cast<long double>(values.size());
  long double s = 0;
  for (double v : values) s += v;
  const long double mean = s / n;
  long double m2 = 0, m3 = 0, m4 = 0;
  std::array<std::uint64_t, 256> bins{};
  for (double v : values) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
    const double t = (v - lo) / (hi - lo) * 256.0;
    ++bins[static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, 255.0))];
  }
  HistogramStats out;
  out.mean = static_cast<double>(mean);
  out.variance = static_cast<double>(m2 / n);
  if (out.variance > 0) {
    const long double var = m2 / n;
    out.skewness = static_cast<double>((m3 / n) / std::pow(var, 1.5L));
    out.kurtosis = static_cast<double>((m4 / n) / (var * var));
  }
  for (auto c : bins) {
    if (!c) continue;
    const double p = static_cast<double>(c) / static_cast<double>(values.size());
    out.entropy -= p * std::log2(p);
  }
  return out;
}

HistogramStats histogram_stats(const GrayImage& img) {
  std::vector<double> v(img.data.begin(), img.data.end());
  return histogram_stats(v);
}

double fractal_dimension_dbc(const GrayImage& patch) {
  const int side = std::min(patch.width, patch.height);
  if (side < 8) throw Error(ErrorKind::shape, "fractal dimension needs a patch of side >= 8");
  std::vector<double> xs, ys;
  for (int s = 2; s <= side / 2; s *= 2) {
    const double box_h = static_cast<double>(s) * 256.0 / side;
    const int nb = side / s;
    double count = 0;
    for (int by = 0; by < nb; ++by) {
      for (int bx = 0; bx < nb; ++bx) {
        int mn = 255, mx = 0;
        for (int y = by * s; y < (by + 1) * s; ++y) {
          for (int x = bx * s; x < (bx + 1) * s; ++x) {
            mn = std::min<int>(mn, patch.at(x, y));
            mx = std::max<int>(mx, patch.at(x, y));
          }
        }
        count += std::floor(mx / box_h) - std::floor(mn / box_h) + 1;
      }
    }
    xs.push_back(std::log(static_cast<double>(side) / s));
    ys.push_back(std::log(count));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / n;
    my += ys[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return std::clamp(sxy / sxx, 2.0, 3.0);
}

BilinearDescriptor bilinear_pool(const FeatureMap& map) {
  if (map.d < 1) throw Error(ErrorKind::shape, "feature dimension must be at least 1");
  if (map.data.size() != static_cast<std::size_t>(map.w) * map.h * map.d) {
    throw Error(ErrorKind::shape, "feature map size does not match w*h*d");
  }
  const int d = map.d;
  BilinearDescriptor out{d, std::vector<double>(static_cast<std::size_t>(d) * d, 0.0), false};
  for (std::size_t cell = 0; cell < static_cast<std::size_t>(map.w) * map.h; ++cell) {
    const double* x = &map.data[cell * d];
    for (int i = 0; i < d; ++i) {
      if (x[i] == 0) continue;
      for (int j = 0; j < d; ++j) out.values[static_cast<std::size_t>(i) * d + j] += x[i] * x[j];
    }
  }
  double norm2 = 0;
  for (auto& v : out.values) {
    v = v < 0 ? -std::sqrt(-v) : std::sqrt(v);
    norm2 += v * v;
  }
  if (norm2 == 0) {
    out.degenerate = true;
    return out;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& v : out.values) v *= inv;
  return out;
}

}  // namespace her2::img
