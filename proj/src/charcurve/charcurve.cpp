#include "her2/charcurve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "her2/error.hpp"
#include "her2/imgproc.hpp"
#include "her2/ingest.hpp"
#include "her2/text.hpp"

namespace her2::charcurve {

bool is_background_pixel(Rgb p, const RoiOptions& opts) noexcept {
  const auto hsb = img::rgb_to_hsb(p);
  return hsb.saturation < opts.background_saturation && hsb.brightness > opts.background_brightness;
}

std::pair<int, int> roi_size(double scale) {
  if (!(scale > 0)) throw Error(ErrorKind::range, "roi scale must be positive");
  const int w = std::max(1, static_cast<int>(std::lround(kRoiWidth20x * scale)));
  const int h = std::max(1, static_cast<int>(std::lround(kRoiHeight20x * scale)));
  return {w, h};
}

namespace {

std::vector<int> grid_positions(int extent, int size) {
  std::vector<int> out;
  const int step = std::max(1, size / 2);
  for (int p = 0; p + size <= extent; p += step) out.push_back(p);
  if (out.empty() || out.back() != extent - size) out.push_back(extent - size);
  return out;
}

bool overlaps(const RoiSpec& a, const RoiSpec& b) {
  return a.tile == b.tile && a.x < b.x + b.width && b.x < a.x + a.width && a.y < b.y + b.height &&
         b.y < a.y + a.height;
}

}  // namespace

std::vector<RoiSpec> select_rois(const Slide& slide, const RoiOptions& opts) {
  const auto [w, h] = roi_size(slide.scale);
  std::vector<RoiSpec> candidates;
  bool any_fits = false;
  for (std::size_t t = 0; t < slide.tiles.size(); ++t) {
    const auto& im = slide.tiles[t];
    if (im.width < w || im.height < h) continue;
    any_fits = true;
    // Integral image of background pixels.
    const int W = im.width + 1;
    std::vector<std::int64_t> sat(static_cast<std::size_t>(W) * (im.height + 1), 0);
    for (int y = 0; y < im.height; ++y) {
      std::int64_t row = 0;
      for (int x = 0; x < im.width; ++x) {
        row += is_background_pixel(im.at(x, y), opts);
        sat[static_cast<std::size_t>(y + 1) * W + x + 1] = sat[static_cast<std::size_t>(y) * W + x + 1] + row;
      }
    }
    const auto box = [&](int x, int y) {
      return sat[static_cast<std::size_t>(y + h) * W + x + w] - sat[static_cast<std::size_t>(y) * W + x + w] -
             sat[static_cast<std::size_t>(y + h) * W + x] + sat[static_cast<std::size_t>(y) * W + x];
    };
    const double area = static_cast<double>(w) * h;
    for (int y : grid_positions(im.height, h)) {
      for (int x : grid_positions(im.width, w)) {
        const double bg = static_cast<double>(box(x, y)) / area;
        if (bg <= opts.max_background) candidates.push_back({static_cast<int>(t), x, y, w, h, bg});
      }
    }
  }
  if (!any_fits) {
    throw Error(ErrorKind::size, "slide '" + slide.case_id + "' is smaller than one ROI (" +
                                     std::to_string(w) + "x" + std::to_string(h) + ")");
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const RoiSpec& a, const RoiSpec& b) {
    if (a.background_fraction != b.background_fraction) return a.background_fraction < b.background_fraction;
    if (a.tile != b.tile) return a.tile < b.tile;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  std::vector<RoiSpec> out;
  for (const auto& c : candidates) {
    if (static_cast<int>(out.size()) >= opts.count) break;
    if (std::none_of(out.begin(), out.end(), [&](const RoiSpec& o) { return overlaps(o, c); })) out.push_back(c);
  }
  if (out.empty()) {
    throw Error(ErrorKind::coverage, "slide '" + slide.case_id + "': no ROI with background <= " +
                                         text::format_double(opts.max_background));
  }
  return out;
}

std::vector<RoiSpec> select_rois(const RgbImage& image, double scale, const RoiOptions& opts) {
  Slide s;
  s.tiles.push_back(image);
  s.scale = scale;
  return select_rois(s, opts);
}

double stained_fraction(const RgbImage& roi, HueWindow hue, double s_lo) {
  if (roi.pixel_count() == 0) return 0.0;
  std::size_t n = 0;
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      const auto p = img::rgb_to_hsb(roi.at(x, y));
      n += p.hue >= hue.lo && p.hue <= hue.hi && p.saturation >= s_lo && p.saturation <= 1.0;
    }
  }
  return static_cast<double>(n) / static_cast<double>(roi.pixel_count());
}

double sample_s_lo(int i) noexcept {
  return kSatLoFirst + (kSatLoLast - kSatLoFirst) * i / (kCurveSamples - 1);
}

CharCurve characteristics_curve(const RgbImage& roi, HueWindow hue) {
  // One pass: histogram in-window pixels by the highest sample they pass.
  CharCurve c;
  for (int i = 0; i < kCurveSamples; ++i) c.s_lo[i] = sample_s_lo(i);
  std::array<std::size_t, kCurveSamples> passes{};
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      const auto p = img::rgb_to_hsb(roi.at(x, y));
      if (!(p.hue >= hue.lo && p.hue <= hue.hi)) continue;
      int k = -1;
      while (k + 1 < kCurveSamples && p.saturation >= c.s_lo[k + 1]) ++k;
      if (k >= 0) ++passes[k];
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(roi.pixel_count(), 1));
  std::size_t tail = 0;
  for (int i = kCurveSamples - 1; i >= 0; --i) {
    tail += passes[i];
    c.pct[i] = static_cast<double>(tail) / n;
  }
  return c;
}

double CubicFit::operator()(double s) const noexcept {
  return coef[0] + s * (coef[1] + s * (coef[2] + s * coef[3]));
}

CubicFit fit_cubic(const CharCurve& curve) {
  Eigen::Matrix<double, kCurveSamples, 4> A;
  Eigen::Matrix<double, kCurveSamples, 1> b;
  for (int i = 0; i < kCurveSamples; ++i) {
    const double s = curve.s_lo[i];
    A(i, 0) = 1;
    A(i, 1) = s;
    A(i, 2) = s * s;
    A(i, 3) = s * s * s;
    b(i) = curve.pct[i];
  }
  const Eigen::Vector4d x = A.colPivHouseholderQr().solve(b);
  CubicFit f;
  for (int k = 0; k < 4; ++k) f.coef[k] = x(k);
  double ss = 0;
  for (int i = 0; i < kCurveSamples; ++i) {
    const double r = f(curve.s_lo[i]) - curve.pct[i];
    ss += r * r;
  }
  f.residual = std::sqrt(ss / kCurveSamples);
  return f;
}

double curve_distance2(const std::array<double, 4>& a, const std::array<double, 4>& b) noexcept {
  // (a-b)^T G (a-b) with G_ij the mean of s^(i+j) over the sampled range.
  constexpr double lo = kSatLoFirst, hi = kSatLoLast;
  double d2 = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const int p = i + j + 1;
      const double g = (std::pow(hi, p) - std::pow(lo, p)) / (p * (hi - lo));
      d2 += (a[i] - b[i]) * g * (a[j] - b[j]);
    }
  }
  return std::max(d2, 0.0);
}

CurveCall classify_curve(const CharCurve& curve, const CubicFit& fit, const CentroidModel& model) {
  const double lowest = *std::min_element(curve.pct.begin(), curve.pct.end());
  if (lowest >= kThreePlusFloor) return {Her2Score::three, 1.0, true};
  if (curve.pct[0] <= kZeroCeiling) return {Her2Score::zero, 1.0, true};
  std::array<double, 4> d{};
  for (int k = 0; k < 4; ++k) d[k] = std::sqrt(curve_distance2(fit.coef, model.centroids[k]));
  int best = 0;
  for (int k = 1; k < 4; ++k) {
    if (d[k] < d[best]) best = k;
  }
  double second = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 4; ++k) {
    if (k != best) second = std::min(second, d[k]);
  }
  const double denom = second + d[best];
  const double conf = denom > 0 ? (second - d[best]) / denom : 0.0;
  return {score_from_index(best), std::clamp(conf, 0.0, 1.0), false};
}

namespace {

double sorted_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Prediction aggregate_rois(const std::vector<RoiResult>& rois, std::string case_id) {
  if (rois.empty()) throw Error(ErrorKind::coverage, "no ROI results for '" + case_id + "'");
  std::array<int, 4> votes{};
  std::vector<double> conf, first;
  for (const auto& r : rois) {
    ++votes[index_of(r.call.score)];
    conf.push_back(r.call.confidence);
    first.push_back(r.curve.pct[0]);
  }
  int best = 3;
  for (int k = 2; k >= 0; --k) {
    if (votes[k] > votes[best]) best = k;
  }
  Prediction p;
  p.case_id = std::move(case_id);
  p.score = score_from_index(best);
  p.confidence = std::clamp(sorted_mean(std::move(conf)), 0.0, 1.0);
  p.pcms = std::clamp(sorted_mean(std::move(first)) * 100.0, 0.0, 100.0);
  return p;
}

SlideResult analyse_slide(const Slide& slide, const CentroidModel& model, const RoiOptions& opts) {
  SlideResult out;
  for (const auto& roi : select_rois(slide, opts)) {
    RoiResult r;
    r.roi = roi;
    const auto im = crop(slide.tiles[roi.tile], roi.x, roi.y, roi.width, roi.height);
    r.curve = characteristics_curve(im, model.hue);
    r.fit = fit_cubic(r.curve);
    r.call = classify_curve(r.curve, r.fit, model);
    out.rois.push_back(r);
  }
  out.prediction = aggregate_rois(out.rois, slide.case_id);
  return out;
}

Prediction score_slide_charcurve(const Slide& slide, const CentroidModel& model, const RoiOptions& opts) {
  return analyse_slide(slide, model, opts).prediction;
}

// Model file --------------------------------------------------------------

std::string render_centroid_model(const CentroidModel& m) {
  std::ostringstream out;
  out << "# charcurve centroids: score a0 a1 a2 a3\n";
  out << "hue_lo " << text::format_double(m.hue.lo) << "\n";
  out << "hue_hi " << text::format_double(m.hue.hi) << "\n";
  for (int k = 0; k < 4; ++k) {
    out << k;
    for (double c : m.centroids[k]) out << ' ' << text::format_double(c);
    out << '\n';
  }
  return out.str();
}

CentroidModel parse_centroid_model(std::string_view content, std::string_view source) {
  CentroidModel m;
  std::array<bool, 4> seen{};
  bool lo = false, hi = false;
  std::size_t line_no = 0;
  for (const auto& raw : text::read_lines(content)) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::istringstream in{std::string(line)};
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(t);
    const auto bad = [&](const std::string& what) {
      return FormatError(ErrorKind::format, std::string(source), line_no, tok.front(), what);
    };
    if (tok[0] == "hue_lo" || tok[0] == "hue_hi") {
      if (tok.size() != 2) throw bad("expected one value");
      const auto v = text::parse_double(tok[1]);
      if (!v || *v < 0 || *v > 360) throw bad("hue must be in [0,360]");
      (tok[0] == "hue_lo" ? m.hue.lo : m.hue.hi) = *v;
      (tok[0] == "hue_lo" ? lo : hi) = true;
      continue;
    }
    const auto k = text::parse_int(tok[0]);
    if (!k || *k < 0 || *k > 3) throw bad("expected score 0..3");
    if (tok.size() != 5) throw bad("expected 4 coefficients");
    if (seen[*k]) throw bad("duplicate score");
    for (int j = 0; j < 4; ++j) {
      const auto v = text::parse_double(tok[j + 1]);
      if (!v) throw bad("not a number: " + tok[j + 1]);
      m.centroids[*k][j] = *v;
    }
    seen[*k] = true;
  }
  if (!lo || !hi || std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorKind::format, std::string(source) + ": needs hue_lo, hue_hi and rows for scores 0..3");
  }
  if (m.hue.lo > m.hue.hi) throw Error(ErrorKind::range, std::string(source) + ": hue_lo > hue_hi");
  return m;
}

CentroidModel read_centroid_model(const std::filesystem::path& path) {
  return parse_centroid_model(ingest::read_file(path), path.string());
}

void write_centroid_model(const std::filesystem::path& path, const CentroidModel& m) {
  std::ofstream out(path, std::ios::binary);
  out << render_centroid_model(m);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

}  // namespace her2::charcurve
