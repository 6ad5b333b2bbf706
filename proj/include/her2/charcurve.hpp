#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "her2/image.hpp"
#include "her2/score.hpp"
#include "her2/slide.hpp"

// Characteristics-curve scorer: stained fraction of DAB-hue pixels as the
// saturation floor rises, modelled by a cubic and classified by rules plus
// nearest centroid.
namespace her2::charcurve {

inline constexpr int kCurveSamples = 20;
inline constexpr double kSatLoFirst = 0.10;
inline constexpr double kSatLoLast = 0.50;
inline constexpr int kRoiWidth20x = 1800;
inline constexpr int kRoiHeight20x = 1200;

struct HueWindow {
  double lo = 20.0;  // degrees, inclusive
  double hi = 70.0;
};

struct RoiOptions {
  int count = 5;
  double max_background = 0.30;
  double background_saturation = 0.08;  // background: s < this ...
  double background_brightness = 0.85;  // ... and b > this
};

struct RoiSpec {
  int tile = 0;  // index into Slide::tiles
  int x = 0, y = 0;
  int width = 0, height = 0;
  double background_fraction = 0;
};

bool is_background_pixel(Rgb p, const RoiOptions& opts = {}) noexcept;

// ROI size at the slide's working resolution (1800x1200 scaled, at least 1 px).
std::pair<int, int> roi_size(double scale);

// Candidates on a half-ROI grid (plus flush right/bottom positions) in every
// tile, least background first, accepted greedily without overlap.
// Error(size) when no tile holds one ROI; Error(coverage) when none qualifies.
std::vector<RoiSpec> select_rois(const Slide& slide, const RoiOptions& opts = {});
std::vector<RoiSpec> select_rois(const RgbImage& image, double scale, const RoiOptions& opts = {});

double stained_fraction(const RgbImage& roi, HueWindow hue, double s_lo);

struct CharCurve {
  std::array<double, kCurveSamples> s_lo{};
  std::array<double, kCurveSamples> pct{};
};

double sample_s_lo(int i) noexcept;
CharCurve characteristics_curve(const RgbImage& roi, HueWindow hue = {});

struct CubicFit {
  std::array<double, 4> coef{};  // a0 + a1 s + a2 s^2 + a3 s^3
  double residual = 0;           // rms over the samples
  double operator()(double s) const noexcept;
};

CubicFit fit_cubic(const CharCurve& curve);

// Four class centroids in coefficient space plus the hue window they were
// calibrated with.
struct CentroidModel {
  HueWindow hue;
  std::array<std::array<double, 4>, 4> centroids{};  // indexed by score
};

std::string render_centroid_model(const CentroidModel& m);
CentroidModel parse_centroid_model(std::string_view text, std::string_view source = "<centroids>");
CentroidModel read_centroid_model(const std::filesystem::path& path);
void write_centroid_model(const std::filesystem::path& path, const CentroidModel& m);
// The calibrated model bundled with the build.
const CentroidModel& default_centroid_model();

// Mean squared difference of two cubics over [0.10, 0.50]; the metric used
// for nearest-centroid classification.
double curve_distance2(const std::array<double, 4>& a, const std::array<double, 4>& b) noexcept;

inline constexpr double kThreePlusFloor = 0.30;
inline constexpr double kZeroCeiling = 0.02;

struct CurveCall {
  Her2Score score = Her2Score::zero;
  double confidence = 0;
  bool by_rule = false;
};

// min >= 0.30 -> 3+; first <= 0.02 -> 0; else nearest centroid with
// confidence (d2 - d1) / (d2 + d1) on distances to the two nearest centroids.
CurveCall classify_curve(const CharCurve& curve, const CubicFit& fit,
                         const CentroidModel& model = default_centroid_model());

struct RoiResult {
  RoiSpec roi;
  CharCurve curve;
  CubicFit fit;
  CurveCall call;
};

// Majority vote (ties to the higher score), mean confidence, and PCMS as the
// mean first-sample fraction x 100. Independent of ROI order.
Prediction aggregate_rois(const std::vector<RoiResult>& rois, std::string case_id);

struct SlideResult {
  Prediction prediction;
  std::vector<RoiResult> rois;
};

SlideResult analyse_slide(const Slide& slide, const CentroidModel& model = default_centroid_model(),
                          const RoiOptions& opts = {});
Prediction score_slide_charcurve(const Slide& slide, const CentroidModel& model = default_centroid_model(),
                                 const RoiOptions& opts = {});

}  // namespace her2::charcurve
