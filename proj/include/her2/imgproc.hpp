#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "her2/image.hpp"

namespace her2::img {

struct Hsb {
  double hue = 0;         // degrees [0,360)
  double saturation = 0;  // [0,1]
  double brightness = 0;  // [0,1]
};

struct Lab {
  double L = 0, a = 0, b = 0;
};

Hsb rgb_to_hsb(Rgb p) noexcept;
Lab rgb_to_lab(Rgb p) noexcept;  // sRGB, D65

using Vec3 = std::array<double, 3>;

// Three interleaved OD channels per pixel.
struct OdImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Vec3 at(std::size_t i) const noexcept { return {data[3 * i], data[3 * i + 1], data[3 * i + 2]}; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
};

inline constexpr double kDefaultI0 = 255.0;
inline constexpr double kDefaultOdEpsilon = 1.0 / 255.0;

double intensity_to_od(double intensity, double i0 = kDefaultI0, double eps = kDefaultOdEpsilon) noexcept;
OdImage rgb_to_od(const RgbImage& img, Vec3 i0 = {kDefaultI0, kDefaultI0, kDefaultI0},
                  double eps = kDefaultOdEpsilon);

struct StainModel {
  Vec3 hematoxylin;
  Vec3 dab;
  Vec3 i0 = {kDefaultI0, kDefaultI0, kDefaultI0};
};

// Built-in vectors. The DAB vector is tuned so that rendered membrane
// stain falls inside the brown hue window used by the curve scorer.
StainModel default_stain_model();
Vec3 normalized(Vec3 v);
double angle_degrees(const Vec3& a, const Vec3& b) noexcept;

struct StainEstimateOptions {
  double od_floor = 0.15;    // beta
  double percentile = 1.0;   // alpha
};

/// Macenko-style estimate from OD pixels. Throws Error(degenerate_input)
/// with fewer than 100 pixels above the floor, a rank-deficient cloud, or
/// two recovered directions that coincide.
StainModel estimate_stain_vectors(const OdImage& od, const StainEstimateOptions& opts = {});
StainModel estimate_stain_vectors(std::span<const Vec3> od_pixels, const StainEstimateOptions& opts = {});

struct ConcentrationMaps {
  Field hematoxylin;
  Field dab;
};

/// Least-squares unmixing, clamped at 0. Throws Error(degenerate_input)
/// on a singular stain matrix.
ConcentrationMaps deconvolve(const OdImage& od, const StainModel& model);
std::array<double, 2> deconvolve_pixel(const Vec3& od, const StainModel& model);

using Histogram = std::array<std::uint64_t, 256>;
Histogram histogram(const GrayImage& img);

struct OtsuResult {
  int level = 0;  // class 0 is [0, level], class 1 is (level, 255]
  bool degenerate = false;
};

/// Throws Error(empty_collection) for an all-zero histogram.
OtsuResult otsu_threshold(const Histogram& hist);

/// 1 where value > mean of the clamped window - offset.
BinaryMask adaptive_threshold(const GrayImage& img, int window, double offset = 10.0);

struct RegionStats {
  int label = 0;  // 1-based
  std::size_t area = 0;
  double eccentricity = 0;
  double cx = 0, cy = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

struct Labeling {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // 0 is background
  std::vector<RegionStats> regions;  // regions[i].label == i + 1
};

// 8-connected; regions are numbered in raster order of their first pixel.
Labeling label_components(const BinaryMask& mask);
std::vector<RegionStats> connected_components(const BinaryMask& mask);

// Zhang-Suen thinning.
BinaryMask skeletonize(const BinaryMask& mask);
// Background not 4-connected to the border becomes foreground.
BinaryMask fill_holes(const BinaryMask& mask);

struct GlcmFeatures {
  double contrast = 0;
  double energy = 0;  // angular second moment
  double homogeneity = 0;
  double correlation = 0;
};

// Symmetric normalized co-occurrence after quantization v * levels / 256.
// Correlation is 1 when either marginal has zero variance.
GlcmFeatures glcm_features(const GrayImage& patch, int dx, int dy, int levels = 8);
// Average over offsets (1,0) and (0,1).
GlcmFeatures glcm_features(const GrayImage& patch, int levels = 8);

struct HistogramStats {
  double mean = 0;
  double variance = 0;  // population
  double skewness = 0;  // 0 for a constant field
  double kurtosis = 0;  // non-excess; 0 for a constant field
  double entropy = 0;   // bits, 256 bins over [lo, hi]
};

/// Throws Error(empty_collection) on empty input.
HistogramStats histogram_stats(std::span<const double> values, double lo = 0.0, double hi = 255.0);
HistogramStats histogram_stats(const GrayImage& img);

/// Differential box counting over box sides 2, 4, ..., side/2 with 256 grey
/// levels; slope of log N against log(1/r), clamped to [2,3]. Non-square
/// input uses the top-left square. Throws Error(shape) when side < 8.
double fractal_dimension_dbc(const GrayImage& patch);

struct FeatureMap {
  int w = 0, h = 0, d = 0;
  std::vector<double> data;  // (y * w + x) * d + k
};

struct BilinearDescriptor {
  int d = 0;
  std::vector<double> values;  // d x d row-major
  bool degenerate = false;     // all-zero input, normalization skipped
};

BilinearDescriptor bilinear_pool(const FeatureMap& map);

}  // namespace her2::img
