#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "her2/charcurve.hpp"
#include "her2/image.hpp"
#include "her2/imgproc.hpp"
#include "her2/score.hpp"
#include "her2/slide.hpp"

// Patch-based slide scoring: grid tiling, background rejection, handcrafted
// features, SAMME boosting over shallow trees, and slide-level aggregation.
namespace her2::patchpipe {

// Tiling -------------------------------------------------------------------

struct PatchGrid {
  int patch_size = 128;
  int stride = 128;
  std::vector<std::pair<int, int>> origins;  // (x, y), row-major
};

// Error(size) when the image is smaller than one patch.
PatchGrid tile_image(int width, int height, int patch_size = 128, int stride = 128);
PatchGrid tile_image(const RgbImage& image, int patch_size = 128, int stride = 128);

// Background rejection -------------------------------------------------------

struct BackgroundFilter {
  int window = 31;
  double offset = 10.0;
  double ones_ratio = 0.9;
};

double ones_fraction(const RgbImage& patch, const BackgroundFilter& f = {});
// Background iff the adaptive-threshold ones fraction is >= ones_ratio.
bool is_background_mucs(const RgbImage& patch, const BackgroundFilter& f = {});

// Local-maximum sampling -----------------------------------------------------

struct LocalMaxima {
  std::vector<std::pair<int, int>> centers;  // strongest first
  std::vector<std::pair<int, int>> origins;  // patch origins, clamped inside
  bool short_of_k = false;                   // fewer than k maxima found
};

// Mean-filters the DAB map (box of side `filter`), keeps plateau-free 3x3
// maxima above zero, then greedy non-maximum suppression with Euclidean
// radius `patch_size`.
LocalMaxima sample_patches_localmax(const Field& dab, int k, int patch_size = 128, int filter = 15);
LocalMaxima sample_patches_localmax(const RgbImage& image, int k, int patch_size = 128, int filter = 15,
                                    const img::StainModel& model = img::default_stain_model());

// Features -------------------------------------------------------------------

inline constexpr std::size_t kFeatureCount = 21;
using FeatureVector = std::array<double, kFeatureCount>;

struct FeatureOptions {
  img::StainModel stains = img::default_stain_model();
  charcurve::HueWindow hue;
  double concentration_range = 1.5;  // maps to grey 0..255 for GLCM / entropy bins
  double sat_low = 0.10;
  double sat_high = 0.50;
};

// h_mean h_var h_skew h_kurt h_entropy, dab_* (same five), then the GLCM
// quadruple contrast/energy/homogeneity/correlation for h and dab, fractal
// dimension of the grey patch, DAB-hue fractions at sat_low and sat_high.
const std::array<std::string_view, kFeatureCount>& feature_names();
std::uint64_t feature_checksum();

FeatureVector extract_features(const RgbImage& patch, const FeatureOptions& opts = {});

// SAMME ----------------------------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;  // x[feature] <= threshold goes left
  int left = -1, right = -1;
  int leaf = 0;  // class at a leaf
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int predict(std::span<const double> x) const;
};

struct SammeRound {
  double alpha = 0;
  DecisionTree tree;
};

struct SammeModel {
  int classes = 0;
  int feature_count = 0;
  std::uint64_t feature_checksum = 0;
  std::vector<SammeRound> rounds;
};

inline constexpr double kPerfectRoundAlpha = 27.631021115928547;  // ln(1e12)

struct TrainOptions {
  int rounds = 100;
  int depth = 2;
  std::uint64_t feature_checksum = 0;  // 0: feature_checksum() for 21 features, else positional
};

// Labels are class indices in [0, classes). Error(training) unless at least
// two classes occur; Error(shape) on ragged or mismatched input.
SammeModel train_samme(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int classes,
                       const TrainOptions& opts = {});

struct PatchCall {
  int category = 0;
  double confidence = 0;
};

// Argmax of alpha-weighted votes (ties to the lower index); confidence is the
// winning mass over the total. Error(shape) on a length mismatch.
PatchCall predict_samme(const SammeModel& m, std::span<const double> x);
std::vector<double> vote_mass(const SammeModel& m, std::span<const double> x);

// Share of misclassified samples using only the first `rounds` rounds
// (all when negative).
double training_error(const SammeModel& m, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                      int rounds = -1);

std::string render_samme_model(const SammeModel& m);
// Error(format) on malformed text; Error(integrity) when the stored feature
// checksum differs from `expected_checksum` (skipped when 0).
SammeModel parse_samme_model(std::string_view text, std::uint64_t expected_checksum = feature_checksum(),
                             std::string_view source = "<model>");
SammeModel read_samme_model(const std::filesystem::path& path, std::uint64_t expected_checksum = feature_checksum());
void write_samme_model(const std::filesystem::path& path, const SammeModel& m);

// Tally and aggregation ------------------------------------------------------

inline constexpr int kBackground = -1;

struct PatchTally {
  std::array<std::int64_t, 4> n{};  // per class
  std::int64_t background = 0;
  std::int64_t total() const noexcept { return n[0] + n[1] + n[2] + n[3]; }
  friend bool operator==(const PatchTally&, const PatchTally&) = default;
};

// Categories are 0..3, or kBackground. Error(range) for anything else.
PatchTally tally(std::span<const int> categories);

// Each throws Error(empty_tally) when total() == 0.
Her2Score aggregate_indus(const PatchTally& t);
Her2Score aggregate_mucs(const PatchTally& t);
Her2Score aggregate_visilab(const PatchTally& t);
double pcms_eq2(const PatchTally& t);
double slide_confidence(std::span<const double> confidences);

enum class Rule { indus, mucs, visilab };
Her2Score aggregate(const PatchTally& t, Rule rule);
std::string_view to_string(Rule r) noexcept;
std::optional<Rule> parse_rule(std::string_view s) noexcept;

enum class PcmsMode { eq2, morphological };
std::string_view to_string(PcmsMode m) noexcept;
std::optional<PcmsMode> parse_pcms_mode(std::string_view s) noexcept;

// Slide scoring ----------------------------------------------------------------

struct ScoreOptions {
  Rule rule = Rule::visilab;
  PcmsMode pcms = PcmsMode::eq2;
  int patch_size = 128;
  int stride = 128;
  BackgroundFilter background;
  FeatureOptions features;
  int jobs = 1;
};

struct PatchRecord {
  int tile = 0;
  int x = 0, y = 0;
  int category = kBackground;
  double confidence = 0;
};

struct SlideAnalysis {
  Prediction prediction;
  PatchTally tally;
  std::vector<PatchRecord> patches;
};

// Error(coverage) when every patch is background.
SlideAnalysis analyse_slide(const Slide& slide, const SammeModel& model, const ScoreOptions& opts = {});
Prediction score_slide_patchpipe(const Slide& slide, const SammeModel& model, const ScoreOptions& opts = {});

// Features of every non-background grid patch in the slide, in grid order.
std::vector<FeatureVector> tissue_patch_features(const Slide& slide, const ScoreOptions& opts = {});

}  // namespace her2::patchpipe
