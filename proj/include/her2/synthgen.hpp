#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "her2/image.hpp"
#include "her2/imgproc.hpp"
#include "her2/score.hpp"

// Deterministic synthetic IHC tiles: hematoxylin nuclei inside DAB membrane
// rings, rendered in optical-density space with the default stain model.
namespace her2::synth {

// mt19937_64 with hand-rolled uniform and normal draws, so the stream does
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform();                      // [0,1)
  double uniform(double lo, double hi);  // [lo,hi)
  int integer(int lo, int hi);           // [lo,hi]
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct TileSpec {
  int width = 512;
  int height = 512;
  int cell_count = 120;
  double completeness = 1.0;       // angular fraction of each stained ring
  double stain_intensity = 0.5;    // [0,1]
  double positive_fraction = 1.0;  // share of cells carrying membrane stain
  int min_positive = 0;            // at least this many stained cells
  int membrane_thickness = 4;      // px, 1..5
  double noise_sigma = 0.0;        // grey levels
  std::uint64_t seed = 1;
  // Cells are placed inside this rectangle; the rest is bare glass.
  // A negative x1/y1 means the tile edge.
  int tissue_x0 = 0, tissue_y0 = 0, tissue_x1 = -1, tissue_y1 = -1;
  bool keep_ideal = false;  // keep pre-quantization intensities
  int max_attempts = 400000;

  // Throws Error(range) for out-of-range parameters.
  void validate() const;
};

struct CellAnnotation {
  int index = 0;
  int cx = 0, cy = 0;
  int nucleus_radius = 0;
  int ring_inner = 0;  // membrane occupies ring_inner <= r < ring_outer
  int ring_outer = 0;
  bool positive = false;
  double completeness = 0;  // 0 for unstained cells
  double dab = 0;           // membrane DAB concentration
  double hematoxylin = 0;   // nucleus concentration
  double start_angle = 0;   // radians

  bool complete() const noexcept { return positive && completeness >= 1.0; }
};

// Shared cell footprint: nucleus, 1 px cytoplasm, then the thickest membrane.
inline constexpr int kNucleusRadiusMin = 9;
inline constexpr int kNucleusRadiusMax = 12;
inline constexpr int kMaxMembrane = 5;
inline constexpr int kCellGap = 1;
inline constexpr double kStromaHematoxylin = 0.12;
inline constexpr double kDabScale = 0.6;

struct Tile {
  RgbImage image;
  std::vector<CellAnnotation> cells;
  Field hematoxylin;            // rendered concentrations
  Field dab;
  BinaryMask tissue;            // generator's tissue mask
  std::vector<double> ideal;    // RGB intensities before rounding/noise (keep_ideal)
  std::size_t dab_pixels = 0;   // pixels with non-zero DAB
};

/// Throws Error(packing) when the cells do not fit within max_attempts.
Tile generate_tile(const TileSpec& spec);

struct ClassParameters {
  double completeness = 0;
  double intensity = 0;
  int membrane_thickness = 0;
  bool stained = false;
};

// Default table: 0 none; 1+ faint incomplete; 2+ moderate complete; 3+ strong complete.
ClassParameters class_parameters(Her2Score s) noexcept;

struct CaseOptions {
  int tile_count = 2;
  int tile_size = 512;
  int cell_count = 120;
  double noise_sigma = 2.0;
  double positive_min = 0.7;
  double positive_max = 0.95;
};

struct SyntheticCase {
  std::string case_id;
  Her2Score score = Her2Score::zero;
  double positive_fraction = 0;
  std::vector<Tile> tiles;
  GroundTruthRecord gt;  // pcms = complete cells / all cells * 100
};

SyntheticCase generate_case(Her2Score score, std::uint64_t seed, const CaseOptions& opts = {},
                            std::string case_id = "1");

// Case i gets score i % 4 and seed mix_seed(seed, i); ids are "s0001"...
std::string synthetic_case_id(int index);
SyntheticCase generate_dataset_case(int index, std::uint64_t seed, const CaseOptions& opts = {});

struct DatasetInfo {
  std::uint64_t seed = 0;
  int case_count = 0;
  double roi_scale = 0.125;  // working-resolution factor relative to 20x
  CaseOptions options;
};

// Writes case_<id>/ihc/tile_<n>.png, case_<id>/annotations.csv, gt.csv and
// synth.json. Cases are generated independently, `jobs` at a time.
void write_dataset(const std::filesystem::path& dir, const DatasetInfo& info, int jobs = 1);

// Reads synth.json back; throws Error(io/format).
DatasetInfo read_dataset_info(const std::filesystem::path& dir);

std::string annotations_csv(const SyntheticCase& c);

}  // namespace her2::synth
