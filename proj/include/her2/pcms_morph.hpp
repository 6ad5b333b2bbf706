#pragma once

#include <cstddef>

#include "her2/image.hpp"
#include "her2/imgproc.hpp"
#include "her2/ingest.hpp"
#include "her2/score.hpp"

// Morphological PCMS (nuclei from hematoxylin, membrane extent from the DAB
// skeleton) and the class-prior PCMS fallback.
namespace her2::pcms {

struct NucleusFilter {
  std::size_t area_min = 80;
  std::size_t area_max = 2500;
  double eccentricity_max = 0.92;
};

struct TumorMask {
  BinaryMask mask;                         // accepted regions only
  std::vector<img::RegionStats> regions;   // accepted regions
  std::size_t area = 0;
  bool empty = true;                       // no accepted region
  int otsu_level = 0;
};

// Otsu on the hematoxylin map quantised to 0..255 over [0, max]; components
// above the level are kept when they pass the area/eccentricity filter.
TumorMask segment_tumor_nuclei(const Field& hematoxylin, const NucleusFilter& filter = {});

inline constexpr double kDefaultDabThreshold = 0.05;

struct MembraneExtent {
  BinaryMask binary;    // DAB > threshold
  BinaryMask skeleton;
  BinaryMask filled;    // holes of the skeleton filled
  // Dice(filled, binary with its holes filled): a closed chicken-wire
  // pattern and its filled skeleton cover the same region.
  double similarity = 0;
  double extent = 0;      // |filled| * similarity
};

MembraneExtent membrane_extent(const Field& dab, double threshold = kDefaultDabThreshold);

double dice(const BinaryMask& a, const BinaryMask& b);

struct MorphPcms {
  double pcms = 0;      // [0,100]
  bool empty_tumor = false;
};

MorphPcms pcms_morphological(const TumorMask& tumor, const MembraneExtent& membrane);

// Pools several tiles: 100 * sum(extent) / sum(tumor area).
MorphPcms pcms_morphological(std::span<const TumorMask> tumors, std::span<const MembraneExtent> membranes);

// Convenience: deconvolve, segment and measure one RGB tile.
struct TileMorphology {
  TumorMask tumor;
  MembraneExtent membrane;
  MorphPcms pcms;
};
TileMorphology analyse_tile(const RgbImage& tile, const img::StainModel& model = img::default_stain_model(),
                            const NucleusFilter& filter = {}, double dab_threshold = kDefaultDabThreshold);

// Mean gt.pcms of training cases with the given score. Error(coverage) when
// the score does not occur or none of its rows carries a PCMS.
double pcms_class_prior(const ingest::GroundTruthFile& training, Her2Score score);

// Angular membrane coverage around each accepted nucleus: the share of rays
// that meet DAB within a band just outside the nucleus, area-weighted over
// nuclei, x 100. A diagnostic that tracks arc completeness.
double membrane_coverage(const TumorMask& tumor, const Field& dab, double threshold = kDefaultDabThreshold,
                         int band = 6, int rays = 360);

}  // namespace her2::pcms
