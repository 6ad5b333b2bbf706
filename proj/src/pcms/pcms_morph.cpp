#include "her2/pcms_morph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "her2/error.hpp"

namespace her2::pcms {

TumorMask segment_tumor_nuclei(const Field& h, const NucleusFilter& filter) {
  TumorMask out;
  out.mask = BinaryMask(h.width, h.height);
  float peak = 0;
  for (float v : h.data) peak = std::max(peak, v);
  if (!(peak > 0)) return out;

  GrayImage g(h.width, h.height);
  for (std::size_t i = 0; i < h.data.size(); ++i) {
    const double q = std::max(0.0f, h.data[i]) / peak * 255.0;
    g.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(q), 0L, 255L));
  }
  const auto otsu = img::otsu_threshold(img::histogram(g));
  out.otsu_level = otsu.level;
  if (otsu.degenerate) return out;

  BinaryMask fg(h.width, h.height);
  for (std::size_t i = 0; i < g.data.size(); ++i) fg.data[i] = g.data[i] > otsu.level;
  const auto lab = img::label_components(fg);
  std::vector<char> keep(lab.regions.size() + 1, 0);
  for (const auto& r : lab.regions) {
    if (r.area >= filter.area_min && r.area <= filter.area_max && r.eccentricity <= filter.eccentricity_max) {
      keep[r.label] = 1;
      out.regions.push_back(r);
      out.area += r.area;
    }
  }
  for (std::size_t i = 0; i < lab.labels.size(); ++i) out.mask.data[i] = keep[lab.labels[i]];
  out.empty = out.regions.empty();
  return out;
}

double dice(const BinaryMask& a, const BinaryMask& b) {
  if (a.width != b.width || a.height != b.height) throw Error(ErrorKind::shape, "dice: mask sizes differ");
  std::size_t both = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i];
    nb += b.data[i];
    both += a.data[i] & b.data[i];
  }
  if (na + nb == 0) return 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

MembraneExtent membrane_extent(const Field& dab, double threshold) {
  MembraneExtent m;
  m.binary = BinaryMask(dab.width, dab.height);
  for (std::size_t i = 0; i < dab.data.size(); ++i) m.binary.data[i] = dab.data[i] > threshold;
  m.skeleton = img::skeletonize(m.binary);
  m.filled = img::fill_holes(m.skeleton);
  m.similarity = dice(m.filled, img::fill_holes(m.binary));
  m.extent = static_cast<double>(m.filled.count()) * m.similarity;
  return m;
}

MorphPcms pcms_morphological(const TumorMask& tumor, const MembraneExtent& membrane) {
  return pcms_morphological(std::span(&tumor, 1), std::span(&membrane, 1));
}

MorphPcms pcms_morphological(std::span<const TumorMask> tumors, std::span<const MembraneExtent> membranes) {
  if (tumors.size() != membranes.size()) throw Error(ErrorKind::shape, "tumor/membrane list lengths differ");
  double area = 0, extent = 0;
  for (std::size_t i = 0; i < tumors.size(); ++i) {
    area += static_cast<double>(tumors[i].area);
    extent += membranes[i].extent;
  }
  if (area <= 0) return {0.0, true};
  return {std::clamp(100.0 * extent / area, 0.0, 100.0), false};
}

TileMorphology analyse_tile(const RgbImage& tile, const img::StainModel& model, const NucleusFilter& filter,
                            double dab_threshold) {
  const auto c = img::deconvolve(img::rgb_to_od(tile), model);
  TileMorphology t;
  t.tumor = segment_tumor_nuclei(c.hematoxylin, filter);
  t.membrane = membrane_extent(c.dab, dab_threshold);
  t.pcms = pcms_morphological(t.tumor, t.membrane);
  return t;
}

double pcms_class_prior(const ingest::GroundTruthFile& training, Her2Score score) {
  // Sorted before summing so the result does not depend on row order.
  std::vector<double> v;
  for (const auto& r : training.rows) {
    if (r.score == score && r.pcms) v.push_back(*r.pcms);
  }
  if (v.empty()) {
    throw Error(ErrorKind::coverage, "no training case with score " + std::string(to_label(score)));
  }
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double membrane_coverage(const TumorMask& tumor, const Field& dab, double threshold, int band, int rays) {
  double weighted = 0, area = 0;
  for (const auto& r : tumor.regions) {
    const double r_eq = std::sqrt(static_cast<double>(r.area) / std::numbers::pi);
    int hits = 0;
    for (int k = 0; k < rays; ++k) {
      const double th = 2 * std::numbers::pi * k / rays;
      const double dx = std::cos(th), dy = std::sin(th);
      for (double rho = r_eq + 0.5; rho <= r_eq + band; rho += 0.5) {
        const int x = static_cast<int>(std::lround(r.cx + rho * dx));
        const int y = static_cast<int>(std::lround(r.cy + rho * dy));
        if (x < 0 || y < 0 || x >= dab.width || y >= dab.height) continue;
        if (dab.at(x, y) > threshold) {
          ++hits;
          break;
        }
      }
    }
    weighted += static_cast<double>(hits) / rays * static_cast<double>(r.area);
    area += static_cast<double>(r.area);
  }
  return area > 0 ? 100.0 * weighted / area : 0.0;
}

}  // namespace her2::pcms
