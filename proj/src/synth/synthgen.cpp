#include "her2/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "her2/error.hpp"
#include "her2/ingest.hpp"
#include "her2/parallel.hpp"
#include "her2/text.hpp"

namespace her2::synth {

namespace fs = std::filesystem;

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::integer(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2 * std::numbers::pi * u2);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void TileSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::range, "tile spec: " + what); };
  if (width < 32 || height < 32) fail("tile must be at least 32x32");
  if (cell_count < 0) fail("cell_count must be non-negative");
  if (!(completeness >= 0 && completeness <= 1)) fail("completeness outside [0,1]");
  if (!(stain_intensity >= 0 && stain_intensity <= 1)) fail("stain_intensity outside [0,1]");
  if (!(positive_fraction >= 0 && positive_fraction <= 1)) fail("positive_fraction outside [0,1]");
  if (membrane_thickness < 1 || membrane_thickness > kMaxMembrane) fail("membrane_thickness outside [1,5]");
  if (!(noise_sigma >= 0)) fail("noise_sigma must be non-negative");
  if (min_positive < 0 || min_positive > cell_count) fail("min_positive outside [0,cell_count]");
}

namespace {

struct Rect {
  int x0, y0, x1, y1;
};

Rect tissue_rect(const TileSpec& s) {
  Rect r{s.tissue_x0, s.tissue_y0, s.tissue_x1 < 0 ? s.width : s.tissue_x1,
         s.tissue_y1 < 0 ? s.height : s.tissue_y1};
  r.x0 = std::clamp(r.x0, 0, s.width);
  r.x1 = std::clamp(r.x1, r.x0, s.width);
  r.y0 = std::clamp(r.y0, 0, s.height);
  r.y1 = std::clamp(r.y1, r.y0, s.height);
  return r;
}

int footprint(int nucleus_radius) { return nucleus_radius + 1 + kMaxMembrane; }

}  // namespace

Tile generate_tile(const TileSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Rect area = tissue_rect(spec);

  // rejection sampling of non-overlapping footprints
  std::vector<CellAnnotation> cells;
  cells.reserve(spec.cell_count);
  int attempts = 0;
  while (static_cast<int>(cells.size()) < spec.cell_count) {
    if (++attempts > spec.max_attempts) {
      throw Error(ErrorKind::packing, "could not place " + std::to_string(spec.cell_count) +
                                          " cells; placed " + std::to_string(cells.size()));
    }
    const int rn = rng.integer(kNucleusRadiusMin, kNucleusRadiusMax);
    const int fp = footprint(rn);
    if (area.x1 - area.x0 < 2 * fp + 1 || area.y1 - area.y0 < 2 * fp + 1) {
      throw Error(ErrorKind::packing, "tissue region too small for a single cell");
    }
    const int cx = rng.integer(area.x0 + fp, area.x1 - 1 - fp);
    const int cy = rng.integer(area.y0 + fp, area.y1 - 1 - fp);
    bool ok = true;
    for (const auto& c : cells) {
      const int min_d = fp + footprint(c.nucleus_radius) + kCellGap;
      const int dx = cx - c.cx, dy = cy - c.cy;
      if (dx * dx + dy * dy < min_d * min_d) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    CellAnnotation a;
    a.index = static_cast<int>(cells.size());
    a.cx = cx;
    a.cy = cy;
    a.nucleus_radius = rn;
    a.ring_inner = rn + 1;
    a.ring_outer = rn + 1 + spec.membrane_thickness;
    cells.push_back(a);
  }

  const int n_pos = std::max(spec.min_positive,
                             static_cast<int>(std::lround(spec.positive_fraction * spec.cell_count)));
  for (auto& c : cells) {
    c.hematoxylin = 0.75 + 0.2 * rng.uniform();
    const double dab = kDabScale * spec.stain_intensity * (0.7 + 0.6 * rng.uniform());
    c.start_angle = 2 * std::numbers::pi * rng.uniform();
    c.positive = c.index < n_pos && spec.completeness > 0 && spec.stain_intensity > 0;
    if (c.positive) {
      c.completeness = spec.completeness;
      c.dab = dab;
    }
  }

  Tile tile;
  tile.cells = std::move(cells);
  tile.hematoxylin = Field(spec.width, spec.height, 0.0f);
  tile.dab = Field(spec.width, spec.height, 0.0f);
  tile.tissue = BinaryMask(spec.width, spec.height);
  for (int y = area.y0; y < area.y1; ++y) {
    for (int x = area.x0; x < area.x1; ++x) {
      tile.tissue.set(x, y, true);
      tile.hematoxylin.at(x, y) = static_cast<float>(kStromaHematoxylin);
    }
  }
  for (const auto& c : tile.cells) {
    const int r = c.ring_outer;
    const double arc = 2 * std::numbers::pi * c.completeness;
    for (int y = c.cy - r; y <= c.cy + r; ++y) {
      for (int x = c.cx - r; x <= c.cx + r; ++x) {
        const int dx = x - c.cx, dy = y - c.cy;
        const int d2 = dx * dx + dy * dy;
        if (d2 <= c.nucleus_radius * c.nucleus_radius) {
          tile.hematoxylin.at(x, y) = static_cast<float>(c.hematoxylin);
        } else if (c.positive && d2 >= c.ring_inner * c.ring_inner && d2 < c.ring_outer * c.ring_outer) {
          bool on = c.completeness >= 1.0;
          if (!on) {
            double rel = std::atan2(static_cast<double>(dy), static_cast<double>(dx)) - c.start_angle;
            rel = std::fmod(rel + 4 * std::numbers::pi, 2 * std::numbers::pi);
            on = rel < arc;
          }
          if (on) {
            tile.hematoxylin.at(x, y) = 0.0f;
            tile.dab.at(x, y) = static_cast<float>(c.dab);
          }
        }
      }
    }
  }

  const auto model = img::default_stain_model();
  tile.image = RgbImage(spec.width, spec.height);
  if (spec.keep_ideal) tile.ideal.resize(tile.image.data.size());
  for (std::size_t i = 0; i < tile.image.pixel_count(); ++i) {
    const double ch = tile.hematoxylin.data[i], cd = tile.dab.data[i];
    if (cd > 0) ++tile.dab_pixels;
    for (int k = 0; k < 3; ++k) {
      const double od = ch * model.hematoxylin[k] + cd * model.dab[k];
      const double v = model.i0[k] * std::pow(10.0, -od);
      if (spec.keep_ideal) tile.ideal[3 * i + k] = v;
      const double noisy = spec.noise_sigma > 0 ? v + spec.noise_sigma * rng.normal() : v;
      tile.image.data[3 * i + k] = static_cast<std::uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
    }
  }
  return tile;
}

ClassParameters class_parameters(Her2Score s) noexcept {
  switch (s) {
    case Her2Score::zero: return {0.0, 0.0, 3, false};
    case Her2Score::one: return {0.4, 0.2, 3, true};
    case Her2Score::two: return {1.0, 0.5, 4, true};
    case Her2Score::three: return {1.0, 0.9, 5, true};
  }
  return {};
}

SyntheticCase generate_case(Her2Score score, std::uint64_t seed, const CaseOptions& opts, std::string case_id) {
  if (opts.tile_count < 1) throw Error(ErrorKind::range, "tile_count must be at least 1");
  Rng rng(seed);
  const auto params = class_parameters(score);
  SyntheticCase out;
  out.case_id = std::move(case_id);
  out.score = score;
  out.positive_fraction = params.stained ? rng.uniform(opts.positive_min, opts.positive_max) : 0.0;

  std::size_t total = 0, complete = 0;
  for (int t = 0; t < opts.tile_count; ++t) {
    TileSpec spec;
    spec.width = spec.height = opts.tile_size;
    spec.cell_count = opts.cell_count;
    spec.completeness = params.completeness;
    spec.stain_intensity = params.intensity;
    spec.membrane_thickness = params.membrane_thickness;
    spec.positive_fraction = out.positive_fraction;
    spec.min_positive = params.stained ? 1 : 0;
    spec.noise_sigma = opts.noise_sigma;
    spec.seed = mix_seed(seed, static_cast<std::uint64_t>(t) + 1);
    out.tiles.push_back(generate_tile(spec));
    for (const auto& c : out.tiles.back().cells) {
      ++total;
      complete += c.complete() ? 1 : 0;
    }
  }
  out.gt.case_id = out.case_id;
  out.gt.score = score;
  out.gt.fish = FishStatus::not_performed;
  out.gt.pcms = total ? 100.0 * static_cast<double>(complete) / static_cast<double>(total) : 0.0;
  return out;
}

std::string synthetic_case_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%04d", index + 1);
  return buf;
}

SyntheticCase generate_dataset_case(int index, std::uint64_t seed, const CaseOptions& opts) {
  return generate_case(score_from_index(index % 4), mix_seed(seed, static_cast<std::uint64_t>(index)), opts,
                       synthetic_case_id(index));
}

std::string annotations_csv(const SyntheticCase& c) {
  std::string out = "tile,cell,cx,cy,nucleus_radius,ring_inner,ring_outer,positive,completeness,dab,hematoxylin\n";
  for (std::size_t t = 0; t < c.tiles.size(); ++t) {
    for (const auto& a : c.tiles[t].cells) {
      out += std::to_string(t) + "," + std::to_string(a.index) + "," + std::to_string(a.cx) + "," +
             std::to_string(a.cy) + "," + std::to_string(a.nucleus_radius) + "," + std::to_string(a.ring_inner) +
             "," + std::to_string(a.ring_outer) + "," + (a.positive ? "1" : "0") + "," +
             text::format_fixed(a.completeness, 3) + "," + text::format_fixed(a.dab, 4) + "," +
             text::format_fixed(a.hematoxylin, 4) + "\n";
    }
  }
  return out;
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + p.string());
  out << s;
}

}  // namespace

void write_dataset(const fs::path& dir, const DatasetInfo& info, int jobs) {
  if (info.case_count < 1) throw Error(ErrorKind::range, "case_count must be at least 1");
  fs::create_directories(dir);
  std::vector<GroundTruthRecord> gt(static_cast<std::size_t>(info.case_count));
  parallel_for(info.case_count, jobs, [&](int i) {
    const auto c = generate_dataset_case(i, info.seed, info.options);
    const fs::path cdir = dir / ("case_" + c.case_id);
    fs::create_directories(cdir / "ihc");
    for (std::size_t t = 0; t < c.tiles.size(); ++t) {
      write_png(cdir / "ihc" / ("tile_" + std::to_string(t) + ".png"), c.tiles[t].image);
    }
    write_text(cdir / "annotations.csv", annotations_csv(c));
    gt[static_cast<std::size_t>(i)] = c.gt;
  });

  ingest::GroundTruthFile file;
  file.rows = std::move(gt);
  write_text(dir / "gt.csv", ingest::render_ground_truth(file));

  const auto model = img::default_stain_model();
  nlohmann::ordered_json j;
  j["generator"] = "her2kit-synth";
  j["format_version"] = 1;
  j["seed"] = info.seed;
  j["case_count"] = info.case_count;
  j["roi_scale"] = info.roi_scale;
  j["tile_count"] = info.options.tile_count;
  j["tile_size"] = info.options.tile_size;
  j["cell_count"] = info.options.cell_count;
  j["noise_sigma"] = info.options.noise_sigma;
  j["positive_min"] = info.options.positive_min;
  j["positive_max"] = info.options.positive_max;
  j["stain_model"] = {{"hematoxylin", model.hematoxylin}, {"dab", model.dab}, {"i0", model.i0}};
  write_text(dir / "synth.json", j.dump(2) + "\n");
}

DatasetInfo read_dataset_info(const fs::path& dir) {
  const auto text = ingest::read_file(dir / "synth.json");
  DatasetInfo info;
  try {
    const auto j = nlohmann::json::parse(text);
    info.seed = j.at("seed").get<std::uint64_t>();
    info.case_count = j.at("case_count").get<int>();
    info.roi_scale = j.value("roi_scale", 0.125);
    info.options.tile_count = j.value("tile_count", info.options.tile_count);
    info.options.tile_size = j.value("tile_size", info.options.tile_size);
    info.options.cell_count = j.value("cell_count", info.options.cell_count);
    info.options.noise_sigma = j.value("noise_sigma", info.options.noise_sigma);
    info.options.positive_min = j.value("positive_min", info.options.positive_min);
    info.options.positive_max = j.value("positive_max", info.options.positive_max);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, (dir / "synth.json").string() + ": " + e.what());
  }
  return info;
}

}  // namespace her2::synth
