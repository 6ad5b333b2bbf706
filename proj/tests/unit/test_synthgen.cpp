#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "her2/error.hpp"
#include "her2/ingest.hpp"
#include "her2/synthgen.hpp"

using namespace her2;
using namespace her2::synth;
namespace fs = std::filesystem;

namespace {

TileSpec small_spec() {
  TileSpec s;
  s.width = s.height = 256;
  s.cell_count = 30;
  s.seed = 99;
  return s;
}

std::string slurp(const fs::path& p) { return ingest::read_file(p); }

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("rng is reproducible and well behaved") {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next() == b.next());
  Rng r(1);
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const int k = r.integer(3, 5);
    REQUIRE(k >= 3);
    REQUIRE(k <= 5);
    const double n = r.normal();
    sum += n;
    sq += n * n;
  }
  CHECK(sum / 20000 == doctest::Approx(0.0).epsilon(0.05).scale(1));
  CHECK(sq / 20000 == doctest::Approx(1.0).epsilon(0.05));
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
}

TEST_CASE("tile generation") {
  SUBCASE("identical spec gives identical bytes") {
    auto s = small_spec();
    s.noise_sigma = 2;
    s.completeness = 0.6;
    const auto a = generate_tile(s), b = generate_tile(s);
    CHECK(a.image.data == b.image.data);
    s.seed = 100;
    CHECK(generate_tile(s).image.data != a.image.data);
  }
  SUBCASE("p = 0 paints no membrane") {
    auto s = small_spec();
    s.completeness = 0;
    const auto t = generate_tile(s);
    CHECK(t.dab_pixels == 0);
    const auto od = img::rgb_to_od(t.image);
    const auto c = img::deconvolve(od, img::default_stain_model());
    for (float v : c.dab.data) REQUIRE(v < 0.02f);
  }
  SUBCASE("fully stained cells are all annotated complete") {
    auto s = small_spec();
    s.width = s.height = 512;
    s.cell_count = 50;
    s.completeness = 1;
    s.stain_intensity = 0.9;
    const auto t = generate_tile(s);
    REQUIRE(t.cells.size() == 50);
    int complete = 0;
    for (const auto& c : t.cells) complete += c.complete();
    CHECK(complete == 50);
  }
  SUBCASE("cells never overlap and stay inside the tissue") {
    auto s = small_spec();
    s.tissue_x1 = 128;
    s.cell_count = 12;
    const auto t = generate_tile(s);
    for (std::size_t i = 0; i < t.cells.size(); ++i) {
      const auto& a = t.cells[i];
      REQUIRE(a.cx - a.ring_outer >= 0);
      REQUIRE(a.cx + a.ring_outer < 128);
      for (std::size_t j = i + 1; j < t.cells.size(); ++j) {
        const auto& b = t.cells[j];
        const double d = std::hypot(a.cx - b.cx, a.cy - b.cy);
        REQUIRE(d >= a.ring_outer + b.ring_outer);
      }
    }
    CHECK(t.tissue.at(127, 10));
    CHECK_FALSE(t.tissue.at(128, 10));
    CHECK(t.image.at(200, 100) == Rgb{255, 255, 255});
  }
  SUBCASE("arc length follows completeness") {
    auto s = small_spec();
    s.stain_intensity = 0.5;
    std::size_t full = 0;
    for (double p : {1.0, 0.5, 0.25}) {
      s.completeness = p;
      const auto t = generate_tile(s);
      if (p == 1.0) full = t.dab_pixels;
      CHECK(static_cast<double>(t.dab_pixels) == doctest::Approx(p * full).epsilon(0.05));
    }
  }
  SUBCASE("infeasible packing") {
    auto s = small_spec();
    s.cell_count = 400;
    s.max_attempts = 20000;
    try {
      generate_tile(s);
      FAIL("expected packing error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::packing);
    }
  }
  SUBCASE("invalid spec") {
    auto s = small_spec();
    s.completeness = 1.5;
    CHECK_THROWS_AS(generate_tile(s), Error);
  }
}

TEST_CASE("deconvolution closes the loop with the generator") {
  auto s = small_spec();
  s.completeness = 0.7;
  s.stain_intensity = 0.8;
  s.keep_ideal = true;
  const auto t = generate_tile(s);
  const auto model = img::default_stain_model();

  img::OdImage ideal{t.image.width, t.image.height, std::vector<double>(t.ideal.size())};
  for (std::size_t i = 0; i < t.ideal.size(); ++i) ideal.data[i] = -std::log10(t.ideal[i] / 255.0);
  const auto exact = img::deconvolve(ideal, model);
  for (std::size_t i = 0; i < exact.dab.data.size(); ++i) {
    REQUIRE(std::fabs(exact.dab.data[i] - t.dab.data[i]) < 1e-3);
    REQUIRE(std::fabs(exact.hematoxylin.data[i] - t.hematoxylin.data[i]) < 1e-3);
  }

  // The stored 8-bit image carries rounding error of up to half a grey
  // level; the recovered concentration must lie within that propagated bound.
  const auto q = img::deconvolve(img::rgb_to_od(t.image), model);
  const double sxx = 1.0;  // unit stain vectors
  const double sxy = model.hematoxylin[0] * model.dab[0] + model.hematoxylin[1] * model.dab[1] +
                     model.hematoxylin[2] * model.dab[2];
  const double det = sxx * sxx - sxy * sxy;
  std::size_t over_1e3 = 0;
  for (std::size_t i = 0; i < q.dab.data.size(); ++i) {
    double bound_h = 0, bound_d = 0;
    for (int k = 0; k < 3; ++k) {
      const double v = t.ideal[3 * i + k];
      const double dod = std::log10(v / std::max(v - 0.5, 1e-9));
      bound_h += std::fabs((model.hematoxylin[k] - sxy * model.dab[k]) / det) * dod;
      bound_d += std::fabs((model.dab[k] - sxy * model.hematoxylin[k]) / det) * dod;
    }
    REQUIRE(std::fabs(q.hematoxylin.data[i] - t.hematoxylin.data[i]) <= bound_h + 1e-6);
    REQUIRE(std::fabs(q.dab.data[i] - t.dab.data[i]) <= bound_d + 1e-6);
    if (std::fabs(q.dab.data[i] - t.dab.data[i]) > 1e-3) ++over_1e3;
  }
  MESSAGE("8-bit pixels with DAB error above 1e-3: ", over_1e3, " of ", q.dab.data.size());
}

TEST_CASE("synthetic cases") {
  CaseOptions small;
  small.tile_size = 256;
  small.cell_count = 30;
  small.tile_count = 2;

  const auto zero = generate_case(Her2Score::zero, 1, small);
  CHECK(*zero.gt.pcms == 0.0);
  for (const auto& t : zero.tiles) CHECK(t.dab_pixels == 0);

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto three = generate_case(Her2Score::three, seed, small);
    for (const auto& t : three.tiles) {
      int strong = 0;
      for (const auto& c : t.cells) strong += c.complete() && c.dab >= 0.3;
      CHECK(strong >= 1);
    }
    std::size_t all = 0, complete = 0;
    for (const auto& t : three.tiles) {
      for (const auto& c : t.cells) {
        ++all;
        complete += c.complete();
      }
    }
    CHECK(*three.gt.pcms == doctest::Approx(100.0 * complete / all).epsilon(1e-12));
  }

  const auto one = generate_case(Her2Score::one, 3, small);
  CHECK(*one.gt.pcms == 0.0);  // incomplete rings only

  SUBCASE("balanced set separates the classes by DAB stained fraction") {
    CaseOptions tiny;
    tiny.tile_size = 192;
    tiny.cell_count = 16;
    tiny.tile_count = 1;
    double sum[4] = {0, 0, 0, 0};
    int n[4] = {0, 0, 0, 0};
    for (int i = 0; i < 200; ++i) {
      const auto c = generate_dataset_case(i, 2024, tiny);
      const auto& t = c.tiles[0];
      sum[index_of(c.score)] += static_cast<double>(t.dab_pixels) / t.image.pixel_count();
      ++n[index_of(c.score)];
    }
    for (int k = 0; k < 4; ++k) CHECK(n[k] == 50);
    CHECK(sum[0] / 50 < sum[1] / 50);
    CHECK(sum[1] / 50 < sum[2] / 50);
    CHECK(sum[2] / 50 < sum[3] / 50);
  }
}

TEST_CASE("dataset layout and determinism across worker counts") {
  const auto base = fs::temp_directory_path() / "her2kit_synth";
  fs::remove_all(base);
  DatasetInfo info;
  info.seed = 77;
  info.case_count = 6;
  info.options.tile_size = 192;
  info.options.cell_count = 16;
  write_dataset(base / "a", info, 1);
  write_dataset(base / "b", info, 3);
  const auto a = tree(base / "a"), b = tree(base / "b");
  CHECK(a == b);
  CHECK(a.count("case_s0001/ihc/tile_0.png") == 1);
  CHECK(a.count("case_s0006/ihc/tile_1.png") == 1);
  CHECK(a.count("case_s0003/annotations.csv") == 1);

  const auto gt = ingest::read_ground_truth(base / "a" / "gt.csv");
  REQUIRE(gt.rows.size() == 6);
  CHECK(gt.rows[0].case_id == "s0001");
  CHECK(gt.rows[0].score == Her2Score::zero);
  CHECK(gt.rows[3].score == Her2Score::three);

  const auto back = read_dataset_info(base / "a");
  CHECK(back.seed == 77);
  CHECK(back.case_count == 6);
  CHECK(back.options.tile_size == 192);
  CHECK(back.roi_scale == 0.125);
  fs::remove_all(base);
}
