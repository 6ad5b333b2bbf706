#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "her2/error.hpp"
#include "her2/imgproc.hpp"

using namespace her2;
using namespace her2::img;
namespace fs = std::filesystem;

namespace {

BinaryMask disk(int w, int h, double cx, double cy, double r) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) m.set(x, y, std::hypot(x - cx, y - cy) <= r);
  }
  return m;
}

BinaryMask ring(int w, int h, double cx, double cy, double r_in, double r_out) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      m.set(x, y, d >= r_in && d <= r_out);
    }
  }
  return m;
}

BinaryMask unite(const BinaryMask& a, const BinaryMask& b) {
  BinaryMask m = a;
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] |= b.data[i];
  return m;
}

// Exact Otsu scan: compare (s0*w1 - s1*w0)^2 / (w0*w1) by cross multiplication.
int otsu_oracle(const Histogram& h) {
  __int128 best_num = -1, best_den = 1;
  int best = -1;
  long long total = 0, sum = 0;
  for (int i = 0; i < 256; ++i) {
    total += static_cast<long long>(h[i]);
    sum += static_cast<long long>(h[i]) * i;
  }
  for (int t = 0; t < 255; ++t) {
    long long w0 = 0, s0 = 0;
    for (int i = 0; i <= t; ++i) {
      w0 += static_cast<long long>(h[i]);
      s0 += static_cast<long long>(h[i]) * i;
    }
    const long long w1 = total - w0, s1 = sum - s0;
    if (w0 == 0 || w1 == 0) continue;
    const __int128 d = static_cast<__int128>(s0) * w1 - static_cast<__int128>(s1) * w0;
    const __int128 num = d * d, den = static_cast<__int128>(w0) * w1;
    if (best < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best = t;
    }
  }
  return best;
}

struct BruteGlcm {
  double contrast = 0, energy = 0, homogeneity = 0;
};

BruteGlcm glcm_oracle(const GrayImage& g, int dx, int dy, int levels) {
  std::vector<std::vector<double>> c(levels, std::vector<double>(levels, 0));
  double n = 0;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const int x2 = x + dx, y2 = y + dy;
      if (x2 < 0 || y2 < 0 || x2 >= g.width || y2 >= g.height) continue;
      const int a = g.at(x, y) * levels / 256, b = g.at(x2, y2) * levels / 256;
      c[a][b] += 1;
      c[b][a] += 1;
      n += 2;
    }
  }
  BruteGlcm f;
  for (int i = 0; i < levels; ++i) {
    for (int j = 0; j < levels; ++j) {
      const double p = c[i][j] / n;
      f.contrast += (i - j) * (i - j) * p;
      f.energy += p * p;
      f.homogeneity += p / (1.0 + (i - j) * (i - j));
    }
  }
  return f;
}

}  // namespace

TEST_CASE("hsb conversion") {
  const auto red = rgb_to_hsb({255, 0, 0});
  CHECK(red.hue == 0);
  CHECK(red.saturation == 1);
  CHECK(red.brightness == 1);
  CHECK(rgb_to_hsb({128, 128, 128}).saturation == 0);
  CHECK(rgb_to_hsb({128, 128, 128}).hue == 0);
  // reference: colorsys.rgb_to_hsv(128/255, 64/255, 32/255)
  const auto p = rgb_to_hsb({128, 64, 32});
  CHECK(p.hue == doctest::Approx(0.05555555555555556 * 360));
  CHECK(p.saturation == doctest::Approx(0.75));
  CHECK(p.brightness == doctest::Approx(0.5019607843137255));
  CHECK(rgb_to_hsb({255, 0, 1}).hue < 360.0);
  CHECK(rgb_to_hsb({0, 0, 255}).hue == 240.0);
}

TEST_CASE("lab conversion") {
  const auto w = rgb_to_lab({255, 255, 255});
  CHECK(w.L == doctest::Approx(100).epsilon(1e-6));
  CHECK(std::fabs(w.a) < 0.01);
  CHECK(std::fabs(w.b) < 0.01);
  CHECK(rgb_to_lab({0, 0, 0}).L == doctest::Approx(0));
  // reference: skimage.color.rgb2lab
  CHECK(rgb_to_lab({128, 128, 128}).L == doctest::Approx(53.5850135).epsilon(1e-6));
  const auto c = rgb_to_lab({128, 64, 32});
  CHECK(c.L == doctest::Approx(34.7247959).epsilon(1e-5));
  CHECK(c.a == doctest::Approx(24.9995677).epsilon(1e-4));
  CHECK(c.b == doctest::Approx(31.3728397).epsilon(1e-4));
}

TEST_CASE("optical density") {
  CHECK(intensity_to_od(255) == 0.0);
  CHECK(intensity_to_od(25.5) == doctest::Approx(1.0));
  CHECK(std::isfinite(intensity_to_od(0)));
  CHECK(intensity_to_od(0) == doctest::Approx(-std::log10(1.0 / 255 / 255)));
  RgbImage im(2, 1, {255, 255, 255});
  im.set(1, 0, {0, 25, 255});
  const auto od = rgb_to_od(im);
  CHECK(od.at(0) == Vec3{0, 0, 0});
  CHECK(od.at(1)[1] == doctest::Approx(-std::log10(25.0 / 255)));
}

TEST_CASE("deconvolution") {
  const auto m = default_stain_model();
  const auto h2 = deconvolve_pixel({2 * m.hematoxylin[0], 2 * m.hematoxylin[1], 2 * m.hematoxylin[2]}, m);
  CHECK(h2[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::fabs(h2[1]) < 1e-12);
  CHECK(deconvolve_pixel({0, 0, 0}, m) == std::array<double, 2>{0, 0});

  SUBCASE("round trip on random non-negative mixtures") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    OdImage od{64, 64, std::vector<double>(64 * 64 * 3)};
    std::vector<std::array<double, 2>> truth(64 * 64);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      truth[i] = {u(rng), u(rng)};
      for (int k = 0; k < 3; ++k) od.data[3 * i + k] = truth[i][0] * m.hematoxylin[k] + truth[i][1] * m.dab[k];
    }
    const auto c = deconvolve(od, m);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      REQUIRE(std::fabs(c.hematoxylin.data[i] - truth[i][0]) < 1e-6);
      REQUIRE(std::fabs(c.dab.data[i] - truth[i][1]) < 1e-6);
      const auto p = deconvolve_pixel(od.at(i), m);
      REQUIRE(std::fabs(p[0] - truth[i][0]) < 1e-9);
    }
  }
  SUBCASE("concentrations are clamped at zero") {
    const auto c = deconvolve_pixel({-m.dab[0], -m.dab[1], -m.dab[2]}, m);
    CHECK(c[1] == 0.0);
  }
  SUBCASE("singular stain matrix") {
    StainModel bad = m;
    bad.dab = bad.hematoxylin;
    CHECK_THROWS_AS(deconvolve_pixel({1, 1, 1}, bad), Error);
  }
}

TEST_CASE("stain vector estimation") {
  const auto truth = default_stain_model();
  SUBCASE("recovers known vectors from a noisy two-stain image") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> w(0.0, 1.2);
    std::normal_distribution<double> noise(0.0, 2.0);
    RgbImage im(64, 64);
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const double a = w(rng), b = w(rng);
        std::uint8_t c[3];
        for (int k = 0; k < 3; ++k) {
          const double od = a * truth.hematoxylin[k] + b * truth.dab[k];
          c[k] = static_cast<std::uint8_t>(std::clamp(std::lround(255 * std::pow(10, -od) + noise(rng)), 0L, 255L));
        }
        im.set(x, y, {c[0], c[1], c[2]});
      }
    }
    const auto est = estimate_stain_vectors(rgb_to_od(im));
    CHECK(angle_degrees(est.hematoxylin, truth.hematoxylin) <= 5.0);
    CHECK(angle_degrees(est.dab, truth.dab) <= 5.0);
    for (const auto* v : {&est.hematoxylin, &est.dab}) {
      CHECK(std::hypot((*v)[0], (*v)[1], (*v)[2]) == doctest::Approx(1.0));
      for (double c : *v) CHECK(c >= 0.0);
    }
  }
  SUBCASE("blank image") {
    CHECK_THROWS_AS(estimate_stain_vectors(rgb_to_od(RgbImage(32, 32))), Error);
  }
  SUBCASE("rank one cloud") {
    std::vector<Vec3> px;
    for (int i = 0; i < 500; ++i) {
      const double s = 0.2 + i * 0.002;
      px.push_back({s * truth.dab[0], s * truth.dab[1], s * truth.dab[2]});
    }
    try {
      estimate_stain_vectors(px);
      FAIL("expected degenerate input");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::degenerate_input);
    }
  }
}

TEST_CASE("otsu") {
  Histogram h{};
  h[50] = 100;
  h[200] = 300;
  const auto r = otsu_threshold(h);
  CHECK(r.level >= 50);
  CHECK(r.level <= 199);
  CHECK(r.level == 50);  // lowest maximizing level
  CHECK_FALSE(r.degenerate);

  Histogram flat{};
  flat[77] = 10;
  CHECK(otsu_threshold(flat).degenerate);
  CHECK(otsu_threshold(flat).level == 77);
  CHECK_THROWS_AS(otsu_threshold(Histogram{}), Error);

  SUBCASE("matches an exact brute-force scan") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 300; ++trial) {
      Histogram rh{};
      const int spikes = 2 + static_cast<int>(rng() % 12);
      for (int s = 0; s < spikes; ++s) rh[rng() % 256] += 1 + rng() % 200;
      if (trial % 3 == 0) {
        for (auto& v : rh) v += rng() % 3;
      }
      int nonzero = 0;
      for (auto v : rh) nonzero += v != 0;
      if (nonzero < 2) continue;
      REQUIRE(otsu_threshold(rh).level == otsu_oracle(rh));
    }
  }
}

TEST_CASE("adaptive threshold") {
  CHECK(adaptive_threshold(GrayImage(20, 20, 200), 31, 10).count() == 400);
  CHECK(adaptive_threshold(GrayImage(20, 20, 200), 31, 0).count() == 0);
  CHECK_THROWS_AS(adaptive_threshold(GrayImage(5, 5), 4), Error);

  SUBCASE("dark disk on a bright field") {
    GrayImage g(128, 128, 230);
    const auto d = disk(128, 128, 64, 64, 20);
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) {
        if (d.at(x, y)) g.at(x, y) = 40;
      }
    }
    const auto m = adaptive_threshold(g, 31, 10);
    const double field = 1.0 - static_cast<double>(d.count()) / (128 * 128);
    const double ones = static_cast<double>(m.count()) / (128 * 128);
    CHECK(ones == doctest::Approx(field).epsilon(0.02));
    // direct window-mean oracle
    for (int y = 0; y < 128; y += 3) {
      for (int x = 0; x < 128; x += 3) {
        double sum = 0, n = 0;
        for (int yy = std::max(0, y - 15); yy <= std::min(127, y + 15); ++yy) {
          for (int xx = std::max(0, x - 15); xx <= std::min(127, x + 15); ++xx) {
            sum += g.at(xx, yy);
            n += 1;
          }
        }
        REQUIRE(m.at(x, y) == (g.at(x, y) > sum / n - 10));
      }
    }
  }
  SUBCASE("ones never decrease as the offset grows") {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      GrayImage g(40, 30);
      for (auto& v : g.data) v = static_cast<std::uint8_t>(rng() % 256);
      std::size_t prev = 0;
      for (double off = -20; off <= 40; off += 2.5) {
        const auto c = adaptive_threshold(g, 7, off).count();
        REQUIRE(c >= prev);
        prev = c;
      }
    }
  }
}

TEST_CASE("connected components") {
  CHECK(connected_components(BinaryMask(10, 10)).empty());
  const auto d = connected_components(disk(60, 60, 30, 30, 20));
  REQUIRE(d.size() == 1);
  CHECK(d[0].eccentricity < 0.1);
  CHECK(d[0].cx == doctest::Approx(30));

  BinaryMask bar(30, 5);
  for (int x = 5; x < 25; ++x) bar.set(x, 2, true);
  const auto b = connected_components(bar);
  REQUIRE(b.size() == 1);
  CHECK(b[0].area == 20);
  // closed form with unit-square pixels: lambda1 = 400/12, lambda2 = 1/12
  CHECK(b[0].eccentricity == doctest::Approx(std::sqrt(1.0 - 1.0 / 400.0)));
  CHECK(b[0].eccentricity > 0.99);

  BinaryMask diag(5, 5);
  diag.set(0, 0, true);
  diag.set(1, 1, true);
  diag.set(3, 3, true);
  CHECK(connected_components(diag).size() == 2);  // diagonal neighbours join
}

TEST_CASE("skeletonize") {
  CHECK(skeletonize(BinaryMask(8, 8)).count() == 0);

  BinaryMask bar(60, 15);
  for (int y = 5; y < 10; ++y) {
    for (int x = 10; x < 50; ++x) bar.set(x, y, true);
  }
  const auto s = skeletonize(bar);
  int min_x = 1000, max_x = -1, rows_used = 0;
  for (int y = 0; y < 15; ++y) {
    int in_row = 0;
    for (int x = 0; x < 60; ++x) {
      if (!s.at(x, y)) continue;
      ++in_row;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
    }
    rows_used += in_row > 0;
  }
  // Parallel thinning erodes the bar corners before the ends become
  // endpoints, so the centreline loses up to 3 px per end.
  CHECK(rows_used == 1);
  int centre = 0;
  for (int x = 0; x < 60; ++x) centre += s.at(x, 7);
  CHECK(centre == max_x - min_x + 1);
  CHECK(min_x >= 10);
  CHECK(max_x <= 49);
  CHECK(min_x - 10 <= 3);
  CHECK(49 - max_x <= 3);
  MESSAGE("bar skeleton spans x=", min_x, "..", max_x, " over ", rows_used, " rows");

  SUBCASE("thin line is unchanged") {
    BinaryMask line(30, 5);
    for (int x = 3; x < 27; ++x) line.set(x, 2, true);
    CHECK(skeletonize(line) == line);
  }
  SUBCASE("idempotent and a subset of the input") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
      BinaryMask m(48, 48);
      for (int k = 0; k < 6; ++k) {
        m = unite(m, disk(48, 48, rng() % 48, rng() % 48, 3 + rng() % 8));
      }
      const auto s1 = skeletonize(m);
      REQUIRE(skeletonize(s1) == s1);
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (s1.data[i]) REQUIRE(m.data[i]);
      }
      // connectivity of each blob survives thinning
      REQUIRE(connected_components(s1).size() == connected_components(m).size());
    }
  }
}

TEST_CASE("fill holes") {
  const auto annulus = ring(64, 64, 32, 32, 10, 14);
  const auto filled = fill_holes(annulus);
  CHECK(filled == disk(64, 64, 32, 32, 14));
  CHECK(fill_holes(filled) == filled);
  const auto solid = disk(64, 64, 30, 30, 12);
  CHECK(fill_holes(solid) == solid);

  SUBCASE("nested rings fill to the outer disk") {
    const auto nested = unite(ring(80, 80, 40, 40, 25, 28), ring(80, 80, 40, 40, 8, 11));
    const auto f = fill_holes(nested);
    // flood-fill oracle: every pixel strictly inside the outer ring is reached
    CHECK(f == disk(80, 80, 40, 40, 28));
  }
  SUBCASE("diagonal gaps do not leak") {
    BinaryMask m(7, 7);
    // diamond outline: background inside is only diagonally adjacent to outside
    const int pts[][2] = {{3, 1}, {2, 2}, {4, 2}, {1, 3}, {5, 3}, {2, 4}, {4, 4}, {3, 5}};
    for (auto& p : pts) m.set(p[0], p[1], true);
    CHECK(fill_holes(m).at(3, 3));
  }
}

TEST_CASE("glcm") {
  const auto flat = glcm_features(GrayImage(16, 16, 90));
  CHECK(flat.contrast == 0);
  CHECK(flat.energy == 1);
  CHECK(flat.correlation == 1);

  GrayImage checker(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) checker.at(x, y) = (x + y) % 2 ? 255 : 0;
  }
  const auto c = glcm_features(checker, 1, 0, 8);
  CHECK(c.contrast == doctest::Approx(49.0));
  CHECK(c.contrast == doctest::Approx(glcm_oracle(checker, 1, 0, 8).contrast));
  CHECK(c.correlation == doctest::Approx(-1.0));

  std::mt19937 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    GrayImage g(12 + trial % 5, 9 + trial % 7);
    for (auto& v : g.data) v = static_cast<std::uint8_t>(rng() % 256);
    const int dx = static_cast<int>(rng() % 5) - 2, dy = static_cast<int>(rng() % 3);
    if (dx == 0 && dy == 0) continue;
    const auto f = glcm_features(g, dx, dy, 8);
    const auto o = glcm_oracle(g, dx, dy, 8);
    CHECK(f.contrast == doctest::Approx(o.contrast));
    CHECK(f.energy == doctest::Approx(o.energy));
    CHECK(f.homogeneity == doctest::Approx(o.homogeneity));
    CHECK(f.energy > 0);
    CHECK(f.energy <= 1);
  }
  CHECK_THROWS_AS(glcm_features(GrayImage(2, 2), 3, 0, 8), Error);
}

TEST_CASE("histogram statistics") {
  const auto flat = histogram_stats(GrayImage(10, 10, 42));
  CHECK(flat.variance == 0);
  CHECK(flat.entropy == 0);
  CHECK(flat.mean == 42);

  GrayImage all(256, 1);
  for (int i = 0; i < 256; ++i) all.at(i, 0) = static_cast<std::uint8_t>(i);
  CHECK(histogram_stats(all).entropy == doctest::Approx(8.0));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(120.0, 15.0);
  std::vector<double> v(20000);
  for (auto& x : v) x = n(rng);
  // direct long-double summation oracle
  long double s = 0;
  for (double x : v) s += x;
  const long double mean = s / v.size();
  long double m2 = 0, m3 = 0, m4 = 0;
  for (double x : v) {
    const long double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= v.size();
  m3 /= v.size();
  m4 /= v.size();
  const auto st = histogram_stats(v);
  CHECK(st.mean == doctest::Approx(static_cast<double>(mean)).epsilon(1e-12));
  CHECK(st.variance == doctest::Approx(static_cast<double>(m2)).epsilon(1e-10));
  CHECK(st.skewness == doctest::Approx(static_cast<double>(m3 / std::pow(m2, 1.5L))).epsilon(1e-8));
  CHECK(st.kurtosis == doctest::Approx(static_cast<double>(m4 / (m2 * m2))).epsilon(1e-10));
  CHECK(st.kurtosis == doctest::Approx(3.0).epsilon(0.05));
  CHECK_THROWS_AS(histogram_stats(std::vector<double>{}), Error);
}

TEST_CASE("differential box counting") {
  CHECK(fractal_dimension_dbc(GrayImage(32, 32, 100)) == doctest::Approx(2.0));
  CHECK_THROWS_AS(fractal_dimension_dbc(GrayImage(7, 7)), Error);

  // top half checkerboard of 0/200, bottom half 0.
  // s=2 (h=64): 8 boxes with n=4, 8 boxes with n=1 -> N=40
  // s=4 (h=128): 2 boxes with n=2, 2 boxes with n=1 -> N=6
  GrayImage p(8, 8, 0);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) p.at(x, y) = (x + y) % 2 ? 200 : 0;
  }
  CHECK(fractal_dimension_dbc(p) == doctest::Approx(std::log(40.0 / 6.0) / std::log(2.0)));

  std::mt19937 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    GrayImage g(16 << (trial % 3), 16 << (trial % 3));
    for (auto& v : g.data) v = static_cast<std::uint8_t>(rng() % (1 + trial * 12));
    const double fd = fractal_dimension_dbc(g);
    CHECK(fd >= 2.0);
    CHECK(fd <= 3.0);
  }
}

TEST_CASE("bilinear pooling") {
  const auto e1 = bilinear_pool({1, 1, 3, {1, 0, 0}});
  CHECK(e1.values == std::vector<double>{1, 0, 0, 0, 0, 0, 0, 0, 0});

  const auto two = bilinear_pool({2, 1, 2, {1, 0, 1, 1}});
  const double n = std::sqrt(5.0);
  CHECK(two.values[0] == doctest::Approx(std::sqrt(2.0) / n));
  CHECK(two.values[1] == doctest::Approx(1.0 / n));
  CHECK(two.values[2] == doctest::Approx(1.0 / n));
  CHECK(two.values[3] == doctest::Approx(1.0 / n));

  const auto zero = bilinear_pool({3, 3, 4, std::vector<double>(36, 0.0)});
  CHECK(zero.degenerate);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    FeatureMap m{4, 3, 5, std::vector<double>(60)};
    for (auto& v : m.data) v = g(rng);
    const auto b = bilinear_pool(m);
    double norm = 0;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        REQUIRE(b.values[i * 5 + j] == b.values[j * 5 + i]);
        norm += b.values[i * 5 + j] * b.values[i * 5 + j];
      }
    }
    CHECK(norm == doctest::Approx(1.0));
  }
}

TEST_CASE("image io round trips") {
  RgbImage im(37, 21);
  std::mt19937 rng(1);
  for (auto& v : im.data) v = static_cast<std::uint8_t>(rng());
  const auto dir = fs::temp_directory_path() / "her2kit_io";
  fs::create_directories(dir);
  for (const char* name : {"a.png", "a.tif"}) {
    write_image(dir / name, im);
    const auto back = read_image(dir / name);
    CHECK(back.width == 37);
    CHECK(back.height == 21);
    CHECK(back.data == im.data);
  }
  CHECK(png_dimensions(dir / "a.png") == std::pair{37, 21});
  CHECK(decode_png(encode_png(im)).data == im.data);
  CHECK(decode_tiff(encode_tiff(im)).data == im.data);
  CHECK_THROWS_AS(decode_tiff(std::vector<std::uint8_t>{'I', 'I', 42, 0, 0}), Error);
  fs::remove_all(dir);

  SUBCASE("resize and crop") {
    RgbImage flat(40, 20, {10, 20, 30});
    const auto small = resize(flat, 10, 5);
    CHECK(small.at(3, 2) == Rgb{10, 20, 30});
    CHECK(resize(small, 40, 20).at(39, 19) == Rgb{10, 20, 30});
    CHECK(crop(im, 5, 5, 3, 2).at(1, 1) == im.at(6, 6));
    CHECK_THROWS_AS(crop(im, 30, 0, 10, 5), Error);
  }
}
