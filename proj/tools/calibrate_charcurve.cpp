// Fits the charcurve class centroids on a synthetic training set and writes
// the model file. Usage: calibrate_charcurve [--seed N] [--per-class N] [--out FILE]
#include <array>
#include <iostream>

#include "CLI11.hpp"
#include "her2/charcurve.hpp"
#include "her2/synthgen.hpp"

using namespace her2;

int main(int argc, char** argv) {
  CLI::App app{"calibrate charcurve centroids"};
  std::uint64_t seed = 101;
  int per_class = 40;
  std::string out = "models/charcurve_centroids.txt";
  app.add_option("--seed", seed);
  app.add_option("--per-class", per_class);
  app.add_option("--out", out);
  CLI11_PARSE(app, argc, argv);

  synth::DatasetInfo info;
  charcurve::CentroidModel model;
  std::array<std::array<double, 4>, 4> sum{};
  std::array<int, 4> n{};
  for (int i = 0; i < 4 * per_class; ++i) {
    const auto c = synth::generate_dataset_case(i, seed, info.options);
    Slide s;
    s.case_id = c.case_id;
    s.scale = info.roi_scale;
    for (const auto& t : c.tiles) s.tiles.push_back(t.image);
    for (const auto& roi : charcurve::select_rois(s)) {
      const auto im = crop(s.tiles[roi.tile], roi.x, roi.y, roi.width, roi.height);
      const auto fit = charcurve::fit_cubic(charcurve::characteristics_curve(im, model.hue));
      const int k = index_of(c.score);
      for (int j = 0; j < 4; ++j) sum[k][j] += fit.coef[j];
      ++n[k];
    }
  }
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 4; ++j) model.centroids[k][j] = n[k] ? sum[k][j] / n[k] : 0.0;
  }
  charcurve::write_centroid_model(out, model);
  std::cout << charcurve::render_centroid_model(model);
  return 0;
}
