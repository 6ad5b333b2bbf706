#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "her2/image.hpp"

namespace her2 {

// One case's IHC image data: the tiles found under <case>/ihc, in file-name
// order. `scale` is the working resolution relative to 20x (1.0 for real
// scans, the generator's declared factor for synthetic data).
struct Slide {
  std::string case_id;
  std::vector<RgbImage> tiles;
  double scale = 1.0;
};

// Case directories are named case_<id>; `id` is the part after the prefix.
std::string case_id_from_dir(const std::filesystem::path& dir);

// Lists case_* directories under `root` in name order.
std::vector<std::filesystem::path> list_case_dirs(const std::filesystem::path& root);

// Reads <case_dir>/ihc/*. Scale comes from `scale` when positive, otherwise
// from synth.json next to the case directory, otherwise 1.0.
// Error(io) for an unreadable directory, Error(coverage) when it holds no images.
Slide load_slide(const std::filesystem::path& case_dir, double scale = 0.0);

}  // namespace her2
