#include "her2/slide.hpp"

#include <algorithm>
#include <fstream>

#include "her2/error.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace her2 {

std::string case_id_from_dir(const fs::path& dir) {
  auto name = dir.filename().string();
  if (name.empty()) name = dir.parent_path().filename().string();
  constexpr std::string_view prefix = "case_";
  if (name.rfind(prefix, 0) == 0) return name.substr(prefix.size());
  return name;
}

std::vector<fs::path> list_case_dirs(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorKind::io, "not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().rfind("case_", 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

double declared_scale(const fs::path& case_dir) {
  const auto meta = case_dir.parent_path() / "synth.json";
  std::ifstream in(meta);
  if (!in) return 1.0;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.contains("roi_scale")) return j.at("roi_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, meta.string() + ": " + e.what());
  }
  return 1.0;
}

}  // namespace

Slide load_slide(const fs::path& case_dir, double scale) {
  const auto ihc = case_dir / "ihc";
  std::error_code ec;
  if (!fs::is_directory(ihc, ec)) throw Error(ErrorKind::io, "missing ihc directory: " + ihc.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(ihc)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Slide s;
  s.case_id = case_id_from_dir(case_dir);
  if (files.empty()) throw Error(ErrorKind::coverage, "no images in " + ihc.string());
  for (const auto& f : files) s.tiles.push_back(read_image(f));
  s.scale = scale > 0 ? scale : declared_scale(case_dir);
  return s;
}

}  // namespace her2
