#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "her2/cli.hpp"
#include "her2/image.hpp"
#include "her2/ingest.hpp"
#include "her2/patchpipe.hpp"
#include "her2/service.hpp"
#include "her2/synthgen.hpp"
#include "her2/text.hpp"

using namespace her2;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run her2kit(std::vector<std::string> args) {
  args.insert(args.begin(), "her2kit");
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("her2kit_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

std::string slurp(const fs::path& p) { return ingest::read_file(p); }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : text::read_lines(text)) {
    if (!line.empty()) out.push_back(*text::split_csv_record(line));
  }
  return out;
}

// Small, fast synthetic data for command tests.
std::vector<std::string> small_synth(const std::string& out, int per_class, std::uint64_t seed, int jobs = 1) {
  return {"synth", "--per-class", std::to_string(per_class), "--seed", std::to_string(seed), "--out", out,
          "--tiles",   "1", "--tile-size", "256", "--cells", "30", "--jobs", std::to_string(jobs)};
}

}  // namespace

TEST_CASE("evaluate over the bundled fixtures") {
  TempDir t("evaluate");
  const auto r = her2kit({"evaluate", "--fixtures", "--out", t / "out"});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(slurp(t.path / "out" / "leaderboard_points.csv"));
  REQUIRE(rows.size() == 7);
  CHECK(rows[1] == std::vector<std::string>{"1", "Team Indus", "220", ""});
  for (auto c : {eval::Criterion::points, eval::Criterion::points_plus_bonus, eval::Criterion::weighted_confidence,
                 eval::Criterion::combined}) {
    CHECK(fs::exists(t.path / "out" / cli::leaderboard_file(c)));
  }
  CHECK(csv_rows(slurp(t.path / "out" / "per_case.csv")).size() == 1 + 6 * 15);
  CHECK(r.out == slurp(t.path / "out" / "leaderboard_points.csv"));

  // Same inputs passed explicitly.
  const auto fx = ingest::fixture_dir();
  const auto e = her2kit({"evaluate", "--gt", (fx / "mvm_gt.csv").string(), "--submissions",
                          (fx / "submissions").string(), "--cases", (fx / "mvm_event_cases.csv").string()});
  REQUIRE(e.code == 0);
  CHECK(e.out == r.out);
}

TEST_CASE("evaluate input errors exit 2") {
  TempDir t("evaluate_errors");
  fs::create_directories(t.path / "empty");
  auto r = her2kit({"evaluate", "--fixtures", "--submissions", t / "empty"});
  CHECK(r.code == 2);
  CHECK(r.err.find("no submissions found") != std::string::npos);

  fs::create_directories(t.path / "bad");
  std::ofstream(t.path / "bad" / "X.csv") << "case_id,score,confidence,pcms\n1,2,,\n2,7,,\n";
  r = her2kit({"evaluate", "--fixtures", "--submissions", t / "bad"});
  CHECK(r.code == 2);
  CHECK(r.err.find(":3:") != std::string::npos);

  CHECK(her2kit({"evaluate", "--gt", t / "missing.csv"}).code == 2);
  CHECK(her2kit({"nonsense"}).code == 2);
  CHECK(her2kit({}).code == 2);
  CHECK(her2kit({"--help"}).code == 0);
}

TEST_CASE("literal mode lowers each correct case by exactly one half") {
  TempDir t("literal");
  fs::create_directories(t.path / "subs");
  auto sub = ingest::read_submission(ingest::fixture_dir() / "submissions" / "Expert 2.csv", "Expert 2");
  for (std::size_t i = 0; i < sub.rows.size(); ++i) sub.rows[i].confidence = 0.05 * static_cast<double>(i % 21);
  std::ofstream(t.path / "subs" / "Expert 2.csv") << ingest::render_submission(sub);
  const std::string cases = (ingest::fixture_dir() / "mvm_event_cases.csv").string();
  const std::string gt = (ingest::fixture_dir() / "mvm_gt.csv").string();
  REQUIRE(her2kit({"evaluate", "--gt", gt, "--submissions", t / "subs", "--cases", cases, "--out", t / "c"}).code == 0);
  REQUIRE(her2kit({"evaluate", "--gt", gt, "--submissions", t / "subs", "--cases", cases, "--out", t / "l",
                   "--eq1-mode", "literal"})
              .code == 0);
  const auto c = csv_rows(slurp(t.path / "c" / "per_case.csv"));
  const auto l = csv_rows(slurp(t.path / "l" / "per_case.csv"));
  REQUIRE(c.size() == 16);
  REQUIRE(l.size() == 16);
  int correct = 0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    const double diff = *text::parse_double(c[i][6]) - *text::parse_double(l[i][6]);
    if (c[i][2] == c[i][3]) {
      ++correct;
      CHECK(diff == doctest::Approx(0.5).epsilon(1e-15));
    } else {
      CHECK(diff == 0.0);
    }
  }
  CHECK(correct > 0);
}

TEST_CASE("mvm report") {
  auto r = her2kit({"mvm", "--fixtures"});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(r.out);
  bool found_case3 = false, found_expert1 = false;
  for (const auto& row : rows) {
    if (row.size() == 9 && row[0] == "3") {
      found_case3 = true;
      for (std::size_t k = 3; k < 9; ++k) CHECK(row[k] == "3+");
    }
    if (row.size() == 6 && row[1] == "Expert 1") {
      found_expert1 = true;
      CHECK(row[2] == "185");
    }
  }
  CHECK(found_case3);
  CHECK(found_expert1);

  TempDir t("mvm");
  fs::create_directories(t.path / "machines");
  for (const char* team : {"Team Indus", "VISILAB"}) {
    fs::copy_file(ingest::fixture_dir() / "submissions" / (std::string(team) + ".csv"),
                  t.path / "machines" / (std::string(team) + ".csv"));
  }
  r = her2kit({"mvm", "--fixtures", "--submissions", t / "machines"});
  REQUIRE(r.code == 0);
  CHECK(csv_rows(r.out)[0] ==
        std::vector<std::string>{"Case", "Ground Truth", "FISH Results", "Team Indus", "VISILAB"});
}

TEST_CASE("synth command") {
  TempDir t("synth");
  auto r = her2kit(small_synth(t / "a", 5, 3));
  REQUIRE(r.code == 0);
  const auto gt = ingest::read_ground_truth(t.path / "a" / "gt.csv");
  CHECK(gt.rows.size() == 20);
  CHECK(gt.warnings.empty());
  CHECK(list_case_dirs(t.path / "a").size() == 20);
  const auto b = her2kit(small_synth(t / "b", 5, 3, 3));
  REQUIRE(b.code == 0);
  CHECK(cli::tree_checksum(t.path / "a") == cli::tree_checksum(t.path / "b"));
  CHECK(r.out.substr(r.out.find("checksum")) == b.out.substr(b.out.find("checksum")));
  CHECK(her2kit(small_synth(t / "c", 5, 4)).out != r.out);

  CHECK(her2kit({"synth", "--out", t / "d"}).code == 2);
  CHECK(her2kit({"synth", "--cases", "4", "--per-class", "1", "--out", t / "d"}).code == 2);
  std::ofstream(t.path / "file") << "x";
  CHECK(her2kit({"synth", "--cases", "1", "--out", t / "file/sub"}).code == 2);
}

TEST_CASE("score command") {
  TempDir t("score");
  REQUIRE(her2kit(small_synth(t / "ds", 2, 11)).code == 0);
  // A blank slide: all background.
  fs::create_directories(t.path / "ds" / "case_blank" / "ihc");
  write_png(t.path / "ds" / "case_blank" / "ihc" / "tile_0.png", RgbImage(256, 256));

  auto r = her2kit({"score", t / "ds", "--method", "charcurve", "--out", t / "cc.csv", "--jobs", "2"});
  REQUIRE(r.code == 0);
  const auto sub = ingest::read_submission(t.path / "cc.csv", "cc");
  REQUIRE(sub.rows.size() == 8);
  REQUIRE(sub.flagged.size() == 1);
  CHECK(sub.flagged[0].case_id == "blank");
  CHECK(sub.flagged[0].flag.find("coverage") == 0);
  for (const auto& p : sub.rows) {
    if (p.case_id == "s0004" || p.case_id == "s0008") CHECK(p.score == Her2Score::three);
  }
  REQUIRE(her2kit({"score", t / "ds", "--method", "charcurve", "--out", t / "cc1.csv", "--jobs", "1"}).code == 0);
  CHECK(slurp(t.path / "cc.csv") == slurp(t.path / "cc1.csv"));

  // Patch pipeline with a model trained on the same small set.
  REQUIRE(her2kit({"train", t / "ds", "--out", t / "m.txt", "--rounds", "20"}).code != 0);  // blank case has no GT
  fs::remove_all(t.path / "ds" / "case_blank");
  REQUIRE(her2kit({"train", t / "ds", "--out", t / "m.txt", "--rounds", "20"}).code == 0);
  r = her2kit({"score", t / "ds", "--method", "patchpipe", "--model", t / "m.txt", "--rule", "indus"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("case_id,score,confidence,pcms\n", 0) == 0);
  CHECK(her2kit({"score", t / "ds", "--method", "patchpipe"}).code == 2);
  CHECK(her2kit({"score", t / "ds", "--method", "charcurve", "--pcms", "eq2"}).code == 2);
  CHECK(her2kit({"score", t / "ds", "--rule", "majority"}).code == 2);

  r = her2kit({"score", t / "ds", "--pcms", "prior", "--prior-gt", (ingest::fixture_dir() / "training_gt.csv").string()});
  REQUIRE(r.code == 0);
  for (const auto& p : ingest::parse_submission_text(r.out, "x").rows) {
    if (p.score == Her2Score::zero) CHECK(*p.pcms == 0.0);
  }

  // An undecodable image is an input error, not a flagged row.
  fs::create_directories(t.path / "bad" / "case_x" / "ihc");
  std::ofstream(t.path / "bad" / "case_x" / "ihc" / "tile_0.png") << "not a png";
  r = her2kit({"score", t / "bad"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("train command") {
  TempDir t("train");
  // Class folders of labeled patches cut from generated tiles.
  for (int k = 0; k < 4; ++k) {
    const auto dir = t.path / "patches" / std::string(to_label(score_from_index(k)));
    fs::create_directories(dir);
    for (int i = 0; i < 3; ++i) {
      const auto c = synth::generate_case(score_from_index(k), 100 + 10 * k + i, synth::CaseOptions{1, 512});
      for (int p = 0; p < 16; ++p) {
        write_png(dir / ("p" + std::to_string(i) + "_" + std::to_string(p) + ".png"),
                  crop(c.tiles[0].image, (p % 4) * 128, (p / 4) * 128, 128, 128));
      }
    }
  }
  auto r = her2kit({"train", t / "patches", "--out", t / "m1.txt", "--seed", "5"});
  REQUIRE(r.code == 0);
  const auto pos = r.out.find("held-out accuracy: ");
  REQUIRE(pos != std::string::npos);
  const double acc = std::stod(r.out.substr(pos + 19));
  MESSAGE(r.out);
  CHECK(acc >= 0.9);

  const auto again = her2kit({"train", t / "patches", "--out", t / "m2.txt", "--seed", "5", "--jobs", "3"});
  CHECK(again.out == r.out);
  CHECK(slurp(t.path / "m1.txt") == slurp(t.path / "m2.txt"));

  REQUIRE(her2kit({"train", t / "patches", "--out", t / "tiny.txt", "--rounds", "1", "--depth", "1"}).code == 0);
  const auto tiny = patchpipe::read_samme_model(t.path / "tiny.txt");
  CHECK(tiny.rounds.size() == 1);
  const auto f = patchpipe::extract_features(read_png(t.path / "patches" / "3+" / "p0_0.png"));
  CHECK(patchpipe::predict_samme(tiny, f).category >= 0);

  fs::create_directories(t.path / "one" / "2+");
  fs::copy_file(t.path / "patches" / "2+" / "p0_0.png", t.path / "one" / "2+" / "a.png");
  fs::copy_file(t.path / "patches" / "2+" / "p0_1.png", t.path / "one" / "2+" / "b.png");
  r = her2kit({"train", t / "one", "--out", t / "m3.txt"});
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(t.path / "m3.txt"));
}

TEST_CASE("pyramid and export commands") {
  TempDir t("pyramid");
  REQUIRE(her2kit(small_synth(t / "ds", 1, 2)).code == 0);
  REQUIRE(her2kit({"pyramid", t / "ds", "--out", t / "tiles"}).code == 0);
  const auto manifests = service::scan_tile_root(t.path / "tiles");
  REQUIRE(manifests.size() == 4);
  CHECK(manifests[0].case_id == "s0001");

  service::EventStore store(t.path / "log.ndjson");
  service::LogRecord rec;
  rec.event = {"Ann", "s0001", Her2Score::two, 30.0, 0.9, 0};
  store.append(rec);
  rec.event.case_id = "s0002";
  store.append(rec);
  REQUIRE(her2kit({"export", "--store", t / "log.ndjson", "--out", t / "subs"}).code == 0);
  const auto sub = ingest::read_submission(t.path / "subs" / "Ann.csv", "Ann");
  CHECK(sub.rows.size() == 2);
  CHECK(her2kit({"export", "--store", t / "none.ndjson", "--out", t / "subs"}).code == 2);
  CHECK(her2kit({"serve", "--tiles", t / "tiles"}).code == 2);
}
