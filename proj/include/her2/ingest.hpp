#pragma once

#include <filesystem>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "her2/score.hpp"

// Ground-truth and submission CSV parsing plus the bundled contest fixtures.
//
// Ground truth header:  case_id,score,fish,pcms
// Submission header:    case_id,score,confidence,pcms[,flag]
//
// Comma delimiter, LF or CRLF, optional double quoting, mandatory header.
// Empty confidence/pcms cells mean "not published". A non-empty flag cell
// marks a case the scorer could not process; such rows carry no prediction.
namespace her2::ingest {

inline constexpr std::string_view kGroundTruthHeader = "case_id,score,fish,pcms";
inline constexpr std::string_view kSubmissionHeader = "case_id,score,confidence,pcms";

struct GroundTruthFile {
  std::vector<GroundTruthRecord> rows;
  std::vector<std::string> warnings;
};

struct FlaggedCase {
  std::string case_id;
  std::string flag;
};

struct SubmissionFile {
  std::string team;
  std::vector<Prediction> rows;
  std::vector<FlaggedCase> flagged;
};

GroundTruthFile parse_ground_truth(std::istream& in, std::string_view source = "<ground truth>");
GroundTruthFile parse_ground_truth_text(std::string_view text, std::string_view source = "<ground truth>");
SubmissionFile parse_submission(std::istream& in, std::string team,
                                std::string_view source = "<submission>");
SubmissionFile parse_submission_text(std::string_view text, std::string team,
                                     std::string_view source = "<submission>");

std::string render_ground_truth(const GroundTruthFile& file);
// Emits the flag column only when the file has flagged cases.
std::string render_submission(const SubmissionFile& file);

GroundTruthFile read_ground_truth(const std::filesystem::path& path);
SubmissionFile read_submission(const std::filesystem::path& path, std::string team);
// Every *.csv in `dir`, sorted by file name; the team name is the file stem.
std::vector<SubmissionFile> read_submission_dir(const std::filesystem::path& dir);

struct Fixtures {
  GroundTruthFile training_gt;
  GroundTruthFile mvm_gt;
  std::vector<SubmissionFile> mvm_submissions;  // manifest order
  std::set<std::string> mvm_event_cases;        // cases shown to the pathologists
  std::string pooled_table_csv;                 // canonical pooled agreement table
};

// $HER2KIT_FIXTURES when set, else the directory bundled with the build.
std::filesystem::path fixture_dir();

/// Loads and verifies the fixture bundle against its MANIFEST.csv
/// (file, kind, team, rows, fnv1a64). Throws Error(integrity) on any
/// checksum or row-count mismatch or a missing file.
Fixtures load_fixtures(const std::filesystem::path& dir = fixture_dir());

std::string read_file(const std::filesystem::path& path);

}  // namespace her2::ingest
