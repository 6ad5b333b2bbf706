#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "her2/evalcore.hpp"

// The her2kit command line: evaluate, score, train, synth, mvm, pyramid,
// serve and export.
namespace her2::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitInternal = 3;

// args[0] is the program name. Never throws; failures map to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Evaluation outputs written by `evaluate`.
inline constexpr const char* kPerCaseFile = "per_case.csv";
inline constexpr const char* kTotalsFile = "totals.csv";
std::string leaderboard_file(eval::Criterion c);

// rank,team,value,note with the criterion's display precision.
std::string leaderboard_csv(std::span<const eval::SubmissionResult> results, eval::Criterion c);
// Full-precision values ("NA" when not reproducible) so other tools can
// compare exactly.
std::string per_case_csv(std::span<const eval::SubmissionResult> results);
std::string totals_csv(std::span<const eval::SubmissionResult> results);

// FNV-1a over relative paths and contents of every file under `dir`, in
// path order.
std::uint64_t tree_checksum(const std::filesystem::path& dir);

}  // namespace her2::cli
