#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "her2/score.hpp"

// Contest evaluation mathematics: agreement points, bonus points, weighted
// confidence, combined points, submission totals and leaderboards.
namespace her2::eval {

// `corrected` adds 1 to the correct-branch numerator so that a confident
// correct call is worth 1 (the stated per-case maximum); `literal` is the
// printed form whose correct-branch maximum is 0.5.
enum class ConfidenceMode { corrected, literal };

struct Options {
  ConfidenceMode mode = ConfidenceMode::corrected;
  // Combined = (agreement + bonus) * w_c instead of agreement * w_c.
  bool bonus_inclusive = false;
};

/// Clinical penalty matrix; rows are ground truth, columns the prediction.
Points agreement_points(Her2Score gt, Her2Score pred) noexcept;

/// Bonus tiers on PCMS deviation. Returns nullopt when the tier depends on a
/// PCMS value that is absent (unpublished fixtures).
///
/// Score mismatch and GT 0 always give 0. GT 1+ gives 1 when gt.pcms < 3,
/// otherwise 3 when |pred - gt| <= 2. GT 2+/3+ give 5 when |pred - gt| <= 5,
/// 2.5 when |pred - gt| <= 10. Boundaries are inclusive.
std::optional<Points> bonus_points(const GroundTruthRecord& gt, const Prediction& pred);

/// Throws Error(range) when c is outside [0,1].
double weighted_confidence(bool correct, double c, ConfidenceMode mode);

struct CaseEvaluation {
  std::string case_id;
  Her2Score gt_score = Her2Score::zero;
  Her2Score predicted = Her2Score::zero;
  Points agreement;
  std::optional<Points> bonus;                 // nullopt: not reproducible
  std::optional<double> weighted_confidence;   // nullopt: confidence absent
  std::optional<double> combined;
};

/// Throws Error(identifier) when the case ids differ.
CaseEvaluation evaluate_case(const GroundTruthRecord& gt, const Prediction& pred,
                             const Options& options = {});

struct Totals {
  Points points;
  std::optional<Points> bonus;
  std::optional<Points> points_plus_bonus;
  std::optional<double> weighted_confidence;
  std::optional<double> combined;
};

struct SubmissionResult {
  std::string team;
  std::vector<CaseEvaluation> per_case;  // ground-truth order
  Totals totals;
  std::size_t evaluated_case_count = 0;
  // Ground-truth cases in scope that had no prediction; they are skipped,
  // not scored as zero.
  std::vector<std::string> skipped_cases;

  const CaseEvaluation* find(std::string_view case_id) const noexcept;
};

/// Evaluates one submission. When `scope` is given, only those case ids are
/// considered: predictions outside it are ignored and missing cases outside
/// it are not reported.
///
/// Errors: a prediction for a case absent from gt_set -> Error(identifier);
/// a duplicated case id in predictions -> Error(format).
SubmissionResult evaluate_submission(std::span<const GroundTruthRecord> gt_set,
                                     std::string team,
                                     std::span<const Prediction> predictions,
                                     const Options& options = {},
                                     const std::set<std::string>* scope = nullptr);

Totals sum_totals(std::span<const CaseEvaluation> cases);

enum class Criterion { points, points_plus_bonus, weighted_confidence, combined };

std::string_view to_string(Criterion c) noexcept;
std::optional<Criterion> parse_criterion(std::string_view s) noexcept;

struct LeaderboardEntry {
  int rank = 0;
  std::string team;
  std::optional<double> value;  // nullopt: not reproducible, ranked last
  std::string tiebreak_note;
};

std::optional<double> criterion_value(const SubmissionResult& r, Criterion c) noexcept;

/// Sorted descending. Ties on the points criterion fall back to the bonus
/// total; any residual tie is ordered by team name and annotated.
/// Throws Error(empty_collection) on empty input.
std::vector<LeaderboardEntry> rank(std::span<const SubmissionResult> results, Criterion criterion);

// Rendering: points with one decimal only when fractional, weighted
// confidence and combined with three decimals, "NA" when not reproducible.
std::string format_value(Criterion c, std::optional<double> v);
std::string format_points(const std::optional<Points>& p);
std::string format_real(const std::optional<double>& v);

struct RaterColumn {
  std::string team;
  std::span<const Prediction> predictions;
};

struct PooledTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // CSV with "-" for blanks, one row per ground-truth case.
  std::string to_csv() const;
};

/// Case-by-rater score matrix: GT score, FISH status, then each rater's call
/// ("-" where the rater did not score the case).
PooledTable pooled_agreement_table(std::span<const GroundTruthRecord> gt_set,
                                   std::span<const RaterColumn> raters);

}  // namespace her2::eval
