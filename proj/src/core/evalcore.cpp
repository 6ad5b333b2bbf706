#include "her2/evalcore.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "her2/error.hpp"
#include "her2/text.hpp"

namespace her2::eval {

namespace {

// Half-point entries of the penalty matrix, [gt][pred].
constexpr int kAgreementHalves[4][4] = {
    {30, 30, 20, 0},
    {30, 30, 20, 0},
    {5, 5, 30, 10},
    {0, 0, 20, 30},
};

constexpr Points half_points(int h) { return Points::from_halves(h); }

bool same_value(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || *a == *b;
}

// Descending with absent values last.
int compare_desc(const std::optional<double>& a, const std::optional<double>& b) {
  if (a && b) {
    if (*a > *b) return -1;
    if (*a < *b) return 1;
    return 0;
  }
  if (a) return -1;
  if (b) return 1;
  return 0;
}

}  // namespace

Points agreement_points(Her2Score gt, Her2Score pred) noexcept {
  return half_points(kAgreementHalves[index_of(gt)][index_of(pred)]);
}

std::optional<Points> bonus_points(const GroundTruthRecord& gt, const Prediction& pred) {
  if (pred.score != gt.score) return half_points(0);
  switch (gt.score) {
    case Her2Score::zero:
      return half_points(0);
    case Her2Score::one: {
      if (!gt.pcms) return std::nullopt;
      if (*gt.pcms < 3.0) return half_points(2);
      if (!pred.pcms) return std::nullopt;
      return std::abs(*pred.pcms - *gt.pcms) <= 2.0 ? half_points(6) : half_points(0);
    }
    case Her2Score::two:
    case Her2Score::three: {
      if (!gt.pcms || !pred.pcms) return std::nullopt;
      const double dev = std::abs(*pred.pcms - *gt.pcms);
      if (dev <= 5.0) return half_points(10);
      if (dev <= 10.0) return half_points(5);
      return half_points(0);
    }
  }
  return half_points(0);
}

double weighted_confidence(bool correct, double c, ConfidenceMode mode) {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw Error(ErrorKind::range, "confidence must lie in [0,1], got " + text::format_double(c));
  }
  if (!correct) return (1.0 - c * c) / 2.0;
  const double lead = mode == ConfidenceMode::corrected ? 1.0 : 0.0;
  return (lead + 2.0 * c - c * c) / 2.0;
}

CaseEvaluation evaluate_case(const GroundTruthRecord& gt, const Prediction& pred,
                             const Options& options) {
  if (gt.case_id != pred.case_id) {
    throw Error(ErrorKind::identifier,
                "case id mismatch: ground truth '" + gt.case_id + "' vs prediction '" +
                    pred.case_id + "'");
  }
  CaseEvaluation ev;
  ev.case_id = gt.case_id;
  ev.gt_score = gt.score;
  ev.predicted = pred.score;
  ev.agreement = agreement_points(gt.score, pred.score);
  ev.bonus = bonus_points(gt, pred);
  if (pred.confidence) {
    ev.weighted_confidence = weighted_confidence(pred.score == gt.score, *pred.confidence, options.mode);
    if (options.bonus_inclusive) {
      if (ev.bonus) ev.combined = (ev.agreement + *ev.bonus).value() * *ev.weighted_confidence;
    } else {
      ev.combined = ev.agreement.value() * *ev.weighted_confidence;
    }
  }
  return ev;
}

Totals sum_totals(std::span<const CaseEvaluation> cases) {
  Totals t;
  t.bonus = Points{};
  t.weighted_confidence = 0.0;
  t.combined = 0.0;
  for (const auto& c : cases) {
    t.points += c.agreement;
    if (t.bonus) t.bonus = c.bonus ? std::optional(*t.bonus + *c.bonus) : std::nullopt;
    if (t.weighted_confidence) {
      t.weighted_confidence = c.weighted_confidence
                                  ? std::optional(*t.weighted_confidence + *c.weighted_confidence)
                                  : std::nullopt;
    }
    if (t.combined) t.combined = c.combined ? std::optional(*t.combined + *c.combined) : std::nullopt;
  }
  if (t.bonus) t.points_plus_bonus = t.points + *t.bonus;
  return t;
}

const CaseEvaluation* SubmissionResult::find(std::string_view case_id) const noexcept {
  for (const auto& c : per_case) {
    if (c.case_id == case_id) return &c;
  }
  return nullptr;
}

SubmissionResult evaluate_submission(std::span<const GroundTruthRecord> gt_set, std::string team,
                                     std::span<const Prediction> predictions,
                                     const Options& options, const std::set<std::string>* scope) {
  std::unordered_map<std::string, const GroundTruthRecord*> gt_index;
  for (const auto& g : gt_set) gt_index.emplace(g.case_id, &g);

  std::unordered_map<std::string, const Prediction*> by_case;
  for (const auto& p : predictions) {
    if (!gt_index.contains(p.case_id)) {
      throw Error(ErrorKind::identifier,
                  "submission '" + team + "' predicts unknown case '" + p.case_id + "'");
    }
    if (!by_case.emplace(p.case_id, &p).second) {
      throw Error(ErrorKind::format,
                  "submission '" + team + "' has duplicate case '" + p.case_id + "'");
    }
  }

  SubmissionResult result;
  result.team = std::move(team);
  for (const auto& g : gt_set) {
    if (scope && !scope->contains(g.case_id)) continue;
    const auto it = by_case.find(g.case_id);
    if (it == by_case.end()) {
      result.skipped_cases.push_back(g.case_id);
      continue;
    }
    result.per_case.push_back(evaluate_case(g, *it->second, options));
  }
  result.evaluated_case_count = result.per_case.size();
  result.totals = sum_totals(result.per_case);
  return result;
}

std::string_view to_string(Criterion c) noexcept {
  switch (c) {
    case Criterion::points: return "points";
    case Criterion::points_plus_bonus: return "points_plus_bonus";
    case Criterion::weighted_confidence: return "weighted_confidence";
    case Criterion::combined: return "combined";
  }
  return "?";
}

std::optional<Criterion> parse_criterion(std::string_view s) noexcept {
  for (Criterion c : {Criterion::points, Criterion::points_plus_bonus,
                      Criterion::weighted_confidence, Criterion::combined}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

std::optional<double> criterion_value(const SubmissionResult& r, Criterion c) noexcept {
  switch (c) {
    case Criterion::points:
      return r.totals.points.value();
    case Criterion::points_plus_bonus:
      return r.totals.points_plus_bonus ? std::optional(r.totals.points_plus_bonus->value())
                                        : std::nullopt;
    case Criterion::weighted_confidence:
      return r.totals.weighted_confidence;
    case Criterion::combined:
      return r.totals.combined;
  }
  return std::nullopt;
}

std::vector<LeaderboardEntry> rank(std::span<const SubmissionResult> results, Criterion criterion) {
  if (results.empty()) throw Error(ErrorKind::empty_collection, "no submissions to rank");

  struct Row {
    const SubmissionResult* result;
    std::optional<double> value;
    std::optional<double> bonus;
  };
  std::vector<Row> rows;
  rows.reserve(results.size());
  for (const auto& r : results) {
    std::optional<double> bonus;
    if (r.totals.bonus) bonus = r.totals.bonus->value();
    rows.push_back({&r, criterion_value(r, criterion), bonus});
  }
  const bool bonus_breaks = criterion == Criterion::points;
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
    if (int c = compare_desc(a.value, b.value); c != 0) return c < 0;
    if (bonus_breaks) {
      if (int c = compare_desc(a.bonus, b.bonus); c != 0) return c < 0;
    }
    return a.result->team < b.result->team;
  });

  std::vector<LeaderboardEntry> board;
  board.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    LeaderboardEntry e;
    e.rank = static_cast<int>(i) + 1;
    e.team = rows[i].result->team;
    e.value = rows[i].value;

    bool tied = false;
    bool bonus_decided = false;
    bool name_decided = false;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (j == i || !same_value(rows[i].value, rows[j].value)) continue;
      tied = true;
      if (bonus_breaks && !same_value(rows[i].bonus, rows[j].bonus)) {
        bonus_decided = true;
      } else {
        name_decided = true;
      }
    }
    if (tied) {
      if (bonus_decided) {
        e.tiebreak_note = "tied on points; ordered by bonus (" +
                          (rows[i].bonus ? text::format_double(*rows[i].bonus) : std::string("NA")) +
                          ")";
      }
      if (name_decided) {
        if (!e.tiebreak_note.empty()) e.tiebreak_note += "; ";
        e.tiebreak_note += "residual tie ordered by team name";
      }
    }
    board.push_back(std::move(e));
  }
  return board;
}

std::string format_points(const std::optional<Points>& p) {
  return p ? her2::format_points(*p) : std::string("NA");
}

std::string format_real(const std::optional<double>& v) {
  return v ? text::format_fixed(*v, 3) : std::string("NA");
}

std::string format_value(Criterion c, std::optional<double> v) {
  if (!v) return "NA";
  if (c == Criterion::points || c == Criterion::points_plus_bonus) {
    return her2::format_points(Points::from_double(*v));
  }
  return text::format_fixed(*v, 3);
}

std::string PooledTable::to_csv() const {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += text::csv_escape(cells[i]);
    }
    out.push_back('\n');
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return out;
}

PooledTable pooled_agreement_table(std::span<const GroundTruthRecord> gt_set,
                                   std::span<const RaterColumn> raters) {
  PooledTable table;
  table.header = {"Case", "Ground Truth", "FISH Results"};
  std::vector<std::unordered_map<std::string, Her2Score>> calls;
  for (const auto& r : raters) {
    table.header.push_back(r.team);
    auto& m = calls.emplace_back();
    for (const auto& p : r.predictions) m.emplace(p.case_id, p.score);
  }
  for (const auto& g : gt_set) {
    std::vector<std::string> row;
    row.push_back(g.case_id);
    row.emplace_back(to_label(g.score));
    row.emplace_back(g.fish == FishStatus::not_performed ? std::string_view("-") : to_string(g.fish));
    for (const auto& m : calls) {
      const auto it = m.find(g.case_id);
      row.emplace_back(it == m.end() ? std::string_view("-") : to_label(it->second));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace her2::eval
