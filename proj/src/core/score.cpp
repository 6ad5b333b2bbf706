#include "her2/score.hpp"

#include <cmath>
#include <string>

#include "her2/error.hpp"
#include "her2/text.hpp"

namespace her2 {

Her2Score score_from_index(int index) {
  if (index < 0 || index > 3) {
    throw Error(ErrorKind::range, "score index out of range: " + std::to_string(index));
  }
  return static_cast<Her2Score>(index);
}

std::string_view to_label(Her2Score s) noexcept {
  switch (s) {
    case Her2Score::zero: return "0";
    case Her2Score::one: return "1+";
    case Her2Score::two: return "2+";
    case Her2Score::three: return "3+";
  }
  return "?";
}

std::string_view to_digit(Her2Score s) noexcept {
  switch (s) {
    case Her2Score::zero: return "0";
    case Her2Score::one: return "1";
    case Her2Score::two: return "2";
    case Her2Score::three: return "3";
  }
  return "?";
}

std::optional<Her2Score> parse_score(std::string_view token) noexcept {
  token = text::trim(token);
  if (token.size() == 2 && token[1] == '+') token.remove_suffix(1);
  if (token.size() != 1) return std::nullopt;
  switch (token[0]) {
    case '0': return Her2Score::zero;
    case '1': return Her2Score::one;
    case '2': return Her2Score::two;
    case '3': return Her2Score::three;
    default: return std::nullopt;
  }
}

std::string_view to_string(FishStatus f) noexcept {
  switch (f) {
    case FishStatus::not_performed: return "N/A";
    case FishStatus::negative: return "Negative";
    case FishStatus::positive: return "Positive";
    case FishStatus::borderline: return "Borderline amplified";
  }
  return "?";
}

std::optional<FishStatus> parse_fish(std::string_view token) noexcept {
  const std::string t = text::to_lower(text::trim(token));
  if (t.empty() || t == "n/a" || t == "na" || t == "-" || t == "not_performed") {
    return FishStatus::not_performed;
  }
  if (t == "negative") return FishStatus::negative;
  if (t == "positive") return FishStatus::positive;
  if (t == "borderline" || t == "borderline amplified") return FishStatus::borderline;
  return std::nullopt;
}

Points Points::from_double(double value) {
  const double twice = value * 2.0;
  const double rounded = std::round(twice);
  if (!std::isfinite(value) || std::abs(twice - rounded) > 1e-9) {
    throw Error(ErrorKind::range, "points value is not a multiple of 0.5");
  }
  return from_halves(static_cast<std::int64_t>(rounded));
}

std::string format_points(Points p) {
  const std::int64_t h = p.halves();
  const std::int64_t whole = h / 2;
  std::string out;
  if (h < 0 && whole == 0) out = "-";
  out += std::to_string(whole);
  if (h % 2 != 0) out += ".5";
  return out;
}

void validate_confidence(double c) {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw Error(ErrorKind::range, "confidence must lie in [0,1], got " + text::format_double(c));
  }
}

void validate_pcms(double pcms) {
  if (!(pcms >= 0.0 && pcms <= 100.0)) {
    throw Error(ErrorKind::range, "pcms must lie in [0,100], got " + text::format_double(pcms));
  }
}

}  // namespace her2
