#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace her2 {

// IHC membrane score. Enumerator order is the clinical order 0 < 1+ < 2+ < 3+.
enum class Her2Score : std::uint8_t { zero = 0, one = 1, two = 2, three = 3 };

inline constexpr std::array<Her2Score, 4> kAllScores{
    Her2Score::zero, Her2Score::one, Her2Score::two, Her2Score::three};

constexpr int index_of(Her2Score s) noexcept { return static_cast<int>(s); }
Her2Score score_from_index(int index);

// "0", "1+", "2+", "3+"
std::string_view to_label(Her2Score s) noexcept;
// "0".."3", the machine form used in CSV output.
std::string_view to_digit(Her2Score s) noexcept;
// Accepts "0".."3" and "1+".."3+" (and "0+"); nullopt otherwise.
std::optional<Her2Score> parse_score(std::string_view token) noexcept;

enum class FishStatus : std::uint8_t { not_performed, negative, positive, borderline };

std::string_view to_string(FishStatus f) noexcept;
std::optional<FishStatus> parse_fish(std::string_view token) noexcept;

// Exact half-point quantity. Every agreement and bonus value in the contest
// tables is a multiple of 0.5, so totals are kept as integer half-points.
class Points {
 public:
  constexpr Points() = default;
  static constexpr Points from_halves(std::int64_t halves) noexcept {
    Points p;
    p.halves_ = halves;
    return p;
  }
  // Throws Error(range) when value is not a multiple of 0.5.
  static Points from_double(double value);

  constexpr std::int64_t halves() const noexcept { return halves_; }
  constexpr double value() const noexcept { return static_cast<double>(halves_) / 2.0; }

  constexpr Points& operator+=(Points o) noexcept {
    halves_ += o.halves_;
    return *this;
  }
  friend constexpr Points operator+(Points a, Points b) noexcept { return a += b; }
  friend constexpr auto operator<=>(Points, Points) = default;

 private:
  std::int64_t halves_ = 0;
};

// "220", "212.5", "2.5"
std::string format_points(Points p);

struct GroundTruthRecord {
  std::string case_id;
  Her2Score score = Her2Score::zero;
  std::optional<double> pcms;  // percent in [0,100]; absent when unpublished
  FishStatus fish = FishStatus::not_performed;

  friend bool operator==(const GroundTruthRecord&, const GroundTruthRecord&) = default;
};

struct Prediction {
  std::string case_id;
  Her2Score score = Her2Score::zero;
  std::optional<double> confidence;  // [0,1]; absent when unpublished
  std::optional<double> pcms;        // [0,100]; absent when unpublished

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Range checks shared by ingest, the service and the scorers. Throw
// Error(range) naming the field.
void validate_confidence(double c);
void validate_pcms(double pcms);

}  // namespace her2
