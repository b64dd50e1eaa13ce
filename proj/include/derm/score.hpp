#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "derm/dimension.hpp"
#include "derm/error.hpp"

namespace derm {

// A rubric score in [0, 5], stored as fixed-point milli-points so that score
// arithmetic stays exact and reports are platform-stable.
class Score {
 public:
  Score() = default;

  static Score from_int(int value);
  static Score from_milli(std::int64_t milli);
  static Score from_double(double value);

  // Parses a plain decimal like "2", "3.5" or "4.25". More than three decimal
  // digits are rounded half-up to milli precision. Returns nullopt for
  // malformed or out-of-range text.
  static std::optional<Score> parse(std::string_view text);

  std::int64_t milli() const { return milli_; }
  double value() const { return static_cast<double>(milli_) / 1000.0; }
  bool is_integer() const { return milli_ % 1000 == 0; }
  int as_integer() const;  // raises unless integral

  // Minimal decimal form: "2", "2.5", "2.25".
  std::string to_string() const;

  friend bool operator==(const Score&, const Score&) = default;
  friend auto operator<=>(const Score&, const Score&) = default;

 private:
  explicit Score(std::int64_t milli) : milli_(milli) {}
  std::int64_t milli_ = 0;
};

// Six optional dimension scores plus the derived valid set.
class ScoreVector {
 public:
  void set(Dimension d, Score s) { entries_[index_of(d)] = s; }
  void clear(Dimension d) { entries_[index_of(d)].reset(); }

  bool has(Dimension d) const { return entries_[index_of(d)].has_value(); }
  std::optional<Score> get(Dimension d) const { return entries_[index_of(d)]; }

  int valid_count() const;
  std::vector<Dimension> valid_set() const;
  bool complete() const { return valid_count() == static_cast<int>(kDimensionCount); }
  bool integer_valued() const;  // every present entry is integral

  static ScoreVector from_integers(const std::array<int, kDimensionCount>& values);

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;

 private:
  std::array<std::optional<Score>, kDimensionCount> entries_;
};

}  // namespace derm
