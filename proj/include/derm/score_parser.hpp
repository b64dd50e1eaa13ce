#pragma once

#include <array>
#include <string>
#include <string_view>

#include "derm/score.hpp"

namespace derm::textproto {

enum class ParseStatus { found, missing, out_of_range, conflicting };

std::string_view to_string(ParseStatus s);

struct ParseResult {
  ScoreVector scores;
  std::array<ParseStatus, kDimensionCount> diagnostics{
      ParseStatus::missing, ParseStatus::missing, ParseStatus::missing,
      ParseStatus::missing, ParseStatus::missing, ParseStatus::missing};

  ParseStatus status(Dimension d) const { return diagnostics[index_of(d)]; }
};

// Deterministic, total six-dimension score extraction. For each dimension the
// first occurrence of its name or alias that is followed on the same line by
// a score-shaped number wins. Accepted shapes: "N/5", "N.M/5", "N out of 5",
// "Score: N", and a bare number directly after the (possibly markdown
// decorated) name. Values outside [0,5] are excluded as out_of_range; two
// different values on the winning line are excluded as conflicting.
ParseResult parse_scores(std::string_view text);

// Extracts the disease name from the last "The answer is X" sentence,
// stripping terminal punctuation and quotes. Returns "" when absent.
std::string parse_final_diagnosis(std::string_view text);

}  // namespace derm::textproto
