#include "derm/score_parser.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <vector>

namespace derm::textproto {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// Name variants recognized per dimension: display names, compact identifiers,
// table aliases, plus the bare "Coverage" heading some judge transcripts use.
// Looser single-word forms ("description", "reasoning") are deliberately not
// aliases; they collide with ordinary prose.
const std::array<std::vector<std::string_view>, kDimensionCount>& name_variants() {
  static const std::array<std::vector<std::string_view>, kDimensionCount> kVariants = {{
      {"accuracy", "acc"},
      {"safety", "safe"},
      {"medical groundedness", "medicalgroundedness", "medg"},
      {"clinical coverage", "clinicalcoverage", "coverage", "cover"},
      {"reasoning coherence", "reasoningcoherence", "reason"},
      {"description precision", "descriptionprecision", "desc"},
  }};
  return kVariants;
}

bool matches_at(std::string_view text, std::size_t pos, std::string_view variant) {
  if (pos + variant.size() > text.size()) return false;
  for (std::size_t i = 0; i < variant.size(); ++i) {
    if (lower(text[pos + i]) != variant[i]) return false;
  }
  if (pos > 0 && is_word_char(text[pos - 1])) return false;
  const std::size_t end = pos + variant.size();
  if (end < text.size() && is_word_char(text[end])) return false;
  return true;
}

// Scans a decimal number (digits with optional fraction) at `pos`; returns the
// value in milli-units without range checking so out-of-range scores are still
// detected. Rejects numbers embedded in words.
struct NumberMatch {
  std::int64_t milli;
  std::size_t begin;
  std::size_t end;
};

std::optional<NumberMatch> scan_number(std::string_view line, std::size_t pos) {
  if (pos >= line.size() || !std::isdigit(static_cast<unsigned char>(line[pos]))) {
    return std::nullopt;
  }
  if (pos > 0 && (is_word_char(line[pos - 1]) || line[pos - 1] == '.')) return std::nullopt;
  std::size_t i = pos;
  std::int64_t whole = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
    whole = std::min<std::int64_t>(whole * 10 + (line[i] - '0'), 1000000);
    ++i;
  }
  std::int64_t frac = 0;
  if (i + 1 < line.size() && line[i] == '.' &&
      std::isdigit(static_cast<unsigned char>(line[i + 1]))) {
    ++i;
    std::int64_t scale = 100;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
      if (scale > 0) {
        frac += (line[i] - '0') * scale;
        scale /= 10;
      }
      ++i;
    }
  }
  return NumberMatch{whole * 1000 + frac, pos, i};
}

bool ci_matches_at(std::string_view text, std::size_t pos, std::string_view token) {
  if (pos + token.size() > text.size()) return false;
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (lower(text[pos + i]) != token[i]) return false;
  }
  return true;
}

std::size_t skip_spaces(std::string_view s, std::size_t pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  return pos;
}

// Collects score-shaped values from the tail of a line. Explicit shapes are
// "N/5", "N out of 5" and "score: N"; when none is present, a bare number
// separated from the name only by punctuation counts (the "**Name:** 2.0"
// transcript style).
std::vector<std::int64_t> collect_candidates(std::string_view rest) {
  std::vector<std::int64_t> values;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    auto num = scan_number(rest, i);
    if (!num) continue;
    std::size_t after = skip_spaces(rest, num->end);
    bool taken = false;
    if (after < rest.size() && rest[after] == '/') {
      std::size_t d = skip_spaces(rest, after + 1);
      if (d < rest.size() && rest[d] == '5' &&
          (d + 1 >= rest.size() || !std::isdigit(static_cast<unsigned char>(rest[d + 1])))) {
        values.push_back(num->milli);
        taken = true;
      }
    }
    if (!taken && ci_matches_at(rest, after, "out of 5")) {
      const std::size_t end = after + 8;
      if (end >= rest.size() || !std::isdigit(static_cast<unsigned char>(rest[end]))) {
        values.push_back(num->milli);
        taken = true;
      }
    }
    i = num->end - 1;
  }
  // "score: N"
  for (std::size_t i = 0; i + 5 <= rest.size(); ++i) {
    if (!ci_matches_at(rest, i, "score")) continue;
    if (i > 0 && is_word_char(rest[i - 1])) continue;
    std::size_t j = i + 5;
    if (j < rest.size() && is_word_char(rest[j])) continue;
    j = skip_spaces(rest, j);
    while (j < rest.size() && (rest[j] == ':' || rest[j] == '-' || rest[j] == '=')) {
      j = skip_spaces(rest, j + 1);
    }
    if (auto num = scan_number(rest, j)) values.push_back(num->milli);
  }
  if (!values.empty()) return values;
  // Bare number adjacent to the name; only punctuation-style separators may
  // sit in between, so "Accuracy (3 items...)" is not a score.
  std::size_t pos = 0;
  while (pos < rest.size()) {
    const char c = rest[pos];
    if (c == ' ' || c == '\t' || c == ':' || c == '*' || c == '_' || c == '-' ||
        c == '#' || c == '>' || c == '=' || static_cast<unsigned char>(c) >= 0x80) {
      ++pos;
      continue;
    }
    break;
  }
  if (auto num = scan_number(rest, pos)) values.push_back(num->milli);
  return values;
}

std::vector<std::int64_t> distinct(std::vector<std::int64_t> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

}  // namespace

std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::found: return "found";
    case ParseStatus::missing: return "missing";
    case ParseStatus::out_of_range: return "out_of_range";
    case ParseStatus::conflicting: return "conflicting";
  }
  return "missing";
}

ParseResult parse_scores(std::string_view text) {
  ParseResult result;
  for (Dimension dim : all_dimensions()) {
    const auto& variants = name_variants()[index_of(dim)];
    bool decided = false;
    for (std::size_t pos = 0; pos < text.size() && !decided; ++pos) {
      std::size_t name_end = 0;
      for (const auto& v : variants) {
        if (matches_at(text, pos, v)) {
          name_end = pos + v.size();
          break;
        }
      }
      if (name_end == 0) continue;
      const std::size_t eol = std::min(text.find('\n', name_end), text.size());
      const auto values = distinct(collect_candidates(text.substr(name_end, eol - name_end)));
      if (values.empty()) {
        pos = name_end - 1;  // name without a score: keep scanning
        continue;
      }
      decided = true;
      if (values.size() > 1) {
        result.diagnostics[index_of(dim)] = ParseStatus::conflicting;
      } else if (values[0] > 5000) {
        result.diagnostics[index_of(dim)] = ParseStatus::out_of_range;
      } else {
        result.diagnostics[index_of(dim)] = ParseStatus::found;
        result.scores.set(dim, Score::from_milli(values[0]));
      }
    }
  }
  return result;
}

std::string parse_final_diagnosis(std::string_view text) {
  constexpr std::string_view kMarker = "the answer is";
  std::size_t found = std::string_view::npos;
  for (std::size_t pos = 0; pos + kMarker.size() <= text.size(); ++pos) {
    if (ci_matches_at(text, pos, kMarker) &&
        (pos == 0 || !is_word_char(text[pos - 1])) &&
        pos + kMarker.size() < text.size() &&
        !is_word_char(text[pos + kMarker.size()])) {
      found = pos;
    }
  }
  if (found == std::string_view::npos) return "";

  std::size_t begin = found + kMarker.size();
  std::size_t end = begin;
  while (end < text.size() && text[end] != '.' && text[end] != '!' && text[end] != '?' &&
         text[end] != '\n') {
    ++end;
  }
  std::string_view name = text.substr(begin, end - begin);
  const auto strip = [](char c) {
    return c == ' ' || c == '\t' || c == '"' || c == '\'' || c == '*' || c == '_' ||
           c == '`' || c == ',' || c == ';' || c == ':';
  };
  while (!name.empty() && strip(name.front())) name.remove_prefix(1);
  while (!name.empty() && strip(name.back())) name.remove_suffix(1);
  return std::string(name);
}

}  // namespace derm::textproto
