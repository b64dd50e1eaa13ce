#include "derm/score.hpp"

#include <cctype>
#include <charconv>

namespace derm {

namespace {
constexpr std::int64_t kMaxMilli = 5000;
}

Score Score::from_int(int value) {
  if (value < 0 || value > 5) {
    raise(ErrorCode::range, "score " + std::to_string(value) + " outside [0,5]");
  }
  return Score(static_cast<std::int64_t>(value) * 1000);
}

Score Score::from_milli(std::int64_t milli) {
  if (milli < 0 || milli > kMaxMilli) {
    raise(ErrorCode::range, "score " + std::to_string(milli) + "/1000 outside [0,5]");
  }
  return Score(milli);
}

Score Score::from_double(double value) {
  // Tolerate float noise right at the boundaries, nothing beyond.
  if (!(value >= -1e-9 && value <= 5.0 + 1e-9)) {
    raise(ErrorCode::range, "score " + std::to_string(value) + " outside [0,5]");
  }
  double scaled = value * 1000.0;
  std::int64_t milli = static_cast<std::int64_t>(scaled + (scaled >= 0 ? 0.5 : -0.5));
  if (milli < 0) milli = 0;
  if (milli > kMaxMilli) milli = kMaxMilli;
  return Score(milli);
}

std::optional<Score> Score::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  std::size_t pos = 0;
  bool any_digit = false;
  std::int64_t whole = 0;
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
    whole = whole * 10 + (text[pos] - '0');
    if (whole > 1000) return std::nullopt;  // clearly out of range
    ++pos;
    any_digit = true;
  }
  std::int64_t frac_milli = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    std::int64_t scale = 100;
    std::int64_t extra = -1;  // first digit beyond milli, for half-up rounding
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      const int digit = text[pos] - '0';
      if (scale > 0) {
        frac_milli += digit * scale;
        scale /= 10;
      } else if (extra < 0) {
        extra = digit;
      }
      ++pos;
      any_digit = true;
    }
    if (extra >= 5) ++frac_milli;
  }
  if (!any_digit || pos != text.size()) return std::nullopt;
  const std::int64_t milli = whole * 1000 + frac_milli;
  if (milli > kMaxMilli) return std::nullopt;
  return Score(milli);
}

int Score::as_integer() const {
  if (!is_integer()) {
    raise(ErrorCode::invalid_argument, "score " + to_string() + " is not integral");
  }
  return static_cast<int>(milli_ / 1000);
}

std::string Score::to_string() const {
  std::string out = std::to_string(milli_ / 1000);
  std::int64_t frac = milli_ % 1000;
  if (frac != 0) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), ".%03lld", static_cast<long long>(frac));
    std::string digits(buf);
    while (digits.back() == '0') digits.pop_back();
    out += digits;
  }
  return out;
}

int ScoreVector::valid_count() const {
  int n = 0;
  for (const auto& e : entries_) {
    if (e.has_value()) ++n;
  }
  return n;
}

std::vector<Dimension> ScoreVector::valid_set() const {
  std::vector<Dimension> dims;
  for (Dimension d : all_dimensions()) {
    if (has(d)) dims.push_back(d);
  }
  return dims;
}

bool ScoreVector::integer_valued() const {
  for (const auto& e : entries_) {
    if (e.has_value() && !e->is_integer()) return false;
  }
  return true;
}

ScoreVector ScoreVector::from_integers(const std::array<int, kDimensionCount>& values) {
  ScoreVector v;
  for (Dimension d : all_dimensions()) {
    v.set(d, Score::from_int(values[index_of(d)]));
  }
  return v;
}

}  // namespace derm
