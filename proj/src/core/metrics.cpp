#include "derm/metrics.hpp"

#include <cstdlib>

namespace derm {

std::string format_decimal(const Rational& value, int decimals) {
  if (decimals < 0 || decimals > 9) {
    raise(ErrorCode::invalid_argument, "decimals outside [0,9]");
  }
  std::int64_t pow10 = 1;
  for (int i = 0; i < decimals; ++i) pow10 *= 10;

  const bool negative = value.num() < 0;
  const std::int64_t num = negative ? -value.num() : value.num();
  const std::int64_t den = value.den();
  // scaled = round_half_up(num/den * pow10)
  const std::int64_t scaled = (num * pow10 * 2 + den) / (2 * den);

  std::string digits = std::to_string(scaled % pow10);
  while (static_cast<int>(digits.size()) < decimals) digits.insert(digits.begin(), '0');

  std::string out = negative && scaled != 0 ? "-" : "";
  out += std::to_string(scaled / pow10);
  if (decimals > 0) {
    out += '.';
    out += digits;
  }
  return out;
}

int round_to_integer(const Score& score) {
  // milli is already range-checked at construction; half-up on the .5 tie.
  return static_cast<int>((score.milli() + 500) / 1000);
}

int round_to_integer(double score) { return round_to_integer(Score::from_double(score)); }

Rational mae(std::span<const ScoreVector> predicted,
             std::span<const ScoreVector> expert, Dimension dim) {
  if (predicted.size() != expert.size()) {
    raise(ErrorCode::invalid_argument, "mae: list lengths differ");
  }
  if (predicted.empty()) raise(ErrorCode::empty_input, "mae: empty input lists");

  std::int64_t total = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto p = predicted[i].get(dim);
    const auto e = expert[i].get(dim);
    if (!p || !e) continue;  // skip rather than impute
    if (!e->is_integer()) {
      raise(ErrorCode::invalid_argument, "mae: expert score " + e->to_string() +
                                             " is not an integer");
    }
    total += std::abs(round_to_integer(*p) - e->as_integer());
    ++pairs;
  }
  if (pairs == 0) {
    raise(ErrorCode::empty_input,
          std::string("mae: no usable pairs on ") + std::string(display_name(dim)));
  }
  return Rational(total, pairs);
}

Rational macro_mae(const DimensionTable& per_dim) {
  Rational sum;
  for (Dimension d : all_dimensions()) {
    auto it = per_dim.find(d);
    if (it == per_dim.end()) {
      raise(ErrorCode::invalid_argument,
            std::string("macro_mae: missing dimension ") + std::string(display_name(d)));
    }
    sum = sum + it->second;
  }
  return sum / Rational(static_cast<std::int64_t>(kDimensionCount));
}

ModelDimensionTable aggregate_model_means(
    const std::map<std::string, std::vector<ScoreVector>>& by_model) {
  ModelDimensionTable out;
  for (const auto& [model, vectors] : by_model) {
    if (vectors.empty()) {
      raise(ErrorCode::empty_input, "aggregate_model_means: empty group for " + model);
    }
    DimensionTable row;
    for (Dimension d : all_dimensions()) {
      std::int64_t total_milli = 0;
      for (const auto& v : vectors) {
        const auto s = v.get(d);
        if (!s) {
          raise(ErrorCode::invalid_argument,
                "aggregate_model_means: incomplete score vector for " + model);
        }
        total_milli += s->milli();
      }
      row[d] = Rational(total_milli, 1000 * static_cast<std::int64_t>(vectors.size()));
    }
    out[model] = std::move(row);
  }
  return out;
}

ModelDimensionTable average_two_evaluators(const ModelDimensionTable& bench,
                                           const ModelDimensionTable& eval) {
  if (bench.size() != eval.size()) {
    raise(ErrorCode::schema, "average_two_evaluators: model sets differ");
  }
  ModelDimensionTable out;
  for (const auto& [model, bench_row] : bench) {
    auto it = eval.find(model);
    if (it == eval.end()) {
      raise(ErrorCode::schema, "average_two_evaluators: model " + model + " missing");
    }
    const auto& eval_row = it->second;
    if (bench_row.size() != eval_row.size()) {
      raise(ErrorCode::schema, "average_two_evaluators: dimension sets differ for " + model);
    }
    DimensionTable row;
    for (const auto& [dim, value] : bench_row) {
      auto jt = eval_row.find(dim);
      if (jt == eval_row.end()) {
        raise(ErrorCode::schema, "average_two_evaluators: dimension missing for " + model);
      }
      row[dim] = (value + jt->second) / Rational(2);
    }
    out[model] = std::move(row);
  }
  return out;
}

std::string format_cell(const Rational& value) { return format_decimal(value, 3); }
std::string format_macro(const Rational& value) { return format_decimal(value, 2); }

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::range: return "range";
    case ErrorCode::parse: return "parse";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::config: return "config";
    case ErrorCode::integrity: return "integrity";
    case ErrorCode::transport: return "transport";
    case ErrorCode::cache_miss: return "cache_miss";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::schema: return "schema";
    case ErrorCode::authority: return "authority";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::io: return "io";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

}  // namespace derm
