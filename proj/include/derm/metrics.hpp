#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "derm/rational.hpp"
#include "derm/score.hpp"

namespace derm {

using DimensionTable = std::map<Dimension, Rational>;
using ModelDimensionTable = std::map<std::string, DimensionTable>;

// Nearest integer on the 0..5 scale; ties at .5 round half-up (away from
// zero). Raises a range error for inputs outside [0, 5].
int round_to_integer(const Score& score);
int round_to_integer(double score);

// Mean absolute error on one dimension between paired score vectors.
// Predicted scores are rounded to integers first; expert scores must already
// be integers. Pairs where either side lacks the dimension are skipped; at
// least one usable pair must remain.
Rational mae(std::span<const ScoreVector> predicted,
             std::span<const ScoreVector> expert, Dimension dim);

// Unweighted mean over the six per-dimension values; all six must be present.
Rational macro_mae(const DimensionTable& per_dim);

// Per-model, per-dimension arithmetic mean of raw (unrounded) scores. Every
// vector must be complete; an empty group raises.
ModelDimensionTable aggregate_model_means(
    const std::map<std::string, std::vector<ScoreVector>>& by_model);

// Elementwise mean of two tables with identical model/dimension keys.
ModelDimensionTable average_two_evaluators(const ModelDimensionTable& bench,
                                           const ModelDimensionTable& eval);

// Report cell formatting: 3 decimals for table cells, 2 for macro rows.
std::string format_cell(const Rational& value);
std::string format_macro(const Rational& value);

}  // namespace derm
