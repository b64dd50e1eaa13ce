#pragma once

#include <array>
#include <string>

#include "derm/score.hpp"

namespace derm::textproto {

// Canonical evaluation text: one titled section per dimension in canonical
// order, each line "<Display name>: <score>/5 --- <justification>". This is
// the machine-parsable target format the evaluator is trained to emit.
std::string render_evaluation(
    const ScoreVector& scores,
    const std::array<std::string, kDimensionCount>& justifications);

std::string render_evaluation(const ScoreVector& scores);

}  // namespace derm::textproto
