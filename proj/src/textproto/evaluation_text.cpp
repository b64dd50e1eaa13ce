#include "derm/evaluation_text.hpp"

namespace derm::textproto {

std::string render_evaluation(
    const ScoreVector& scores,
    const std::array<std::string, kDimensionCount>& justifications) {
  if (!scores.complete()) {
    raise(ErrorCode::invalid_argument, "render_evaluation requires all six scores");
  }
  std::string out;
  for (Dimension d : all_dimensions()) {
    out += display_name(d);
    out += ": ";
    out += scores.get(d)->to_string();
    out += "/5 ---";
    const std::string& j = justifications[index_of(d)];
    if (!j.empty()) {
      out += ' ';
      out += j;
    }
    out += '\n';
  }
  return out;
}

std::string render_evaluation(const ScoreVector& scores) {
  return render_evaluation(scores, {});
}

}  // namespace derm::textproto
