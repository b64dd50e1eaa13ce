#include "derm/records.hpp"

namespace derm {

std::string_view to_string(Split v) {
  switch (v) {
    case Split::train: return "train";
    case Split::bench: return "bench";
    case Split::holdout: return "holdout";
  }
  return "train";
}

std::string_view to_string(NarrativeRole v) {
  return v == NarrativeRole::candidate ? "candidate" : "reference";
}

std::string_view to_string(Stream v) {
  switch (v) {
    case Stream::high_quality: return "high_quality";
    case Stream::regular: return "regular";
    case Stream::external: return "external";
  }
  return "external";
}

std::string_view to_string(Rater v) {
  switch (v) {
    case Rater::physician: return "physician";
    case Rater::dermbench: return "dermbench";
    case Rater::dermeval: return "dermeval";
  }
  return "physician";
}

std::optional<Split> parse_split(std::string_view v) {
  if (v == "train") return Split::train;
  if (v == "bench") return Split::bench;
  if (v == "holdout") return Split::holdout;
  return std::nullopt;
}

std::optional<NarrativeRole> parse_role(std::string_view v) {
  if (v == "candidate") return NarrativeRole::candidate;
  if (v == "reference") return NarrativeRole::reference;
  return std::nullopt;
}

std::optional<Stream> parse_stream(std::string_view v) {
  if (v == "high_quality" || v == "high") return Stream::high_quality;
  if (v == "regular") return Stream::regular;
  if (v == "external") return Stream::external;
  return std::nullopt;
}

std::optional<Rater> parse_rater(std::string_view v) {
  if (v == "physician") return Rater::physician;
  if (v == "dermbench") return Rater::dermbench;
  if (v == "dermeval") return Rater::dermeval;
  return std::nullopt;
}

void validate(const CaseRecord& rec) {
  if (rec.case_id.empty()) raise(ErrorCode::schema, "case with empty case_id");
  if (rec.disease_label.empty()) {
    raise(ErrorCode::schema, "case " + rec.case_id + " has empty disease_label");
  }
}

void validate(const NarrativeRecord& rec) {
  if (rec.narrative_id.empty()) raise(ErrorCode::schema, "narrative with empty narrative_id");
  if (rec.case_id.empty()) {
    raise(ErrorCode::schema, "narrative " + rec.narrative_id + " has empty case_id");
  }
  if (rec.text.empty()) {
    raise(ErrorCode::schema, "narrative " + rec.narrative_id + " has empty text");
  }
  if (rec.role == NarrativeRole::reference && rec.stream != Stream::high_quality) {
    raise(ErrorCode::integrity,
          "reference narrative " + rec.narrative_id + " outside the high-quality stream");
  }
}

void validate(const EvaluationRecord& rec) {
  if (rec.narrative_id.empty()) raise(ErrorCode::schema, "evaluation with empty narrative_id");
  if (rec.rater == Rater::physician && !rec.scores.integer_valued()) {
    raise(ErrorCode::schema,
          "physician scores for " + rec.narrative_id + " must be integers");
  }
}

}  // namespace derm
