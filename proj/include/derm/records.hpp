#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "derm/score.hpp"

namespace derm {

enum class Split { train, bench, holdout };
enum class NarrativeRole { candidate, reference };
enum class Stream { high_quality, regular, external };
enum class Rater { physician, dermbench, dermeval };

std::string_view to_string(Split v);
std::string_view to_string(NarrativeRole v);
std::string_view to_string(Stream v);
std::string_view to_string(Rater v);

std::optional<Split> parse_split(std::string_view v);
std::optional<NarrativeRole> parse_role(std::string_view v);
std::optional<Stream> parse_stream(std::string_view v);
std::optional<Rater> parse_rater(std::string_view v);

// An image case with its ground-truth disease label.
struct CaseRecord {
  std::string case_id;
  std::string image_ref;      // file path; opaque to core
  std::string disease_label;
  std::string category;
  Split split = Split::train;
};

// A candidate or reference narrative tied to a case and a source model.
struct NarrativeRecord {
  std::string narrative_id;
  std::string case_id;
  std::string source_model;
  NarrativeRole role = NarrativeRole::candidate;
  std::string text;
  Stream stream = Stream::external;
};

// Scores plus structured rationale from one rater; the unit of supervision
// and of reporting.
struct EvaluationRecord {
  std::string narrative_id;
  Rater rater = Rater::physician;
  ScoreVector scores;
  std::string rationale;  // optional six-section text; empty when absent
};

// Checks the record-level invariants (non-empty ids/labels, integer physician
// scores); raises on violation.
void validate(const CaseRecord& rec);
void validate(const NarrativeRecord& rec);
void validate(const EvaluationRecord& rec);

}  // namespace derm
