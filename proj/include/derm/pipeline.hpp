#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "derm/backend.hpp"
#include "derm/corpus.hpp"
#include "derm/prompts.hpp"
#include "derm/score_parser.hpp"

namespace derm::bench {

struct PipelineOptions {
  backends::Sampling sampling;
  textproto::JudgeVariant judge_variant = textproto::JudgeVariant::six_dim;
};

struct CaseFailure {
  std::string case_id;
  std::string code;
  std::string message;
};

struct BuildOutcome {
  std::vector<std::string> narrative_ids;
  std::vector<CaseFailure> failures;
};

// Dual-stream corpus construction: per case, caption the image, then run the
// hierarchical reasoning prompt -- with the disease label bound in the
// high-quality stream, withheld in the regular stream -- and persist one
// normalized narrative per case. Backend failures become per-case failure
// entries; the run continues.
BuildOutcome build_stream(CorpusStore& store, std::span<const CaseRecord> cases,
                          Stream stream, backends::Backend& caption_backend,
                          backends::Backend& reasoning_backend,
                          const PipelineOptions& options = {});

// Normalizes a narrative into the hierarchical chain-of-thought form:
// balanced think-delimited blocks, and the "The answer is ..." diagnosis
// sentence verified to be (or moved to) the end. Idempotent on normalized
// text; raises with the offset on unbalanced think delimiters.
std::string normalize_cot(std::string_view raw_text);

struct CertifyResult {
  bool certified = false;
  std::vector<Dimension> deficient;  // sub-5 dimensions when not certified
};

// The all-fives certification gate. Appends the physician evaluation to the
// store; on certification the narrative becomes the case's reference.
CertifyResult certify(CorpusStore& store, const EvaluationRecord& evaluation,
                      const std::string& narrative_id);

struct RationaleResult {
  std::string text;
  bool integrity_flag = false;  // restated scores kept disagreeing with the inputs
  int attempts = 0;
};

// Elicits the six-section rationale and validates via parse_scores that the
// backend restated the input scores; one retry, then the record is flagged.
RationaleResult elicit_rationale(const NarrativeRecord& narrative, const ScoreVector& scores,
                                 backends::Backend& backend,
                                 const PipelineOptions& options = {});

struct CandidateOutcome {
  std::optional<std::string> narrative_id;
  std::optional<CaseFailure> failure;
};

// Deterministic id a generated candidate narrative will carry.
std::string candidate_narrative_id(const CaseRecord& case_rec, std::string_view model_id);

// Candidate elicitation under the fixed instruction protocol; the response is
// stored with provenance, role=candidate.
CandidateOutcome generate_candidate(CorpusStore& store, const CaseRecord& case_rec,
                                    backends::Backend& model_backend,
                                    const PipelineOptions& options = {});

struct JudgeOutcome {
  bool ok = false;
  ScoreVector scores;
  textproto::ParseResult parse;
  std::string reply;
  std::string fingerprint;
  std::string error;
};

// Reference-anchored judging: renders the comparison prompt over the two
// passages and extracts the six scores from the judge reply. Partial parses
// are returned with their valid set; a reply with no parsable dimension is a
// judging failure.
JudgeOutcome judge_pair(const NarrativeRecord& candidate, const NarrativeRecord& reference,
                        backends::Backend& judge_backend,
                        const PipelineOptions& options = {});

// Backend-assisted extraction mode: a model restates the scores in the
// canonical line format and the deterministic parser reads its reply. The
// default rule-based parse_scores stays the primary path.
textproto::ParseResult parse_scores_assisted(std::string_view text,
                                             backends::Backend& parser_backend,
                                             const PipelineOptions& options = {});

}  // namespace derm::bench
