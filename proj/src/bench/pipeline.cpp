#include "derm/pipeline.hpp"

#include <algorithm>
#include <cctype>

#include "derm/evaluation_text.hpp"

namespace derm::bench {

namespace {

using backends::Backend;
using backends::Message;
using backends::ModelRequest;
using backends::ModelResponse;
using textproto::PromptId;

std::string sanitize_id(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
                          c == '_'
                      ? c
                      : '_');
  }
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

ModelRequest make_request(Backend& backend, std::string text, std::string image_ref,
                          const PipelineOptions& options) {
  ModelRequest req;
  req.model_id = backend.config().model_id;
  req.sampling = options.sampling;
  req.messages.push_back(Message{"user", std::move(text), std::move(image_ref)});
  return req;
}

std::string scores_binding(const ScoreVector& scores) {
  std::string out;
  for (Dimension d : all_dimensions()) {
    if (!out.empty()) out += ", ";
    out += display_name(d);
    out += ": ";
    out += scores.get(d)->to_string();
    out += "/5";
  }
  return out;
}

}  // namespace

std::string normalize_cot(std::string_view raw_text) {
  if (raw_text.empty()) raise(ErrorCode::empty_input, "normalize_cot on empty text");

  constexpr std::string_view kOpen = "<think>";
  constexpr std::string_view kClose = "</think>";

  // Verify alternating, balanced think delimiters and remember their spans.
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = raw_text.find(kOpen, pos);
    const std::size_t close = raw_text.find(kClose, pos);
    if (open == std::string_view::npos && close == std::string_view::npos) break;
    if (close < open) {
      raise(ErrorCode::parse,
            "unmatched </think> at offset " + std::to_string(close));
    }
    const std::size_t end = raw_text.find(kClose, open + kOpen.size());
    if (end == std::string_view::npos) {
      raise(ErrorCode::parse, "unclosed <think> at offset " + std::to_string(open));
    }
    if (const std::size_t nested = raw_text.find(kOpen, open + kOpen.size());
        nested != std::string_view::npos && nested < end) {
      raise(ErrorCode::parse, "nested <think> at offset " + std::to_string(nested));
    }
    blocks.emplace_back(open, end + kClose.size());
    pos = end + kClose.size();
  }

  const auto inside_block = [&](std::size_t offset) {
    return std::any_of(blocks.begin(), blocks.end(), [offset](const auto& b) {
      return offset >= b.first && offset < b.second;
    });
  };

  // Locate the last diagnosis sentence outside think blocks.
  constexpr std::string_view kMarker = "the answer is";
  std::size_t marker = std::string_view::npos;
  for (std::size_t i = 0; i + kMarker.size() <= raw_text.size(); ++i) {
    bool hit = true;
    for (std::size_t k = 0; k < kMarker.size(); ++k) {
      if (std::tolower(static_cast<unsigned char>(raw_text[i + k])) != kMarker[k]) {
        hit = false;
        break;
      }
    }
    if (hit && !inside_block(i)) marker = i;
  }
  if (marker == std::string_view::npos) return std::string(raw_text);

  // Sentence bounds around the marker.
  std::size_t start = 0;
  for (std::size_t i = marker; i > 0; --i) {
    const char c = raw_text[i - 1];
    if (c == '.' || c == '!' || c == '?' || c == '\n') {
      start = i;
      break;
    }
  }
  while (start < marker && std::isspace(static_cast<unsigned char>(raw_text[start]))) ++start;
  std::size_t end = marker + kMarker.size();
  while (end < raw_text.size() && raw_text[end] != '.' && raw_text[end] != '!' &&
         raw_text[end] != '?' && raw_text[end] != '\n') {
    ++end;
  }
  if (end < raw_text.size() && raw_text[end] != '\n') ++end;  // keep the terminator

  // Already final if only whitespace follows.
  std::size_t tail = end;
  while (tail < raw_text.size() &&
         std::isspace(static_cast<unsigned char>(raw_text[tail]))) {
    ++tail;
  }
  if (tail == raw_text.size()) return std::string(raw_text);

  std::string sentence(raw_text.substr(start, end - start));
  std::string rest = std::string(raw_text.substr(0, start)) + std::string(raw_text.substr(end));
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) {
    rest.pop_back();
  }
  return rest + "\n\n" + sentence + "\n";
}

BuildOutcome build_stream(CorpusStore& store, std::span<const CaseRecord> cases,
                          Stream stream, Backend& caption_backend,
                          Backend& reasoning_backend, const PipelineOptions& options) {
  if (stream == Stream::external) {
    raise(ErrorCode::invalid_argument, "build_stream handles high_quality or regular");
  }
  BuildOutcome outcome;
  const auto& caption_tpl = textproto::prompt(PromptId::captioning);
  const auto& reasoning_tpl = textproto::prompt(PromptId::hierarchical_reasoning);

  for (const auto& case_rec : cases) {
    const std::string suffix = stream == Stream::high_quality ? "-hq" : "-reg";
    const std::string narrative_id = case_rec.case_id + suffix;
    try {
      ModelResponse caption_resp = caption_backend.complete(
          make_request(caption_backend, caption_tpl.body, case_rec.image_ref, options));
      if (caption_resp.text.empty()) {
        outcome.failures.push_back(
            {case_rec.case_id, "empty_caption", "caption backend returned empty text"});
        continue;
      }

      ModelRequest reasoning_req;
      if (stream == Stream::high_quality) {
        // Label-conditioned: the reasoning model sees caption plus ground truth.
        reasoning_req = make_request(
            reasoning_backend,
            textproto::render_prompt(reasoning_tpl,
                                     {{"DISEASE_NAME", case_rec.disease_label},
                                      {"CAPTION", caption_resp.text}}),
            "", options);
      } else {
        // Label withheld: same prompt, unresolved label slot, image attached.
        reasoning_req = make_request(
            reasoning_backend,
            textproto::render_prompt_partial(reasoning_tpl, {{"CAPTION", caption_resp.text}}),
            case_rec.image_ref, options);
      }
      ModelResponse reasoning_resp = reasoning_backend.complete(reasoning_req);
      if (reasoning_resp.text.empty()) {
        outcome.failures.push_back(
            {case_rec.case_id, "empty_narrative", "reasoning backend returned empty text"});
        continue;
      }

      const std::string normalized = normalize_cot(reasoning_resp.text);
      if (stream == Stream::high_quality) {
        const std::string diagnosis = textproto::parse_final_diagnosis(normalized);
        if (!iequals(diagnosis, case_rec.disease_label)) {
          outcome.failures.push_back(
              {case_rec.case_id, "diagnosis_mismatch",
               "final diagnosis '" + diagnosis + "' does not restate label '" +
                   case_rec.disease_label + "'"});
          continue;
        }
      }

      NarrativeRecord narrative;
      narrative.narrative_id = narrative_id;
      narrative.case_id = case_rec.case_id;
      narrative.source_model = reasoning_backend.config().model_id;
      narrative.role = NarrativeRole::candidate;
      narrative.stream = stream;
      narrative.text = normalized;
      store.add_narrative(narrative,
                          Provenance{reasoning_backend.config().model_id,
                                     reasoning_tpl.id, reasoning_resp.request_fingerprint});
      outcome.narrative_ids.push_back(narrative_id);
    } catch (const Error& e) {
      outcome.failures.push_back({case_rec.case_id, to_string(e.code()), e.what()});
    }
  }
  return outcome;
}

CertifyResult certify(CorpusStore& store, const EvaluationRecord& evaluation,
                      const std::string& narrative_id) {
  if (evaluation.rater != Rater::physician) {
    raise(ErrorCode::authority, "certification requires physician scores");
  }
  if (!evaluation.scores.complete()) {
    raise(ErrorCode::invalid_argument, "certification requires all six scores");
  }
  if (evaluation.narrative_id != narrative_id) {
    raise(ErrorCode::invalid_argument, "evaluation does not reference narrative " + narrative_id);
  }
  if (!store.find_narrative(narrative_id)) {
    raise(ErrorCode::not_found, "unknown narrative " + narrative_id);
  }

  store.add_evaluation(evaluation);

  CertifyResult result;
  for (Dimension d : all_dimensions()) {
    if (evaluation.scores.get(d)->milli() < 5000) result.deficient.push_back(d);
  }
  result.certified = result.deficient.empty();
  if (result.certified) store.mark_certified(narrative_id);
  return result;
}

RationaleResult elicit_rationale(const NarrativeRecord& narrative, const ScoreVector& scores,
                                 Backend& backend, const PipelineOptions& options) {
  if (!scores.complete()) {
    raise(ErrorCode::invalid_argument, "rationale elicitation requires all six scores");
  }
  const std::string prompt_text =
      textproto::render_prompt(textproto::prompt(PromptId::rationale_elicitation),
                               {{"NARRATIVE", narrative.text}, {"SCORES", scores_binding(scores)}});

  RationaleResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ++result.attempts;
    const ModelResponse resp =
        backend.complete(make_request(backend, prompt_text, "", options));
    result.text = resp.text;
    const auto restated = textproto::parse_scores(resp.text);
    if (restated.scores == scores) {
      result.integrity_flag = false;
      return result;
    }
    result.integrity_flag = true;
  }
  return result;
}

std::string candidate_narrative_id(const CaseRecord& case_rec, std::string_view model_id) {
  return case_rec.case_id + "-cand-" + sanitize_id(model_id);
}

CandidateOutcome generate_candidate(CorpusStore& store, const CaseRecord& case_rec,
                                    Backend& model_backend, const PipelineOptions& options) {
  const std::string model_id = model_backend.config().model_id;
  const std::string narrative_id = candidate_narrative_id(case_rec, model_id);
  try {
    const auto& tpl = textproto::prompt(PromptId::candidate_generation);
    const ModelResponse resp = model_backend.complete(
        make_request(model_backend, tpl.body, case_rec.image_ref, options));
    if (resp.text.empty()) {
      return {std::nullopt,
              CaseFailure{case_rec.case_id, "empty_response", "model returned empty text"}};
    }
    NarrativeRecord narrative;
    narrative.narrative_id = narrative_id;
    narrative.case_id = case_rec.case_id;
    narrative.source_model = model_id;
    narrative.role = NarrativeRole::candidate;
    narrative.stream = Stream::external;
    narrative.text = resp.text;
    store.add_narrative(narrative,
                        Provenance{model_id, tpl.id, resp.request_fingerprint});
    return {narrative_id, std::nullopt};
  } catch (const Error& e) {
    return {std::nullopt, CaseFailure{case_rec.case_id, to_string(e.code()), e.what()}};
  }
}

textproto::ParseResult parse_scores_assisted(std::string_view text,
                                             Backend& parser_backend,
                                             const PipelineOptions& options) {
  const std::string prompt_text = textproto::render_prompt(
      *textproto::find_prompt("score_extraction"), {{"NARRATIVE", std::string(text)}});
  const ModelResponse resp =
      parser_backend.complete(make_request(parser_backend, prompt_text, "", options));
  return textproto::parse_scores(resp.text);
}

JudgeOutcome judge_pair(const NarrativeRecord& candidate, const NarrativeRecord& reference,
                        Backend& judge_backend, const PipelineOptions& options) {
  if (reference.role != NarrativeRole::reference) {
    raise(ErrorCode::integrity, "narrative " + reference.narrative_id + " is not certified");
  }
  if (reference.case_id != candidate.case_id) {
    raise(ErrorCode::integrity, "candidate and reference belong to different cases");
  }

  const std::string prompt_text = textproto::render_prompt(
      textproto::judge_prompt(options.judge_variant),
      {{"CANDIDATE_TEXT", candidate.text}, {"REFERENCE_TEXT", reference.text}});

  JudgeOutcome outcome;
  try {
    const ModelResponse resp =
        judge_backend.complete(make_request(judge_backend, prompt_text, "", options));
    outcome.reply = resp.text;
    outcome.fingerprint = resp.request_fingerprint;
    outcome.parse = textproto::parse_scores(resp.text);
    outcome.scores = outcome.parse.scores;
    if (outcome.scores.valid_count() == 0) {
      outcome.error = "judge reply contained no parsable dimension";
      return outcome;
    }
    outcome.ok = true;
  } catch (const Error& e) {
    outcome.error = e.what();
  }
  return outcome;
}

}  // namespace derm::bench
