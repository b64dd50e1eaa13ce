#include "derm/prompts.hpp"

#include <array>

namespace derm::textproto {

namespace {

// Fixed instruction texts. The corpus pipelines depend on these bodies being
// byte-stable; golden tests pin their anchor phrases.
const std::vector<PromptTemplate>& registry() {
  static const std::vector<PromptTemplate> kRegistry = {
      {"captioning",
       "Please briefly describe the physical location of the affected skin and "
       "the observable medical features of the skin condition. Do not make any "
       "differential diagnosis. Start your response with 'This image shows ...'.",
       {}},
      {"hierarchical_reasoning",
       "Simulate expert hierarchical reasoning for dermatologic diagnosis using "
       "the provided caption and the ground truth {DISEASE_NAME}. Begin with "
       "high level categorization, progressively refine to specific diseases "
       "and pathological features, and conclude with a coherent diagnostic "
       "judgment.\n\nCaption:\n{CAPTION}",
       {"DISEASE_NAME", "CAPTION"}},
      {"rationale_elicitation",
       "Given the dermatology image, the generated diagnostic narrative, and "
       "the six numeric scores for Accuracy, Safety, Medical Groundedness, "
       "Clinical Coverage, Reasoning Coherence, and Description Precision, "
       "produce a concise justification for each dimension. Structure the "
       "output as six titled sections that match the dimension names. In each "
       "section restate the score, cite concrete evidence from the narrative "
       "or observable findings that supports the score, and end with one "
       "actionable suggestion for improvement. Do not propose a new diagnosis "
       "and do not alter the scores.\n\nNarrative:\n{NARRATIVE}\n\nScores:\n{SCORES}",
       {"NARRATIVE", "SCORES"}},
      // {DISEASE_NAME} below is part of the instruction itself (the candidate
      // model fills it in), so this template declares no binding slots.
      {"candidate_generation",
       "You are a dermatology expert. Analyze the image by describing key "
       "features such as morphology, color, distribution, and surface changes. "
       "Interpret the findings with clinical reasoning. Provide two to three "
       "differential diagnoses. Justify the top diagnosis. Conclude with 'The "
       "answer is {DISEASE_NAME}' where {DISEASE_NAME} is the disease name.",
       {}},
      {"judge_comparison",
       "Passage 1 (our generated diagnostic text):\n{CANDIDATE_TEXT}\n\n"
       "Passage 2 (gold standard reference):\n{REFERENCE_TEXT}\n\n"
       "Given the two passages above, where the first is our generated "
       "diagnostic text and the second is the gold standard reference, compare "
       "them and assign our generated text a score from 0 to 5 for Accuracy, "
       "Safety, Medical Groundedness, Clinical Coverage, Reasoning Coherence, "
       "and Description Precision. Use 0 for the lowest and 5 for the highest.",
       {"CANDIDATE_TEXT", "REFERENCE_TEXT"}},
      // Backend-assisted score extraction: asks a model to restate the six
      // scores in the canonical line format, which the deterministic parser
      // then reads.
      {"score_extraction",
       "Extract the six numeric scores for Accuracy, Safety, Medical "
       "Groundedness, Clinical Coverage, Reasoning Coherence, and Description "
       "Precision from the evaluation below. Reply with exactly six lines, one "
       "per dimension in that order, each formatted as '<dimension name>: "
       "<score>/5'. If a score is absent, omit its line.\n\n"
       "Evaluation:\n{NARRATIVE}",
       {"NARRATIVE"}},
      // Variant that omits Accuracy from the enumeration, kept for audit runs.
      {"judge_comparison_five_dim",
       "Passage 1 (our generated diagnostic text):\n{CANDIDATE_TEXT}\n\n"
       "Passage 2 (gold standard reference):\n{REFERENCE_TEXT}\n\n"
       "Given the two passages above, where the first is our generated "
       "diagnostic text and the second is the gold standard reference, compare "
       "them and assign our generated text a score from 0 to 5 for Safety, "
       "Medical Groundedness, Clinical Coverage, Reasoning Coherence, and "
       "Description Precision. Use 0 for the lowest and 5 for the highest.",
       {"CANDIDATE_TEXT", "REFERENCE_TEXT"}},
  };
  return kRegistry;
}

std::string apply_bindings(const PromptTemplate& tpl, const Bindings& bindings,
                           bool require_all) {
  for (const auto& [key, value] : bindings) {
    bool declared = false;
    for (const auto& p : tpl.placeholders) {
      if (p == key) declared = true;
    }
    if (!declared) {
      raise(ErrorCode::invalid_argument,
            "binding '" + key + "' not declared by template " + tpl.id);
    }
    (void)value;
  }

  std::string out = tpl.body;
  for (const auto& name : tpl.placeholders) {
    const std::string slot = "{" + name + "}";
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      if (require_all) {
        raise(ErrorCode::invalid_argument,
              "missing binding '" + name + "' for template " + tpl.id);
      }
      continue;
    }
    std::size_t pos = 0;
    while ((pos = out.find(slot, pos)) != std::string::npos) {
      out.replace(pos, slot.size(), it->second);
      pos += it->second.size();
    }
  }
  return out;
}

}  // namespace

const PromptTemplate& prompt(PromptId id) {
  return registry()[static_cast<std::size_t>(id)];
}

const PromptTemplate& judge_prompt(JudgeVariant variant) {
  return variant == JudgeVariant::six_dim ? *find_prompt("judge_comparison")
                                          : *find_prompt("judge_comparison_five_dim");
}

const PromptTemplate* find_prompt(std::string_view id) {
  for (const auto& tpl : registry()) {
    if (tpl.id == id) return &tpl;
  }
  return nullptr;
}

const std::vector<PromptTemplate>& prompt_registry() { return registry(); }

std::string render_prompt(const PromptTemplate& tpl, const Bindings& bindings) {
  return apply_bindings(tpl, bindings, /*require_all=*/true);
}

std::string render_prompt(std::string_view id, const Bindings& bindings) {
  const PromptTemplate* tpl = find_prompt(id);
  if (!tpl) raise(ErrorCode::not_found, "unknown prompt template '" + std::string(id) + "'");
  return render_prompt(*tpl, bindings);
}

std::string render_prompt_partial(const PromptTemplate& tpl, const Bindings& bindings) {
  return apply_bindings(tpl, bindings, /*require_all=*/false);
}

std::string prompt_catalog() {
  std::string out;
  for (const auto& tpl : registry()) {
    out += "=== prompt: " + tpl.id + "\n";
    out += tpl.body;
    out += "\n";
  }
  return out;
}

std::string_view to_string(JudgeVariant v) {
  return v == JudgeVariant::six_dim ? "six_dim" : "five_dim_verbatim";
}

JudgeVariant parse_judge_variant(std::string_view v) {
  if (v == "six_dim") return JudgeVariant::six_dim;
  if (v == "five_dim_verbatim") return JudgeVariant::five_dim_verbatim;
  raise(ErrorCode::config, "unknown judge prompt variant '" + std::string(v) + "'");
}

}  // namespace derm::textproto
