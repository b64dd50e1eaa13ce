#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "derm/error.hpp"

namespace derm::textproto {

enum class PromptId {
  captioning,
  hierarchical_reasoning,
  rationale_elicitation,
  candidate_generation,
  judge_comparison,
};

// The judge instruction ships in two variants: the default enumerates all six
// dimensions; the five-dimension variant omits Accuracy from the enumeration
// and is kept selectable for audit.
enum class JudgeVariant { six_dim, five_dim_verbatim };

struct PromptTemplate {
  std::string id;    // registry key, e.g. "judge_comparison"
  std::string body;  // full text; binding slots written as {NAME}
  std::vector<std::string> placeholders;  // declared binding slots
};

const PromptTemplate& prompt(PromptId id);
const PromptTemplate& judge_prompt(JudgeVariant variant);
const PromptTemplate* find_prompt(std::string_view id);  // nullptr when unknown

// All registry records, including the judge variant.
const std::vector<PromptTemplate>& prompt_registry();

using Bindings = std::map<std::string, std::string>;

// Exact substitution; every declared placeholder must be bound and every
// binding key must be declared. Output is byte-stable.
std::string render_prompt(const PromptTemplate& tpl, const Bindings& bindings);
std::string render_prompt(std::string_view id, const Bindings& bindings);

// Substitutes only the given bindings and leaves other declared slots
// verbatim. The regular corpus stream uses this to withhold the disease
// label from the reasoning prompt.
std::string render_prompt_partial(const PromptTemplate& tpl, const Bindings& bindings);

// Plain-text catalog of the full registry (id header plus body per record),
// for auditing non-default prompt selections.
std::string prompt_catalog();

std::string_view to_string(JudgeVariant v);
JudgeVariant parse_judge_variant(std::string_view v);  // raises on unknown

}  // namespace derm::textproto
