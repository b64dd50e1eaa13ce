#include "derm/dimension.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace derm {

namespace {

struct DimensionNames {
  std::string_view display;
  std::string_view ident;
  std::string_view alias;
};

constexpr std::array<DimensionNames, kDimensionCount> kNames = {{
    {"Accuracy", "Accuracy", "Acc"},
    {"Safety", "Safety", "Safe"},
    {"Medical Groundedness", "MedicalGroundedness", "MedG"},
    {"Clinical Coverage", "ClinicalCoverage", "Cover"},
    {"Reasoning Coherence", "ReasoningCoherence", "Reason"},
    {"Description Precision", "DescriptionPrecision", "Desc"},
}};

std::string fold(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '-') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::string_view display_name(Dimension d) { return kNames[index_of(d)].display; }
std::string_view identifier(Dimension d) { return kNames[index_of(d)].ident; }
std::string_view short_alias(Dimension d) { return kNames[index_of(d)].alias; }

std::optional<Dimension> parse_dimension(std::string_view name) {
  const std::string key = fold(name);
  if (key.empty()) return std::nullopt;
  for (Dimension d : all_dimensions()) {
    const auto& names = kNames[index_of(d)];
    if (key == fold(names.display) || key == fold(names.ident) || key == fold(names.alias)) {
      return d;
    }
  }
  // Longer informal forms used in judge transcripts ("Coverage", "Reasoning",
  // "Description").
  if (key == "coverage") return Dimension::ClinicalCoverage;
  if (key == "reasoning") return Dimension::ReasoningCoherence;
  if (key == "description") return Dimension::DescriptionPrecision;
  if (key == "groundedness") return Dimension::MedicalGroundedness;
  return std::nullopt;
}

}  // namespace derm
