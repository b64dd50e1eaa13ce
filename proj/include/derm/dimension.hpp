#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace derm {

// The six rubric dimensions, in canonical report order.
enum class Dimension {
  Accuracy = 0,
  Safety,
  MedicalGroundedness,
  ClinicalCoverage,
  ReasoningCoherence,
  DescriptionPrecision,
};

inline constexpr std::size_t kDimensionCount = 6;

constexpr std::array<Dimension, kDimensionCount> all_dimensions() {
  return {Dimension::Accuracy,         Dimension::Safety,
          Dimension::MedicalGroundedness, Dimension::ClinicalCoverage,
          Dimension::ReasoningCoherence,  Dimension::DescriptionPrecision};
}

constexpr std::size_t index_of(Dimension d) { return static_cast<std::size_t>(d); }

std::string_view display_name(Dimension d);  // "Medical Groundedness"
std::string_view identifier(Dimension d);    // "MedicalGroundedness" (file schemas)
std::string_view short_alias(Dimension d);   // "MedG" (table headers)

// Accepts identifiers, display names, and table aliases, case-insensitively.
std::optional<Dimension> parse_dimension(std::string_view name);

}  // namespace derm
