#pragma once

#include <array>
#include <string>
#include <vector>

namespace derm::verify {

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Self-contained transcript fixtures for the parser suite (usable from any
// working directory).
struct TranscriptFixture {
  std::string name;
  std::string text;
  std::array<int, 6> expected;
};

const std::vector<TranscriptFixture>& transcript_fixtures();

// Finite-difference checks of both loss gradients (100 random draws each,
// eps = 1e-5, max relative error < 1e-4).
std::vector<PropertyResult> run_gradcheck_suite();

// Extraction on the transcript fixtures, randomized render->parse round
// trips, and the out-of-range / missing-dimension exclusion rules.
std::vector<PropertyResult> run_parser_suite();

// Reward range and zero conditions, advantage identity, baseline containment,
// and the variance-reduction bound on the pinned reward stream.
std::vector<PropertyResult> run_invariants_suite();

// Dispatch by suite name: "gradcheck" | "parser" | "invariants".
std::vector<PropertyResult> run_suite(std::string_view name);

// The pinned stationary reward stream used by the variance-reduction bound:
// squared-severity rewards over an AR(1) latent with strong autocorrelation.
std::vector<double> pinned_reward_stream(std::size_t steps);

}  // namespace derm::verify
