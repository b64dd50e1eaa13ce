#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "derm/score.hpp"

namespace derm::soreb {

inline constexpr int kScoreClasses = 6;  // integer rubric scores 0..5

// Logits for one context: six score slots, six classes each.
using SlotLogits = std::array<std::array<double, kScoreClasses>, kDimensionCount>;

// Deterministic, platform-stable uniform source (splitmix64). Standard
// distribution classes are implementation-defined, so sampling builds its
// doubles directly from the integer stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();  // [0, 1)

 private:
  std::uint64_t splitmix();
  std::uint64_t state_;
};

std::array<double, kScoreClasses> softmax(const std::array<double, kScoreClasses>& logits);
std::array<double, kScoreClasses> log_softmax(const std::array<double, kScoreClasses>& logits);

// Toy autoregressive evaluation generator: the emitted sequence is the
// canonical evaluation template whose six score slots are sampled from
// per-dimension categoricals conditioned on a discrete context key.
class PolicyModel {
 public:
  // Allocates a uniform (all-zero) row for unseen contexts.
  SlotLogits& context_row(const std::string& context);
  const SlotLogits* find_context(const std::string& context) const;
  SlotLogits row_or_uniform(const std::string& context) const;

  std::size_t context_count() const { return rows_.size(); }
  std::vector<std::string> contexts() const;

  // Finiteness of every logit; raises on violation (divergence guard).
  void check_finite() const;

  void save(const std::filesystem::path& file, const std::string& config_json) const;
  static PolicyModel load(const std::filesystem::path& file, std::string* config_json = nullptr);

 private:
  std::map<std::string, SlotLogits> rows_;
};

struct SampledEvaluation {
  std::string context;
  std::array<int, kDimensionCount> scores;
  double log_prob = 0.0;  // sum of chosen slot log-probabilities
  std::string text;       // canonical rendering of the sampled scores
};

// Samples one evaluation text without touching gradient state; deterministic
// given the generator state.
SampledEvaluation sample_evaluation(const PolicyModel& policy, const std::string& context,
                                    Rng& rng);

std::array<int, kDimensionCount> argmax_scores(const PolicyModel& policy,
                                               const std::string& context);

}  // namespace derm::soreb
