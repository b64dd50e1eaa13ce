#pragma once

#include <optional>
#include <span>
#include <vector>

#include "derm/policy.hpp"

namespace derm::soreb {

// One supervision unit: a discrete context standing in for the (image,
// narrative) input, the physician target scores, and the canonical target
// text those scores render to.
struct TrainInstance {
  std::string context;
  ScoreVector target_scores;  // complete, integer-valued
  std::string target_text;

  void validate() const;  // target_text must parse back to target_scores
};

enum class SlotMaskPolicy { stochastic_slots_only, all_generated_tokens };

struct TrainConfig {
  double beta = 0.9;         // EMA momentum
  double lambda_rl = 0.5;    // reinforcement loss weight
  double lambda_text = 1.0;  // text loss weight
  double learning_rate = 2e-5;
  double warmup_ratio = 0.03;
  std::string schedule = "cosine";
  int epochs_per_stage = 5;
  std::uint64_t seed = 0;
  SlotMaskPolicy slot_mask = SlotMaskPolicy::stochastic_slots_only;

  // Recorded for parity with the full-scale fine-tuning recipe; no effect on
  // the toy policy.
  struct Lora {
    int rank = 64;
    int alpha = 16;
    double dropout = 0.05;
    std::string weight_path;
    std::string bias = "none";
  } lora;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Numeric alignment reward: negative mean squared error over the parsed
// (valid) dimensions, in [-25, 0]. Empty valid set carries no reward signal;
// the caller must skip the RL term for that sample.
std::optional<double> reward(const ScoreVector& parsed, const ScoreVector& physician);

// Scalar EMA baseline. The first observed reward seeds the baseline and
// yields a zero advantage; afterwards b <- beta*b + (1-beta)*r first, then
// adv = r - b, which equals beta*(r - b_pre) exactly.
class BaselineState {
 public:
  explicit BaselineState(double beta);

  double update(double r);  // returns the advantage

  double value() const { return b_; }
  double beta() const { return beta_; }
  bool initialized() const { return initialized_; }

 private:
  double b_ = 0.0;
  double beta_;
  bool initialized_ = false;
};

// Gradient support is always a single context row in the toy policy.
struct LossGrad {
  double loss = 0.0;
  std::string context;
  SlotLogits grad{};  // d(loss)/d(logits) for that row
};

// Token-level cross entropy against the canonical target text: per slot,
// loss -= log softmax[target], gradient = softmax - onehot(target).
LossGrad text_loss(PolicyModel& policy, const TrainInstance& instance);

// REINFORCE surrogate on the sampled sequence: -adv * mean over generated
// positions of log p(y_t | y_<t, x). Gradients flow only through the sampled
// slot log-probs; the advantage is a constant. Under all_generated_tokens the
// deterministic template tokens enter the mean with log-prob 0, rescaling it.
LossGrad rl_loss(PolicyModel& policy, const SampledEvaluation& sampled, double advantage,
                 SlotMaskPolicy mask);

// Tokens per section of the canonical template: name, score slot, separator.
inline constexpr int kTokensPerSection = 3;

struct StepMetrics {
  int step = 0;
  double reward = 0.0;
  double baseline = 0.0;
  double advantage = 0.0;
  double rl_loss = 0.0;
  double text_loss = 0.0;
  double combined_loss = 0.0;
  double learning_rate = 0.0;
  bool has_rl = false;  // stage-1 rows leave the RL columns empty
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  int steps = 0;
};

// Linear warmup over warmup_ratio of the run, then cosine decay to zero.
double lr_at(const TrainConfig& config, int step, int total_steps);

// Stage 1: plain gradient descent on the text loss so the policy emits the
// canonical, parsable format.
TrainResult train_stage1(PolicyModel& policy, std::span<const TrainInstance> corpus,
                         const TrainConfig& config);

// Stage 2: per instance, sample an evaluation without gradients, parse it,
// compute the reward against physician scores, update the EMA baseline, and
// descend lambda_rl * L_RL + lambda_text * L_TEXT. Unparsable samples
// contribute only the text term.
TrainResult train_stage2(PolicyModel& policy, std::span<const TrainInstance> corpus,
                         const TrainConfig& config);

// Synthetic corpus with a deterministic context -> target-score map, contexts
// derived from (disease category x quality tier).
std::vector<TrainInstance> synthetic_corpus(int contexts, std::uint64_t seed);

std::vector<TrainInstance> load_train_corpus(const std::filesystem::path& file);
void save_train_corpus(std::span<const TrainInstance> corpus,
                       const std::filesystem::path& file);

void save_metrics_csv(std::span<const StepMetrics> metrics, const std::filesystem::path& file);

}  // namespace derm::soreb
