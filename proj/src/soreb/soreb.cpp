#include "derm/soreb.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "derm/evaluation_text.hpp"
#include "derm/score_parser.hpp"

namespace derm::soreb {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainInstance::validate() const {
  if (context.empty()) raise(ErrorCode::schema, "train instance with empty context");
  if (!target_scores.complete() || !target_scores.integer_valued()) {
    raise(ErrorCode::schema,
          "train instance " + context + " needs complete integer target scores");
  }
  const auto parsed = textproto::parse_scores(target_text);
  if (!(parsed.scores == target_scores)) {
    raise(ErrorCode::integrity,
          "target text of " + context + " does not parse back to its target scores");
  }
}

void TrainConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) raise(ErrorCode::config, "beta must lie in (0,1)");
  // lambda_rl = 0 is allowed: it degenerates stage 2 to the text-only loss.
  if (lambda_rl < 0.0 || lambda_text < 0.0) {
    raise(ErrorCode::config, "loss weights must be non-negative");
  }
  if (learning_rate <= 0.0) raise(ErrorCode::config, "learning_rate must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
    raise(ErrorCode::config, "warmup_ratio must lie in [0,1)");
  }
  if (epochs_per_stage < 1) raise(ErrorCode::config, "epochs_per_stage must be positive");
  if (schedule != "cosine" && schedule != "constant") {
    raise(ErrorCode::config, "schedule must be 'cosine' or 'constant'");
  }
}

std::string TrainConfig::to_json() const {
  ordered_json j;
  j["beta"] = beta;
  j["lambda_rl"] = lambda_rl;
  j["lambda_text"] = lambda_text;
  j["learning_rate"] = learning_rate;
  j["warmup_ratio"] = warmup_ratio;
  j["schedule"] = schedule;
  j["epochs_per_stage"] = epochs_per_stage;
  j["seed"] = seed;
  j["slot_mask_policy"] = slot_mask == SlotMaskPolicy::stochastic_slots_only
                              ? "stochastic_slots_only"
                              : "all_generated_tokens";
  j["lora"] = {{"rank", lora.rank},
               {"alpha", lora.alpha},
               {"dropout", lora.dropout},
               {"weight_path", lora.weight_path},
               {"bias", lora.bias}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    raise(ErrorCode::config, "train config parse failure: " + std::string(e.what()));
  }
  TrainConfig cfg;
  cfg.beta = j.value("beta", cfg.beta);
  cfg.lambda_rl = j.value("lambda_rl", cfg.lambda_rl);
  cfg.lambda_text = j.value("lambda_text", cfg.lambda_text);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.warmup_ratio = j.value("warmup_ratio", cfg.warmup_ratio);
  cfg.schedule = j.value("schedule", cfg.schedule);
  cfg.epochs_per_stage = j.value("epochs_per_stage", cfg.epochs_per_stage);
  cfg.seed = j.value("seed", cfg.seed);
  const std::string mask = j.value("slot_mask_policy", "stochastic_slots_only");
  if (mask == "stochastic_slots_only") {
    cfg.slot_mask = SlotMaskPolicy::stochastic_slots_only;
  } else if (mask == "all_generated_tokens") {
    cfg.slot_mask = SlotMaskPolicy::all_generated_tokens;
  } else {
    raise(ErrorCode::config, "unknown slot_mask_policy '" + mask + "'");
  }
  if (j.contains("lora")) {
    const auto& l = j["lora"];
    cfg.lora.rank = l.value("rank", cfg.lora.rank);
    cfg.lora.alpha = l.value("alpha", cfg.lora.alpha);
    cfg.lora.dropout = l.value("dropout", cfg.lora.dropout);
    cfg.lora.weight_path = l.value("weight_path", cfg.lora.weight_path);
    cfg.lora.bias = l.value("bias", cfg.lora.bias);
  }
  cfg.validate();
  return cfg;
}

std::optional<double> reward(const ScoreVector& parsed, const ScoreVector& physician) {
  if (!physician.complete()) {
    raise(ErrorCode::invalid_argument, "reward requires complete physician scores");
  }
  const auto valid = parsed.valid_set();
  if (valid.empty()) return std::nullopt;  // no reward signal; caller skips RL
  double total = 0.0;
  for (Dimension d : valid) {
    const double diff = parsed.get(d)->value() - physician.get(d)->value();
    total += diff * diff;
  }
  return -total / static_cast<double>(valid.size());
}

BaselineState::BaselineState(double beta) : beta_(beta) {
  if (!(beta > 0.0 && beta < 1.0)) raise(ErrorCode::config, "beta must lie in (0,1)");
}

double BaselineState::update(double r) {
  if (!std::isfinite(r)) raise(ErrorCode::divergence, "non-finite reward");
  if (!initialized_) {
    // Seeding with the first reward avoids the spurious negative advantages a
    // zero start would produce (rewards are never positive).
    b_ = r;
    initialized_ = true;
    return 0.0;
  }
  b_ = beta_ * b_ + (1.0 - beta_) * r;
  return r - b_;  // post-update order; equals beta*(r - b_pre)
}

LossGrad text_loss(PolicyModel& policy, const TrainInstance& instance) {
  SlotLogits& row = policy.context_row(instance.context);
  LossGrad out;
  out.context = instance.context;
  for (Dimension d : all_dimensions()) {
    const std::size_t slot = index_of(d);
    const int target = instance.target_scores.get(d)->as_integer();
    const auto probs = softmax(row[slot]);
    const auto logp = log_softmax(row[slot]);
    out.loss -= logp[target];
    for (int k = 0; k < kScoreClasses; ++k) {
      out.grad[slot][k] = probs[k] - (k == target ? 1.0 : 0.0);
    }
  }
  return out;
}

LossGrad rl_loss(PolicyModel& policy, const SampledEvaluation& sampled, double advantage,
                 SlotMaskPolicy mask) {
  if (!std::isfinite(advantage)) raise(ErrorCode::divergence, "non-finite advantage");
  // Teacher-forcing recompute on the sampled sequence. Only the six score
  // slots are stochastic; under all_generated_tokens the deterministic
  // template tokens join the mean with log-prob 0.
  const int positions = mask == SlotMaskPolicy::stochastic_slots_only
                            ? static_cast<int>(kDimensionCount)
                            : static_cast<int>(kDimensionCount) * kTokensPerSection;
  SlotLogits& row = policy.context_row(sampled.context);
  LossGrad out;
  out.context = sampled.context;
  double mean_logp = 0.0;
  for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
    const int chosen = sampled.scores[slot];
    const auto probs = softmax(row[slot]);
    const auto logp = log_softmax(row[slot]);
    mean_logp += logp[chosen] / positions;
    // d(-adv * logp[chosen]) / d logit_k = adv * (p_k - onehot_k)
    const double scale = advantage / positions;
    for (int k = 0; k < kScoreClasses; ++k) {
      out.grad[slot][k] = scale * (probs[k] - (k == chosen ? 1.0 : 0.0));
    }
  }
  out.loss = -advantage * mean_logp;
  return out;
}

double lr_at(const TrainConfig& config, int step, int total_steps) {
  if (config.schedule == "constant") return config.learning_rate;
  const int warmup = std::max(1, static_cast<int>(config.warmup_ratio * total_steps));
  if (step < warmup) {
    return config.learning_rate * static_cast<double>(step + 1) / warmup;
  }
  const double progress =
      static_cast<double>(step - warmup) / std::max(1, total_steps - warmup);
  return config.learning_rate * 0.5 * (1.0 + std::cos(progress * 3.14159265358979323846));
}

namespace {

// Balanced visit schedule: every instance appears exactly epochs_per_stage
// times, globally shuffled. Sequential passes would pin each instance's
// update count to the pass boundary and leave staircase artifacts in any
// fixed-width window over the recorded curves; the balanced shuffle keeps
// visit counts exact while mixing them within every window. Both stages use
// the same schedule, so the text-only trajectory is reproducible from stage 2
// with lambda_rl = 0.
std::vector<std::size_t> visit_schedule(std::size_t n, int epochs, std::uint64_t seed) {
  std::vector<std::size_t> order;
  order.reserve(n * static_cast<std::size_t>(epochs));
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < n; ++i) order.push_back(i);
  }
  Rng rng(seed ^ 0x5c4ed01eULL);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.next() % i]);
  }
  return order;
}

void apply_update(SlotLogits& row, const SlotLogits& grad, double lr) {
  for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
    for (int k = 0; k < kScoreClasses; ++k) {
      row[slot][k] -= lr * grad[slot][k];
    }
  }
}

void check_loss_finite(double loss, int step) {
  if (!std::isfinite(loss)) {
    raise(ErrorCode::divergence,
          "training diverged at step " + std::to_string(step) + " (non-finite loss)");
  }
}

}  // namespace

TrainResult train_stage1(PolicyModel& policy, std::span<const TrainInstance> corpus,
                         const TrainConfig& config) {
  config.validate();
  if (corpus.empty()) raise(ErrorCode::empty_input, "stage 1 requires a non-empty corpus");
  for (const auto& instance : corpus) instance.validate();

  const int total_steps = config.epochs_per_stage * static_cast<int>(corpus.size());
  TrainResult result;
  int step = 0;
  for (std::size_t index : visit_schedule(corpus.size(), config.epochs_per_stage, config.seed)) {
    const TrainInstance& instance = corpus[index];
    const double lr = lr_at(config, step, total_steps);
    const LossGrad text = text_loss(policy, instance);
    check_loss_finite(text.loss, step);
    apply_update(policy.context_row(instance.context), text.grad, lr);

    StepMetrics m;
    m.step = step;
    m.text_loss = text.loss;
    m.combined_loss = text.loss;
    m.learning_rate = lr;
    m.has_rl = false;
    result.metrics.push_back(m);
    ++step;
  }
  policy.check_finite();
  result.steps = step;
  return result;
}

TrainResult train_stage2(PolicyModel& policy, std::span<const TrainInstance> corpus,
                         const TrainConfig& config) {
  config.validate();
  if (corpus.empty()) raise(ErrorCode::empty_input, "stage 2 requires a non-empty corpus");
  for (const auto& instance : corpus) instance.validate();

  // Stage-2 precondition: the starting policy must already emit parsable
  // evaluations on at least 90% of corpus contexts.
  {
    Rng probe(config.seed ^ 0x5eedf00dULL);
    int parsable = 0;
    for (const auto& instance : corpus) {
      const auto sampled = sample_evaluation(policy, instance.context, probe);
      if (textproto::parse_scores(sampled.text).scores.valid_count() ==
          static_cast<int>(kDimensionCount)) {
        ++parsable;
      }
    }
    if (parsable * 10 < static_cast<int>(corpus.size()) * 9) {
      raise(ErrorCode::config,
            "stage 2 requires a stage-1 policy with parsable outputs on >= 90% of contexts");
    }
  }

  const int total_steps = config.epochs_per_stage * static_cast<int>(corpus.size());
  Rng rng(config.seed);
  BaselineState baseline(config.beta);
  TrainResult result;
  int step = 0;
  for (std::size_t index :
       visit_schedule(corpus.size(), config.epochs_per_stage, config.seed)) {
    const TrainInstance& instance = corpus[index];
    const double lr = lr_at(config, step, total_steps);

    // One sample per instance visit, no gradients through generation.
    const SampledEvaluation sampled = sample_evaluation(policy, instance.context, rng);
    const auto parsed = textproto::parse_scores(sampled.text);
    const auto r = reward(parsed.scores, instance.target_scores);

    StepMetrics m;
    m.step = step;
    m.learning_rate = lr;

    const LossGrad text = text_loss(policy, instance);
    SlotLogits combined_grad{};
    double combined_loss = config.lambda_text * text.loss;
    if (r.has_value()) {
      const double advantage = baseline.update(*r);
      const LossGrad rl = rl_loss(policy, sampled, advantage, config.slot_mask);
      combined_loss += config.lambda_rl * rl.loss;
      for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
        for (int k = 0; k < kScoreClasses; ++k) {
          combined_grad[slot][k] =
              config.lambda_rl * rl.grad[slot][k] + config.lambda_text * text.grad[slot][k];
        }
      }
      m.reward = *r;
      m.baseline = baseline.value();
      m.advantage = advantage;
      m.rl_loss = rl.loss;
      m.has_rl = true;
    } else {
      // Unparsable sample: the reward is excluded, only the text term trains.
      for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
        for (int k = 0; k < kScoreClasses; ++k) {
          combined_grad[slot][k] = config.lambda_text * text.grad[slot][k];
        }
      }
      m.has_rl = false;
    }
    check_loss_finite(combined_loss, step);
    apply_update(policy.context_row(instance.context), combined_grad, lr);

    m.text_loss = text.loss;
    m.combined_loss = combined_loss;
    result.metrics.push_back(m);
    ++step;
  }
  policy.check_finite();
  result.steps = step;
  return result;
}

std::vector<TrainInstance> synthetic_corpus(int contexts, std::uint64_t seed) {
  if (contexts < 1) raise(ErrorCode::invalid_argument, "contexts must be positive");
  static const char* kCategories[] = {
      "acne",      "eczema",    "psoriasis", "nevus",     "keratosis", "urticaria",
      "rosacea",   "vitiligo",  "tinea",     "impetigo",  "melanoma",  "wart",
  };
  static const char* kTiers[] = {"hq", "mid", "low"};

  Rng rng(seed);
  std::vector<TrainInstance> corpus;
  corpus.reserve(contexts);
  for (int i = 0; i < contexts; ++i) {
    // Tiers interleave so any contiguous window carries a near-uniform
    // quality mix; reward curves then reflect learning, not corpus order.
    const char* category = kCategories[(i / std::size(kTiers)) % std::size(kCategories)];
    const char* tier = kTiers[i % std::size(kTiers)];
    TrainInstance instance;
    instance.context =
        std::string(category) + "-" + tier + "-" + std::to_string(i);
    // Tiered target map: each tier carries a fixed score multiset, permuted
    // per context (deterministic in seed and i). Equal multisets keep every
    // context of a tier equally hard, so training curves are comparable
    // across corpus windows.
    std::array<int, kDimensionCount> targets{};
    if (std::string_view(tier) == "hq") {
      targets = {4, 4, 4, 5, 5, 5};
    } else if (std::string_view(tier) == "mid") {
      targets = {2, 2, 3, 3, 4, 4};
    } else {
      targets = {0, 0, 1, 1, 2, 2};
    }
    for (std::size_t k = targets.size(); k > 1; --k) {
      std::swap(targets[k - 1], targets[rng.next() % k]);
    }
    instance.target_scores = ScoreVector::from_integers(targets);
    instance.target_text = textproto::render_evaluation(instance.target_scores);
    corpus.push_back(std::move(instance));
  }
  return corpus;
}

std::vector<TrainInstance> load_train_corpus(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io, "cannot read " + file.string());
  std::vector<TrainInstance> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      raise(ErrorCode::schema, file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    TrainInstance instance;
    instance.context = j.value("context", "");
    const json scores = j.value("target_scores", json::object());
    for (auto it = scores.begin(); it != scores.end(); ++it) {
      const auto dim = parse_dimension(it.key());
      if (!dim) raise(ErrorCode::schema, "unknown dimension key '" + it.key() + "'");
      instance.target_scores.set(*dim, Score::from_double(it.value().get<double>()));
    }
    instance.target_text = j.value("target_text", "");
    instance.validate();
    corpus.push_back(std::move(instance));
  }
  if (corpus.empty()) raise(ErrorCode::empty_input, file.string() + ": no instances");
  return corpus;
}

void save_train_corpus(std::span<const TrainInstance> corpus,
                       const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + file.string());
  for (const auto& instance : corpus) {
    ordered_json j;
    j["context"] = instance.context;
    ordered_json scores = ordered_json::object();
    for (Dimension d : all_dimensions()) {
      scores[std::string(identifier(d))] = instance.target_scores.get(d)->as_integer();
    }
    j["target_scores"] = std::move(scores);
    j["target_text"] = instance.target_text;
    out << j.dump() << "\n";
  }
}

void save_metrics_csv(std::span<const StepMetrics> metrics,
                      const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write " + file.string());
  out << "step,reward,baseline,advantage,rl_loss,text_loss,combined_loss\n";
  char buf[64];
  const auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
  };
  for (const auto& m : metrics) {
    out << m.step << ',';
    if (m.has_rl) {
      out << num(m.reward) << ',' << num(m.baseline) << ',' << num(m.advantage) << ','
          << num(m.rl_loss) << ',';
    } else {
      out << ",,,,";
    }
    out << num(m.text_loss) << ',' << num(m.combined_loss) << "\n";
  }
}

}  // namespace derm::soreb
