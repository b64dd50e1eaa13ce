#include "derm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "derm/evaluation_text.hpp"
#include "derm/error.hpp"

namespace derm::soreb {

std::uint64_t Rng::splitmix() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next() { return splitmix(); }

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::array<double, kScoreClasses> softmax(const std::array<double, kScoreClasses>& logits) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::array<double, kScoreClasses> out{};
  double total = 0.0;
  for (int k = 0; k < kScoreClasses; ++k) {
    out[k] = std::exp(logits[k] - max_logit);
    total += out[k];
  }
  for (auto& p : out) p /= total;
  return out;
}

std::array<double, kScoreClasses> log_softmax(const std::array<double, kScoreClasses>& logits) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (int k = 0; k < kScoreClasses; ++k) total += std::exp(logits[k] - max_logit);
  const double log_z = max_logit + std::log(total);
  std::array<double, kScoreClasses> out{};
  for (int k = 0; k < kScoreClasses; ++k) out[k] = logits[k] - log_z;
  return out;
}

SlotLogits& PolicyModel::context_row(const std::string& context) {
  return rows_[context];  // value-initialized to zeros: the uniform init
}

const SlotLogits* PolicyModel::find_context(const std::string& context) const {
  auto it = rows_.find(context);
  return it == rows_.end() ? nullptr : &it->second;
}

SlotLogits PolicyModel::row_or_uniform(const std::string& context) const {
  if (const auto* row = find_context(context)) return *row;
  return SlotLogits{};
}

std::vector<std::string> PolicyModel::contexts() const {
  std::vector<std::string> keys;
  keys.reserve(rows_.size());
  for (const auto& [key, _] : rows_) keys.push_back(key);
  return keys;
}

void PolicyModel::check_finite() const {
  for (const auto& [key, row] : rows_) {
    for (const auto& slot : row) {
      for (double v : slot) {
        if (!std::isfinite(v)) {
          raise(ErrorCode::divergence, "non-finite logit in context '" + key + "'");
        }
      }
    }
  }
}

void PolicyModel::save(const std::filesystem::path& file, const std::string& config_json) const {
  nlohmann::ordered_json doc;
  doc["schema"] = "derm.policy_checkpoint/1";
  if (!config_json.empty()) {
    doc["config"] = nlohmann::json::parse(config_json);
  }
  nlohmann::ordered_json contexts = nlohmann::ordered_json::object();
  for (const auto& [key, row] : rows_) {
    nlohmann::ordered_json slots = nlohmann::ordered_json::array();
    for (const auto& slot : row) slots.push_back(slot);
    contexts[key] = std::move(slots);
  }
  doc["contexts"] = std::move(contexts);
  std::error_code ec;
  std::filesystem::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write checkpoint " + file.string());
  out << doc.dump(2) << "\n";
}

PolicyModel PolicyModel::load(const std::filesystem::path& file, std::string* config_json) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io, "cannot read checkpoint " + file.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    raise(ErrorCode::schema, file.string() + ": " + e.what());
  }
  if (doc.value("schema", "") != "derm.policy_checkpoint/1") {
    raise(ErrorCode::schema, file.string() + ": not a policy checkpoint");
  }
  if (config_json != nullptr && doc.contains("config")) {
    *config_json = doc["config"].dump();
  }
  PolicyModel policy;
  for (auto it = doc["contexts"].begin(); it != doc["contexts"].end(); ++it) {
    SlotLogits row{};
    const auto& slots = it.value();
    if (slots.size() != kDimensionCount) {
      raise(ErrorCode::schema, "checkpoint row with wrong slot count");
    }
    for (std::size_t s = 0; s < kDimensionCount; ++s) {
      const auto& slot = slots[s];
      if (slot.size() != kScoreClasses) {
        raise(ErrorCode::schema, "checkpoint slot with wrong class count");
      }
      for (int k = 0; k < kScoreClasses; ++k) row[s][k] = slot[k].get<double>();
    }
    policy.context_row(it.key()) = row;
  }
  policy.check_finite();
  return policy;
}

SampledEvaluation sample_evaluation(const PolicyModel& policy, const std::string& context,
                                    Rng& rng) {
  const SlotLogits row = policy.row_or_uniform(context);
  SampledEvaluation out;
  out.context = context;
  for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
    const auto probs = softmax(row[slot]);
    const auto logp = log_softmax(row[slot]);
    const double u = rng.uniform();
    int chosen = kScoreClasses - 1;
    double cum = 0.0;
    for (int k = 0; k < kScoreClasses; ++k) {
      cum += probs[k];
      if (u < cum) {
        chosen = k;
        break;
      }
    }
    out.scores[slot] = chosen;
    out.log_prob += logp[chosen];
  }
  out.text = textproto::render_evaluation(ScoreVector::from_integers(out.scores));
  return out;
}

std::array<int, kDimensionCount> argmax_scores(const PolicyModel& policy,
                                               const std::string& context) {
  const SlotLogits row = policy.row_or_uniform(context);
  std::array<int, kDimensionCount> out{};
  for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
    out[slot] = static_cast<int>(
        std::max_element(row[slot].begin(), row[slot].end()) - row[slot].begin());
  }
  return out;
}

}  // namespace derm::soreb
