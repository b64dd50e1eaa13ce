#include "derm/verify.hpp"

#include <cmath>
#include <functional>

#include "derm/evaluation_text.hpp"
#include "derm/score_parser.hpp"
#include "derm/soreb.hpp"

namespace derm::verify {

namespace {

using soreb::kScoreClasses;
using soreb::PolicyModel;
using soreb::Rng;
using soreb::SlotLogits;

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite differences over one context row.
double max_fd_error(PolicyModel& policy, const std::string& context,
                    const std::function<double()>& loss_fn, const SlotLogits& analytic) {
  constexpr double kEps = 1e-5;
  double worst = 0.0;
  SlotLogits& row = policy.context_row(context);
  for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
    for (int k = 0; k < kScoreClasses; ++k) {
      const double original = row[slot][k];
      row[slot][k] = original + kEps;
      const double up = loss_fn();
      row[slot][k] = original - kEps;
      const double down = loss_fn();
      row[slot][k] = original;
      const double numeric = (up - down) / (2.0 * kEps);
      worst = std::max(worst, relative_error(analytic[slot][k], numeric));
    }
  }
  return worst;
}

SlotLogits random_row(Rng& rng) {
  SlotLogits row{};
  for (auto& slot : row) {
    for (auto& v : slot) v = 4.0 * rng.uniform() - 2.0;
  }
  return row;
}

}  // namespace

const std::vector<TranscriptFixture>& transcript_fixtures() {
  static const std::vector<TranscriptFixture> kFixtures = {
      {"reference_free_sections",
       "Accuracy: 2/5 --- The conclusion ignores the arrangement of the lesions.\n"
       "Safety: 3/5 --- No harmful advice, but referral guidance is missing.\n"
       "Medical Groundedness: 2/5 --- Claims are generic rather than grounded.\n"
       "Coverage: 2/5 --- Key descriptors and next steps are absent.\n"
       "Reasoning Coherence: 2/5 --- The chain skips the ruling-out step.\n"
       "Description Precision: 2/5 --- Wording stays vague throughout.\n",
       {2, 3, 2, 2, 2, 2}},
      {"reference_judge_bold_decimals",
       "**Accuracy:** 2.0 --- The named diagnosis conflicts with the pattern.\n"
       "**Safety:** 5.0 --- Purely descriptive, nothing unsafe.\n"
       "**Medical Groundedness:** 2.0 --- Features cited do not match the image.\n"
       "**Clinical Coverage:** 2.0 --- The defining feature goes unmentioned.\n"
       "**Reasoning Coherence:** 2.0 --- Internally consistent yet misdirected.\n"
       "**Description Precision:** 2.0 --- Generic wording, no measurements.\n",
       {2, 5, 2, 2, 2, 2}},
      {"reference_judge_sentence_periods",
       "Accuracy: 1/5. Incorrect top diagnosis for this presentation.\n"
       "Safety: 3/5. Avoids harm but omits escalation guidance.\n"
       "Medical Groundedness: 1/5. Anchored to a misread sign.\n"
       "Clinical Coverage: 2/5. Several basics are not addressed.\n"
       "Reasoning Coherence: 2/5. Linear but built on a faulty premise.\n"
       "Description Precision: 2/5. Partly right, key texture missed.\n",
       {1, 3, 1, 2, 2, 2}},
      {"reference_free_informal_names",
       "Accuracy: 1/5  ---  Conflicts with the visible distribution.\n"
       "Safety: 2/5 --- No biopsy guidance is offered.\n"
       "Medical Groundedness: 1/5 --- Contradicts the anatomic site.\n"
       "Coverage: 3/5 --- Morphology and color are described.\n"
       "Reasoning Coherence: 1/5 --- Hinges on a single sign.\n"
       "Description Precision: 2/5 --- Several descriptors are vague.\n",
       {1, 2, 1, 3, 1, 2}},
  };
  return kFixtures;
}

std::vector<PropertyResult> run_gradcheck_suite() {
  std::vector<PropertyResult> results;
  constexpr int kDraws = 100;

  {
    Rng rng(101);
    double worst = 0.0;
    for (int draw = 0; draw < kDraws; ++draw) {
      PolicyModel policy;
      const std::string context = "ctx-" + std::to_string(draw);
      policy.context_row(context) = random_row(rng);
      std::array<int, kDimensionCount> targets{};
      for (auto& t : targets) t = static_cast<int>(rng.next() % kScoreClasses);
      soreb::TrainInstance instance;
      instance.context = context;
      instance.target_scores = ScoreVector::from_integers(targets);
      instance.target_text = textproto::render_evaluation(instance.target_scores);

      const auto analytic = soreb::text_loss(policy, instance);
      const double err = max_fd_error(
          policy, context,
          [&] { return soreb::text_loss(policy, instance).loss; }, analytic.grad);
      worst = std::max(worst, err);
    }
    results.push_back({"gradcheck.text_loss", worst < 1e-4,
                       "max relative error " + std::to_string(worst)});
  }

  {
    Rng rng(202);
    double worst = 0.0;
    for (int draw = 0; draw < kDraws; ++draw) {
      PolicyModel policy;
      const std::string context = "ctx-" + std::to_string(draw);
      policy.context_row(context) = random_row(rng);
      // Fixed sampled sequence and fixed advantage; the surrogate is then a
      // deterministic function of the logits.
      soreb::SampledEvaluation sampled;
      sampled.context = context;
      for (auto& s : sampled.scores) s = static_cast<int>(rng.next() % kScoreClasses);
      const double advantage = 8.0 * rng.uniform() - 4.0;
      const auto mask = (draw % 2 == 0) ? soreb::SlotMaskPolicy::stochastic_slots_only
                                        : soreb::SlotMaskPolicy::all_generated_tokens;

      const auto analytic = soreb::rl_loss(policy, sampled, advantage, mask);
      const double err = max_fd_error(
          policy, context,
          [&] { return soreb::rl_loss(policy, sampled, advantage, mask).loss; },
          analytic.grad);
      worst = std::max(worst, err);
    }
    results.push_back({"gradcheck.rl_loss", worst < 1e-4,
                       "max relative error " + std::to_string(worst)});
  }
  return results;
}

std::vector<PropertyResult> run_parser_suite() {
  std::vector<PropertyResult> results;

  for (const auto& fixture : transcript_fixtures()) {
    const auto parsed = textproto::parse_scores(fixture.text);
    bool ok = parsed.scores.valid_count() == static_cast<int>(kDimensionCount);
    std::string got;
    for (Dimension d : all_dimensions()) {
      if (parsed.scores.has(d)) {
        const int v = static_cast<int>(parsed.scores.get(d)->milli() / 1000);
        ok = ok && parsed.scores.get(d)->milli() == fixture.expected[index_of(d)] * 1000;
        got += std::to_string(v);
      } else {
        ok = false;
        got += "-";
      }
    }
    results.push_back({"parser.fixture." + fixture.name, ok, "extracted " + got});
  }

  {
    Rng rng(303);
    int failures = 0;
    constexpr int kTrials = 200;
    for (int trial = 0; trial < kTrials; ++trial) {
      std::array<int, kDimensionCount> raw{};
      for (auto& v : raw) v = static_cast<int>(rng.next() % kScoreClasses);
      const auto v = ScoreVector::from_integers(raw);
      if (!(textproto::parse_scores(textproto::render_evaluation(v)).scores == v)) ++failures;
    }
    results.push_back({"parser.round_trip", failures == 0,
                       std::to_string(kTrials - failures) + "/" + std::to_string(kTrials) +
                           " exact recoveries"});
  }

  {
    const auto out_of_range = textproto::parse_scores(
        "Accuracy: 2/5\nSafety: 7/5\nMedG: 2/5\nCover: 2/5\nReason: 2/5\nDesc: 2/5\n");
    const bool excluded =
        out_of_range.scores.valid_count() == 5 && !out_of_range.scores.has(Dimension::Safety) &&
        out_of_range.status(Dimension::Safety) == textproto::ParseStatus::out_of_range;
    const auto missing = textproto::parse_scores("Accuracy: 4/5\nno other sections\n");
    const bool missing_ok = missing.scores.valid_count() == 1 &&
                            missing.status(Dimension::Safety) == textproto::ParseStatus::missing;
    results.push_back({"parser.exclusions", excluded && missing_ok,
                       "out-of-range and missing dimensions stay excluded"});
  }
  return results;
}

std::vector<PropertyResult> run_invariants_suite() {
  std::vector<PropertyResult> results;
  constexpr int kTrials = 10000;

  {
    Rng rng(404);
    bool range_ok = true;
    bool zero_iff_ok = true;
    for (int trial = 0; trial < kTrials; ++trial) {
      std::array<int, kDimensionCount> truth{};
      for (auto& v : truth) v = static_cast<int>(rng.next() % kScoreClasses);
      const auto physician = ScoreVector::from_integers(truth);
      ScoreVector parsed;
      bool exact = true;
      int valid = 0;
      for (Dimension d : all_dimensions()) {
        if (rng.uniform() < 0.25) continue;  // unparsed dimension
        ++valid;
        const int value = static_cast<int>(rng.next() % kScoreClasses);
        parsed.set(d, Score::from_int(value));
        exact = exact && value == truth[index_of(d)];
      }
      const auto r = soreb::reward(parsed, physician);
      if (valid == 0) {
        if (r.has_value()) range_ok = false;
        continue;
      }
      if (!r || !(*r >= -25.0 && *r <= 0.0)) range_ok = false;
      if ((*r == 0.0) != exact) zero_iff_ok = false;
    }
    results.push_back({"invariants.reward_range", range_ok,
                       "r in [-25,0] over 10k randomized cases"});
    results.push_back({"invariants.reward_zero_iff_match", zero_iff_ok,
                       "r = 0 exactly on valid-dimension matches"});
  }

  {
    // Worsening one valid dimension strictly decreases the reward.
    Rng rng(505);
    bool ok = true;
    for (int trial = 0; trial < 500; ++trial) {
      std::array<int, kDimensionCount> truth{};
      for (auto& v : truth) v = static_cast<int>(rng.next() % kScoreClasses);
      const auto physician = ScoreVector::from_integers(truth);
      std::array<int, kDimensionCount> guess{};
      for (auto& v : guess) v = static_cast<int>(rng.next() % kScoreClasses);
      auto parsed = ScoreVector::from_integers(guess);
      const Dimension d = all_dimensions()[rng.next() % kDimensionCount];
      const int t = truth[index_of(d)];
      const int g = guess[index_of(d)];
      // Push the guess one step further from the truth when possible.
      int worse = g;
      if (g >= t && g < 5) worse = g + 1;
      else if (g > 0) worse = g - 1;
      if (worse == g) continue;
      if (std::abs(worse - t) <= std::abs(g - t)) continue;
      auto worse_parsed = parsed;
      worse_parsed.set(d, Score::from_int(worse));
      if (!(*soreb::reward(worse_parsed, physician) < *soreb::reward(parsed, physician))) {
        ok = false;
      }
    }
    results.push_back({"invariants.reward_monotonicity", ok,
                       "single-dimension error growth strictly lowers r"});
  }

  {
    Rng rng(606);
    bool identity_ok = true;
    bool containment_ok = true;
    soreb::BaselineState baseline(0.9);
    double lo = 0.0, hi = -25.0;
    bool first = true;
    for (int trial = 0; trial < kTrials; ++trial) {
      const double r = -25.0 * rng.uniform();
      const double b_pre = baseline.value();
      const bool was_init = baseline.initialized();
      const double adv = baseline.update(r);
      if (first) {
        lo = hi = r;
        first = false;
      } else {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
      if (was_init) {
        if (std::abs(adv - 0.9 * (r - b_pre)) > 1e-12) identity_ok = false;
      } else if (adv != 0.0) {
        identity_ok = false;
      }
      if (baseline.value() < lo - 1e-12 || baseline.value() > hi + 1e-12) {
        containment_ok = false;
      }
    }
    results.push_back({"invariants.advantage_identity", identity_ok,
                       "adv = beta*(r - b_pre) to 1e-12 over 10k updates"});
    results.push_back({"invariants.baseline_containment", containment_ok,
                       "b stays inside the hull of observed rewards"});
  }

  {
    const auto stream = pinned_reward_stream(kTrials);
    soreb::BaselineState baseline(0.9);
    std::vector<double> advantages;
    advantages.reserve(stream.size());
    for (double r : stream) advantages.push_back(baseline.update(r));
    const auto variance = [](const std::vector<double>& xs, std::size_t skip) {
      double mean = 0.0;
      std::size_t n = 0;
      for (std::size_t i = skip; i < xs.size(); ++i) {
        mean += xs[i];
        ++n;
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = skip; i < xs.size(); ++i) {
        var += (xs[i] - mean) * (xs[i] - mean);
      }
      return var / static_cast<double>(n);
    };
    const double var_r = variance(stream, 1);
    const double var_adv = variance(advantages, 1);
    const double reduction = 1.0 - var_adv / var_r;
    results.push_back(
        {"invariants.variance_reduction", reduction >= 0.20,
         "advantage variance reduced by " + std::to_string(reduction * 100.0) + "%"});
  }
  return results;
}

std::vector<double> pinned_reward_stream(std::size_t steps) {
  // Stationary but autocorrelated severity process; the EMA baseline tracks
  // the slow component, which is where its variance reduction comes from.
  Rng rng(20240801);
  std::vector<double> stream;
  stream.reserve(steps);
  double severity = 0.5;
  for (std::size_t i = 0; i < steps; ++i) {
    severity = 0.9 * severity + 0.1 * rng.uniform();
    stream.push_back(-25.0 * severity * severity);
  }
  return stream;
}

std::vector<PropertyResult> run_suite(std::string_view name) {
  if (name == "gradcheck") return run_gradcheck_suite();
  if (name == "parser") return run_parser_suite();
  if (name == "invariants") return run_invariants_suite();
  raise(ErrorCode::invalid_argument,
        "unknown verify suite '" + std::string(name) + "' (gradcheck|parser|invariants)");
}

}  // namespace derm::verify
