#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "derm/evaluation_text.hpp"
#include "derm/score_parser.hpp"
#include "derm/soreb.hpp"

using namespace derm;
using namespace derm::soreb;

namespace {

ScoreVector ints(std::array<int, 6> v) { return ScoreVector::from_integers(v); }

TrainInstance make_instance(const std::string& context, std::array<int, 6> targets) {
  TrainInstance inst;
  inst.context = context;
  inst.target_scores = ints(targets);
  inst.target_text = textproto::render_evaluation(inst.target_scores);
  return inst;
}

SlotLogits random_row(Rng& rng, double scale = 2.0) {
  SlotLogits row{};
  for (auto& slot : row) {
    for (auto& v : slot) v = scale * (2.0 * rng.uniform() - 1.0);
  }
  return row;
}

// Independent central-difference oracle used by the gradient tests.
template <typename LossFn>
double fd_max_rel_error(PolicyModel& policy, const std::string& context, LossFn loss_fn,
                        const SlotLogits& analytic, double eps = 1e-5) {
  double worst = 0.0;
  auto& row = policy.context_row(context);
  for (std::size_t s = 0; s < kDimensionCount; ++s) {
    for (int k = 0; k < kScoreClasses; ++k) {
      const double saved = row[s][k];
      row[s][k] = saved + eps;
      const double up = loss_fn();
      row[s][k] = saved - eps;
      const double down = loss_fn();
      row[s][k] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic[s][k])});
      worst = std::max(worst, std::abs(numeric - analytic[s][k]) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("reward is the negative mean squared error over valid dimensions") {
  const auto physician = ints({5, 5, 5, 5, 5, 5});
  SUBCASE("exact match gives zero") {
    CHECK(*reward(physician, physician) == 0.0);
  }
  SUBCASE("maximal error gives -25") {
    CHECK(*reward(ints({0, 0, 0, 0, 0, 0}), physician) == -25.0);
  }
  SUBCASE("partial parse averages over the valid set only") {
    ScoreVector parsed;
    parsed.set(Dimension::Accuracy, Score::from_int(4));  // error 1
    parsed.set(Dimension::Safety, Score::from_int(3));    // error 2
    CHECK(*reward(parsed, physician) == -2.5);            // -(1+4)/2
  }
  SUBCASE("empty valid set carries no reward signal") {
    CHECK(!reward(ScoreVector{}, physician).has_value());
  }
  SUBCASE("incomplete physician scores are rejected") {
    ScoreVector partial;
    partial.set(Dimension::Accuracy, Score::from_int(5));
    CHECK_THROWS_AS(reward(physician, partial), Error);
  }
}

TEST_CASE("EMA baseline and advantage") {
  SUBCASE("hand-applied update") {
    BaselineState b(0.9);
    b.update(-4.0);  // seeds the baseline
    CHECK(b.value() == -4.0);
    const double adv = b.update(-2.0);
    CHECK(b.value() == doctest::Approx(-3.8).epsilon(1e-15));
    CHECK(adv == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(adv == doctest::Approx(0.9 * (-2.0 - -4.0)).epsilon(1e-15));
  }
  SUBCASE("first update yields zero advantage") {
    BaselineState b(0.9);
    CHECK(b.update(-7.5) == 0.0);
    CHECK(b.initialized());
  }
  SUBCASE("reward equal to the baseline is a fixed point") {
    BaselineState b(0.9);
    b.update(-3.0);
    CHECK(b.update(-3.0) == 0.0);
    CHECK(b.value() == -3.0);
  }
  SUBCASE("constant stream converges geometrically with vanishing advantage") {
    BaselineState b(0.9);
    b.update(-10.0);
    double adv = 1.0;
    for (int i = 0; i < 400; ++i) adv = b.update(-1.0);
    CHECK(b.value() == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(std::abs(adv) < 1e-9);
  }
  SUBCASE("post-update advantage identity over a random stream") {
    Rng rng(9);
    BaselineState b(0.9);
    b.update(-5.0);
    for (int i = 0; i < 2000; ++i) {
      const double r = -25.0 * rng.uniform();
      const double expect = 0.9 * (r - b.value());
      CHECK(std::abs(b.update(r) - expect) <= 1e-12);
    }
  }
  SUBCASE("non-finite reward and bad beta are rejected") {
    BaselineState b(0.9);
    CHECK_THROWS_AS(b.update(std::nan("")), Error);
    CHECK_THROWS_AS(BaselineState(1.0), Error);
    CHECK_THROWS_AS(BaselineState(0.0), Error);
  }
}

TEST_CASE("text_loss values and gradient") {
  SUBCASE("uniform logits give 6 ln 6") {
    PolicyModel policy;
    const auto inst = make_instance("ctx", {1, 2, 3, 4, 5, 0});
    const auto lg = text_loss(policy, inst);
    CHECK(lg.loss == doctest::Approx(6.0 * std::log(6.0)).epsilon(1e-12));
  }
  SUBCASE("saturated logits give near-zero loss") {
    PolicyModel policy;
    const auto inst = make_instance("ctx", {1, 2, 3, 4, 5, 0});
    auto& row = policy.context_row("ctx");
    for (Dimension d : all_dimensions()) {
      row[index_of(d)][inst.target_scores.get(d)->as_integer()] = 20.0;
    }
    CHECK(text_loss(policy, inst).loss < 1e-6);
  }
  SUBCASE("analytic gradient matches central differences") {
    Rng rng(31);
    double worst = 0.0;
    for (int draw = 0; draw < 25; ++draw) {
      PolicyModel policy;
      policy.context_row("ctx") = random_row(rng);
      std::array<int, 6> targets{};
      for (auto& t : targets) t = static_cast<int>(rng.next() % kScoreClasses);
      const auto inst = make_instance("ctx", targets);
      const auto analytic = text_loss(policy, inst);
      worst = std::max(worst,
                       fd_max_rel_error(policy, "ctx",
                                        [&] { return text_loss(policy, inst).loss; },
                                        analytic.grad));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("sample_evaluation") {
  SUBCASE("saturated logits sample the argmax text deterministically") {
    PolicyModel policy;
    auto& row = policy.context_row("ctx");
    const std::array<int, 6> want = {2, 5, 0, 3, 1, 4};
    for (std::size_t s = 0; s < kDimensionCount; ++s) row[s][want[s]] = 25.0;
    Rng rng(1);
    const auto sampled = sample_evaluation(policy, "ctx", rng);
    CHECK(sampled.scores == want);
    CHECK(sampled.text == textproto::render_evaluation(ints(want)));
    CHECK(argmax_scores(policy, "ctx") == want);
  }
  SUBCASE("fixed seed reproduces the identical sample") {
    PolicyModel policy;
    Rng a(42), b(42);
    policy.context_row("ctx") = random_row(a);
    Rng r1(7), r2(7);
    const auto s1 = sample_evaluation(policy, "ctx", r1);
    const auto s2 = sample_evaluation(policy, "ctx", r2);
    CHECK(s1.text == s2.text);
    CHECK(s1.log_prob == s2.log_prob);
  }
  SUBCASE("log_prob sums the chosen slot log-probabilities") {
    PolicyModel policy;
    Rng init(3);
    policy.context_row("ctx") = random_row(init);
    Rng rng(11);
    const auto sampled = sample_evaluation(policy, "ctx", rng);
    double expect = 0.0;
    const auto row = policy.row_or_uniform("ctx");
    for (std::size_t s = 0; s < kDimensionCount; ++s) {
      expect += log_softmax(row[s])[sampled.scores[s]];
    }
    CHECK(sampled.log_prob == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("Monte Carlo slot frequencies track the softmax") {
    PolicyModel policy;
    Rng init(5);
    policy.context_row("ctx") = random_row(init, 1.0);
    const auto row = policy.row_or_uniform("ctx");
    constexpr int kSamples = 100000;
    std::array<std::array<int, kScoreClasses>, kDimensionCount> counts{};
    Rng rng(99);
    for (int i = 0; i < kSamples; ++i) {
      const auto s = sample_evaluation(policy, "ctx", rng);
      for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
        ++counts[slot][s.scores[slot]];
      }
    }
    double worst = 0.0;
    for (std::size_t slot = 0; slot < kDimensionCount; ++slot) {
      const auto probs = softmax(row[slot]);
      for (int k = 0; k < kScoreClasses; ++k) {
        worst = std::max(worst, std::abs(static_cast<double>(counts[slot][k]) / kSamples -
                                         probs[k]));
      }
    }
    CHECK(worst < 0.01);
  }
  SUBCASE("every sampled text re-parses to the sampled scores") {
    Rng init(17);
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
      PolicyModel policy;
      policy.context_row("ctx") = random_row(init, 3.0);
      const auto sampled = sample_evaluation(policy, "ctx", rng);
      CHECK(textproto::parse_scores(sampled.text).scores == ints(sampled.scores));
    }
  }
}

TEST_CASE("rl_loss surrogate") {
  Rng init(13);
  PolicyModel policy;
  policy.context_row("ctx") = random_row(init);
  SampledEvaluation sampled;
  sampled.context = "ctx";
  sampled.scores = {0, 1, 2, 3, 4, 5};

  SUBCASE("zero advantage means zero loss and zero gradient") {
    const auto lg = rl_loss(policy, sampled, 0.0, SlotMaskPolicy::stochastic_slots_only);
    CHECK(lg.loss == 0.0);
    for (const auto& slot : lg.grad) {
      for (double g : slot) CHECK(g == 0.0);
    }
  }
  SUBCASE("loss and gradient are exactly linear in the advantage") {
    const auto one = rl_loss(policy, sampled, 1.5, SlotMaskPolicy::stochastic_slots_only);
    const auto two = rl_loss(policy, sampled, 3.0, SlotMaskPolicy::stochastic_slots_only);
    CHECK(two.loss == doctest::Approx(2.0 * one.loss).epsilon(1e-15));
    for (std::size_t s = 0; s < kDimensionCount; ++s) {
      for (int k = 0; k < kScoreClasses; ++k) {
        CHECK(two.grad[s][k] == doctest::Approx(2.0 * one.grad[s][k]).epsilon(1e-15));
      }
    }
  }
  SUBCASE("template tokens only rescale the mean") {
    const auto slots = rl_loss(policy, sampled, 1.0, SlotMaskPolicy::stochastic_slots_only);
    const auto all = rl_loss(policy, sampled, 1.0, SlotMaskPolicy::all_generated_tokens);
    CHECK(all.loss == doctest::Approx(slots.loss / kTokensPerSection).epsilon(1e-12));
    CHECK(all.grad[0][0] ==
          doctest::Approx(slots.grad[0][0] / kTokensPerSection).epsilon(1e-12));
  }
  SUBCASE("analytic gradient matches central differences") {
    Rng rng(77);
    double worst = 0.0;
    for (int draw = 0; draw < 25; ++draw) {
      PolicyModel p;
      const std::string context = "ctx";
      p.context_row(context) = random_row(rng);
      SampledEvaluation fixed;
      fixed.context = context;
      for (auto& s : fixed.scores) s = static_cast<int>(rng.next() % kScoreClasses);
      const double advantage = 6.0 * rng.uniform() - 3.0;
      const auto mask = draw % 2 == 0 ? SlotMaskPolicy::stochastic_slots_only
                                      : SlotMaskPolicy::all_generated_tokens;
      const auto analytic = rl_loss(p, fixed, advantage, mask);
      worst = std::max(
          worst, fd_max_rel_error(p, context,
                                  [&] { return rl_loss(p, fixed, advantage, mask).loss; },
                                  analytic.grad, 1e-5));
    }
    CHECK(worst < 1e-4);
  }
  SUBCASE("gradient support is exactly the sampled context row") {
    PolicyModel p;
    Rng rng(3);
    p.context_row("ctx") = random_row(rng);
    p.context_row("other") = random_row(rng);
    const auto before = p.row_or_uniform("other");
    const auto lg = rl_loss(p, sampled, 2.0, SlotMaskPolicy::stochastic_slots_only);
    CHECK(lg.context == "ctx");
    const auto after = p.row_or_uniform("other");
    for (std::size_t s = 0; s < kDimensionCount; ++s) {
      for (int k = 0; k < kScoreClasses; ++k) CHECK(before[s][k] == after[s][k]);
    }
  }
  SUBCASE("non-finite advantage is rejected") {
    CHECK_THROWS_AS(
        rl_loss(policy, sampled, std::nan(""), SlotMaskPolicy::stochastic_slots_only), Error);
  }
}

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.warmup_ratio = 0.1;
  const int total = 100;
  CHECK(lr_at(cfg, 0, total) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 9, total) == doctest::Approx(1.0));
  CHECK(lr_at(cfg, 10, total) == doctest::Approx(1.0));  // cosine starts here
  CHECK(lr_at(cfg, 11, total) < 1.0);
  CHECK(lr_at(cfg, total - 1, total) < 0.01);
  for (int s = 10; s + 1 < total; ++s) {
    CHECK(lr_at(cfg, s + 1, total) <= lr_at(cfg, s, total));
  }
  cfg.schedule = "constant";
  CHECK(lr_at(cfg, 50, total) == 1.0);
}

namespace {

TrainConfig toy_config(double lr, int epochs, std::uint64_t seed = 11) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.epochs_per_stage = epochs;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("train_stage1") {
  SUBCASE("memorizes a single instance") {
    PolicyModel policy;
    const std::vector<TrainInstance> corpus = {make_instance("only", {3, 1, 4, 1, 5, 0})};
    const auto result = train_stage1(policy, corpus, toy_config(4.0, 400));
    CHECK(result.metrics.back().text_loss < 0.01);
    CHECK(argmax_scores(policy, "only") == std::array<int, 6>{3, 1, 4, 1, 5, 0});
  }
  SUBCASE("argmax matches the deterministic target map on every context") {
    const auto corpus = synthetic_corpus(40, 5);
    PolicyModel policy;
    train_stage1(policy, corpus, toy_config(2.5, 30));
    for (const auto& inst : corpus) {
      std::array<int, 6> want{};
      for (Dimension d : all_dimensions()) {
        want[index_of(d)] = inst.target_scores.get(d)->as_integer();
      }
      CHECK(argmax_scores(policy, inst.context) == want);
    }
  }
  SUBCASE("loss curve is non-increasing after warmup under a 50-step window") {
    const auto corpus = synthetic_corpus(50, 6);
    PolicyModel policy;
    // Constant rate: the loss then decays geometrically, so every window's
    // drop stays well above visit-composition wobble.
    auto cfg = toy_config(1.2, 10);
    cfg.schedule = "constant";
    const auto result = train_stage1(policy, corpus, cfg);
    const int window = 50;
    const int warmup =
        std::max(1, static_cast<int>(0.03 * static_cast<double>(result.metrics.size())));
    std::vector<double> block_means;
    for (std::size_t i = warmup; i + window <= result.metrics.size(); i += window) {
      double total = 0.0;
      for (int j = 0; j < window; ++j) total += result.metrics[i + j].text_loss;
      block_means.push_back(total / window);
    }
    REQUIRE(block_means.size() >= 3);
    for (std::size_t i = 1; i < block_means.size(); ++i) {
      CHECK(block_means[i] <= block_means[i - 1] + 1e-9);
    }
  }
  SUBCASE("final policy renders parsable texts on all contexts") {
    const auto corpus = synthetic_corpus(25, 8);
    PolicyModel policy;
    train_stage1(policy, corpus, toy_config(2.0, 10));
    Rng rng(123);
    for (const auto& inst : corpus) {
      const auto sampled = sample_evaluation(policy, inst.context, rng);
      CHECK(textproto::parse_scores(sampled.text).scores.valid_count() == 6);
    }
  }
  SUBCASE("empty corpus raises") {
    PolicyModel policy;
    CHECK_THROWS_AS(train_stage1(policy, {}, toy_config(1.0, 1)), Error);
  }
}

TEST_CASE("train_stage2") {
  SUBCASE("improves sampled agreement on the synthetic corpus") {
    const auto corpus = synthetic_corpus(30, 21);
    PolicyModel policy;
    auto cfg = toy_config(2.0, 5, 77);
    train_stage1(policy, corpus, cfg);
    const auto result = train_stage2(policy, corpus, cfg);
    CHECK(result.steps == 150);
    Rng rng(55);
    double total_abs = 0.0;
    for (const auto& inst : corpus) {
      const auto sampled = sample_evaluation(policy, inst.context, rng);
      for (Dimension d : all_dimensions()) {
        total_abs += std::abs(sampled.scores[index_of(d)] -
                              inst.target_scores.get(d)->value());
      }
    }
    CHECK(total_abs / (corpus.size() * kDimensionCount) < 0.5);
    // Metrics carry the RL fields.
    CHECK(result.metrics.back().has_rl);
    CHECK(result.metrics.back().reward <= 0.0);
  }
  SUBCASE("lambda_rl = 0 reproduces the text-only trajectory step for step") {
    const auto corpus = synthetic_corpus(12, 3);
    auto cfg = toy_config(1.7, 5, 99);

    PolicyModel text_only;
    const auto r1 = train_stage1(text_only, corpus, cfg);

    auto cfg0 = cfg;
    cfg0.lambda_rl = 0.0;
    PolicyModel degenerate;
    const auto r2 = train_stage2(degenerate, corpus, cfg0);

    REQUIRE(r1.metrics.size() == r2.metrics.size());
    for (std::size_t i = 0; i < r1.metrics.size(); ++i) {
      CHECK(std::abs(r1.metrics[i].text_loss - r2.metrics[i].text_loss) <= 1e-12);
    }
    for (const auto& inst : corpus) {
      const auto a = text_only.row_or_uniform(inst.context);
      const auto b = degenerate.row_or_uniform(inst.context);
      for (std::size_t s = 0; s < kDimensionCount; ++s) {
        for (int k = 0; k < kScoreClasses; ++k) {
          CHECK(std::abs(a[s][k] - b[s][k]) <= 1e-12);
        }
      }
    }
  }
  SUBCASE("fixed seed reruns are bit-identical") {
    const auto corpus = synthetic_corpus(10, 4);
    const auto cfg = toy_config(1.2, 3, 1234);
    PolicyModel p1, p2;
    train_stage1(p1, corpus, cfg);
    train_stage1(p2, corpus, cfg);
    const auto m1 = train_stage2(p1, corpus, cfg);
    const auto m2 = train_stage2(p2, corpus, cfg);
    REQUIRE(m1.metrics.size() == m2.metrics.size());
    for (std::size_t i = 0; i < m1.metrics.size(); ++i) {
      CHECK(m1.metrics[i].reward == m2.metrics[i].reward);
      CHECK(m1.metrics[i].combined_loss == m2.metrics[i].combined_loss);
    }
  }
}

TEST_CASE("synthetic corpus, checkpoints, corpus files, metrics csv") {
  namespace fs = std::filesystem;
  const auto tmp = fs::temp_directory_path() /
                   ("derm-soreb-" + std::to_string(std::random_device{}()));
  fs::create_directories(tmp);

  SUBCASE("synthetic corpus is deterministic and tier-bounded") {
    const auto a = synthetic_corpus(36, 9);
    const auto b = synthetic_corpus(36, 9);
    REQUIRE(a.size() == 36);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].context == b[i].context);
      CHECK(a[i].target_scores == b[i].target_scores);
      a[i].validate();
    }
    for (const auto& inst : a) {
      const bool hq = inst.context.find("-hq-") != std::string::npos;
      const bool low = inst.context.find("-low-") != std::string::npos;
      for (Dimension d : all_dimensions()) {
        const int v = inst.target_scores.get(d)->as_integer();
        if (hq) CHECK(v >= 4);
        if (low) CHECK(v <= 2);
      }
    }
  }
  SUBCASE("train corpus jsonl round trip") {
    const auto corpus = synthetic_corpus(7, 2);
    save_train_corpus(corpus, tmp / "train_corpus.jsonl");
    const auto loaded = load_train_corpus(tmp / "train_corpus.jsonl");
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      CHECK(loaded[i].context == corpus[i].context);
      CHECK(loaded[i].target_scores == corpus[i].target_scores);
      CHECK(loaded[i].target_text == corpus[i].target_text);
    }
  }
  SUBCASE("corrupt target text fails corpus validation") {
    auto corpus = synthetic_corpus(1, 2);
    corpus[0].target_text = "Accuracy: 0/5\n";
    CHECK_THROWS_AS(corpus[0].validate(), Error);
  }
  SUBCASE("checkpoint save/load round trip embeds the config") {
    PolicyModel policy;
    Rng rng(2);
    policy.context_row("a") = random_row(rng);
    policy.context_row("b") = random_row(rng);
    TrainConfig cfg;
    policy.save(tmp / "ckpt.json", cfg.to_json());
    std::string config_json;
    const auto loaded = PolicyModel::load(tmp / "ckpt.json", &config_json);
    CHECK(loaded.context_count() == 2);
    const auto got = loaded.row_or_uniform("a");
    const auto want = policy.row_or_uniform("a");
    for (std::size_t s = 0; s < kDimensionCount; ++s) {
      for (int k = 0; k < kScoreClasses; ++k) CHECK(got[s][k] == want[s][k]);
    }
    const auto parsed = TrainConfig::from_json(config_json);
    CHECK(parsed.beta == cfg.beta);
    CHECK(parsed.lora.rank == 64);
  }
  SUBCASE("metrics csv carries the documented columns") {
    std::vector<StepMetrics> metrics(2);
    metrics[0].step = 0;
    metrics[0].text_loss = 10.75;
    metrics[0].combined_loss = 10.75;
    metrics[1].step = 1;
    metrics[1].has_rl = true;
    metrics[1].reward = -2.5;
    metrics[1].baseline = -2.5;
    metrics[1].advantage = 0.0;
    metrics[1].rl_loss = 0.25;
    metrics[1].text_loss = 9.0;
    metrics[1].combined_loss = 9.125;
    save_metrics_csv(metrics, tmp / "metrics.csv");
    std::ifstream in(tmp / "metrics.csv");
    std::string header, row0, row1;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    CHECK(header == "step,reward,baseline,advantage,rl_loss,text_loss,combined_loss");
    CHECK(row0 == "0,,,,,10.75,10.75");
    CHECK(row1 == "1,-2.5,-2.5,0,0.25,9,9.125");
  }
  SUBCASE("config json round trip and validation") {
    TrainConfig cfg;
    cfg.lambda_rl = 0.5;
    const auto round = TrainConfig::from_json(cfg.to_json());
    CHECK(round.lambda_rl == 0.5);
    CHECK(round.schedule == "cosine");
    TrainConfig bad;
    bad.beta = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = TrainConfig{};
    bad.warmup_ratio = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  std::error_code ec;
  fs::remove_all(tmp, ec);
}
