#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "derm/benchmark.hpp"
#include "derm/commands.hpp"
#include "derm/evaluation_text.hpp"
#include "derm/soreb.hpp"

using namespace derm;
using namespace derm::cli;

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("derm-cli-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_file(const fs::path& p, std::string_view content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hq_narrative(const std::string& label) {
  return "Observation first.\n<think>clustered papules</think>\nThe answer is " + label +
         ".\n";
}

// Complete CLI fixture: cases, images, mock scripts, config.
struct CliFixture {
  TempDir tmp;
  fs::path cases_file;
  fs::path config_file;
  fs::path expert_csv;

  CliFixture() {
    json caption_script, reasoning_script, model_script, judge_script;
    std::string cases_jsonl;
    const char* labels[] = {"epidermal nevus", "stucco keratoses", "psoriasis"};
    for (int i = 1; i <= 3; ++i) {
      const std::string img = (tmp.path / ("img" + std::to_string(i) + ".png")).string();
      write_file(img, "image bytes " + std::to_string(i));
      json c;
      c["case_id"] = "c" + std::to_string(i);
      c["image_ref"] = img;
      c["disease_label"] = labels[i - 1];
      c["category"] = "cat-" + std::to_string(i % 2);
      c["split"] = "bench";
      cases_jsonl += c.dump() + "\n";

      caption_script["rules"].push_back(
          {{"image_contains", "img" + std::to_string(i) + ".png"},
           {"response", "This image shows finding " + std::to_string(i) + "."}});
      reasoning_script["rules"].push_back(
          {{"prompt_contains", std::string("ground truth ") + labels[i - 1]},
           {"response", hq_narrative(labels[i - 1])}});
      model_script["rules"].push_back(
          {{"image_contains", "img" + std::to_string(i) + ".png"},
           {"response", "Candidate narrative " + std::to_string(i) +
                            ". The answer is a plausible diagnosis."}});
      judge_script["rules"].push_back(
          {{"prompt_contains", "Candidate narrative " + std::to_string(i)},
           {"response", "Accuracy: " + std::to_string(i) +
                            "/5\nSafety: 4/5\nMedical Groundedness: 3/5\n"
                            "Clinical Coverage: 3/5\nReasoning Coherence: 4/5\n"
                            "Description Precision: 4/5\n"}});
    }
    cases_file = tmp.path / "cases.jsonl";
    write_file(cases_file, cases_jsonl);
    write_file(tmp.path / "caption.json", caption_script.dump());
    write_file(tmp.path / "reasoning.json", reasoning_script.dump());
    write_file(tmp.path / "model.json", model_script.dump());
    write_file(tmp.path / "judge.json", judge_script.dump());

    json config;
    config["backends"]["caption"] = {{"kind", "mock"},
                                     {"script_path", (tmp.path / "caption.json").string()}};
    config["backends"]["reasoning"] = {
        {"kind", "mock"}, {"script_path", (tmp.path / "reasoning.json").string()}};
    config["backends"]["judge"] = {{"kind", "mock"},
                                   {"model_id", "judge-model"},
                                   {"script_path", (tmp.path / "judge.json").string()}};
    config["backends"]["models"]["model-a"] = {
        {"kind", "mock"}, {"script_path", (tmp.path / "model.json").string()}};
    config["backends"]["models"]["model-b"] = {
        {"kind", "mock"}, {"script_path", (tmp.path / "model.json").string()}};
    config["train"] = {{"learning_rate", 2.5}, {"epochs_per_stage", 5}, {"seed", 11}};
    config_file = tmp.path / "config.json";
    write_file(config_file, config.dump(2));

    expert_csv = tmp.path / "expert.csv";
    write_file(expert_csv,
               "narrative_id,Acc,Safe,MedG,Cover,Reason,Desc\n"
               "c1-hq,5,5,5,5,5,5\n"
               "c2-hq,5,5,5,5,5,5\n"
               "c3-hq,5,5,5,5,5,5\n");
  }

  CorpusBuildArgs build_args(const std::string& out) const {
    CorpusBuildArgs args;
    args.cases_path = cases_file.string();
    args.stream = "high";
    args.config_path = config_file.string();
    args.out_dir = (tmp.path / out).string();
    args.expert_csv = expert_csv.string();
    return args;
  }
};

}  // namespace

TEST_CASE("cmd_corpus_build") {
  CliFixture fx;

  SUBCASE("clean run writes narratives and a manifest, exit 0") {
    const auto args = fx.build_args("out");
    CHECK(cmd_corpus_build(args) == 0);
    const auto narratives = read_file(fs::path(args.out_dir) / "narratives.jsonl");
    CHECK(std::count(narratives.begin(), narratives.end(), '\n') == 3);
    const json manifest = json::parse(read_file(fs::path(args.out_dir) / "run_manifest.json"));
    CHECK(manifest["command"] == "corpus-build");
    CHECK(manifest["exit_status"] == 0);
    CHECK(manifest["backend_calls"] == 6);  // caption + reasoning per case
    CHECK(manifest["failures"].empty());
    CHECK(manifest["certification"]["c1-hq"] == "certified");
    // The audited prompt registry lands next to the outputs.
    const auto catalog = read_file(fs::path(args.out_dir) / "prompt_catalog.txt");
    CHECK(catalog.find("=== prompt: hierarchical_reasoning") != std::string::npos);
    // References are certified, so the output is a valid bench corpus.
    const auto store = bench::CorpusStore::load(args.out_dir);
    CHECK(store.certified_reference("c1") != nullptr);
  }
  SUBCASE("rerun is byte-identical apart from the manifest") {
    const auto a1 = fx.build_args("out1");
    const auto a2 = fx.build_args("out2");
    CHECK(cmd_corpus_build(a1) == 0);
    CHECK(cmd_corpus_build(a2) == 0);
    CHECK(read_file(fs::path(a1.out_dir) / "narratives.jsonl") ==
          read_file(fs::path(a2.out_dir) / "narratives.jsonl"));
    CHECK(read_file(fs::path(a1.out_dir) / "evaluations.jsonl") ==
          read_file(fs::path(a2.out_dir) / "evaluations.jsonl"));
    CHECK(read_file(fs::path(a1.out_dir) / "cases.jsonl") ==
          read_file(fs::path(a2.out_dir) / "cases.jsonl"));
  }
  SUBCASE("missing image produces exit 1 with the failure listed") {
    // Point one case at a path that does not exist.
    std::string cases = read_file(fx.cases_file);
    const std::string needle = "img2.png";
    cases.replace(cases.find(needle), needle.size(), "nope2.png");
    write_file(fx.cases_file, cases);
    const auto args = fx.build_args("out");
    CHECK(cmd_corpus_build(args) == 1);
    const auto narratives = read_file(fs::path(args.out_dir) / "narratives.jsonl");
    CHECK(std::count(narratives.begin(), narratives.end(), '\n') == 2);
    const json manifest = json::parse(read_file(fs::path(args.out_dir) / "run_manifest.json"));
    CHECK(manifest["exit_status"] == 1);
    REQUIRE(manifest["failures"].size() == 2);  // build failure + orphan expert row
    CHECK(manifest["failures"][0]["case_id"] == "c2");
  }
  SUBCASE("malformed config is exit 2 before any backend call") {
    write_file(fx.config_file, "{ not json");
    const auto args = fx.build_args("out");
    CHECK(cmd_corpus_build(args) == 2);
    CHECK(!fs::exists(fs::path(args.out_dir) / "run_manifest.json"));
  }
  SUBCASE("unknown stream is exit 2") {
    auto args = fx.build_args("out");
    args.stream = "external";
    CHECK(cmd_corpus_build(args) == 2);
  }
}

TEST_CASE("cmd_bench_run") {
  CliFixture fx;
  const auto corpus = fx.build_args("corpus");
  REQUIRE(cmd_corpus_build(corpus) == 0);

  BenchRunArgs args;
  args.corpus_dir = corpus.out_dir;
  args.models = {"model-a", "model-b"};
  args.judge = "judge";
  args.config_path = fx.config_file.string();
  args.out_dir = (fx.tmp.path / "bench").string();

  SUBCASE("deterministic report, byte-identical on rerun") {
    CHECK(cmd_bench_run(args) == 0);
    const std::string report1 = read_file(fs::path(args.out_dir) / "report.json");
    const json parsed = json::parse(report1);
    CHECK(parsed["per_model"].size() == 2);
    // Accuracy means over scripted scores 1,2,3.
    CHECK(parsed["per_model"]["model-a"]["Accuracy"] == "2.000");
    CHECK_NOTHROW(bench::verify_report_consistency(parsed));

    auto args2 = args;
    args2.out_dir = (fx.tmp.path / "bench2").string();
    CHECK(cmd_bench_run(args2) == 0);
    CHECK(read_file(fs::path(args2.out_dir) / "report.json") == report1);

    const json manifest = json::parse(read_file(fs::path(args.out_dir) / "run_manifest.json"));
    CHECK(manifest["backend_calls"] == 12);  // (generate + judge) x 2 models x 3 cases
  }
  SUBCASE("resume recomputes only the deleted cell") {
    CHECK(cmd_bench_run(args) == 0);
    fs::remove(fs::path(args.out_dir) / "state" / "judgments" / "model-b__c3.json");
    CHECK(cmd_bench_run(args) == 0);
    const json manifest = json::parse(read_file(fs::path(args.out_dir) / "run_manifest.json"));
    CHECK(manifest["backend_calls"] == 1);
  }
  SUBCASE("empty model list is exit 2") {
    args.models.clear();
    CHECK(cmd_bench_run(args) == 2);
  }
  SUBCASE("bench case without certified reference is exit 2") {
    // Rebuild the corpus without expert ingestion: no references exist.
    auto no_expert = fx.build_args("corpus2");
    no_expert.expert_csv.clear();
    REQUIRE(cmd_corpus_build(no_expert) == 0);
    args.corpus_dir = no_expert.out_dir;
    CHECK(cmd_bench_run(args) == 2);
  }
}

TEST_CASE("cmd_align") {
  TempDir tmp;

  SUBCASE("identical evaluator and expert files give the all-zero table") {
    std::vector<EvaluationRecord> evals;
    std::string csv = "narrative_id,Acc,Safe,MedG,Cover,Reason,Desc\n";
    for (int i = 0; i < 4; ++i) {
      EvaluationRecord rec{"n" + std::to_string(i), Rater::dermbench,
                           ScoreVector::from_integers({2, 3, 2, 2, 2, 2}), ""};
      evals.push_back(rec);
      csv += rec.narrative_id + ",2,3,2,2,2,2\n";
    }
    bench::save_evaluations(evals, tmp.path / "bench.jsonl");
    for (auto& e : evals) e.rater = Rater::dermeval;
    bench::save_evaluations(evals, tmp.path / "eval.jsonl");
    write_file(tmp.path / "expert.csv", csv);

    AlignArgs args{(tmp.path / "bench.jsonl").string(), (tmp.path / "eval.jsonl").string(),
                   (tmp.path / "expert.csv").string(), (tmp.path / "report.json").string()};
    CHECK(cmd_align(args) == 0);
    const json report = json::parse(read_file(tmp.path / "report.json"));
    for (const auto& [name, row] : report["rows"].items()) {
      for (const auto& [dim, cell] : row.items()) CHECK(cell == "0.000");
    }
    CHECK(report["macro"]["dermbench"] == "0.00");
  }

  SUBCASE("alignment-table-valued fixture lands on 0.36 and 0.18") {
    // 1000 narratives; per dimension, exactly value*1000 single-point
    // deviations reproduce the published per-dimension MAEs.
    const std::array<int, 6> bench_milli = {251, 314, 369, 456, 412, 377};
    const std::array<int, 6> eval_milli = {117, 230, 176, 152, 236, 147};
    std::vector<EvaluationRecord> bench_evals, eval_evals;
    std::string csv = "narrative_id,Acc,Safe,MedG,Cover,Reason,Desc\n";
    for (int i = 0; i < 1000; ++i) {
      const std::string id = "n" + std::to_string(i);
      csv += id + ",2,2,2,2,2,2\n";
      std::array<int, 6> b{}, e{};
      for (int d = 0; d < 6; ++d) {
        b[d] = i < bench_milli[d] ? 3 : 2;
        e[d] = i < eval_milli[d] ? 3 : 2;
      }
      bench_evals.push_back({id, Rater::dermbench, ScoreVector::from_integers(b), ""});
      eval_evals.push_back({id, Rater::dermeval, ScoreVector::from_integers(e), ""});
    }
    bench::save_evaluations(bench_evals, tmp.path / "bench.jsonl");
    bench::save_evaluations(eval_evals, tmp.path / "eval.jsonl");
    write_file(tmp.path / "expert.csv", csv);

    AlignArgs args{(tmp.path / "bench.jsonl").string(), (tmp.path / "eval.jsonl").string(),
                   (tmp.path / "expert.csv").string(), (tmp.path / "report.json").string()};
    CHECK(cmd_align(args) == 0);
    const json report = json::parse(read_file(tmp.path / "report.json"));
    CHECK(report["rows"]["dermbench"]["Accuracy"] == "0.251");
    CHECK(report["rows"]["dermeval"]["DescriptionPrecision"] == "0.147");
    CHECK(report["macro"]["dermbench"] == "0.36");
    CHECK(report["macro"]["dermeval"] == "0.18");
  }

  SUBCASE("disjoint keys are exit 2") {
    std::vector<EvaluationRecord> evals = {
        {"a", Rater::dermbench, ScoreVector::from_integers({1, 1, 1, 1, 1, 1}), ""}};
    bench::save_evaluations(evals, tmp.path / "bench.jsonl");
    bench::save_evaluations(evals, tmp.path / "eval.jsonl");
    write_file(tmp.path / "expert.csv",
               "narrative_id,Acc,Safe,MedG,Cover,Reason,Desc\nzz,1,1,1,1,1,1\n");
    AlignArgs args{(tmp.path / "bench.jsonl").string(), (tmp.path / "eval.jsonl").string(),
                   (tmp.path / "expert.csv").string(), (tmp.path / "report.json").string()};
    CHECK(cmd_align(args) == 2);
  }
}

TEST_CASE("cmd_train") {
  CliFixture fx;
  const auto corpus_file = fx.tmp.path / "train_corpus.jsonl";
  soreb::save_train_corpus(soreb::synthetic_corpus(50, 3), corpus_file);

  TrainArgs args;
  args.stage = "both";
  args.corpus_file = corpus_file.string();
  args.config_path = fx.config_file.string();
  args.out_dir = (fx.tmp.path / "train").string();

  SUBCASE("both stages converge and report the final error in the manifest") {
    CHECK(cmd_train(args) == 0);
    CHECK(fs::exists(fs::path(args.out_dir) / "checkpoint.json"));
    CHECK(fs::exists(fs::path(args.out_dir) / "checkpoint_stage1.json"));
    CHECK(fs::exists(fs::path(args.out_dir) / "metrics.csv"));
    const json manifest = json::parse(read_file(fs::path(args.out_dir) / "run_manifest.json"));
    CHECK(manifest["exit_status"] == 0);
    CHECK(manifest["steps"] == 500);
    CHECK(manifest["final_mean_abs_error"]["overall"].get<double>() < 0.5);
  }
  SUBCASE("fixed seed rerun reproduces metrics.csv byte for byte") {
    auto args2 = args;
    args2.out_dir = (fx.tmp.path / "train2").string();
    CHECK(cmd_train(args) == 0);
    CHECK(cmd_train(args2) == 0);
    CHECK(read_file(fs::path(args.out_dir) / "metrics.csv") ==
          read_file(fs::path(args2.out_dir) / "metrics.csv"));
  }
  SUBCASE("stage 2 resumes from a stage-1 checkpoint") {
    auto stage1 = args;
    stage1.stage = "1";
    stage1.out_dir = (fx.tmp.path / "s1").string();
    CHECK(cmd_train(stage1) == 0);
    auto stage2 = args;
    stage2.stage = "2";
    stage2.checkpoint = (fs::path(stage1.out_dir) / "checkpoint_stage1.json").string();
    stage2.out_dir = (fx.tmp.path / "s2").string();
    CHECK(cmd_train(stage2) == 0);
  }
  SUBCASE("stage 2 without a checkpoint is exit 2") {
    args.stage = "2";
    args.checkpoint.clear();
    CHECK(cmd_train(args) == 2);
  }
  SUBCASE("bad stage value is exit 2") {
    args.stage = "3";
    CHECK(cmd_train(args) == 2);
  }
}

TEST_CASE("cmd_verify suites pass") {
  CHECK(cmd_verify("parser") == 0);
  CHECK(cmd_verify("invariants") == 0);
  CHECK(cmd_verify("gradcheck") == 0);
  CHECK(cmd_verify("unknown") == 2);
}

TEST_CASE("cli binary end to end") {
  const char* bin = std::getenv("DERM_CLI_BIN");
  REQUIRE(bin != nullptr);
  CliFixture fx;

  const auto run = [&](const std::string& cmdline) {
    const std::string full = std::string(bin) + " " + cmdline + " > /dev/null 2>&1";
    const int rc = std::system(full.c_str());
    return WEXITSTATUS(rc);
  };

  SUBCASE("corpus-build then bench-run exits clean") {
    const auto out = (fx.tmp.path / "out").string();
    CHECK(run("corpus-build --cases " + fx.cases_file.string() + " --stream high --config " +
              fx.config_file.string() + " --out " + out + " --expert " +
              fx.expert_csv.string()) == 0);
    CHECK(run("bench-run --corpus " + out + " --models model-a,model-b --judge judge "
              "--config " + fx.config_file.string() + " --out " +
              (fx.tmp.path / "bench").string()) == 0);
    CHECK(fs::exists(fx.tmp.path / "bench" / "report.json"));
  }
  SUBCASE("verify subcommand prints per-property lines") {
    CHECK(run("verify --suite parser") == 0);
  }
  SUBCASE("missing required flag is a usage error") {
    CHECK(run("corpus-build --stream high") != 0);
  }
  SUBCASE("malformed config exits 2") {
    write_file(fx.config_file, "{");
    CHECK(run("corpus-build --cases " + fx.cases_file.string() + " --stream high --config " +
              fx.config_file.string() + " --out " + (fx.tmp.path / "x").string()) == 2);
  }
}
