#include "derm/commands.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include <fstream>

#include "derm/benchmark.hpp"
#include "derm/config.hpp"
#include "derm/verify.hpp"

namespace derm::cli {

using nlohmann::ordered_json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every non-trivial command writes exactly one manifest alongside its
// outputs; wall-clock timestamps live here and nowhere else.
struct Manifest {
  std::string command;
  std::string config_path;
  std::string corpus_hash;
  std::vector<std::string> backend_kinds;
  std::uint64_t seed = 0;
  std::string started_at = utc_now();
  std::int64_t backend_calls = 0;
  ordered_json extra = ordered_json::object();

  void write(const std::filesystem::path& dir, int exit_status) const {
    ordered_json j;
    j["command"] = command;
    j["config"] = config_path;
    j["precedence"] = "flag > file > default";
    j["corpus_hash"] = corpus_hash;
    j["backend_kinds"] = backend_kinds;
    j["seed"] = seed;
    j["backend_calls"] = backend_calls;
    for (const auto& [k, v] : extra.items()) j[k] = v;
    j["started_at"] = started_at;
    j["finished_at"] = utc_now();
    j["exit_status"] = exit_status;
    bench::write_json_file(j, dir / "run_manifest.json");
  }
};

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::divergence: return kExitDivergence;
    default: return kExitConfig;
  }
}

ordered_json failures_to_json(const std::vector<bench::CaseFailure>& failures) {
  ordered_json out = ordered_json::array();
  for (const auto& f : failures) {
    out.push_back({{"case_id", f.case_id}, {"code", f.code}, {"message", f.message}});
  }
  return out;
}

void report_failures(const std::vector<bench::CaseFailure>& failures) {
  for (const auto& f : failures) {
    emit_diag("error", f.code, "case " + f.case_id + ": " + f.message);
  }
}

}  // namespace

namespace {

// Audit copy of the prompt registry next to every pipeline output.
void write_prompt_catalog(const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream out(out_dir / "prompt_catalog.txt", std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write prompt catalog in " + out_dir.string());
  out << textproto::prompt_catalog();
}

}  // namespace

void emit_diag(std::string_view level, std::string_view code, std::string_view message) {
  std::cerr << level << '\t' << code << '\t' << message << '\n';
}

int cmd_corpus_build(const CorpusBuildArgs& args) {
  AppConfig config;
  std::vector<CaseRecord> cases;
  Stream stream = Stream::high_quality;
  std::unique_ptr<backends::Backend> caption;
  std::unique_ptr<backends::Backend> reasoning;
  try {
    config = load_config(args.config_path);
    const auto parsed_stream = parse_stream(args.stream);
    if (!parsed_stream || *parsed_stream == Stream::external) {
      raise(ErrorCode::config, "stream must be 'high' or 'regular'");
    }
    stream = *parsed_stream;
    cases = bench::load_cases(args.cases_path);
    if (args.sample) {
      const auto mode = args.sample_mode == "stratified" ? bench::SampleMode::stratified
                        : args.sample_mode == "uniform"
                            ? bench::SampleMode::uniform
                            : throw Error(ErrorCode::config, "sample_mode must be uniform|stratified");
      cases = bench::sample_cases(cases, static_cast<std::size_t>(*args.sample), mode,
                                  args.sample_seed);
    }
    caption = backends::make_backend(config.role("caption"));
    reasoning = backends::make_backend(config.role("reasoning"));
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    return kExitConfig;
  }

  Manifest manifest;
  manifest.command = "corpus-build";
  manifest.config_path = args.config_path;
  manifest.seed = config.train.seed;
  manifest.backend_kinds = {std::string(to_string(caption->config().kind)),
                            std::string(to_string(reasoning->config().kind))};
  manifest.extra["stream"] = args.stream;
  if (args.sample) {
    manifest.extra["sample"] = *args.sample;
    manifest.extra["sample_mode"] = args.sample_mode;
    manifest.extra["sample_seed"] = args.sample_seed;
  }

  int exit_status = kExitOk;
  try {
    bench::CorpusStore store;
    for (auto& c : cases) store.add_case(c);

    bench::PipelineOptions options{config.sampling, config.judge_variant};
    auto outcome = bench::build_stream(store, store.cases(), stream, *caption, *reasoning,
                                       options);

    // Optional physician ingestion: score the fresh narratives and run the
    // certification gate over them.
    ordered_json certification = ordered_json::object();
    if (!args.expert_csv.empty()) {
      for (const auto& rec : bench::import_expert_scores(args.expert_csv)) {
        if (!store.find_narrative(rec.narrative_id)) {
          outcome.failures.push_back({rec.narrative_id, "unknown_narrative",
                                      "expert row references no built narrative"});
          continue;
        }
        const auto result = bench::certify(store, rec, rec.narrative_id);
        if (result.certified) {
          certification[rec.narrative_id] = "certified";
        } else {
          ordered_json deficient = ordered_json::array();
          for (Dimension d : result.deficient) {
            deficient.push_back(std::string(identifier(d)));
          }
          certification[rec.narrative_id] = {{"needs_revision", deficient}};
        }
      }
    }

    store.validate();
    store.save(args.out_dir);
    write_prompt_catalog(args.out_dir);

    manifest.corpus_hash = store.content_hash();
    manifest.backend_calls = caption->calls() + reasoning->calls();
    manifest.extra["narratives"] = outcome.narrative_ids.size();
    manifest.extra["failures"] = failures_to_json(outcome.failures);
    if (!certification.empty()) manifest.extra["certification"] = certification;

    report_failures(outcome.failures);
    exit_status = outcome.failures.empty() ? kExitOk : kExitPartial;
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    exit_status = exit_code_for(e);
  }
  manifest.write(args.out_dir, exit_status);
  return exit_status;
}

int cmd_bench_run(const BenchRunArgs& args) {
  AppConfig config;
  bench::CorpusStore store;
  std::unique_ptr<backends::Backend> judge;
  std::vector<std::pair<std::string, std::unique_ptr<backends::Backend>>> model_backends;
  try {
    config = load_config(args.config_path);
    if (args.models.empty()) raise(ErrorCode::config, "model list is empty");
    store = bench::CorpusStore::load(args.corpus_dir);
    for (const auto& name : args.models) {
      model_backends.emplace_back(name, backends::make_backend(config.model(name)));
    }
    // The judge resolves to a role entry or a model entry of that name.
    if (config.roles.contains(args.judge)) {
      judge = backends::make_backend(config.roles.at(args.judge));
    } else if (config.models.contains(args.judge)) {
      judge = backends::make_backend(config.models.at(args.judge));
    } else if (config.roles.contains("judge")) {
      auto judge_cfg = config.roles.at("judge");
      judge_cfg.model_id = args.judge;
      judge = backends::make_backend(judge_cfg);
    } else {
      raise(ErrorCode::config, "config defines no judge backend '" + args.judge + "'");
    }
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    return kExitConfig;
  }

  Manifest manifest;
  manifest.command = "bench-run";
  manifest.config_path = args.config_path;
  manifest.seed = config.train.seed;
  manifest.backend_kinds = {std::string(to_string(judge->config().kind))};
  for (const auto& [_, backend] : model_backends) {
    manifest.backend_kinds.push_back(std::string(to_string(backend->config().kind)));
  }

  int exit_status = kExitOk;
  try {
    bench::BenchmarkOptions options;
    options.pipeline = bench::PipelineOptions{config.sampling, config.judge_variant};
    options.state_dir = std::filesystem::path(args.out_dir) / "state";
    options.max_parallel = config.max_parallel;

    std::vector<std::pair<std::string, backends::Backend*>> backend_ptrs;
    for (const auto& [name, backend] : model_backends) {
      backend_ptrs.emplace_back(name, backend.get());
    }
    const auto report = bench::run_benchmark(store, backend_ptrs, *judge, options);

    const auto doc = bench::report_to_json(report);
    bench::verify_report_consistency(doc);
    bench::write_json_file(doc, std::filesystem::path(args.out_dir) / "report.json");
    write_prompt_catalog(args.out_dir);

    manifest.corpus_hash = report.corpus_hash;
    manifest.backend_calls = report.backend_calls;
    int failed = 0;
    for (const auto& [model, tally] : report.tallies) {
      manifest.extra["tallies"][model] = {{"complete", tally.complete},
                                          {"partial", tally.partial},
                                          {"failed", tally.failed}};
      failed += tally.failed;
    }
    for (const auto& row : report.per_case) {
      if (!row.ok) {
        emit_diag("error", row.failure_code,
                  row.model + "/" + row.case_id + ": " + row.failure_message);
      }
    }
    exit_status = failed == 0 ? kExitOk : kExitPartial;
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    exit_status = exit_code_for(e);
  }
  manifest.write(args.out_dir, exit_status);
  return exit_status;
}

int cmd_align(const AlignArgs& args) {
  try {
    const auto bench_evals = bench::load_evaluations(args.bench_file);
    const auto eval_evals = bench::load_evaluations(args.eval_file);
    const auto expert = bench::import_expert_scores(args.expert_file);

    auto report = bench::alignment_report(bench_evals, eval_evals, expert);
    report.inputs["dermbench"] = backends::sha256_file_hex(args.bench_file);
    report.inputs["dermeval"] = backends::sha256_file_hex(args.eval_file);
    report.inputs["expert"] = backends::sha256_file_hex(args.expert_file);
    const std::filesystem::path out_file(args.out_file);
    bench::write_json_file(bench::report_to_json(report), out_file);

    Manifest manifest;
    manifest.command = "align";
    manifest.extra["pairs"] = report.pairs;
    for (const auto& [name, value] : report.macro) {
      manifest.extra["macro"][name] = format_macro(value);
    }
    manifest.write(out_file.parent_path(), kExitOk);
    return kExitOk;
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    return kExitConfig;
  }
}

int cmd_train(const TrainArgs& args) {
  AppConfig config;
  std::vector<soreb::TrainInstance> corpus;
  soreb::PolicyModel policy;
  try {
    config = load_config(args.config_path);
    if (args.stage != "1" && args.stage != "2" && args.stage != "both") {
      raise(ErrorCode::config, "stage must be 1, 2 or both");
    }
    corpus = soreb::load_train_corpus(args.corpus_file);
    if (args.stage == "2") {
      if (args.checkpoint.empty()) {
        raise(ErrorCode::config, "--stage 2 requires a stage-1 checkpoint");
      }
      policy = soreb::PolicyModel::load(args.checkpoint);
    }
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    return kExitConfig;
  }

  Manifest manifest;
  manifest.command = "train";
  manifest.config_path = args.config_path;
  manifest.seed = config.train.seed;
  manifest.extra["stage"] = args.stage;
  manifest.extra["corpus_instances"] = corpus.size();

  int exit_status = kExitOk;
  try {
    const std::filesystem::path out_dir(args.out_dir);
    std::vector<soreb::StepMetrics> metrics;

    if (args.stage == "1" || args.stage == "both") {
      auto result = soreb::train_stage1(policy, corpus, config.train);
      metrics.insert(metrics.end(), result.metrics.begin(), result.metrics.end());
      policy.save(out_dir / "checkpoint_stage1.json", config.train.to_json());
    }
    if (args.stage == "2" || args.stage == "both") {
      auto result = soreb::train_stage2(policy, corpus, config.train);
      const int offset = static_cast<int>(metrics.size());
      for (auto& m : result.metrics) m.step += offset;
      metrics.insert(metrics.end(), result.metrics.begin(), result.metrics.end());
    }
    policy.save(out_dir / "checkpoint.json", config.train.to_json());
    soreb::save_metrics_csv(metrics, out_dir / "metrics.csv");

    // Convergence summary: one sample per context against its target.
    soreb::Rng eval_rng(config.train.seed + 2);
    double total_abs = 0.0;
    std::array<double, kDimensionCount> per_dim{};
    for (const auto& instance : corpus) {
      const auto sampled = soreb::sample_evaluation(policy, instance.context, eval_rng);
      for (Dimension d : all_dimensions()) {
        const double diff = std::abs(sampled.scores[index_of(d)] -
                                     instance.target_scores.get(d)->value());
        per_dim[index_of(d)] += diff;
        total_abs += diff;
      }
    }
    for (Dimension d : all_dimensions()) {
      manifest.extra["final_mean_abs_error"][std::string(identifier(d))] =
          per_dim[index_of(d)] / static_cast<double>(corpus.size());
    }
    manifest.extra["final_mean_abs_error"]["overall"] =
        total_abs / static_cast<double>(corpus.size() * kDimensionCount);
    manifest.extra["steps"] = metrics.size();
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    exit_status = exit_code_for(e);
  }
  manifest.write(args.out_dir, exit_status);
  return exit_status;
}

int cmd_verify(const std::string& suite) {
  try {
    const auto results = verify::run_suite(suite);
    bool all_passed = true;
    for (const auto& r : results) {
      std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << ": " << r.detail << "\n";
      all_passed = all_passed && r.passed;
    }
    return all_passed ? kExitOk : kExitPartial;
  } catch (const Error& e) {
    emit_diag("error", to_string(e.code()), e.what());
    return kExitConfig;
  }
}

}  // namespace derm::cli
