#pragma once

#include <filesystem>
#include <span>

#include "json.hpp"

#include "derm/metrics.hpp"
#include "derm/pipeline.hpp"

namespace derm::bench {

struct BenchmarkOptions {
  PipelineOptions pipeline;
  std::filesystem::path state_dir;  // per-cell persistence; empty disables resume
  int max_parallel = 1;
};

struct PerCaseResult {
  std::string model;
  std::string case_id;
  std::string narrative_id;
  bool ok = false;
  ScoreVector scores;  // possibly partial
  std::string failure_code;
  std::string failure_message;
  std::string judge_fingerprint;
};

struct ModelTally {
  int complete = 0;
  int partial = 0;
  int failed = 0;
};

struct BenchmarkReport {
  std::string judge_model;
  std::string prompt_variant;
  std::string corpus_hash;
  ModelDimensionTable per_model;  // means over complete per-case rows
  std::vector<PerCaseResult> per_case;
  std::map<std::string, ModelTally> tallies;
  std::int64_t backend_calls = 0;
};

// For each model and bench-split case with a certified reference: generate a
// candidate under the fixed instruction, judge it against the reference, and
// aggregate per-model means. Failures never abort the run; failed or partial
// cells are tallied and excluded from means. With a state_dir, candidate and
// judgment cells are persisted under (model, case, prompt-variant, judge) and
// reruns recompute only missing cells.
BenchmarkReport run_benchmark(
    CorpusStore& store,
    const std::vector<std::pair<std::string, backends::Backend*>>& model_backends,
    backends::Backend& judge_backend, const BenchmarkOptions& options);

struct AlignmentReport {
  // evaluator name ("dermbench" / "dermeval") -> per-dimension MAE
  std::map<std::string, DimensionTable> rows;
  std::map<std::string, Rational> macro;
  std::size_t pairs = 0;
  // run metadata: digests of the compared input files
  std::map<std::string, std::string> inputs;
};

// Per-dimension MAE of each evaluator against physician scores, keyed by
// narrative_id; evaluator scores are rounded to integers first. Disjoint keys
// raise an empty-comparison error.
AlignmentReport alignment_report(std::span<const EvaluationRecord> dermbench_evals,
                                 std::span<const EvaluationRecord> dermeval_evals,
                                 std::span<const EvaluationRecord> physician_evals);

nlohmann::ordered_json report_to_json(const BenchmarkReport& report);
nlohmann::ordered_json report_to_json(const AlignmentReport& report);

// Recomputes per-model means from the embedded per-case rows and compares
// them cell by cell; raises on mismatch.
void verify_report_consistency(const nlohmann::json& report_json);

void write_json_file(const nlohmann::ordered_json& doc, const std::filesystem::path& file);
nlohmann::json read_json_file(const std::filesystem::path& file);

}  // namespace derm::bench
