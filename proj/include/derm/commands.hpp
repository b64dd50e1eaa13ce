#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace derm::cli {

// Exit code scheme shared by every command:
//   0 clean, 1 partial data failures, 2 configuration/input errors,
//   3 numeric divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

struct CorpusBuildArgs {
  std::string cases_path;
  std::string stream;  // "high" | "regular"
  std::string config_path;
  std::string out_dir;
  std::string expert_csv;    // optional physician ingestion + certification gate
  std::optional<int> sample; // optional case subsetting before the build
  std::string sample_mode = "uniform";  // "uniform" | "stratified"
  std::uint64_t sample_seed = 0;
};

struct BenchRunArgs {
  std::string corpus_dir;
  std::vector<std::string> models;
  std::string judge;
  std::string config_path;
  std::string out_dir;
};

struct AlignArgs {
  std::string bench_file;   // dermbench evaluations.jsonl
  std::string eval_file;    // dermeval evaluations.jsonl
  std::string expert_file;  // expert_scores.csv
  std::string out_file;
};

struct TrainArgs {
  std::string stage;  // "1" | "2" | "both"
  std::string corpus_file;
  std::string config_path;
  std::string checkpoint;  // stage-1 checkpoint, required for --stage 2
  std::string out_dir;
};

int cmd_corpus_build(const CorpusBuildArgs& args);
int cmd_bench_run(const BenchRunArgs& args);
int cmd_align(const AlignArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_verify(const std::string& suite);

// Line-oriented machine-parsable diagnostic on standard error:
// "<level>\t<code>\t<message>".
void emit_diag(std::string_view level, std::string_view code, std::string_view message);

}  // namespace derm::cli
