// Command-line front end. All functionality lives behind the C API in
// libderm; this binary only parses arguments and forwards.

#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "derm.h"

namespace {

struct ContextGuard {
  derm_context* ctx = derm_context_new();
  ~ContextGuard() { derm_context_free(ctx); }
};

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"derm: rubric-based evaluation pipelines for diagnostic narratives"};
  app.require_subcommand(1);

  // corpus-build
  std::string cb_cases, cb_stream, cb_config, cb_out, cb_expert;
  auto* corpus_build =
      app.add_subcommand("corpus-build", "Build one corpus stream from a cases file");
  corpus_build->add_option("--cases", cb_cases, "cases.jsonl path")->required();
  corpus_build->add_option("--stream", cb_stream, "high | regular")->required();
  corpus_build->add_option("--config", cb_config, "config file")->required();
  corpus_build->add_option("--out", cb_out, "output directory")->required();
  corpus_build->add_option("--expert", cb_expert,
                           "expert_scores.csv to ingest and run the certification gate");

  // bench-run
  std::string br_corpus, br_models, br_judge, br_config, br_out;
  auto* bench_run = app.add_subcommand("bench-run", "Judge candidate models on the bench split");
  bench_run->add_option("--corpus", br_corpus, "corpus directory")->required();
  bench_run->add_option("--models", br_models, "comma-separated model names")->required();
  bench_run->add_option("--judge", br_judge, "judge backend name")->required();
  bench_run->add_option("--config", br_config, "config file")->required();
  bench_run->add_option("--out", br_out, "output directory")->required();

  // align
  std::string al_bench, al_eval, al_expert, al_out;
  auto* align = app.add_subcommand("align", "Per-dimension MAE against physician scores");
  align->add_option("--bench", al_bench, "dermbench evaluations.jsonl")->required();
  align->add_option("--eval", al_eval, "dermeval evaluations.jsonl")->required();
  align->add_option("--expert", al_expert, "expert_scores.csv")->required();
  align->add_option("--out", al_out, "output report file")->required();

  // train
  std::string tr_stage, tr_corpus, tr_config, tr_checkpoint, tr_out;
  auto* train = app.add_subcommand("train", "Two-stage evaluator training on a toy policy");
  train->add_option("--stage", tr_stage, "1 | 2 | both")->required();
  train->add_option("--corpus", tr_corpus, "train_corpus.jsonl")->required();
  train->add_option("--config", tr_config, "config file")->required();
  train->add_option("--checkpoint", tr_checkpoint, "stage-1 checkpoint (for --stage 2)");
  train->add_option("--out", tr_out, "output directory")->required();

  // verify
  std::string vf_suite;
  auto* verify = app.add_subcommand("verify", "Run a property suite");
  verify->add_option("--suite", vf_suite, "gradcheck | parser | invariants")->required();

  CLI11_PARSE(app, argc, argv);

  ContextGuard guard;
  int exit_code = 2;
  if (corpus_build->parsed()) {
    exit_code = derm_cmd_corpus_build(guard.ctx, cb_cases.c_str(), cb_stream.c_str(),
                                      cb_config.c_str(), cb_out.c_str(), opt(cb_expert));
  } else if (bench_run->parsed()) {
    exit_code = derm_cmd_bench_run(guard.ctx, br_corpus.c_str(), br_models.c_str(),
                                   br_judge.c_str(), br_config.c_str(), br_out.c_str());
  } else if (align->parsed()) {
    exit_code = derm_cmd_align(guard.ctx, al_bench.c_str(), al_eval.c_str(),
                               al_expert.c_str(), al_out.c_str());
  } else if (train->parsed()) {
    exit_code = derm_cmd_train(guard.ctx, tr_stage.c_str(), tr_corpus.c_str(),
                               tr_config.c_str(), opt(tr_checkpoint), tr_out.c_str());
  } else if (verify->parsed()) {
    exit_code = derm_cmd_verify(guard.ctx, vf_suite.c_str());
  }

  if (derm_context_error_code(guard.ctx) != DERM_OK) {
    std::fprintf(stderr, "error\t%d\t%s\n", derm_context_error_code(guard.ctx),
                 derm_context_error_message(guard.ctx));
  }
  return exit_code;
}
