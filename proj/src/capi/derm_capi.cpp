#include "derm.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

#include "derm/commands.hpp"
#include "derm/evaluation_text.hpp"
#include "derm/metrics.hpp"
#include "derm/prompts.hpp"
#include "derm/score_parser.hpp"

namespace {

int status_of(derm::ErrorCode code) {
  using derm::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return DERM_ERR_INVALID;
    case ErrorCode::range: return DERM_ERR_RANGE;
    case ErrorCode::parse: return DERM_ERR_PARSE;
    case ErrorCode::not_found: return DERM_ERR_NOT_FOUND;
    case ErrorCode::config: return DERM_ERR_CONFIG;
    case ErrorCode::integrity: return DERM_ERR_INTEGRITY;
    case ErrorCode::transport: return DERM_ERR_TRANSPORT;
    case ErrorCode::cache_miss: return DERM_ERR_CACHE_MISS;
    case ErrorCode::empty_input: return DERM_ERR_EMPTY;
    case ErrorCode::schema: return DERM_ERR_SCHEMA;
    case ErrorCode::authority: return DERM_ERR_AUTHORITY;
    case ErrorCode::divergence: return DERM_ERR_DIVERGENCE;
    case ErrorCode::io: return DERM_ERR_IO;
    case ErrorCode::internal: return DERM_ERR_INTERNAL;
  }
  return DERM_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct derm_context {
  int code = DERM_OK;
  std::string message;

  void clear() {
    code = DERM_OK;
    message.clear();
  }
  int fail(int c, std::string msg) {
    code = c;
    message = std::move(msg);
    return c;
  }
};

struct derm_score_vector {
  derm::ScoreVector v;
};

namespace {

// Runs fn, routing exceptions into the context.
template <typename Fn>
derm_status guarded(derm_context* ctx, Fn&& fn) {
  if (ctx == nullptr) return DERM_ERR_INVALID;
  ctx->clear();
  try {
    fn();
    return DERM_OK;
  } catch (const derm::Error& e) {
    return static_cast<derm_status>(ctx->fail(status_of(e.code()), e.what()));
  } catch (const std::exception& e) {
    return static_cast<derm_status>(ctx->fail(DERM_ERR_INTERNAL, e.what()));
  }
}

template <typename Fn>
int guarded_command(derm_context* ctx, Fn&& fn) {
  if (ctx != nullptr) ctx->clear();
  try {
    return fn();
  } catch (const derm::Error& e) {
    if (ctx != nullptr) ctx->fail(status_of(e.code()), e.what());
    return derm::cli::kExitConfig;
  } catch (const std::exception& e) {
    if (ctx != nullptr) ctx->fail(DERM_ERR_INTERNAL, e.what());
    return derm::cli::kExitConfig;
  }
}

derm::Dimension dim_at(int index) {
  if (index < 0 || index >= static_cast<int>(derm::kDimensionCount)) {
    derm::raise(derm::ErrorCode::invalid_argument,
                "dimension index " + std::to_string(index) + " outside [0,6)");
  }
  return derm::all_dimensions()[static_cast<std::size_t>(index)];
}

}  // namespace

extern "C" {

const char* derm_version(void) { return "1.0.0"; }

void derm_string_free(char* s) { std::free(s); }

derm_context* derm_context_new(void) { return new derm_context(); }
void derm_context_free(derm_context* ctx) { delete ctx; }

int derm_context_error_code(const derm_context* ctx) {
  return ctx == nullptr ? DERM_ERR_INVALID : ctx->code;
}

const char* derm_context_error_message(const derm_context* ctx) {
  return ctx == nullptr ? "" : ctx->message.c_str();
}

int derm_dimension_count(void) { return static_cast<int>(derm::kDimensionCount); }

const char* derm_dimension_name(int index) {
  if (index < 0 || index >= static_cast<int>(derm::kDimensionCount)) return "";
  return derm::display_name(derm::all_dimensions()[index]).data();
}

const char* derm_dimension_identifier(int index) {
  if (index < 0 || index >= static_cast<int>(derm::kDimensionCount)) return "";
  return derm::identifier(derm::all_dimensions()[index]).data();
}

const char* derm_dimension_alias(int index) {
  if (index < 0 || index >= static_cast<int>(derm::kDimensionCount)) return "";
  return derm::short_alias(derm::all_dimensions()[index]).data();
}

derm_score_vector* derm_score_vector_new(void) { return new derm_score_vector(); }
void derm_score_vector_free(derm_score_vector* v) { delete v; }

derm_status derm_score_vector_set(derm_context* ctx, derm_score_vector* v, int dim_index,
                                  double value) {
  return guarded(ctx, [&] {
    if (v == nullptr) derm::raise(derm::ErrorCode::invalid_argument, "null score vector");
    v->v.set(dim_at(dim_index), derm::Score::from_double(value));
  });
}

int derm_score_vector_has(const derm_score_vector* v, int dim_index) {
  if (v == nullptr || dim_index < 0 || dim_index >= static_cast<int>(derm::kDimensionCount)) {
    return 0;
  }
  return v->v.has(derm::all_dimensions()[dim_index]) ? 1 : 0;
}

double derm_score_vector_get(const derm_score_vector* v, int dim_index) {
  if (v == nullptr || dim_index < 0 || dim_index >= static_cast<int>(derm::kDimensionCount)) {
    return std::nan("");
  }
  const auto s = v->v.get(derm::all_dimensions()[dim_index]);
  return s ? s->value() : std::nan("");
}

int derm_score_vector_valid_count(const derm_score_vector* v) {
  return v == nullptr ? 0 : v->v.valid_count();
}

derm_status derm_round_to_integer(derm_context* ctx, double score, int* out) {
  return guarded(ctx, [&] {
    if (out == nullptr) derm::raise(derm::ErrorCode::invalid_argument, "null out pointer");
    *out = derm::round_to_integer(score);
  });
}

derm_status derm_parse_scores(derm_context* ctx, const char* text,
                              derm_score_vector** out_scores, char** out_diagnostics_json) {
  return guarded(ctx, [&] {
    if (text == nullptr || out_scores == nullptr) {
      derm::raise(derm::ErrorCode::invalid_argument, "null argument");
    }
    const auto result = derm::textproto::parse_scores(text);
    auto* v = new derm_score_vector{result.scores};
    *out_scores = v;
    if (out_diagnostics_json != nullptr) {
      nlohmann::ordered_json diag = nlohmann::ordered_json::object();
      for (derm::Dimension d : derm::all_dimensions()) {
        diag[std::string(derm::identifier(d))] =
            std::string(derm::textproto::to_string(result.status(d)));
      }
      *out_diagnostics_json = dup_string(diag.dump());
    }
  });
}

derm_status derm_render_evaluation(derm_context* ctx, const derm_score_vector* scores,
                                   const char* const justifications[6], char** out_text) {
  return guarded(ctx, [&] {
    if (scores == nullptr || out_text == nullptr) {
      derm::raise(derm::ErrorCode::invalid_argument, "null argument");
    }
    std::array<std::string, derm::kDimensionCount> j{};
    if (justifications != nullptr) {
      for (std::size_t i = 0; i < derm::kDimensionCount; ++i) {
        if (justifications[i] != nullptr) j[i] = justifications[i];
      }
    }
    *out_text = dup_string(derm::textproto::render_evaluation(scores->v, j));
  });
}

derm_status derm_parse_final_diagnosis(derm_context* ctx, const char* text, char** out) {
  return guarded(ctx, [&] {
    if (text == nullptr || out == nullptr) {
      derm::raise(derm::ErrorCode::invalid_argument, "null argument");
    }
    *out = dup_string(derm::textproto::parse_final_diagnosis(text));
  });
}

derm_status derm_render_prompt(derm_context* ctx, const char* template_id,
                               const char* const* keys, const char* const* values,
                               size_t bindings, char** out) {
  return guarded(ctx, [&] {
    if (template_id == nullptr || out == nullptr) {
      derm::raise(derm::ErrorCode::invalid_argument, "null argument");
    }
    derm::textproto::Bindings b;
    for (size_t i = 0; i < bindings; ++i) {
      if (keys == nullptr || values == nullptr || keys[i] == nullptr ||
          values[i] == nullptr) {
        derm::raise(derm::ErrorCode::invalid_argument, "null binding");
      }
      b[keys[i]] = values[i];
    }
    *out = dup_string(derm::textproto::render_prompt(template_id, b));
  });
}

derm_status derm_prompt_catalog(derm_context* ctx, char** out) {
  return guarded(ctx, [&] {
    if (out == nullptr) derm::raise(derm::ErrorCode::invalid_argument, "null argument");
    *out = dup_string(derm::textproto::prompt_catalog());
  });
}

int derm_cmd_corpus_build(derm_context* ctx, const char* cases_path, const char* stream,
                          const char* config_path, const char* out_dir,
                          const char* expert_csv) {
  return guarded_command(ctx, [&] {
    derm::cli::CorpusBuildArgs args;
    args.cases_path = cases_path ? cases_path : "";
    args.stream = stream ? stream : "";
    args.config_path = config_path ? config_path : "";
    args.out_dir = out_dir ? out_dir : "";
    args.expert_csv = expert_csv ? expert_csv : "";
    return derm::cli::cmd_corpus_build(args);
  });
}

int derm_cmd_bench_run(derm_context* ctx, const char* corpus_dir, const char* models_csv,
                       const char* judge, const char* config_path, const char* out_dir) {
  return guarded_command(ctx, [&] {
    derm::cli::BenchRunArgs args;
    args.corpus_dir = corpus_dir ? corpus_dir : "";
    if (models_csv != nullptr) {
      std::istringstream ss(models_csv);
      std::string token;
      while (std::getline(ss, token, ',')) {
        if (!token.empty()) args.models.push_back(token);
      }
    }
    args.judge = judge ? judge : "";
    args.config_path = config_path ? config_path : "";
    args.out_dir = out_dir ? out_dir : "";
    return derm::cli::cmd_bench_run(args);
  });
}

int derm_cmd_align(derm_context* ctx, const char* bench_file, const char* eval_file,
                   const char* expert_file, const char* out_file) {
  return guarded_command(ctx, [&] {
    derm::cli::AlignArgs args;
    args.bench_file = bench_file ? bench_file : "";
    args.eval_file = eval_file ? eval_file : "";
    args.expert_file = expert_file ? expert_file : "";
    args.out_file = out_file ? out_file : "";
    return derm::cli::cmd_align(args);
  });
}

int derm_cmd_train(derm_context* ctx, const char* stage, const char* corpus_file,
                   const char* config_path, const char* checkpoint, const char* out_dir) {
  return guarded_command(ctx, [&] {
    derm::cli::TrainArgs args;
    args.stage = stage ? stage : "";
    args.corpus_file = corpus_file ? corpus_file : "";
    args.config_path = config_path ? config_path : "";
    args.checkpoint = checkpoint ? checkpoint : "";
    args.out_dir = out_dir ? out_dir : "";
    return derm::cli::cmd_train(args);
  });
}

int derm_cmd_verify(derm_context* ctx, const char* suite) {
  return guarded_command(
      ctx, [&] { return derm::cli::cmd_verify(suite ? suite : ""); });
}

}  // extern "C"
