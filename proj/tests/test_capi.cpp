// Exercises the shared-library surface exactly as an external consumer would:
// only derm.h, opaque handles, and status codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>

#include "derm.h"

namespace {

struct Ctx {
  derm_context* ptr = derm_context_new();
  ~Ctx() { derm_context_free(ptr); }
};

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { derm_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

}  // namespace

TEST_CASE("version and dimension tables") {
  CHECK(std::string(derm_version()) == "1.0.0");
  CHECK(derm_dimension_count() == 6);
  CHECK(std::string(derm_dimension_name(2)) == "Medical Groundedness");
  CHECK(std::string(derm_dimension_identifier(2)) == "MedicalGroundedness");
  CHECK(std::string(derm_dimension_alias(3)) == "Cover");
  CHECK(std::string(derm_dimension_name(7)).empty());
}

TEST_CASE("score vector handle") {
  Ctx ctx;
  derm_score_vector* v = derm_score_vector_new();
  CHECK(derm_score_vector_valid_count(v) == 0);
  CHECK(derm_score_vector_set(ctx.ptr, v, 0, 2.5) == DERM_OK);
  CHECK(derm_score_vector_has(v, 0) == 1);
  CHECK(derm_score_vector_get(v, 0) == 2.5);
  CHECK(std::isnan(derm_score_vector_get(v, 1)));
  CHECK(derm_score_vector_valid_count(v) == 1);

  CHECK(derm_score_vector_set(ctx.ptr, v, 0, 7.0) == DERM_ERR_RANGE);
  CHECK(derm_context_error_code(ctx.ptr) == DERM_ERR_RANGE);
  CHECK(std::string(derm_context_error_message(ctx.ptr)).find("outside") !=
        std::string::npos);
  CHECK(derm_score_vector_set(ctx.ptr, v, 9, 1.0) == DERM_ERR_INVALID);
  derm_score_vector_free(v);
}

TEST_CASE("rounding through the C surface") {
  Ctx ctx;
  int out = -1;
  CHECK(derm_round_to_integer(ctx.ptr, 2.5, &out) == DERM_OK);
  CHECK(out == 3);
  CHECK(derm_round_to_integer(ctx.ptr, 3.4, &out) == DERM_OK);
  CHECK(out == 3);
  CHECK(derm_round_to_integer(ctx.ptr, 5.3, &out) == DERM_ERR_RANGE);
}

TEST_CASE("parse, render, and round trip") {
  Ctx ctx;
  derm_score_vector* parsed = nullptr;
  OwnedString diag;
  const char* transcript =
      "Accuracy: 2/5 --- wrong entity\n"
      "Safety: 7/5 --- out of range on purpose\n"
      "Medical Groundedness: 2/5 --- generic\n"
      "Coverage: 2/5 --- thin\n"
      "Reasoning Coherence: 2/5 --- shallow\n"
      "Description Precision: 2/5 --- vague\n";
  REQUIRE(derm_parse_scores(ctx.ptr, transcript, &parsed, &diag.ptr) == DERM_OK);
  CHECK(derm_score_vector_valid_count(parsed) == 5);
  CHECK(derm_score_vector_has(parsed, 1) == 0);
  CHECK(diag.str().find("\"Safety\":\"out_of_range\"") != std::string::npos);
  derm_score_vector_free(parsed);

  derm_score_vector* scores = derm_score_vector_new();
  for (int d = 0; d < 6; ++d) {
    REQUIRE(derm_score_vector_set(ctx.ptr, scores, d, d % 6) == DERM_OK);
  }
  OwnedString text;
  REQUIRE(derm_render_evaluation(ctx.ptr, scores, nullptr, &text.ptr) == DERM_OK);
  CHECK(text.str().rfind("Accuracy: 0/5 ---", 0) == 0);

  derm_score_vector* reparsed = nullptr;
  REQUIRE(derm_parse_scores(ctx.ptr, text.ptr, &reparsed, nullptr) == DERM_OK);
  for (int d = 0; d < 6; ++d) {
    CHECK(derm_score_vector_get(reparsed, d) == derm_score_vector_get(scores, d));
  }
  derm_score_vector_free(reparsed);

  // Incomplete vectors cannot render.
  derm_score_vector* partial = derm_score_vector_new();
  OwnedString nothing;
  CHECK(derm_render_evaluation(ctx.ptr, partial, nullptr, &nothing.ptr) ==
        DERM_ERR_INVALID);
  derm_score_vector_free(partial);
  derm_score_vector_free(scores);
}

TEST_CASE("final diagnosis extraction") {
  Ctx ctx;
  OwnedString out;
  REQUIRE(derm_parse_final_diagnosis(
              ctx.ptr, "Reasoning. The answer is Sebaceous Hyperplasia.", &out.ptr) ==
          DERM_OK);
  CHECK(out.str() == "Sebaceous Hyperplasia");
  OwnedString empty;
  REQUIRE(derm_parse_final_diagnosis(ctx.ptr, "no pattern here", &empty.ptr) == DERM_OK);
  CHECK(empty.str().empty());
}

TEST_CASE("prompt registry through the C surface") {
  Ctx ctx;
  OwnedString caption;
  REQUIRE(derm_render_prompt(ctx.ptr, "captioning", nullptr, nullptr, 0, &caption.ptr) ==
          DERM_OK);
  CHECK(caption.str().rfind("Please briefly describe the physical location", 0) == 0);

  const char* keys[] = {"DISEASE_NAME", "CAPTION"};
  const char* values[] = {"epidermal nevus", "This image shows a linear lesion."};
  OwnedString reasoning;
  REQUIRE(derm_render_prompt(ctx.ptr, "hierarchical_reasoning", keys, values, 2,
                             &reasoning.ptr) == DERM_OK);
  CHECK(reasoning.str().find("the ground truth epidermal nevus") != std::string::npos);

  OwnedString missing;
  CHECK(derm_render_prompt(ctx.ptr, "hierarchical_reasoning", keys, values, 1,
                           &missing.ptr) == DERM_ERR_INVALID);
  OwnedString unknown;
  CHECK(derm_render_prompt(ctx.ptr, "nope", nullptr, nullptr, 0, &unknown.ptr) ==
        DERM_ERR_NOT_FOUND);

  OwnedString catalog;
  REQUIRE(derm_prompt_catalog(ctx.ptr, &catalog.ptr) == DERM_OK);
  CHECK(catalog.str().find("=== prompt: judge_comparison") != std::string::npos);
  CHECK(catalog.str().find("=== prompt: judge_comparison_five_dim") != std::string::npos);
}

TEST_CASE("command entry points validate their inputs") {
  Ctx ctx;
  CHECK(derm_cmd_verify(ctx.ptr, "parser") == 0);
  CHECK(derm_cmd_verify(ctx.ptr, "bogus") == 2);
  CHECK(derm_cmd_train(ctx.ptr, "9", "/nonexistent", "/nonexistent", nullptr, "/tmp/x") == 2);
  CHECK(derm_cmd_align(ctx.ptr, "/nonexistent", "/nonexistent", "/nonexistent",
                       "/tmp/out.json") == 2);
}
