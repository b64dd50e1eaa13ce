#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "derm/backend.hpp"
#include "derm/prompts.hpp"
#include "derm/soreb.hpp"

namespace derm::cli {

// One config file carries backend definitions, prompt-variant selection, and
// train hyperparameters. Flags override file values; file values override
// defaults.
struct AppConfig {
  // Role backends drive the corpus pipelines; model backends are the
  // benchmark candidates, keyed by model name.
  std::map<std::string, backends::BackendConfig> roles;   // caption, reasoning, judge, ...
  std::map<std::string, backends::BackendConfig> models;
  textproto::JudgeVariant judge_variant = textproto::JudgeVariant::six_dim;
  soreb::TrainConfig train;
  backends::Sampling sampling;
  int max_parallel = 1;

  const backends::BackendConfig& role(const std::string& name) const;
  const backends::BackendConfig& model(const std::string& name) const;
};

AppConfig load_config(const std::filesystem::path& file);

}  // namespace derm::cli
