#include "derm/config.hpp"

#include <fstream>

namespace derm::cli {

using nlohmann::json;

const backends::BackendConfig& AppConfig::role(const std::string& name) const {
  auto it = roles.find(name);
  if (it == roles.end()) {
    raise(ErrorCode::config, "config defines no '" + name + "' backend");
  }
  return it->second;
}

const backends::BackendConfig& AppConfig::model(const std::string& name) const {
  auto it = models.find(name);
  if (it == models.end()) {
    raise(ErrorCode::config, "config defines no model backend '" + name + "'");
  }
  return it->second;
}

AppConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::config, "cannot read config " + file.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    raise(ErrorCode::config, file.string() + ": " + e.what());
  }

  AppConfig cfg;
  if (j.contains("backends")) {
    for (auto it = j["backends"].begin(); it != j["backends"].end(); ++it) {
      if (it.key() == "models") continue;
      auto backend = backends::backend_config_from_json(it.value());
      if (!it.value().contains("model_id")) backend.model_id = it.key();
      cfg.roles[it.key()] = std::move(backend);
    }
    if (j["backends"].contains("models")) {
      const auto& models = j["backends"]["models"];
      for (auto it = models.begin(); it != models.end(); ++it) {
        auto backend = backends::backend_config_from_json(it.value());
        if (!it.value().contains("model_id")) backend.model_id = it.key();
        cfg.models[it.key()] = std::move(backend);
      }
    }
  }
  if (j.contains("judge_prompt_variant")) {
    cfg.judge_variant =
        textproto::parse_judge_variant(j["judge_prompt_variant"].get<std::string>());
  }
  if (j.contains("train")) {
    cfg.train = soreb::TrainConfig::from_json(j["train"].dump());
  }
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    cfg.sampling.temperature = s.value("temperature", 0.0);
    cfg.sampling.max_output_tokens = s.value("max_output_tokens", 1024);
    if (s.contains("seed")) cfg.sampling.seed = s["seed"].get<std::int64_t>();
    if (cfg.sampling.temperature < 0.0) {
      raise(ErrorCode::config, "sampling.temperature must be non-negative");
    }
    if (cfg.sampling.max_output_tokens < 1) {
      raise(ErrorCode::config, "sampling.max_output_tokens must be positive");
    }
  }
  cfg.max_parallel = j.value("max_parallel", 1);
  if (cfg.max_parallel < 1) raise(ErrorCode::config, "max_parallel must be positive");
  return cfg;
}

}  // namespace derm::cli
