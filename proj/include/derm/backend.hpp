#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "derm/error.hpp"

namespace derm::backends {

struct Message {
  std::string role;       // "system" | "user" | "assistant"
  std::string text;
  std::string image_ref;  // file path; empty when no image attached
};

struct Sampling {
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::optional<std::int64_t> seed;
};

struct ModelRequest {
  std::string model_id;
  std::vector<Message> messages;
  Sampling sampling;
};

struct ModelResponse {
  std::string text;
  std::string finish_reason = "stop";
  std::int64_t latency_ms = 0;
  std::string request_fingerprint;
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_backoff_ms = 250;
  double jitter = 1.0;  // fraction of the exponential window that is randomized
};

enum class BackendKind { mock, replay, remote };

struct BackendConfig {
  BackendKind kind = BackendKind::mock;
  std::string model_id = "default";  // model identity stamped on requests
  std::string endpoint;      // remote: base URL of a chat-completions service
  std::string auth_env_var;  // remote: environment variable holding the key
  int max_concurrency = 4;
  RetryPolicy retry;
  std::string replay_path;   // replay: cache directory
  bool record = false;       // replay: record upstream responses on miss
  std::shared_ptr<BackendConfig> upstream;  // replay record mode delegate
  std::string script_path;   // mock: scripted response table (JSON)

  void validate() const;
};

BackendConfig backend_config_from_json(const nlohmann::json& j);
nlohmann::json backend_config_to_json(const BackendConfig& cfg);
std::string_view to_string(BackendKind kind);

class Backend {
 public:
  virtual ~Backend() = default;

  // Synchronous request/response; safe to call from many threads. In-flight
  // remote calls never exceed config().max_concurrency.
  virtual ModelResponse complete(const ModelRequest& request) = 0;

  virtual const BackendConfig& config() const = 0;

  // Completions served since construction (any kind); used for run manifests
  // and resume bookkeeping.
  virtual std::int64_t calls() const = 0;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

// Canonical serialization of a request. The fingerprint is a pure function of
// (model_id, messages, sampling) and of the bytes of any attached image.
nlohmann::json canonical_request(const ModelRequest& request);
std::string request_fingerprint(const ModelRequest& request);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace derm::backends
