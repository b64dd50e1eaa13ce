#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

#include "derm/backend.hpp"

namespace derm::backends {

// Durable request/response cache, one file per fingerprint. Layout (stable):
// <dir>/<fingerprint>.json holding {"fingerprint", "request", "response"}.
class ReplayStore {
 public:
  explicit ReplayStore(std::filesystem::path dir);

  std::optional<ModelResponse> lookup(const std::string& fingerprint) const;

  // Stores the pair keyed by the request fingerprint and returns it.
  // Re-recording identical content is a no-op; conflicting content for the
  // same fingerprint raises an integrity error.
  std::string store(const ModelRequest& request, const ModelResponse& response);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& fingerprint) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
};

// The record operation of the replay cache as a free function.
std::string record_response(const BackendConfig& replay_config,
                            const ModelRequest& request,
                            const ModelResponse& response);

}  // namespace derm::backends
