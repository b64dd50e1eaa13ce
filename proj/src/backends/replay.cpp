#include "derm/replay.hpp"

#include <fstream>

namespace derm::backends {

using nlohmann::json;

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) raise(ErrorCode::config, "replay store requires a directory");
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) raise(ErrorCode::io, "cannot create replay directory " + dir_.string());
}

std::filesystem::path ReplayStore::entry_path(const std::string& fingerprint) const {
  return dir_ / (fingerprint + ".json");
}

std::optional<ModelResponse> ReplayStore::lookup(const std::string& fingerprint) const {
  std::lock_guard lk(mu_);
  const auto path = entry_path(fingerprint);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    raise(ErrorCode::integrity, "corrupt replay entry " + path.string() + ": " + e.what());
  }
  if (j.value("fingerprint", "") != fingerprint) {
    raise(ErrorCode::integrity, "replay entry " + path.string() + " fingerprint mismatch");
  }
  const auto& r = j.at("response");
  ModelResponse resp;
  resp.text = r.value("text", "");
  resp.finish_reason = r.value("finish_reason", "stop");
  resp.latency_ms = r.value("latency_ms", 0);
  resp.request_fingerprint = fingerprint;
  return resp;
}

std::string ReplayStore::store(const ModelRequest& request, const ModelResponse& response) {
  const std::string fingerprint = request_fingerprint(request);
  json entry;
  entry["fingerprint"] = fingerprint;
  entry["request"] = canonical_request(request);
  entry["response"] = {{"text", response.text},
                       {"finish_reason", response.finish_reason},
                       {"latency_ms", response.latency_ms}};
  const std::string serialized = entry.dump(2) + "\n";

  std::lock_guard lk(mu_);
  const auto path = entry_path(fingerprint);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    json existing;
    try {
      in >> existing;
    } catch (const std::exception& e) {
      raise(ErrorCode::integrity, "corrupt replay entry " + path.string() + ": " + e.what());
    }
    // Latency is incidental; identity is the request plus the response text.
    const auto& old_resp = existing.value("response", json::object());
    if (existing.value("fingerprint", "") == fingerprint &&
        existing.value("request", json::object()) == entry["request"] &&
        old_resp.value("text", "") == response.text &&
        old_resp.value("finish_reason", "") == response.finish_reason) {
      return fingerprint;  // idempotent re-record
    }
    raise(ErrorCode::integrity,
          "conflicting content for replay fingerprint " + fingerprint);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::io, "cannot write replay entry " + path.string());
  out << serialized;
  return fingerprint;
}

std::string record_response(const BackendConfig& replay_config, const ModelRequest& request,
                            const ModelResponse& response) {
  if (replay_config.replay_path.empty()) {
    raise(ErrorCode::config, "record requires a replay_path");
  }
  ReplayStore store(replay_config.replay_path);
  return store.store(request, response);
}

}  // namespace derm::backends
