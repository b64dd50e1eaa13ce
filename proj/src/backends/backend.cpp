#include "derm/backend.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "derm/replay.hpp"

namespace derm::backends {

namespace {

using nlohmann::json;

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::io, "cannot read file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kTable[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kTable[(v >> 18) & 63]);
    out.push_back(kTable[(v >> 12) & 63]);
    out.push_back(kTable[(v >> 6) & 63]);
    out.push_back(kTable[v & 63]);
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(kTable[(v >> 18) & 63]);
    out.push_back(kTable[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(kTable[(v >> 18) & 63]);
    out.push_back(kTable[(v >> 12) & 63]);
    out.push_back(kTable[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

std::string image_mime(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

// Runtime-sized counting semaphore; std::counting_semaphore needs a compile
// time bound.
class Limiter {
 public:
  explicit Limiter(int slots) : slots_(slots) {}

  void acquire() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return slots_ > 0; });
    --slots_;
  }
  void release() {
    {
      std::lock_guard lk(mu_);
      ++slots_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int slots_;
};

struct LimiterGuard {
  explicit LimiterGuard(Limiter& l) : limiter(l) { limiter.acquire(); }
  ~LimiterGuard() { limiter.release(); }
  Limiter& limiter;
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.script_path.empty()) {
      std::ifstream in(cfg_.script_path);
      if (!in) raise(ErrorCode::config, "mock script not readable: " + cfg_.script_path);
      json j;
      try {
        in >> j;
      } catch (const std::exception& e) {
        raise(ErrorCode::config, "mock script parse failure: " + std::string(e.what()));
      }
      if (!j.is_object()) {
        raise(ErrorCode::config, "mock script must be a JSON object: " + cfg_.script_path);
      }
      for (const auto& rule : j.value("rules", json::array())) {
        Rule r;
        r.fingerprint = rule.value("fingerprint", "");
        r.prompt_contains = rule.value("prompt_contains", "");
        r.image_contains = rule.value("image_contains", "");
        r.model = rule.value("model", "");
        r.response = rule.value("response", "");
        r.finish_reason = rule.value("finish_reason", "stop");
        rules_.push_back(std::move(r));
      }
      default_response_ = j.value("default", "");
    }
  }

  ModelResponse complete(const ModelRequest& request) override {
    ++calls_;
    ModelResponse resp;
    resp.request_fingerprint = request_fingerprint(request);
    resp.finish_reason = "stop";
    std::string all_text;
    std::string all_images;
    for (const auto& m : request.messages) {
      all_text += m.text;
      all_text += '\n';
      all_images += m.image_ref;
      all_images += '\n';
    }
    for (const auto& r : rules_) {
      if (!r.fingerprint.empty() && r.fingerprint != resp.request_fingerprint) continue;
      if (!r.model.empty() && r.model != request.model_id) continue;
      if (!r.prompt_contains.empty() && all_text.find(r.prompt_contains) == std::string::npos) {
        continue;
      }
      if (!r.image_contains.empty() &&
          all_images.find(r.image_contains) == std::string::npos) {
        continue;
      }
      if (r.fingerprint.empty() && r.prompt_contains.empty() && r.image_contains.empty() &&
          r.model.empty()) {
        continue;
      }
      resp.text = r.response;
      resp.finish_reason = r.finish_reason;
      return resp;
    }
    if (!default_response_.empty()) {
      resp.text = default_response_;
    } else {
      resp.text = "mock response " + resp.request_fingerprint.substr(0, 16) + " for " +
                  request.model_id;
    }
    return resp;
  }

  const BackendConfig& config() const override { return cfg_; }
  std::int64_t calls() const override { return calls_; }

 private:
  struct Rule {
    std::string fingerprint;
    std::string prompt_contains;
    std::string image_contains;
    std::string model;
    std::string response;
    std::string finish_reason;
  };

  BackendConfig cfg_;
  std::vector<Rule> rules_;
  std::string default_response_;
  std::atomic<std::int64_t> calls_{0};
};

class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(BackendConfig cfg)
      : cfg_(std::move(cfg)), store_(cfg_.replay_path) {
    if (cfg_.record) {
      if (!cfg_.upstream) {
        raise(ErrorCode::config, "replay record mode requires an upstream backend");
      }
      upstream_ = make_backend(*cfg_.upstream);
    }
  }

  ModelResponse complete(const ModelRequest& request) override {
    ++calls_;
    const std::string fp = request_fingerprint(request);
    if (auto hit = store_.lookup(fp)) {
      hit->request_fingerprint = fp;
      return *hit;
    }
    if (upstream_) {
      ModelResponse fresh = upstream_->complete(request);
      fresh.request_fingerprint = fp;
      store_.store(request, fresh);
      return fresh;
    }
    raise(ErrorCode::cache_miss, "replay cache miss for fingerprint " + fp);
  }

  const BackendConfig& config() const override { return cfg_; }
  std::int64_t calls() const override { return calls_; }

 private:
  BackendConfig cfg_;
  ReplayStore store_;
  std::unique_ptr<Backend> upstream_;
  std::atomic<std::int64_t> calls_{0};
};

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // leading path, possibly empty
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    raise(ErrorCode::config, "endpoint URL missing scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(BackendConfig cfg)
      : cfg_(std::move(cfg)), limiter_(cfg_.max_concurrency) {}

  ModelResponse complete(const ModelRequest& request) override {
    ++calls_;
    const char* key = std::getenv(cfg_.auth_env_var.c_str());
    if (key == nullptr || *key == '\0') {
      raise(ErrorCode::config, "auth environment variable " + cfg_.auth_env_var + " is unset");
    }
    const std::string fp = request_fingerprint(request);
    const std::string body = build_body(request);
    const ParsedUrl url = split_url(cfg_.endpoint);
    std::string path = url.path;
    if (path.find("/chat/completions") == std::string::npos) {
      if (!path.empty() && path.back() == '/') path.pop_back();
      path += "/chat/completions";
    }

    LimiterGuard guard(limiter_);
    std::vector<std::string> attempt_log;
    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
      httplib::Client client(url.base);
      client.set_connection_timeout(10, 0);
      client.set_read_timeout(120, 0);
      client.set_bearer_token_auth(key);
      auto res = client.Post(path, body, "application/json");
      if (!res) {
        attempt_log.push_back("attempt " + std::to_string(attempt) + ": transport error " +
                              httplib::to_string(res.error()));
      } else if (res->status == 429 || res->status >= 500) {
        attempt_log.push_back("attempt " + std::to_string(attempt) + ": HTTP " +
                              std::to_string(res->status));
      } else if (res->status >= 200 && res->status < 300) {
        ModelResponse out = parse_body(res->body, fp);
        out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
        return out;
      } else {
        // Non-retryable client error.
        raise(ErrorCode::transport, "HTTP " + std::to_string(res->status) + " from " +
                                        cfg_.endpoint + ": " + res->body.substr(0, 512));
      }
      if (attempt < cfg_.retry.max_attempts) backoff(attempt);
    }
    std::string log;
    for (const auto& line : attempt_log) {
      log += "; ";
      log += line;
    }
    raise(ErrorCode::transport,
          "exhausted " + std::to_string(cfg_.retry.max_attempts) + " attempts" + log);
  }

  const BackendConfig& config() const override { return cfg_; }
  std::int64_t calls() const override { return calls_; }

 private:
  std::string build_body(const ModelRequest& request) const {
    json messages = json::array();
    for (const auto& m : request.messages) {
      json msg;
      msg["role"] = m.role;
      if (m.image_ref.empty()) {
        msg["content"] = m.text;
      } else {
        const std::filesystem::path path(m.image_ref);
        const std::string bytes = read_file_bytes(path);
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", m.text}});
        parts.push_back(
            {{"type", "image_url"},
             {"image_url",
              {{"url", "data:" + image_mime(path) + ";base64," + base64_encode(bytes)}}}});
        msg["content"] = std::move(parts);
      }
      messages.push_back(std::move(msg));
    }
    json body;
    body["model"] = request.model_id;
    body["messages"] = std::move(messages);
    body["temperature"] = request.sampling.temperature;
    body["max_tokens"] = request.sampling.max_output_tokens;
    if (request.sampling.seed) body["seed"] = *request.sampling.seed;
    return body.dump();
  }

  static ModelResponse parse_body(const std::string& body, const std::string& fp) {
    json j;
    try {
      j = json::parse(body);
    } catch (const std::exception& e) {
      raise(ErrorCode::transport, "malformed completion body: " + std::string(e.what()));
    }
    if (!j.contains("choices") || j["choices"].empty()) {
      raise(ErrorCode::transport, "completion body without choices");
    }
    const auto& choice = j["choices"][0];
    ModelResponse out;
    out.text = choice.value("message", json::object()).value("content", "");
    out.finish_reason = choice.value("finish_reason", "stop");
    out.request_fingerprint = fp;
    return out;
  }

  void backoff(int attempt) const {
    const double window =
        static_cast<double>(cfg_.retry.base_backoff_ms) * static_cast<double>(1 << (attempt - 1));
    thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double jitter = std::clamp(cfg_.retry.jitter, 0.0, 1.0);
    const double delay = window * (1.0 - jitter) + window * jitter * uni(rng);
    std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<std::int64_t>(delay)));
  }

  BackendConfig cfg_;
  Limiter limiter_;
  std::atomic<std::int64_t> calls_{0};
};

}  // namespace

void BackendConfig::validate() const {
  if (max_concurrency < 1) raise(ErrorCode::config, "max_concurrency must be positive");
  if (retry.max_attempts < 1) raise(ErrorCode::config, "retry.max_attempts must be positive");
  switch (kind) {
    case BackendKind::remote:
      if (endpoint.empty()) raise(ErrorCode::config, "remote backend requires an endpoint");
      if (auth_env_var.empty()) {
        raise(ErrorCode::config, "remote backend requires auth_env_var");
      }
      break;
    case BackendKind::replay:
      if (replay_path.empty()) raise(ErrorCode::config, "replay backend requires replay_path");
      if (record && !upstream) {
        raise(ErrorCode::config, "replay record mode requires an upstream backend");
      }
      break;
    case BackendKind::mock:
      break;
  }
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::mock: return "mock";
    case BackendKind::replay: return "replay";
    case BackendKind::remote: return "remote";
  }
  return "mock";
}

BackendConfig backend_config_from_json(const nlohmann::json& j) {
  BackendConfig cfg;
  const std::string kind = j.value("kind", "mock");
  if (kind == "mock") {
    cfg.kind = BackendKind::mock;
  } else if (kind == "replay") {
    cfg.kind = BackendKind::replay;
  } else if (kind == "remote") {
    cfg.kind = BackendKind::remote;
  } else {
    raise(ErrorCode::config, "unknown backend kind '" + kind + "'");
  }
  cfg.model_id = j.value("model_id", "default");
  cfg.endpoint = j.value("endpoint", "");
  cfg.auth_env_var = j.value("auth_env_var", "");
  cfg.max_concurrency = j.value("max_concurrency", 4);
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    cfg.retry.max_attempts = r.value("max_attempts", 3);
    cfg.retry.base_backoff_ms = r.value("base_backoff_ms", 250);
    cfg.retry.jitter = r.value("jitter", 1.0);
  }
  cfg.replay_path = j.value("replay_path", "");
  cfg.record = j.value("record", false);
  cfg.script_path = j.value("script_path", "");
  if (j.contains("upstream")) {
    cfg.upstream = std::make_shared<BackendConfig>(backend_config_from_json(j["upstream"]));
  }
  cfg.validate();
  return cfg;
}

nlohmann::json backend_config_to_json(const BackendConfig& cfg) {
  nlohmann::json j;
  j["kind"] = std::string(to_string(cfg.kind));
  j["model_id"] = cfg.model_id;
  if (!cfg.endpoint.empty()) j["endpoint"] = cfg.endpoint;
  if (!cfg.auth_env_var.empty()) j["auth_env_var"] = cfg.auth_env_var;
  j["max_concurrency"] = cfg.max_concurrency;
  j["retry"] = {{"max_attempts", cfg.retry.max_attempts},
                {"base_backoff_ms", cfg.retry.base_backoff_ms},
                {"jitter", cfg.retry.jitter}};
  if (!cfg.replay_path.empty()) j["replay_path"] = cfg.replay_path;
  if (cfg.record) j["record"] = true;
  if (!cfg.script_path.empty()) j["script_path"] = cfg.script_path;
  if (cfg.upstream) j["upstream"] = backend_config_to_json(*cfg.upstream);
  return j;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  config.validate();
  switch (config.kind) {
    case BackendKind::mock: return std::make_unique<MockBackend>(config);
    case BackendKind::replay: return std::make_unique<ReplayBackend>(config);
    case BackendKind::remote: return std::make_unique<RemoteBackend>(config);
  }
  raise(ErrorCode::internal, "unreachable backend kind");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    raise(ErrorCode::internal, "sha256 digest failure");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file_hex(const std::filesystem::path& path) {
  return sha256_hex(read_file_bytes(path));
}

nlohmann::json canonical_request(const ModelRequest& request) {
  // json object keys are sorted, which makes the dump canonical.
  json messages = json::array();
  for (const auto& m : request.messages) {
    json msg;
    msg["role"] = m.role;
    msg["text"] = m.text;
    if (!m.image_ref.empty()) {
      msg["image_sha256"] = sha256_file_hex(m.image_ref);
    }
    messages.push_back(std::move(msg));
  }
  json sampling;
  sampling["temperature"] = request.sampling.temperature;
  sampling["max_output_tokens"] = request.sampling.max_output_tokens;
  if (request.sampling.seed) {
    sampling["seed"] = *request.sampling.seed;
  } else {
    sampling["seed"] = nullptr;
  }
  json j;
  j["model_id"] = request.model_id;
  j["messages"] = std::move(messages);
  j["sampling"] = std::move(sampling);
  return j;
}

std::string request_fingerprint(const ModelRequest& request) {
  return sha256_hex(canonical_request(request).dump());
}

}  // namespace derm::backends
