/*
 * Copyright 2026 The recoverr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/** @file backend.hpp
 *
 * Remote model backends and the caching call path.
 *
 * ModelClient::call serves a request from the disk cache when possible,
 * otherwise from an identical request already in flight, otherwise from the
 * backend under a bounded number of concurrent calls.
 */

#ifndef RECOVERR_MODELIO_BACKEND_HPP_
#define RECOVERR_MODELIO_BACKEND_HPP_

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/modelio/cache.hpp"
#include "recoverr/modelio/wire.hpp"

namespace recoverr::modelio {

struct BackendConfig {
  std::string id = "default";
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key_env;  // name of the variable holding the key; empty for none
  int timeout_ms = 60000;
  int max_retries = 3;
  int retry_backoff_ms = 250;
  int parallelism = 4;
  bool multimodal = false;
};

inline void to_json(nlohmann::json& j, const BackendConfig& c) {
  j = nlohmann::json{{"id", c.id},
                     {"base_url", c.base_url},
                     {"model", c.model},
                     {"api_key_env", c.api_key_env},
                     {"timeout_ms", c.timeout_ms},
                     {"max_retries", c.max_retries},
                     {"retry_backoff_ms", c.retry_backoff_ms},
                     {"parallelism", c.parallelism},
                     {"multimodal", c.multimodal}};
}

inline void from_json(const nlohmann::json& j, BackendConfig& c) {
  c.id = j.value("id", c.id);
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.retry_backoff_ms = j.value("retry_backoff_ms", c.retry_backoff_ms);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.multimodal = j.value("multimodal", c.multimodal);
}

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual ClientReply complete(const ClientRequest& request) = 0;
};

inline std::string image_mime(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

/// base_url split into scheme://host[:port] and the path prefix.
struct ParsedUrl {
  std::string origin;
  std::string path;
};

inline ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

/// Chat-completion endpoint at {base_url}/chat/completions.
class HttpChatBackend : public Backend {
 public:
  explicit HttpChatBackend(BackendConfig config)
      : config_(std::move(config)), url_(parse_base_url(config_.base_url)) {
    if (config_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
  }

  std::string id() const override { return config_.id; }

  ClientReply complete(const ClientRequest& request) override {
    const bool vlm_role = request.role == Role::kVlmAnswer || request.role == Role::kVlmVerify;
    std::optional<std::string> image;
    if (config_.multimodal && vlm_role) {
      if (!request.image_ref) throw InvalidInput("multimodal VLM request without image_ref");
      image = image_uri(*request.image_ref);
    }
    const std::string body = build_chat_request(request, config_.model, image).dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(config_.retry_backoff_ms * (1 << std::min(attempt - 1, 10))));
      }
      httplib::Client client(url_.origin);
      const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      auto res = client.Post(url_.path + "/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = "connection failed: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw TransportError(config_.id + ": HTTP " + std::to_string(res->status) + ": " +
                             res->body.substr(0, 200));
      }
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& ex) {
        throw TransportError(config_.id + ": malformed response: " + ex.what());
      }
      return parse_chat_response(parsed);
    }
    throw TransportError(config_.id + ": giving up after " +
                         std::to_string(config_.max_retries + 1) + " attempts (" + last_error +
                         ")");
  }

 private:
  static std::string image_uri(const std::string& ref) {
    if (ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0 ||
        ref.rfind("data:", 0) == 0) {
      return ref;
    }
    return "data:" + image_mime(ref) + ";base64," + base64_encode(read_file_bytes(ref));
  }

  BackendConfig config_;
  ParsedUrl url_;
  std::string api_key_;
};

/// Whether a role is scored by its yes/no logits.
inline bool requires_yes_no(Role role) {
  return role == Role::kVlmVerify || role == Role::kNli || role == Role::kJudge;
}

/// Cached, de-duplicated and concurrency-limited access to one backend.
class ModelClient {
 public:
  ModelClient(std::shared_ptr<Backend> backend, std::optional<std::filesystem::path> cache_dir,
              int parallelism)
      : backend_(std::move(backend)),
        slots_(std::clamp(parallelism, 1, kMaxParallelism)) {
    if (!backend_) throw InvalidInput("ModelClient: null backend");
    if (cache_dir) cache_.emplace(*cache_dir);
  }

  ClientReply call(const ClientRequest& request) {
    if (request.prompt.empty()) throw InvalidInput("ClientRequest: empty prompt");
    const CacheKey key = CacheKey::of(backend_->id(), request);
    const std::string digest = key.digest();

    std::shared_future<ClientReply> pending;
    std::promise<ClientReply> promise;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (auto it = memo_.find(digest); it != memo_.end()) return checked(request, it->second);
      if (cache_) {
        if (auto hit = cache_->load(key)) {
          memo_.emplace(digest, *hit);
          return checked(request, *hit);
        }
      }
      if (auto it = inflight_.find(digest); it != inflight_.end()) {
        pending = it->second;
      } else {
        pending = promise.get_future().share();
        inflight_.emplace(digest, pending);
        owner = true;
      }
    }
    if (!owner) return checked(request, pending.get());

    ClientReply fetched;
    try {
      slots_.acquire();
      ClientReply reply;
      try {
        reply = backend_->complete(request);
      } catch (...) {
        slots_.release();
        throw;
      }
      slots_.release();
      ++network_calls_;
      if (cache_) cache_->store(key, request, reply);
      {
        std::lock_guard<std::mutex> lock(mu_);
        memo_.emplace(digest, reply);
        inflight_.erase(digest);
      }
      promise.set_value(reply);
      fetched = std::move(reply);
    } catch (...) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        inflight_.erase(digest);
      }
      promise.set_exception(std::current_exception());
      throw;
    }
    return checked(request, std::move(fetched));
  }

  std::size_t network_calls() const { return network_calls_.load(); }
  const std::string backend_id() const { return backend_->id(); }

 private:
  static constexpr int kMaxParallelism = 256;

  static ClientReply checked(const ClientRequest& request, ClientReply reply) {
    if (request.want_logprobs && requires_yes_no(request.role) && !reply.yes_no_logits) {
      if (reply.first_top_logprobs.empty()) {
        throw CapabilityError(std::string("backend returned no log-probabilities for role ") +
                              to_string(request.role));
      }
      reply.yes_no_logits = extract_yes_no_logits(reply.first_top_logprobs);
    }
    return reply;
  }

  std::shared_ptr<Backend> backend_;
  std::optional<DiskCache> cache_;
  std::counting_semaphore<kMaxParallelism> slots_;
  std::mutex mu_;
  std::unordered_map<std::string, ClientReply> memo_;
  std::unordered_map<std::string, std::shared_future<ClientReply>> inflight_;
  std::atomic<std::size_t> network_calls_{0};
};

}  // namespace recoverr::modelio

#endif  // RECOVERR_MODELIO_BACKEND_HPP_
