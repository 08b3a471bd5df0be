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

#ifndef RECOVERR_MODELIO_CACHE_HPP_
#define RECOVERR_MODELIO_CACHE_HPP_

#include <openssl/evp.h>

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "recoverr/error.hpp"
#include "recoverr/modelio/wire.hpp"

namespace recoverr::modelio {

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

inline std::string base64_encode(std::string_view data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Digest of the image behind a reference: file contents when the reference
/// names a readable file, otherwise the reference string itself.
inline std::string image_digest(const std::optional<std::string>& image_ref) {
  if (!image_ref) return "";
  std::error_code ec;
  if (std::filesystem::is_regular_file(*image_ref, ec)) {
    return sha256_hex(read_file_bytes(*image_ref));
  }
  return sha256_hex(*image_ref);
}

/// Everything that determines a reply. Equal keys imply identical replies
/// for deterministic backends.
struct CacheKey {
  std::string backend;
  std::string role;
  std::string prompt_digest;
  std::string image_digest;
  DecodeParams decode;
  bool want_logprobs = false;

  static CacheKey of(const std::string& backend_id, const ClientRequest& request) {
    return CacheKey{backend_id,
                    to_string(request.role),
                    sha256_hex(request.prompt),
                    modelio::image_digest(request.image_ref),
                    request.decode,
                    request.want_logprobs};
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"backend", backend},
                          {"role", role},
                          {"prompt", prompt_digest},
                          {"image", image_digest},
                          {"temperature", decode.temperature},
                          {"max_tokens", decode.max_tokens},
                          {"top_logprobs", decode.top_logprobs},
                          {"seed", decode.seed},
                          {"want_logprobs", want_logprobs}};
  }

  /// Hex digest of the canonical JSON form.
  std::string digest() const { return sha256_hex(to_json().dump()); }
};

/// On-disk reply store: {dir}/{backend}/{first two hex chars}/{key}.rec.
/// Records are written once (temp file + rename) and never modified.
class DiskCache {
 public:
  explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path_for(const CacheKey& key) const {
    const std::string d = key.digest();
    return dir_ / sanitize(key.backend) / d.substr(0, 2) / (d + ".rec");
  }

  std::optional<ClientReply> load(const CacheKey& key) const {
    const auto path = path_for(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
      const auto record = nlohmann::json::parse(in);
      return record.at("reply").get<ClientReply>();
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

  void store(const CacheKey& key, const ClientRequest& request, const ClientReply& reply) const {
    const auto path = path_for(key);
    std::error_code ec;
    if (std::filesystem::exists(path, ec)) return;
    std::filesystem::create_directories(path.parent_path());
    nlohmann::json record{{"key", key.to_json()}, {"request", request}, {"reply", reply}};
    static std::atomic<std::uint64_t> counter{0};
    auto tmp = path;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) +
            "." + std::to_string(counter++);
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cache: cannot write " + tmp.string());
      out << record.dump();
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  static std::string sanitize(const std::string& s) {
    std::string out = s.empty() ? std::string("default") : s;
    for (auto& c : out) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    }
    return out;
  }

  std::filesystem::path dir_;
};

}  // namespace recoverr::modelio

#endif  // RECOVERR_MODELIO_CACHE_HPP_
