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

/** @file wire.hpp
 *
 * Requests and replies of the HTTP JSON chat-completion protocol, with the
 * per-token log-probability option. Also extracts the "yes"/"no" logits of
 * the first generated position, which verification and entailment prompts
 * are scored by.
 */

#ifndef RECOVERR_MODELIO_WIRE_HPP_
#define RECOVERR_MODELIO_WIRE_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/error.hpp"
#include "recoverr/modelio/prompts.hpp"

namespace recoverr::modelio {

struct DecodeParams {
  double temperature = 0.0;
  int max_tokens = 32;
  int top_logprobs = 20;
  std::uint64_t seed = 0;

  friend bool operator==(const DecodeParams&, const DecodeParams&) = default;
};

struct ClientRequest {
  Role role = Role::kVlmAnswer;
  std::string prompt;
  std::optional<std::string> image_ref;
  DecodeParams decode;
  bool want_logprobs = false;
};

struct TokenProb {
  std::string token;
  double probability = 0.0;

  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

using TopLogprobs = std::vector<std::pair<std::string, double>>;

struct ClientReply {
  std::string text;
  std::vector<TokenProb> token_probs;
  TopLogprobs first_top_logprobs;
  std::optional<VerificationLogits> yes_no_logits;

  friend bool operator==(const ClientReply&, const ClientReply&) = default;
};

namespace detail {

inline double log_sum_exp(const std::vector<double>& xs) {
  const double m = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// "Yes", " yes", "▁yes" and "Ġyes" all name the same answer.
inline std::string canonical_token(const std::string& token) {
  std::string_view t = token;
  for (;;) {
    if (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) {
      t.remove_prefix(1);
    } else if (t.rfind("\xE2\x96\x81", 0) == 0) {
      t.remove_prefix(3);
    } else if (t.rfind("\xC4\xA0", 0) == 0) {
      t.remove_prefix(2);
    } else {
      break;
    }
  }
  while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.remove_suffix(1);
  std::string out(t);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Log-sum-exp of the "yes" variants and of the "no" variants among the
/// first position's top log-probabilities. When only one class appears, the
/// other is assigned the smallest listed log-probability (an upper bound on
/// its true value).
inline VerificationLogits extract_yes_no_logits(const TopLogprobs& top) {
  std::vector<double> yes;
  std::vector<double> no;
  double floor = std::numeric_limits<double>::infinity();
  for (const auto& [token, logprob] : top) {
    if (!std::isfinite(logprob)) continue;
    floor = std::min(floor, logprob);
    const std::string c = detail::canonical_token(token);
    if (c == "yes") yes.push_back(logprob);
    if (c == "no") no.push_back(logprob);
  }
  if (yes.empty() && no.empty()) {
    throw CapabilityError("top log-probabilities contain neither 'yes' nor 'no'");
  }
  VerificationLogits out;
  out.logit_yes = yes.empty() ? floor : detail::log_sum_exp(yes);
  out.logit_no = no.empty() ? floor : detail::log_sum_exp(no);
  return out;
}

inline nlohmann::json build_chat_request(const ClientRequest& request, const std::string& model,
                                         const std::optional<std::string>& image_data_uri) {
  nlohmann::json content;
  if (image_data_uri) {
    content = nlohmann::json::array(
        {{{"type", "text"}, {"text", request.prompt}},
         {{"type", "image_url"}, {"image_url", {{"url", *image_data_uri}}}}});
  } else {
    content = request.prompt;
  }
  nlohmann::json body{{"model", model},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
                      {"temperature", request.decode.temperature},
                      {"max_tokens", request.decode.max_tokens},
                      {"seed", request.decode.seed}};
  if (request.want_logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = request.decode.top_logprobs;
  }
  return body;
}

/// Reads choices[0] of a chat-completion response.
inline ClientReply parse_chat_response(const nlohmann::json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw TransportError("chat response has no choices");
  }
  const auto& choice = body["choices"][0];
  ClientReply reply;
  if (choice.contains("message") && choice["message"].contains("content") &&
      choice["message"]["content"].is_string()) {
    reply.text = choice["message"]["content"].get<std::string>();
  } else if (choice.contains("text") && choice["text"].is_string()) {
    reply.text = choice["text"].get<std::string>();
  }
  if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
      choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
    const auto& content = choice["logprobs"]["content"];
    for (std::size_t i = 0; i < content.size(); ++i) {
      const auto& pos = content[i];
      reply.token_probs.push_back(
          TokenProb{pos.value("token", std::string{}), std::exp(pos.value("logprob", -1e9))});
      if (i == 0 && pos.contains("top_logprobs") && pos["top_logprobs"].is_array()) {
        for (const auto& alt : pos["top_logprobs"]) {
          reply.first_top_logprobs.emplace_back(alt.value("token", std::string{}),
                                                alt.value("logprob", -1e9));
        }
      }
    }
  }
  if (!reply.first_top_logprobs.empty()) {
    try {
      reply.yes_no_logits = extract_yes_no_logits(reply.first_top_logprobs);
    } catch (const CapabilityError&) {
      // left unset
    }
  }
  return reply;
}

inline void to_json(nlohmann::json& j, const ClientReply& r) {
  auto probs = nlohmann::json::array();
  for (const auto& tp : r.token_probs) probs.push_back({tp.token, tp.probability});
  auto top = nlohmann::json::array();
  for (const auto& [tok, lp] : r.first_top_logprobs) top.push_back({tok, lp});
  j = nlohmann::json{{"text", r.text},
                     {"token_probs", probs},
                     {"first_top_logprobs", top},
                     {"yes_no_logits",
                      r.yes_no_logits ? nlohmann::json(*r.yes_no_logits) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, ClientReply& r) {
  j.at("text").get_to(r.text);
  r.token_probs.clear();
  for (const auto& tp : j.at("token_probs")) {
    r.token_probs.push_back(TokenProb{tp.at(0).get<std::string>(), tp.at(1).get<double>()});
  }
  r.first_top_logprobs.clear();
  for (const auto& t : j.at("first_top_logprobs")) {
    r.first_top_logprobs.emplace_back(t.at(0).get<std::string>(), t.at(1).get<double>());
  }
  if (j.at("yes_no_logits").is_null()) {
    r.yes_no_logits.reset();
  } else {
    r.yes_no_logits = j.at("yes_no_logits").get<VerificationLogits>();
  }
}

inline void to_json(nlohmann::json& j, const ClientRequest& r) {
  j = nlohmann::json{{"role", to_string(r.role)},
                     {"prompt", r.prompt},
                     {"image_ref", r.image_ref ? nlohmann::json(*r.image_ref) : nullptr},
                     {"temperature", r.decode.temperature},
                     {"max_tokens", r.decode.max_tokens},
                     {"top_logprobs", r.decode.top_logprobs},
                     {"seed", r.decode.seed},
                     {"want_logprobs", r.want_logprobs}};
}

}  // namespace recoverr::modelio

#endif  // RECOVERR_MODELIO_WIRE_HPP_
