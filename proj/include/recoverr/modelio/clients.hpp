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

/** @file clients.hpp
 *
 * Abstract interfaces for every model the verifier consults. Remote
 * (HTTP) and simulated implementations both sit behind these.
 *
 * Implementations must be safe to call concurrently from several threads.
 */

#ifndef RECOVERR_MODELIO_CLIENTS_HPP_
#define RECOVERR_MODELIO_CLIENTS_HPP_

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"

namespace recoverr::modelio {

/// A rendered prompt and the raw reply it produced, kept for audit trails.
struct Transcript {
  std::string role;
  std::string prompt;
  std::string reply;

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

inline void to_json(nlohmann::json& j, const Transcript& t) {
  j = nlohmann::json{{"role", t.role}, {"prompt", t.prompt}, {"reply", t.reply}};
}

inline void from_json(const nlohmann::json& j, Transcript& t) {
  j.at("role").get_to(t.role);
  j.at("prompt").get_to(t.prompt);
  j.at("reply").get_to(t.reply);
}

struct VlmAnswer {
  std::string text;
  VerificationLogits logits;
  std::vector<double> token_probs;  // empty when the backend has none
  std::vector<Transcript> transcripts;
};

class VisionLanguageModel {
 public:
  virtual ~VisionLanguageModel() = default;
  /// Answers the question and reports the yes/no logits of the
  /// self-verification prompt for that answer.
  virtual VlmAnswer answer(const std::string& image_ref, const std::string& question) = 0;
};

struct QgenRequest {
  std::string image_ref;
  std::string question;
  std::string answer;
  std::optional<std::string> caption;
  std::vector<std::string> known_evidence;  // statements of the reliable pool
  std::vector<std::string> asked;           // sub-questions already posed in this run
  int k = 10;
};

struct QgenResult {
  std::vector<std::string> questions;
  std::optional<Transcript> transcript;
};

class QuestionGenerator {
 public:
  virtual ~QuestionGenerator() = default;
  virtual QgenResult generate(const QgenRequest& request) = 0;
};

struct Paraphrase {
  std::string statement;
  std::optional<Transcript> transcript;
};

class Paraphraser {
 public:
  virtual ~Paraphraser() = default;
  virtual Paraphrase paraphrase(const std::string& question, const std::string& answer) = 0;
};

struct Entailment {
  double probability = 0.0;
  std::optional<Transcript> transcript;
};

class NliModel {
 public:
  virtual ~NliModel() = default;
  /// Probability that the premise entails the hypothesis.
  virtual Entailment entail(const std::string& premise, const std::string& hypothesis) = 0;
};

class Negator {
 public:
  virtual ~Negator() = default;
  virtual std::string negate(const std::string& statement) = 0;
};

struct ToolOutput {
  std::vector<std::string> statements;
  std::optional<std::string> caption;
};

/// A vision model that reports what it sees as text statements.
class VisionTool {
 public:
  virtual ~VisionTool() = default;
  virtual std::string name() const = 0;
  virtual ToolOutput describe(const std::string& image_ref) = 0;
};

/// Non-owning bundle of the clients one verification run talks to.
struct ClientSet {
  VisionLanguageModel* vlm = nullptr;
  QuestionGenerator* qgen = nullptr;
  Paraphraser* paraphraser = nullptr;
  NliModel* nli = nullptr;
  Negator* negator = nullptr;
  std::vector<VisionTool*> tools;
};

}  // namespace recoverr::modelio

#endif  // RECOVERR_MODELIO_CLIENTS_HPP_
