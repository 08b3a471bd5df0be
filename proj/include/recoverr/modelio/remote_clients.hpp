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

#ifndef RECOVERR_MODELIO_REMOTE_CLIENTS_HPP_
#define RECOVERR_MODELIO_REMOTE_CLIENTS_HPP_

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/modelio/backend.hpp"
#include "recoverr/modelio/clients.hpp"
#include "recoverr/modelio/prompts.hpp"

namespace recoverr::modelio {

namespace detail {

inline std::string first_line(const std::string& text) {
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = trim(std::string_view(text).substr(start, end - start));
    if (!line.empty()) return line;
    start = end + 1;
  }
  return "";
}

}  // namespace detail

struct RemoteVlmOptions {
  int answer_max_tokens = 16;
  int top_logprobs = 20;
  std::uint64_t seed = 0;
};

/// Answers with the short-answer prompt, then scores the answer with the
/// yes/no verification prompt.
class RemoteVlm : public VisionLanguageModel {
 public:
  explicit RemoteVlm(ModelClient& client, RemoteVlmOptions options = {})
      : client_(client), options_(options) {}

  VlmAnswer answer(const std::string& image_ref, const std::string& question) override {
    ClientRequest ask;
    ask.role = Role::kVlmAnswer;
    ask.prompt = render_prompt(Role::kVlmAnswer, {{"question", question}});
    ask.image_ref = image_ref;
    ask.decode = DecodeParams{0.0, options_.answer_max_tokens, options_.top_logprobs, options_.seed};
    ask.want_logprobs = true;
    const ClientReply answered = client_.call(ask);

    VlmAnswer out;
    out.text = detail::first_line(answered.text);
    for (const auto& tp : answered.token_probs) out.token_probs.push_back(tp.probability);
    out.transcripts.push_back(Transcript{to_string(Role::kVlmAnswer), ask.prompt, answered.text});

    ClientRequest verify;
    verify.role = Role::kVlmVerify;
    verify.prompt = render_prompt(Role::kVlmVerify, {{"question", question}, {"answer", out.text}});
    verify.image_ref = image_ref;
    verify.decode = DecodeParams{0.0, 1, options_.top_logprobs, options_.seed};
    verify.want_logprobs = true;
    const ClientReply verified = client_.call(verify);
    out.logits = *verified.yes_no_logits;
    out.transcripts.push_back(Transcript{to_string(Role::kVlmVerify), verify.prompt, verified.text});
    return out;
  }

 private:
  ModelClient& client_;
  RemoteVlmOptions options_;
};

struct RemoteQgenOptions {
  double temperature = 1.0;
  int max_tokens = 256;
  std::uint64_t seed = 0;
};

/// Sub-question generation with the decomposition prompt. The caption, when
/// known, is the first line of the evidence block. The seed advances with
/// the number of questions already asked, so each turn samples afresh while
/// staying reproducible.
class RemoteQgen : public QuestionGenerator {
 public:
  explicit RemoteQgen(ModelClient& client, RemoteQgenOptions options = {})
      : client_(client), options_(options) {}

  QgenResult generate(const QgenRequest& request) override {
    std::vector<std::string> lines;
    if (request.caption) lines.push_back(*request.caption);
    lines.insert(lines.end(), request.known_evidence.begin(), request.known_evidence.end());
    ClientRequest req;
    req.role = Role::kQgen;
    req.prompt = render_prompt(Role::kQgen, {{"evidence_block", evidence_block(lines)},
                                             {"question", request.question},
                                             {"answer", request.answer},
                                             {"k", std::to_string(request.k)}});
    req.decode = DecodeParams{options_.temperature, options_.max_tokens, 0,
                              options_.seed + request.asked.size()};
    const ClientReply reply = client_.call(req);

    QgenResult out;
    for (auto& q : parse_subquestions(reply.text, request.k)) {
      if (std::find(request.asked.begin(), request.asked.end(), q) == request.asked.end()) {
        out.questions.push_back(std::move(q));
      }
    }
    out.transcript = Transcript{to_string(Role::kQgen), req.prompt, reply.text};
    return out;
  }

 private:
  ModelClient& client_;
  RemoteQgenOptions options_;
};

class RemoteParaphraser : public Paraphraser {
 public:
  explicit RemoteParaphraser(ModelClient& client, int max_tokens = 64)
      : client_(client), max_tokens_(max_tokens) {}

  Paraphrase paraphrase(const std::string& question, const std::string& answer) override {
    ClientRequest req;
    req.role = Role::kParaphrase;
    req.prompt = render_prompt(Role::kParaphrase, {{"question", question}, {"answer", answer}});
    req.decode = DecodeParams{0.0, max_tokens_, 0, 0};
    const ClientReply reply = client_.call(req);
    return Paraphrase{detail::first_line(reply.text),
                      Transcript{to_string(Role::kParaphrase), req.prompt, reply.text}};
  }

 private:
  ModelClient& client_;
  int max_tokens_;
};

/// Entailment probability: the normalized "yes" mass of the NLI prompt.
class RemoteNli : public NliModel {
 public:
  explicit RemoteNli(ModelClient& client, int top_logprobs = 20)
      : client_(client), top_logprobs_(top_logprobs) {}

  Entailment entail(const std::string& premise, const std::string& hypothesis) override {
    ClientRequest req;
    req.role = Role::kNli;
    req.prompt = render_prompt(Role::kNli, {{"premise", premise}, {"hypothesis", hypothesis}});
    req.decode = DecodeParams{0.0, 1, top_logprobs_, 0};
    req.want_logprobs = true;
    const ClientReply reply = client_.call(req);
    return Entailment{confidence::self_prompt_confidence(*reply.yes_no_logits).value(),
                      Transcript{to_string(Role::kNli), req.prompt, reply.text}};
  }

 private:
  ModelClient& client_;
  int top_logprobs_;
};

/// Asks the VLM for a caption and reports it as the single tool statement.
class VlmCaptionTool : public VisionTool {
 public:
  explicit VlmCaptionTool(ModelClient& client, std::string prompt = "A short image caption:")
      : client_(client), prompt_(std::move(prompt)) {}

  std::string name() const override { return "vlm_caption"; }

  ToolOutput describe(const std::string& image_ref) override {
    ClientRequest req;
    req.role = Role::kVlmAnswer;
    req.prompt = prompt_;
    req.image_ref = image_ref;
    req.decode = DecodeParams{0.0, 48, 0, 0};
    const std::string caption = detail::first_line(client_.call(req).text);
    ToolOutput out;
    if (!caption.empty()) {
      out.statements.push_back(caption);
      out.caption = caption;
    }
    return out;
  }

 private:
  ModelClient& client_;
  std::string prompt_;
};

/// Precomputed tool output read from line-delimited records
/// {"image": ..., "statements": [...], "caption": ...}.
class StaticEvidenceTool : public VisionTool {
 public:
  StaticEvidenceTool(std::string name, const std::filesystem::path& path) : name_(std::move(name)) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tool evidence file " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (detail::trim(line).empty()) continue;
      const auto j = nlohmann::json::parse(line);
      ToolOutput out;
      out.statements = j.value("statements", std::vector<std::string>{});
      if (j.contains("caption") && j["caption"].is_string()) out.caption = j["caption"].get<std::string>();
      by_image_[j.at("image").get<std::string>()] = std::move(out);
    }
  }

  std::string name() const override { return name_; }

  ToolOutput describe(const std::string& image_ref) override {
    const auto it = by_image_.find(image_ref);
    return it == by_image_.end() ? ToolOutput{} : it->second;
  }

 private:
  std::string name_;
  std::map<std::string, ToolOutput> by_image_;
};

/// Yes-probability of the answer-equivalence prompt.
class RemoteJudge {
 public:
  explicit RemoteJudge(ModelClient& client) : client_(client) {}

  double judge(const std::string& question, const std::vector<std::string>& references,
               const std::string& answer) {
    std::string joined;
    for (const auto& r : references) {
      if (!joined.empty()) joined += "; ";
      joined += r;
    }
    ClientRequest req;
    req.role = Role::kJudge;
    req.prompt = render_prompt(Role::kJudge,
                               {{"question", question}, {"references", joined}, {"answer", answer}});
    req.decode = DecodeParams{0.0, 1, 20, 0};
    req.want_logprobs = true;
    return confidence::self_prompt_confidence(*client_.call(req).yes_no_logits).value();
  }

 private:
  ModelClient& client_;
};

}  // namespace recoverr::modelio

#endif  // RECOVERR_MODELIO_REMOTE_CLIENTS_HPP_
