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

#ifndef RECOVERR_MODELIO_PROMPTS_HPP_
#define RECOVERR_MODELIO_PROMPTS_HPP_

#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "recoverr/error.hpp"

namespace recoverr::modelio {

enum class Role { kVlmAnswer, kVlmVerify, kQgen, kParaphrase, kNli, kJudge };

inline const char* to_string(Role role) {
  switch (role) {
    case Role::kVlmAnswer:
      return "vlm_answer";
    case Role::kVlmVerify:
      return "vlm_verify";
    case Role::kQgen:
      return "qgen";
    case Role::kParaphrase:
      return "paraphrase";
    case Role::kNli:
      return "nli";
    case Role::kJudge:
      return "judge";
  }
  return "unknown";
}

inline Role role_from_string(std::string_view s) {
  for (Role r : {Role::kVlmAnswer, Role::kVlmVerify, Role::kQgen, Role::kParaphrase, Role::kNli,
                 Role::kJudge}) {
    if (s == to_string(r)) return r;
  }
  throw InvalidInput("unknown role '" + std::string(s) + "'");
}

using Slots = std::map<std::string, std::string>;

namespace templates {

inline constexpr std::string_view kVlmAnswer = "Question: {question} Short answer:";

inline constexpr std::string_view kVlmVerify =
    "Question: {question}\n"
    "Answer: {answer}\n"
    "Is the given answer correct for the question? Answer yes or no:";

// {evidence_block} holds one evidence per line, each line newline-terminated.
inline constexpr std::string_view kQgen =
    "You are an AI assistant who has rich visual commonsense knowledge and strong reasoning "
    "abilities. You will be provided with:\n"
    "1. A target question about an image that you are trying to answer.\n"
    "2. Although you won't be able to directly view the image, you will receive a general "
    "caption that might not be entirely precise but will provide an overall description.\n"
    "3. You may receive some additional evidences about the image.\n"
    "Your goal is: To effectively analyze the image and select the correct answer for the "
    "question, you should break down the main question into several sub-questions that "
    "address the key aspects of the image.\n"
    "\n"
    "What you already know about the image:\n"
    "{evidence_block}"
    "\n"
    "Target question: {question}. Generate {k} sub-questions that might help you confirm "
    "whether the answer to the target question is '{answer}'.\n"
    "Here are the rules you should follow when listing the sub-questions:\n"
    "1. Ensure that each sub-question is independent. It means the latter sub-questions "
    "shouldn't mention previous sub-questions.\n"
    "2. The sub-questions should be separated by a newline character.\n"
    "3. Each sub-question should start with \"What\" or \"Is\".\n"
    "4. Each sub-question should be short (less than 10 words) and easy to understand.\n"
    "5. The sub-question are necessary to distinguish the correct answer.";

inline constexpr std::string_view kParaphrase =
    "Rephrase the question and answer into a single statement.\n"
    "The re-phrased statement should summarize the question and answer.\n"
    "The re-phrased statement should not be a question.\n"
    "\n"
    "Question: Is the dog herding or guiding the cows?\n"
    "Answer: guiding\n"
    "Statement: The dog is guiding the cows.\n"
    "\n"
    "Question: Are there any other written numbers visible in the image?\n"
    "Answer: no\n"
    "Statement: There are no other written numbers visible in the image.\n"
    "\n"
    "Question: Which color of clothing is unique to just one of the two people here?\n"
    "Answer: black\n"
    "Statement: The color of clothing that is unique to just one of the two people here is "
    "black.\n"
    "\n"
    "Question: Does the picture on the screen involve any human subjects or animals?\n"
    "Answer: human\n"
    "Statement: The picture on the screen involves human subjects.\n"
    "\n"
    "Question: {question}\n"
    "Answer: {answer}\n"
    "Statement: ";

inline constexpr std::string_view kNli =
    "Premise: {premise}\n"
    "\n"
    "Hypothesis: {hypothesis}\n"
    "Can we infer the hypothesis from the premise? Options: yes, no. Answer: ";

inline constexpr std::string_view kJudge =
    "Question: {question}\n"
    "Reference answers: {references}\n"
    "Candidate answer: {answer}\n"
    "Does the candidate answer mean the same as one of the reference answers? Answer yes or no:";

}  // namespace templates

inline std::string_view template_for(Role role) {
  switch (role) {
    case Role::kVlmAnswer:
      return templates::kVlmAnswer;
    case Role::kVlmVerify:
      return templates::kVlmVerify;
    case Role::kQgen:
      return templates::kQgen;
    case Role::kParaphrase:
      return templates::kParaphrase;
    case Role::kNli:
      return templates::kNli;
    case Role::kJudge:
      return templates::kJudge;
  }
  throw TemplateError("no template for role");
}

/// Single-pass substitution of {name} placeholders. Slot values are copied
/// verbatim, so braces inside them are never expanded.
inline std::string render_prompt(Role role, const Slots& slots) {
  const std::string_view tpl = template_for(role);
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const std::size_t close = tpl.find('}', i + 1);
      const std::string_view name = tpl.substr(i + 1, close - i - 1);
      const bool is_slot = close != std::string_view::npos && !name.empty() &&
                           name.find_first_not_of("abcdefghijklmnopqrstuvwxyz_") ==
                               std::string_view::npos;
      if (is_slot) {
        const auto it = slots.find(std::string(name));
        if (it == slots.end()) {
          throw TemplateError(std::string("render_prompt(") + to_string(role) +
                              "): missing slot '" + std::string(name) + "'");
        }
        out += it->second;
        i = close + 1;
        continue;
      }
    }
    out += tpl[i++];
  }
  return out;
}

inline std::string evidence_block(const std::vector<std::string>& lines) {
  std::string block;
  for (const auto& line : lines) {
    block += line;
    block += '\n';
  }
  return block;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Drops "1.", "2)", "-", "*", or a bullet glyph at the start of a line.
inline std::string strip_enumeration(std::string line) {
  static constexpr std::string_view kBullets[] = {"\xE2\x80\xA2", "-", "*"};
  for (auto bullet : kBullets) {
    if (line.rfind(bullet, 0) == 0) return trim(std::string_view(line).substr(bullet.size()));
  }
  std::size_t d = 0;
  while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
  if (d > 0 && d < line.size() && (line[d] == '.' || line[d] == ')')) {
    return trim(std::string_view(line).substr(d + 1));
  }
  return line;
}

}  // namespace detail

/// Splits generator output into at most k questions, one per line.
inline std::vector<std::string> parse_subquestions(std::string_view raw, int k) {
  std::vector<std::string> out;
  if (k <= 0) return out;
  std::size_t start = 0;
  while (start <= raw.size() && static_cast<int>(out.size()) < k) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    std::string line = detail::strip_enumeration(detail::trim(raw.substr(start, end - start)));
    if (!line.empty()) out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

}  // namespace recoverr::modelio

#endif  // RECOVERR_MODELIO_PROMPTS_HPP_
