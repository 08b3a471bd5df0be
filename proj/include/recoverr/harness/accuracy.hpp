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

#ifndef RECOVERR_HARNESS_ACCURACY_HPP_
#define RECOVERR_HARNESS_ACCURACY_HPP_

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "recoverr/error.hpp"

namespace recoverr::harness {

inline const std::map<std::string, std::string>& number_words() {
  static const std::map<std::string, std::string> m{
      {"none", "0"}, {"zero", "0"}, {"one", "1"},   {"two", "2"},   {"three", "3"}, {"four", "4"},
      {"five", "5"}, {"six", "6"},  {"seven", "7"}, {"eight", "8"}, {"nine", "9"},  {"ten", "10"}};
  return m;
}

/// Lowercase, punctuation dropped, articles removed, number words as
/// digits, whitespace collapsed.
inline std::string normalize_answer(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cleaned += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c) || c == '-' || c == '/' || c == ',') {
      cleaned += ' ';
    }
  }
  std::istringstream words(cleaned);
  std::string word;
  std::string out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (const auto it = number_words().find(word); it != number_words().end()) word = it->second;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

inline std::vector<std::string> answer_tokens(const std::string& text) {
  std::istringstream words(normalize_answer(text));
  std::vector<std::string> out;
  std::string w;
  while (words >> w) out.push_back(w);
  return out;
}

inline double token_f1(const std::string& predicted, const std::string& gold) {
  const auto p = answer_tokens(predicted);
  const auto g = answer_tokens(gold);
  if (p.empty() || g.empty()) return p.empty() && g.empty() ? 1.0 : 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  int common = 0;
  for (const auto& t : p) {
    if (counts[t] > 0) {
      --counts[t];
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

/// Returns the yes-probability that an answer matches the references.
using JudgeFn = std::function<double(const std::string& question,
                                     const std::vector<std::string>& golds,
                                     const std::string& predicted)>;

/// Accuracy in [0,1] of a predicted answer: `exact` normalized match,
/// `soft` best token F1, or `llm_judge` through the given judge.
inline double judge_accuracy(const std::string& predicted, const std::vector<std::string>& golds,
                             const std::string& mode, const JudgeFn& judge = {},
                             const std::string& question = {}) {
  if (golds.empty()) throw InvalidInput("judge_accuracy: empty gold list");
  if (mode == "exact") {
    const std::string p = normalize_answer(predicted);
    for (const auto& g : golds) {
      if (normalize_answer(g) == p) return 1.0;
    }
    return 0.0;
  }
  if (mode == "soft") {
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, token_f1(predicted, g));
    return best;
  }
  if (mode == "llm_judge") {
    if (!judge) throw ConfigError("accuracy mode llm_judge needs a judge backend");
    return std::clamp(judge(question, golds, predicted), 0.0, 1.0);
  }
  throw ConfigError("unknown accuracy mode '" + mode + "'");
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_ACCURACY_HPP_
