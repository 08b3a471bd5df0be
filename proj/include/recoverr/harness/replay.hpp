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

/** @file replay.hpp
 *
 * Offline audit of a recorded trace: re-derives every verdict and the final
 * decision from the numbers stored in the trace, without any model.
 */

#ifndef RECOVERR_HARNESS_REPLAY_HPP_
#define RECOVERR_HARNESS_REPLAY_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "recoverr/selective.hpp"
#include "recoverr/verifier.hpp"

namespace recoverr::harness {

struct Audit {
  std::vector<std::string> problems;
  int turns = 0;
  std::size_t reliable = 0;
  std::size_t relevant = 0;
  bool ok() const { return problems.empty(); }
};

inline Audit replay_trace(const verifier::RecoverrTrace& t) {
  Audit audit;
  const auto& p = t.params;
  const double bound = p.evidence_bound();
  const auto fail = [&](const std::string& what) { audit.problems.push_back(what); };

  const bool above = t.initial_confidence >= p.gamma;
  if (t.terminal_event == "threshold") {
    if (!above) fail("answered by threshold although confidence < gamma");
    if (t.decision != Decision::kAnswered) fail("threshold exit without an answer");
    return audit;
  }
  if (t.terminal_event == "below_threshold") {
    if (above) fail("abstained although confidence >= gamma");
    if (t.decision != Decision::kAbstained) fail("below-threshold exit with an answer");
    return audit;
  }
  if (above) fail("verification ran although confidence >= gamma");

  std::vector<std::string> relevant;
  const auto check = [&](const verifier::EvidenceVerdict& v, bool relevance_checked,
                         const std::string& where) {
    if (v.duplicate) return;
    const bool should_be_reliable = v.evidence.confidence.value() >= bound;
    if (v.reliable != should_be_reliable) fail(where + ": reliability verdict disagrees with bound");
    if (!v.reliable) return;
    ++audit.reliable;
    bool should_be_relevant = true;
    if (relevance_checked) {
      if (!v.relevance) {
        fail(where + ": relevance missing");
        return;
      }
      const double d = std::abs(v.relevance->p_given_statement - v.relevance->p_given_negation);
      if (std::abs(std::min(d, 1.0) - v.relevance->delta) > 1e-12) fail(where + ": delta mismatch");
      should_be_relevant = v.relevance->delta >= p.delta_min;
    }
    if (v.relevant != should_be_relevant) fail(where + ": relevance verdict disagrees with delta_min");
    if (v.relevant) {
      ++audit.relevant;
      relevant.push_back(v.evidence.statement);
    }
  };
  const auto premise = [&]() {
    std::string s;
    for (const auto& r : relevant) {
      if (!s.empty()) s += ' ';
      s += r;
    }
    return s;
  };

  for (std::size_t i = 0; i < t.tool_evidences.size(); ++i) {
    check(t.tool_evidences[i], p.filter_tool_relevance, "tool evidence " + std::to_string(i));
  }

  bool answered_at = false;
  int answer_turn = -1;
  if (t.tool_sufficiency) {
    if (p.n_turns != 0) fail("tool sufficiency recorded with n_turns > 0");
    if (t.tool_sufficiency->premise != premise()) fail("tool sufficiency premise mismatch");
    if (t.tool_sufficiency->probability >= p.p_nli_min) {
      answered_at = true;
      answer_turn = 0;
    }
  }
  if (static_cast<int>(t.turns.size()) > p.n_turns) fail("more turns than n_turns");
  for (const auto& turn : t.turns) {
    ++audit.turns;
    if (answered_at) fail("turn recorded after a sufficient premise");
    for (std::size_t i = 0; i < turn.evidences.size(); ++i) {
      check(turn.evidences[i], true, "turn " + std::to_string(turn.turn) + " evidence " + std::to_string(i));
    }
    if (turn.sufficiency.premise != premise()) {
      fail("turn " + std::to_string(turn.turn) + ": premise mismatch");
    }
    if (!answered_at && turn.sufficiency.probability >= p.p_nli_min) {
      answered_at = true;
      answer_turn = turn.turn;
    }
  }

  if (t.terminal_event == "failed_closed") {
    if (t.decision != Decision::kAbstained) fail("failed-closed run with an answer");
    return audit;
  }
  if (answered_at) {
    if (t.decision != Decision::kAnswered || t.terminal_event != "sufficient") {
      fail("premise was sufficient but the run did not answer");
    }
    if (t.exit_turn != answer_turn) fail("exit turn mismatch");
  } else {
    if (t.decision != Decision::kAbstained) fail("answered without a sufficient premise");
    if (t.terminal_event != "exhausted") fail("unexpected terminal event " + t.terminal_event);
  }
  return audit;
}

}  // namespace recoverr::harness

#endif  // RECOVERR_HARNESS_REPLAY_HPP_
