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

/** @file verifier.hpp
 *
 * Evidence-based verification of low-confidence predictions.
 *
 * A prediction below the selection threshold is restated as a hypothesis.
 * The verifier then gathers visual evidence: statements from vision tools,
 * followed by up to N turns in which a question generator proposes K
 * sub-questions that the VLM answers. An evidence is kept as *reliable*
 * when the VLM's confidence in it reaches the evidence bound (1 - r by
 * default), and as *relevant* when flipping it moves the entailment
 * probability of the hypothesis by at least delta_min:
 *
 *     relevance(S) = |P_nli(H | S) - P_nli(H | not S)|
 *
 * After each turn the relevant statements are joined into one premise; the
 * prediction is answered once P_nli(H | premise) >= p_nli_min. Otherwise the
 * system abstains after N turns.
 *
 * With n_turns == 0 the engine checks sufficiency once, right after the
 * tool evidences are gathered (the vision-tools baseline).
 */

#ifndef RECOVERR_VERIFIER_HPP_
#define RECOVERR_VERIFIER_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/error.hpp"
#include "recoverr/modelio/clients.hpp"
#include "recoverr/selective.hpp"

namespace recoverr::verifier {

using modelio::Transcript;

struct Hypothesis {
  std::string statement;
  std::string source_question;
  std::string source_answer;
};

enum class EvidenceSource { kVisionTool, kQgen };

inline const char* to_string(EvidenceSource s) {
  return s == EvidenceSource::kVisionTool ? "vision_tool" : "qgen";
}

struct Evidence {
  std::string sub_question;  // tool name for tool evidences
  std::string answer;
  Confidence confidence;
  std::string statement;
  std::optional<double> relevance;
  EvidenceSource source = EvidenceSource::kQgen;
  int turn = 0;  // 0 for tool evidences
};

/// Lowercased, whitespace-collapsed form used for duplicate detection.
inline std::string normalize_statement(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

/// E_R (reliable) and E_RR (reliable and relevant), in insertion order.
class EvidencePools {
 public:
  const std::vector<Evidence>& reliable() const { return reliable_; }
  const std::vector<Evidence>& relevant() const { return relevant_; }

  bool contains(std::string_view statement) const {
    return reliable_keys_.count(normalize_statement(statement)) > 0;
  }

  /// Returns false for a duplicate statement.
  bool add_reliable(const Evidence& e) {
    if (!reliable_keys_.insert(normalize_statement(e.statement)).second) return false;
    reliable_.push_back(e);
    return true;
  }

  /// Callers add to the reliable pool first; relevant stays a subset.
  bool add_relevant(const Evidence& e) {
    const std::string key = normalize_statement(e.statement);
    if (reliable_keys_.count(key) == 0) {
      throw InvalidInput("EvidencePools: relevant evidence must already be reliable");
    }
    if (!e.relevance) throw InvalidInput("EvidencePools: relevant evidence needs a relevance");
    if (!relevant_keys_.insert(key).second) return false;
    relevant_.push_back(e);
    return true;
  }

 private:
  std::vector<Evidence> reliable_;
  std::vector<Evidence> relevant_;
  std::unordered_set<std::string> reliable_keys_;
  std::unordered_set<std::string> relevant_keys_;
};

struct RecoverrParams {
  double r = 0.2;
  double gamma = selective::kAbstainAll;
  int n_turns = 10;
  int k_per_turn = 10;
  double delta_min = 0.2;
  // Values above 1 disable answering through verification.
  double p_nli_min = 0.9;
  std::optional<double> evidence_conf_bound;  // defaults to 1 - r
  double tool_confidence = 0.95;
  bool filter_tool_relevance = true;
  bool propagate_errors = false;

  double evidence_bound() const { return evidence_conf_bound.value_or(1.0 - r); }

  void validate() const {
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidInput("RecoverrParams: r must lie in [0,1]");
    if (n_turns < 0) throw InvalidInput("RecoverrParams: n_turns must be >= 0");
    if (k_per_turn < 1) throw InvalidInput("RecoverrParams: k_per_turn must be >= 1");
    if (!(delta_min >= 0.0)) throw InvalidInput("RecoverrParams: delta_min must be >= 0");
    if (!(p_nli_min >= 0.0)) throw InvalidInput("RecoverrParams: p_nli_min must be >= 0");
    const double b = evidence_bound();
    if (!(b >= 0.0 && b <= 1.0)) {
      throw InvalidInput("RecoverrParams: evidence confidence bound must lie in [0,1]");
    }
    if (!(tool_confidence >= 0.0 && tool_confidence <= 1.0)) {
      throw InvalidInput("RecoverrParams: tool_confidence must lie in [0,1]");
    }
  }
};

// ---------------------------------------------------------------------------
// Trace

struct RelevanceResult {
  double delta = 0.0;
  double p_given_statement = 0.0;
  double p_given_negation = 0.0;
  std::string negated_statement;
  std::vector<Transcript> transcripts;
};

/// What happened to one candidate evidence.
struct EvidenceVerdict {
  Evidence evidence;
  bool duplicate = false;
  bool reliable = false;
  std::optional<RelevanceResult> relevance;
  bool relevant = false;
  std::vector<Transcript> transcripts;  // VLM answer + paraphrase
};

struct SufficiencyResult {
  double probability = 0.0;
  std::string premise;
  std::optional<Transcript> transcript;
};

struct TurnRecord {
  int turn = 0;
  std::vector<std::string> questions;
  std::optional<Transcript> qgen_transcript;
  std::vector<EvidenceVerdict> evidences;
  std::vector<std::string> dropped_duplicates;
  SufficiencyResult sufficiency;
};

struct RecoverrTrace {
  std::string instance_id;
  std::string image_ref;
  std::string question;
  std::string initial_answer;
  double initial_confidence = 0.0;
  RecoverrParams params;
  std::optional<Hypothesis> hypothesis;
  std::optional<Transcript> hypothesis_transcript;
  std::vector<EvidenceVerdict> tool_evidences;
  std::vector<std::string> tool_errors;
  std::optional<SufficiencyResult> tool_sufficiency;  // only with n_turns == 0
  std::vector<TurnRecord> turns;
  Decision decision = Decision::kAbstained;
  Provenance provenance = Provenance::kThreshold;
  // "threshold", "sufficient", "exhausted" or "failed_closed".
  std::string terminal_event;
  int exit_turn = 0;
  std::optional<std::string> error;
};

struct RunResult {
  SelectiveOutcome outcome;
  RecoverrTrace trace;
  bool failed_closed = false;
};

// ---------------------------------------------------------------------------
// Operations

/// Prefixes "It is not the case that " and lowercases the first letter.
class TextNegator : public modelio::Negator {
 public:
  std::string negate(const std::string& statement) override {
    std::string body = statement;
    if (!body.empty()) body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
    return "It is not the case that " + body;
  }
};

namespace detail {

inline bool starts_interrogative(std::string_view s) {
  static constexpr std::string_view kWords[] = {
      "what", "which", "who", "whom", "whose", "where", "when", "why", "how", "is", "are",
      "was", "were", "do", "does", "did", "can", "could", "will", "would", "should", "has",
      "have", "had"};
  std::string first;
  for (unsigned char c : s) {
    if (std::isalpha(c) == 0) break;
    first += static_cast<char>(std::tolower(c));
  }
  return std::find(std::begin(kWords), std::end(kWords), first) != std::end(kWords);
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace detail

inline std::string fallback_statement(const std::string& question, const std::string& answer) {
  return "The answer to '" + question + "' is " + answer + ".";
}

/// Cleans a paraphraser reply into a declarative statement: first non-empty
/// line, trailing question marks removed, template fallback when the reply
/// is empty or reads as a question.
inline std::string declarative_statement(std::string_view reply, const std::string& question,
                                         const std::string& answer) {
  std::string line;
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t end = reply.find('\n', start);
    if (end == std::string_view::npos) end = reply.size();
    line = detail::trim(reply.substr(start, end - start));
    if (!line.empty()) break;
    start = end + 1;
  }
  const bool asks = !line.empty() && line.back() == '?' && detail::starts_interrogative(line);
  while (!line.empty() && line.back() == '?') line.pop_back();
  line = detail::trim(line);
  if (line.empty() || asks) return fallback_statement(question, answer);
  return line;
}

struct HypothesisResult {
  Hypothesis hypothesis;
  std::optional<Transcript> transcript;
};

inline HypothesisResult make_hypothesis(const std::string& question, const std::string& answer,
                                        modelio::Paraphraser& paraphraser) {
  if (question.empty() || answer.empty()) {
    throw InvalidInput("make_hypothesis: question and answer must be non-empty");
  }
  auto reply = paraphraser.paraphrase(question, answer);
  return HypothesisResult{
      Hypothesis{declarative_statement(reply.statement, question, answer), question, answer},
      std::move(reply.transcript)};
}

inline bool check_reliability(const Evidence& evidence, double bound) {
  return evidence.confidence.value() >= bound;
}

inline RelevanceResult relevance(const std::string& statement, const Hypothesis& hypothesis,
                                 modelio::NliModel& nli, modelio::Negator& negator) {
  if (statement.empty() || hypothesis.statement.empty()) {
    throw InvalidInput("relevance: statement and hypothesis must be non-empty");
  }
  RelevanceResult out;
  out.negated_statement = negator.negate(statement);
  auto given = nli.entail(statement, hypothesis.statement);
  auto given_not = nli.entail(out.negated_statement, hypothesis.statement);
  out.p_given_statement = given.probability;
  out.p_given_negation = given_not.probability;
  out.delta = std::clamp(std::abs(given.probability - given_not.probability), 0.0, 1.0);
  if (given.transcript) out.transcripts.push_back(std::move(*given.transcript));
  if (given_not.transcript) out.transcripts.push_back(std::move(*given_not.transcript));
  return out;
}

/// Entailment probability of the hypothesis given all relevant statements
/// joined with single spaces. An empty pool scores 0 without an NLI call.
inline SufficiencyResult sufficiency(const std::vector<Evidence>& relevant,
                                     const Hypothesis& hypothesis, modelio::NliModel& nli) {
  if (hypothesis.statement.empty()) throw InvalidInput("sufficiency: empty hypothesis");
  SufficiencyResult out;
  if (relevant.empty()) return out;
  for (const auto& e : relevant) {
    if (!out.premise.empty()) out.premise += ' ';
    out.premise += e.statement;
  }
  auto ent = nli.entail(out.premise, hypothesis.statement);
  out.probability = ent.probability;
  out.transcript = std::move(ent.transcript);
  return out;
}

/// Routes a candidate through the reliability and relevance checks and into
/// the pools.
inline void admit(EvidenceVerdict& v, EvidencePools& pools, const Hypothesis& hypothesis,
                  modelio::NliModel& nli, modelio::Negator& negator, double bound,
                  double delta_min, bool check_relevance) {
  v.reliable = check_reliability(v.evidence, bound);
  if (!v.reliable) return;
  if (!pools.add_reliable(v.evidence)) {
    v.duplicate = true;
    v.reliable = false;
    return;
  }
  if (check_relevance) {
    v.relevance = relevance(v.evidence.statement, hypothesis, nli, negator);
    v.evidence.relevance = v.relevance->delta;
    v.relevant = v.relevance->delta >= delta_min;
  } else {
    v.evidence.relevance = 1.0;
    v.relevant = true;
  }
  if (v.relevant) pools.add_relevant(v.evidence);
}

struct ToolEvidenceResult {
  EvidencePools pools;
  std::vector<EvidenceVerdict> verdicts;
  std::vector<std::string> errors;
  std::optional<std::string> caption;
};

/// Runs every vision tool; each statement becomes an evidence carrying the
/// configured tool confidence. A failing tool is skipped.
inline ToolEvidenceResult init_image_evidences(const std::string& image_ref,
                                               const std::vector<modelio::VisionTool*>& tools,
                                               const Hypothesis& hypothesis,
                                               modelio::NliModel& nli, modelio::Negator& negator,
                                               const RecoverrParams& params) {
  ToolEvidenceResult out;
  for (auto* tool : tools) {
    modelio::ToolOutput produced;
    try {
      produced = tool->describe(image_ref);
    } catch (const CapabilityError&) {
      throw;
    } catch (const std::exception& ex) {
      out.errors.push_back(tool->name() + ": " + ex.what());
      continue;
    }
    if (produced.caption && !out.caption) out.caption = produced.caption;
    for (const auto& statement : produced.statements) {
      if (detail::trim(statement).empty()) continue;
      EvidenceVerdict v;
      v.evidence = Evidence{tool->name(), statement, Confidence(params.tool_confidence),
                            statement,      std::nullopt, EvidenceSource::kVisionTool, 0};
      admit(v, out.pools, hypothesis, nli, negator, params.evidence_bound(), params.delta_min,
            params.filter_tool_relevance);
      out.verdicts.push_back(std::move(v));
    }
  }
  return out;
}

struct CollectResult {
  std::vector<std::string> questions;
  std::optional<Transcript> qgen_transcript;
  std::vector<EvidenceVerdict> candidates;  // at most k, duplicates dropped
  std::vector<std::string> dropped_duplicates;
};

/// Asks for k sub-questions, has the VLM answer them and the paraphraser
/// restate each pair. Candidates whose statement already sits in the pools
/// (or earlier in this batch) are dropped.
inline CollectResult collect_k_evidences(const std::string& image_ref, const Hypothesis& hypothesis,
                                         const std::optional<std::string>& caption,
                                         const EvidencePools& pools,
                                         const std::vector<std::string>& asked,
                                         const modelio::ClientSet& clients,
                                         const confidence::Calibrator& calibrator, int k,
                                         int turn) {
  if (k < 1) throw InvalidInput("collect_k_evidences: k must be >= 1");
  modelio::QgenRequest request;
  request.image_ref = image_ref;
  request.question = hypothesis.source_question;
  request.answer = hypothesis.source_answer;
  request.caption = caption;
  request.k = k;
  request.asked = asked;
  for (const auto& e : pools.reliable()) request.known_evidence.push_back(e.statement);

  CollectResult out;
  auto generated = clients.qgen->generate(request);
  out.qgen_transcript = std::move(generated.transcript);
  if (static_cast<int>(generated.questions.size()) > k) generated.questions.resize(k);
  out.questions = generated.questions;

  std::unordered_set<std::string> batch;
  for (const auto& q : out.questions) {
    auto answered = clients.vlm->answer(image_ref, q);
    auto para = clients.paraphraser->paraphrase(q, answered.text);
    EvidenceVerdict v;
    v.evidence.sub_question = q;
    v.evidence.answer = answered.text;
    v.evidence.confidence = calibrator(answered.logits);
    v.evidence.statement = declarative_statement(para.statement, q, answered.text);
    v.evidence.source = EvidenceSource::kQgen;
    v.evidence.turn = turn;
    v.transcripts = std::move(answered.transcripts);
    if (para.transcript) v.transcripts.push_back(std::move(*para.transcript));
    const std::string key = normalize_statement(v.evidence.statement);
    if (pools.contains(v.evidence.statement) || !batch.insert(key).second) {
      out.dropped_duplicates.push_back(v.evidence.statement);
      continue;
    }
    out.candidates.push_back(std::move(v));
  }
  return out;
}

/// Full verification of one prediction.
///
/// Predictions at or above gamma are answered at once with no client calls.
/// A TransportError during verification abstains (fail-closed) unless
/// params.propagate_errors is set; CapabilityError always propagates.
inline RunResult run(const Instance& instance, const Prediction& prediction,
                     const RecoverrParams& params, const modelio::ClientSet& clients,
                     const confidence::Calibrator& calibrator) {
  params.validate();
  RunResult result;
  auto& trace = result.trace;
  trace.instance_id = instance.id;
  trace.image_ref = instance.image_ref;
  trace.question = instance.question;
  trace.initial_answer = prediction.answer;
  trace.initial_confidence = prediction.confidence.value();
  trace.params = params;

  if (selective::decide(prediction.confidence, params.gamma)) {
    trace.decision = Decision::kAnswered;
    trace.provenance = Provenance::kThreshold;
    trace.terminal_event = "threshold";
    result.outcome = SelectiveOutcome::answered(prediction.answer, Provenance::kThreshold);
    return result;
  }

  const Provenance recovered_as =
      params.n_turns == 0 ? Provenance::kBaselineTools : Provenance::kRecovered;
  const auto answer_now = [&](int turn) {
    trace.decision = Decision::kAnswered;
    trace.provenance = recovered_as;
    trace.terminal_event = "sufficient";
    trace.exit_turn = turn;
    result.outcome = SelectiveOutcome::answered(prediction.answer, recovered_as);
  };

  try {
    auto hyp = make_hypothesis(instance.question, prediction.answer, *clients.paraphraser);
    trace.hypothesis = hyp.hypothesis;
    trace.hypothesis_transcript = std::move(hyp.transcript);
    const Hypothesis& hypothesis = *trace.hypothesis;

    auto init = init_image_evidences(instance.image_ref, clients.tools, hypothesis, *clients.nli,
                                     *clients.negator, params);
    EvidencePools pools = std::move(init.pools);
    trace.tool_evidences = std::move(init.verdicts);
    trace.tool_errors = std::move(init.errors);

    if (params.n_turns == 0) {
      trace.tool_sufficiency = sufficiency(pools.relevant(), hypothesis, *clients.nli);
      if (trace.tool_sufficiency->probability >= params.p_nli_min) {
        answer_now(0);
        return result;
      }
    }

    std::vector<std::string> asked;
    for (int turn = 1; turn <= params.n_turns; ++turn) {
      TurnRecord record;
      record.turn = turn;
      auto collected = collect_k_evidences(instance.image_ref, hypothesis, init.caption, pools,
                                           asked, clients, calibrator, params.k_per_turn, turn);
      record.questions = std::move(collected.questions);
      record.qgen_transcript = std::move(collected.qgen_transcript);
      record.dropped_duplicates = std::move(collected.dropped_duplicates);
      asked.insert(asked.end(), record.questions.begin(), record.questions.end());
      for (auto& v : collected.candidates) {
        admit(v, pools, hypothesis, *clients.nli, *clients.negator, params.evidence_bound(),
              params.delta_min, true);
        record.evidences.push_back(std::move(v));
      }
      record.sufficiency = sufficiency(pools.relevant(), hypothesis, *clients.nli);
      const bool enough = record.sufficiency.probability >= params.p_nli_min;
      trace.turns.push_back(std::move(record));
      if (enough) {
        answer_now(turn);
        return result;
      }
    }
  } catch (const TransportError& ex) {
    if (params.propagate_errors) throw;
    trace.error = ex.what();
    trace.decision = Decision::kAbstained;
    trace.provenance = recovered_as;
    trace.terminal_event = "failed_closed";
    trace.exit_turn = static_cast<int>(trace.turns.size());
    result.failed_closed = true;
    result.outcome = SelectiveOutcome::abstained(recovered_as);
    return result;
  }

  trace.decision = Decision::kAbstained;
  trace.provenance = recovered_as;
  trace.terminal_event = "exhausted";
  trace.exit_turn = params.n_turns;
  result.outcome = SelectiveOutcome::abstained(recovered_as);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(nlohmann::json& j, const Hypothesis& h) {
  j = nlohmann::json{{"statement", h.statement},
                     {"source_question", h.source_question},
                     {"source_answer", h.source_answer}};
}

inline void from_json(const nlohmann::json& j, Hypothesis& h) {
  j.at("statement").get_to(h.statement);
  j.at("source_question").get_to(h.source_question);
  j.at("source_answer").get_to(h.source_answer);
}

inline void to_json(nlohmann::json& j, const Evidence& e) {
  j = nlohmann::json{{"sub_question", e.sub_question},
                     {"answer", e.answer},
                     {"confidence", e.confidence.value()},
                     {"statement", e.statement},
                     {"relevance", selective::optional_json(e.relevance)},
                     {"source", to_string(e.source)},
                     {"turn", e.turn}};
}

inline void from_json(const nlohmann::json& j, Evidence& e) {
  j.at("sub_question").get_to(e.sub_question);
  j.at("answer").get_to(e.answer);
  e.confidence = Confidence(j.at("confidence").get<double>());
  j.at("statement").get_to(e.statement);
  e.relevance = selective::optional_from_json(j.at("relevance"));
  e.source = j.at("source").get<std::string>() == "vision_tool" ? EvidenceSource::kVisionTool
                                                                 : EvidenceSource::kQgen;
  j.at("turn").get_to(e.turn);
}

inline void to_json(nlohmann::json& j, const RecoverrParams& p) {
  j = nlohmann::json{{"r", p.r},
                     {"gamma", p.gamma},
                     {"n_turns", p.n_turns},
                     {"k_per_turn", p.k_per_turn},
                     {"delta_min", p.delta_min},
                     {"p_nli_min", p.p_nli_min},
                     {"evidence_conf_bound", p.evidence_bound()},
                     {"tool_confidence", p.tool_confidence},
                     {"filter_tool_relevance", p.filter_tool_relevance}};
}

inline void from_json(const nlohmann::json& j, RecoverrParams& p) {
  j.at("r").get_to(p.r);
  j.at("gamma").get_to(p.gamma);
  j.at("n_turns").get_to(p.n_turns);
  j.at("k_per_turn").get_to(p.k_per_turn);
  j.at("delta_min").get_to(p.delta_min);
  j.at("p_nli_min").get_to(p.p_nli_min);
  p.evidence_conf_bound = j.at("evidence_conf_bound").get<double>();
  j.at("tool_confidence").get_to(p.tool_confidence);
  j.at("filter_tool_relevance").get_to(p.filter_tool_relevance);
}

inline nlohmann::json transcripts_json(const std::vector<Transcript>& ts) {
  auto arr = nlohmann::json::array();
  for (const auto& t : ts) arr.push_back(t);
  return arr;
}

inline nlohmann::json optional_transcript(const std::optional<Transcript>& t) {
  return t ? nlohmann::json(*t) : nlohmann::json(nullptr);
}

inline std::optional<Transcript> optional_transcript_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<Transcript>();
}

inline void to_json(nlohmann::json& j, const RelevanceResult& r) {
  j = nlohmann::json{{"delta", r.delta},
                     {"p_given_statement", r.p_given_statement},
                     {"p_given_negation", r.p_given_negation},
                     {"negated_statement", r.negated_statement},
                     {"transcripts", transcripts_json(r.transcripts)}};
}

inline void from_json(const nlohmann::json& j, RelevanceResult& r) {
  j.at("delta").get_to(r.delta);
  j.at("p_given_statement").get_to(r.p_given_statement);
  j.at("p_given_negation").get_to(r.p_given_negation);
  j.at("negated_statement").get_to(r.negated_statement);
  j.at("transcripts").get_to(r.transcripts);
}

inline void to_json(nlohmann::json& j, const EvidenceVerdict& v) {
  j = nlohmann::json{{"evidence", v.evidence},
                     {"duplicate", v.duplicate},
                     {"reliable", v.reliable},
                     {"relevance", v.relevance ? nlohmann::json(*v.relevance) : nullptr},
                     {"relevant", v.relevant},
                     {"transcripts", transcripts_json(v.transcripts)}};
}

inline void from_json(const nlohmann::json& j, EvidenceVerdict& v) {
  j.at("evidence").get_to(v.evidence);
  j.at("duplicate").get_to(v.duplicate);
  j.at("reliable").get_to(v.reliable);
  if (!j.at("relevance").is_null()) v.relevance = j.at("relevance").get<RelevanceResult>();
  j.at("relevant").get_to(v.relevant);
  j.at("transcripts").get_to(v.transcripts);
}

inline void to_json(nlohmann::json& j, const SufficiencyResult& s) {
  j = nlohmann::json{{"probability", s.probability},
                     {"premise", s.premise},
                     {"transcript", optional_transcript(s.transcript)}};
}

inline void from_json(const nlohmann::json& j, SufficiencyResult& s) {
  j.at("probability").get_to(s.probability);
  j.at("premise").get_to(s.premise);
  s.transcript = optional_transcript_from(j.at("transcript"));
}

inline void to_json(nlohmann::json& j, const TurnRecord& t) {
  j = nlohmann::json{{"turn", t.turn},
                     {"questions", t.questions},
                     {"qgen_transcript", optional_transcript(t.qgen_transcript)},
                     {"evidences", t.evidences},
                     {"dropped_duplicates", t.dropped_duplicates},
                     {"sufficiency", t.sufficiency}};
}

inline void from_json(const nlohmann::json& j, TurnRecord& t) {
  j.at("turn").get_to(t.turn);
  j.at("questions").get_to(t.questions);
  t.qgen_transcript = optional_transcript_from(j.at("qgen_transcript"));
  j.at("evidences").get_to(t.evidences);
  j.at("dropped_duplicates").get_to(t.dropped_duplicates);
  j.at("sufficiency").get_to(t.sufficiency);
}

inline void to_json(nlohmann::json& j, const RecoverrTrace& t) {
  j = nlohmann::json{
      {"instance_id", t.instance_id},
      {"image_ref", t.image_ref},
      {"question", t.question},
      {"initial_answer", t.initial_answer},
      {"initial_confidence", t.initial_confidence},
      {"params", t.params},
      {"hypothesis", t.hypothesis ? nlohmann::json(*t.hypothesis) : nullptr},
      {"hypothesis_transcript", optional_transcript(t.hypothesis_transcript)},
      {"tool_evidences", t.tool_evidences},
      {"tool_errors", t.tool_errors},
      {"tool_sufficiency", t.tool_sufficiency ? nlohmann::json(*t.tool_sufficiency) : nullptr},
      {"turns", t.turns},
      {"decision", to_string(t.decision)},
      {"provenance", to_string(t.provenance)},
      {"terminal_event", t.terminal_event},
      {"exit_turn", t.exit_turn},
      {"error", t.error ? nlohmann::json(*t.error) : nullptr}};
}

inline void from_json(const nlohmann::json& j, RecoverrTrace& t) {
  j.at("instance_id").get_to(t.instance_id);
  j.at("image_ref").get_to(t.image_ref);
  j.at("question").get_to(t.question);
  j.at("initial_answer").get_to(t.initial_answer);
  j.at("initial_confidence").get_to(t.initial_confidence);
  j.at("params").get_to(t.params);
  if (!j.at("hypothesis").is_null()) t.hypothesis = j.at("hypothesis").get<Hypothesis>();
  t.hypothesis_transcript = optional_transcript_from(j.at("hypothesis_transcript"));
  j.at("tool_evidences").get_to(t.tool_evidences);
  j.at("tool_errors").get_to(t.tool_errors);
  if (!j.at("tool_sufficiency").is_null()) {
    t.tool_sufficiency = j.at("tool_sufficiency").get<SufficiencyResult>();
  }
  j.at("turns").get_to(t.turns);
  t.decision = decision_from_string(j.at("decision").get<std::string>());
  t.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  j.at("terminal_event").get_to(t.terminal_event);
  j.at("exit_turn").get_to(t.exit_turn);
  if (!j.at("error").is_null()) t.error = j.at("error").get<std::string>();
}

}  // namespace recoverr::verifier

#endif  // RECOVERR_VERIFIER_HPP_
