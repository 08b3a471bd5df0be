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

/** @file selective.hpp
 *
 * Selective prediction: thresholded answering, threshold search for a risk
 * tolerance, and the coverage / risk / effective-reliability / recall
 * metrics used to evaluate a selective system.
 *
 * Undefined quantities (risk with nothing answered, recall with nothing
 * answerable) are std::nullopt rather than 0.
 */

#ifndef RECOVERR_SELECTIVE_HPP_
#define RECOVERR_SELECTIVE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/error.hpp"

namespace recoverr {

/// One question about one image, with its reference answers.
struct Instance {
  std::string id;
  std::string image_ref;
  std::string question;
  std::vector<std::string> gold_answers;
  std::map<std::string, std::string> metadata;
};

struct Prediction {
  std::string answer;
  Confidence confidence;
  std::optional<VerificationLogits> logits;
  std::optional<double> accuracy;
};

enum class Decision { kAnswered, kAbstained };
enum class Provenance { kThreshold, kRecovered, kBaselineTools };

inline const char* to_string(Decision d) {
  return d == Decision::kAnswered ? "answered" : "abstained";
}

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kThreshold:
      return "threshold";
    case Provenance::kRecovered:
      return "recovered";
    case Provenance::kBaselineTools:
      return "baseline_tools";
  }
  return "threshold";
}

inline Decision decision_from_string(const std::string& s) {
  if (s == "answered") return Decision::kAnswered;
  if (s == "abstained") return Decision::kAbstained;
  throw InvalidInput("unknown decision '" + s + "'");
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "threshold") return Provenance::kThreshold;
  if (s == "recovered") return Provenance::kRecovered;
  if (s == "baseline_tools") return Provenance::kBaselineTools;
  throw InvalidInput("unknown provenance '" + s + "'");
}

/// The system's answer (or abstention) on one instance.
struct SelectiveOutcome {
  Decision decision = Decision::kAbstained;
  std::optional<std::string> answer;  // present iff answered
  Provenance provenance = Provenance::kThreshold;
  std::string trace_ref;

  static SelectiveOutcome answered(std::string answer, Provenance p, std::string trace = {}) {
    return SelectiveOutcome{Decision::kAnswered, std::move(answer), p, std::move(trace)};
  }
  static SelectiveOutcome abstained(Provenance p = Provenance::kThreshold,
                                    std::string trace = {}) {
    return SelectiveOutcome{Decision::kAbstained, std::nullopt, p, std::move(trace)};
  }
  bool is_answered() const { return decision == Decision::kAnswered; }
  friend bool operator==(const SelectiveOutcome&, const SelectiveOutcome&) = default;
};

namespace selective {

/// Threshold above every confidence: selecting it abstains on everything.
inline const double kAbstainAll = std::nextafter(1.0, 2.0);

inline bool decide(Confidence confidence, double gamma) { return confidence.value() >= gamma; }

inline void check_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw InvalidInput(std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " +
                       std::to_string(b) + ")");
  }
}

inline double coverage(const std::vector<bool>& answered) {
  if (answered.empty()) throw InvalidInput("coverage: empty input");
  const auto n = static_cast<double>(std::count(answered.begin(), answered.end(), true));
  return n / static_cast<double>(answered.size());
}

inline std::optional<double> risk(const std::vector<bool>& answered,
                                  std::span<const double> accuracies) {
  check_lengths(answered.size(), accuracies.size(), "risk");
  double err = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < answered.size(); ++i) {
    if (!answered[i]) continue;
    err += 1.0 - accuracies[i];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return err / static_cast<double>(n);
}

/// Mean per-instance score: graded accuracy when answered, minus c for an
/// answered instance with accuracy exactly 0, and 0 for abstentions.
inline double effective_reliability(const std::vector<bool>& answered,
                                    std::span<const double> accuracies, double c = 1.0) {
  check_lengths(answered.size(), accuracies.size(), "effective_reliability");
  if (answered.empty()) throw InvalidInput("effective_reliability: empty input");
  if (c < 0.0) throw InvalidInput("effective_reliability: penalty must be >= 0");
  double total = 0.0;
  for (std::size_t i = 0; i < answered.size(); ++i) {
    if (!answered[i]) continue;
    total += accuracies[i] == 0.0 ? -c : accuracies[i];
  }
  return total / static_cast<double>(answered.size());
}

/// Fraction of instances with accuracy exactly 1 that were answered.
inline std::optional<double> selective_recall(const std::vector<bool>& answered,
                                              std::span<const double> accuracies) {
  check_lengths(answered.size(), accuracies.size(), "selective_recall");
  std::size_t correct = 0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < answered.size(); ++i) {
    if (accuracies[i] != 1.0) continue;
    ++correct;
    hit += answered[i] ? 1 : 0;
  }
  if (correct == 0) return std::nullopt;
  return static_cast<double>(hit) / static_cast<double>(correct);
}

/// A confidence with the (possibly graded) accuracy of its answer.
struct ScoredPrediction {
  double confidence = 0.0;
  double accuracy = 0.0;
};

struct ThresholdChoice {
  double gamma = kAbstainAll;
  double coverage = 0.0;
  std::optional<double> risk;  // nullopt for the abstain-all sentinel
};

struct CurvePoint {
  double gamma = 0.0;
  double coverage = 0.0;
  double risk = 0.0;
};

/// One point per distinct confidence, highest threshold first. Each point
/// answers every prediction with confidence >= gamma.
inline std::vector<CurvePoint> risk_coverage_curve(std::span<const ScoredPrediction> scored) {
  if (scored.empty()) throw InvalidInput("risk_coverage_curve: empty input");
  std::vector<ScoredPrediction> sorted(scored.begin(), scored.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
  std::vector<CurvePoint> curve;
  const auto n = static_cast<double>(sorted.size());
  double err = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double gamma = sorted[i].confidence;
    while (i < sorted.size() && sorted[i].confidence == gamma) {
      err += 1.0 - sorted[i].accuracy;
      ++i;
    }
    const auto answered = static_cast<double>(i);
    curve.push_back(CurvePoint{gamma, answered / n, err / answered});
  }
  return curve;
}

/// gamma@r: the candidate threshold with maximum coverage whose risk on the
/// calibration set is at most r. Candidates are the observed confidences
/// plus kAbstainAll, which is always feasible.
inline ThresholdChoice select_threshold(std::span<const ScoredPrediction> calibration, double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw InvalidInput("select_threshold: risk tolerance must lie in [0,1]");
  }
  if (calibration.empty()) throw InvalidInput("select_threshold: empty calibration set");
  ThresholdChoice best;
  for (const auto& p : risk_coverage_curve(calibration)) {
    if (p.risk <= r) best = ThresholdChoice{p.gamma, p.coverage, p.risk};
  }
  return best;
}

/// Largest coverage over curve points whose risk is within target_risk.
inline double coverage_at_risk(std::span<const ScoredPrediction> scored, double target_risk) {
  double best = 0.0;
  for (const auto& p : risk_coverage_curve(scored)) {
    if (p.risk <= target_risk) best = std::max(best, p.coverage);
  }
  return best;
}

/// Per-instance facts needed by MetricsReport.
struct OutcomeRow {
  bool answered = false;
  double accuracy = 0.0;
  Provenance provenance = Provenance::kThreshold;
  bool vanilla_answered = false;  // confidence >= gamma
  bool failed_closed = false;
};

struct MetricsReport {
  std::size_t n = 0;
  double coverage = 0.0;
  std::optional<double> risk;
  double effective_reliability = 0.0;
  std::optional<double> selective_recall;
  std::size_t answered_correct = 0;
  std::size_t answered_incorrect = 0;
  std::size_t abstained = 0;
  std::size_t failed_closed = 0;
  std::size_t vanilla_abstain_size = 0;   // D_empty
  std::size_t vanilla_answer_size = 0;    // D_S
  std::size_t recovered_size = 0;         // D_R
  std::optional<double> recovered_risk;   // risk over D_R alone

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Aggregates outcomes. An answered instance counts as correct when its
/// accuracy is positive; with binary accuracies this matches risk exactly.
inline MetricsReport compute_metrics(std::span<const OutcomeRow> rows, double penalty = 1.0) {
  if (rows.empty()) throw InvalidInput("compute_metrics: no outcomes");
  std::vector<bool> answered;
  std::vector<double> acc;
  answered.reserve(rows.size());
  acc.reserve(rows.size());
  MetricsReport m;
  m.n = rows.size();
  double recovered_err = 0.0;
  for (const auto& row : rows) {
    answered.push_back(row.answered);
    acc.push_back(row.accuracy);
    if (row.answered) {
      (row.accuracy > 0.0 ? m.answered_correct : m.answered_incorrect) += 1;
      if (row.provenance != Provenance::kThreshold) {
        ++m.recovered_size;
        recovered_err += 1.0 - row.accuracy;
      }
    } else {
      ++m.abstained;
    }
    m.failed_closed += row.failed_closed ? 1 : 0;
    (row.vanilla_answered ? m.vanilla_answer_size : m.vanilla_abstain_size) += 1;
  }
  m.coverage = coverage(answered);
  m.risk = risk(answered, acc);
  m.effective_reliability = effective_reliability(answered, acc, penalty);
  m.selective_recall = selective_recall(answered, acc);
  if (m.recovered_size > 0) m.recovered_risk = recovered_err / static_cast<double>(m.recovered_size);
  return m;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

/// Flat key-value form.
inline void to_json(nlohmann::json& j, const MetricsReport& m) {
  j = nlohmann::json{{"n", m.n},
                     {"coverage", m.coverage},
                     {"risk", optional_json(m.risk)},
                     {"effective_reliability", m.effective_reliability},
                     {"selective_recall", optional_json(m.selective_recall)},
                     {"answered_correct", m.answered_correct},
                     {"answered_incorrect", m.answered_incorrect},
                     {"abstained", m.abstained},
                     {"failed_closed", m.failed_closed},
                     {"d_abstain", m.vanilla_abstain_size},
                     {"d_selected", m.vanilla_answer_size},
                     {"d_recovered", m.recovered_size},
                     {"recovered_risk", optional_json(m.recovered_risk)}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& m) {
  j.at("n").get_to(m.n);
  j.at("coverage").get_to(m.coverage);
  m.risk = optional_from_json(j.at("risk"));
  j.at("effective_reliability").get_to(m.effective_reliability);
  m.selective_recall = optional_from_json(j.at("selective_recall"));
  j.at("answered_correct").get_to(m.answered_correct);
  j.at("answered_incorrect").get_to(m.answered_incorrect);
  j.at("abstained").get_to(m.abstained);
  j.at("failed_closed").get_to(m.failed_closed);
  j.at("d_abstain").get_to(m.vanilla_abstain_size);
  j.at("d_selected").get_to(m.vanilla_answer_size);
  j.at("d_recovered").get_to(m.recovered_size);
  m.recovered_risk = optional_from_json(j.at("recovered_risk"));
}

}  // namespace selective
}  // namespace recoverr

#endif  // RECOVERR_SELECTIVE_HPP_
