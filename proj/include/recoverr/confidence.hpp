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

/** @file confidence.hpp
 *
 * Confidence estimation for generative answers and its calibration.
 *
 * A model answer is scored by asking the model whether the answer is correct
 * and normalizing the next-token scores of "yes" and "no". The resulting
 * score can be recalibrated with a two-feature logistic model fitted over
 * the raw yes/no logits, and calibration quality is summarized by the
 * binned expected calibration error.
 */

#ifndef RECOVERR_CONFIDENCE_HPP_
#define RECOVERR_CONFIDENCE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "recoverr/error.hpp"

namespace recoverr {

/// Unnormalized next-token scores of "yes" and "no" after a verification
/// prompt.
struct VerificationLogits {
  double logit_yes = 0.0;
  double logit_no = 0.0;

  bool finite() const { return std::isfinite(logit_yes) && std::isfinite(logit_no); }
  friend bool operator==(const VerificationLogits&, const VerificationLogits&) = default;
};

/// Probability that an answer is correct. Always within [0, 1].
class Confidence {
 public:
  constexpr Confidence() = default;
  explicit Confidence(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw InvalidInput("confidence must lie in [0,1], got " + std::to_string(value));
    }
  }

  constexpr double value() const { return value_; }
  friend auto operator<=>(const Confidence&, const Confidence&) = default;

 private:
  double value_ = 0.0;
};

namespace confidence {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  if (z > 0.0) {
    return z + std::log1p(std::exp(-z));
  }
  return std::log1p(std::exp(z));
}

/// P(yes) / (P(yes) + P(no)) from raw logits, shifted by the max logit.
inline Confidence self_prompt_confidence(const VerificationLogits& logits) {
  if (!logits.finite()) {
    throw InvalidInput("self_prompt_confidence: logits must be finite");
  }
  const double m = std::max(logits.logit_yes, logits.logit_no);
  const double yes = std::exp(logits.logit_yes - m);
  const double no = std::exp(logits.logit_no - m);
  return Confidence(yes / (yes + no));
}

enum class TokenAggregation { kProduct, kMean, kFirst };

/// Baseline confidences built from the answer's own token probabilities.
inline Confidence token_seq_confidence(std::span<const double> token_probs,
                                       TokenAggregation mode) {
  if (token_probs.empty()) {
    throw InvalidInput("token_seq_confidence: empty token probability list");
  }
  for (double p : token_probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInput("token_seq_confidence: probability outside [0,1]");
    }
  }
  switch (mode) {
    case TokenAggregation::kProduct: {
      double prod = 1.0;
      for (double p : token_probs) prod *= p;
      return Confidence(prod);
    }
    case TokenAggregation::kMean: {
      double sum = 0.0;
      for (double p : token_probs) sum += p;
      return Confidence(std::clamp(sum / static_cast<double>(token_probs.size()), 0.0, 1.0));
    }
    case TokenAggregation::kFirst:
      return Confidence(token_probs.front());
  }
  throw InvalidInput("token_seq_confidence: unknown mode");
}

/// Logistic recalibration over (logit_yes, logit_no).
struct PlattModel {
  double weight_yes = 0.0;
  double weight_no = 0.0;
  double bias = 0.0;
  std::size_t fitted_on = 0;

  /// The model equivalent to uncalibrated self-prompting.
  static PlattModel identity() { return PlattModel{1.0, -1.0, 0.0, 0}; }

  double linear_score(const VerificationLogits& l) const {
    return weight_yes * l.logit_yes + weight_no * l.logit_no + bias;
  }
  bool finite() const {
    return std::isfinite(weight_yes) && std::isfinite(weight_no) && std::isfinite(bias);
  }
};

struct LabeledLogits {
  VerificationLogits logits;
  bool correct = false;
};

struct PlattOptions {
  double l2_penalty = 1e-6;
  double tolerance = 1e-8;
  int max_iterations = 200;
};

/// sigmoid of the linear score, kept strictly inside (0, 1).
inline Confidence apply_platt(const PlattModel& model, const VerificationLogits& logits) {
  if (!model.finite() || !logits.finite()) {
    throw InvalidInput("apply_platt: non-finite model or logits");
  }
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return Confidence(std::clamp(sigmoid(model.linear_score(logits)), lo, hi));
}

/// Mean Bernoulli log-likelihood of the labels under the model.
inline double average_log_likelihood(const PlattModel& model,
                                     std::span<const LabeledLogits> samples) {
  if (samples.empty()) {
    throw InvalidInput("average_log_likelihood: no samples");
  }
  double ll = 0.0;
  for (const auto& s : samples) {
    const double z = model.linear_score(s.logits);
    // log p = -softplus(-z), log(1-p) = -softplus(z)
    ll -= s.correct ? softplus(-z) : softplus(z);
  }
  return ll / static_cast<double>(samples.size());
}

namespace detail {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Solves a*x = b for symmetric positive definite a.
inline Vec3 cholesky_solve(const Mat3& a, const Vec3& b) {
  Mat3 l{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s <= 0.0) throw DegenerateData("fit_platt: Hessian not positive definite");
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  Vec3 y{};
  for (int i = 0; i < 3; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l[i][k] * y[k];
    y[i] = s / l[i][i];
  }
  Vec3 x{};
  for (int i = 2; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < 3; ++k) s -= l[k][i] * x[k];
    x[i] = s / l[i][i];
  }
  return x;
}

inline double penalized_nll(const Vec3& theta, std::span<const LabeledLogits> samples,
                            double l2) {
  double f = 0.0;
  for (const auto& s : samples) {
    const double z =
        theta[0] * s.logits.logit_yes + theta[1] * s.logits.logit_no + theta[2];
    f += s.correct ? softplus(-z) : softplus(z);
  }
  return f + 0.5 * l2 * (theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]);
}

}  // namespace detail

/// Maximizes the L2-penalized binomial log-likelihood by damped Newton
/// iterations. The result depends only on the samples and their order.
inline PlattModel fit_platt(std::span<const LabeledLogits> samples,
                            const PlattOptions& options = {}) {
  std::size_t positives = 0;
  for (const auto& s : samples) {
    if (!s.logits.finite()) throw InvalidInput("fit_platt: non-finite logits in sample");
    positives += s.correct ? 1 : 0;
  }
  if (samples.size() < 2) {
    throw DegenerateData("fit_platt: need at least 2 samples, got " +
                         std::to_string(samples.size()));
  }
  if (positives == 0) {
    throw DegenerateData("fit_platt: no samples of class 'correct'");
  }
  if (positives == samples.size()) {
    throw DegenerateData("fit_platt: no samples of class 'incorrect'");
  }

  const double l2 = options.l2_penalty;
  detail::Vec3 theta{0.0, 0.0, 0.0};
  double f = detail::penalized_nll(theta, samples, l2);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    detail::Vec3 grad{l2 * theta[0], l2 * theta[1], l2 * theta[2]};
    detail::Mat3 hess{};
    for (int i = 0; i < 3; ++i) hess[i][i] = l2;
    for (const auto& s : samples) {
      const detail::Vec3 x{s.logits.logit_yes, s.logits.logit_no, 1.0};
      const double z = theta[0] * x[0] + theta[1] * x[1] + theta[2];
      const double p = sigmoid(z);
      const double resid = p - (s.correct ? 1.0 : 0.0);
      const double w = p * (1.0 - p);
      for (int i = 0; i < 3; ++i) {
        grad[i] += resid * x[i];
        for (int j = 0; j <= i; ++j) hess[i][j] += w * x[i] * x[j];
      }
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = i + 1; j < 3; ++j) hess[i][j] = hess[j][i];
    }
    const detail::Vec3 step =
        detail::cholesky_solve(hess, detail::Vec3{-grad[0], -grad[1], -grad[2]});
    const double slope = grad[0] * step[0] + grad[1] * step[1] + grad[2] * step[2];

    // Armijo backtracking keeps every accepted iterate a strict improvement.
    double t = 1.0;
    detail::Vec3 next = theta;
    double f_next = f;
    bool accepted = false;
    while (t >= 1e-12) {
      for (int i = 0; i < 3; ++i) next[i] = theta[i] + t * step[i];
      f_next = detail::penalized_nll(next, samples, l2);
      if (f_next <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    const double moved = std::max({std::abs(next[0] - theta[0]), std::abs(next[1] - theta[1]),
                                   std::abs(next[2] - theta[2])});
    theta = next;
    f = f_next;
    if (moved < options.tolerance) break;
  }
  return PlattModel{theta[0], theta[1], theta[2], samples.size()};
}

/// Turns verification logits into a confidence: plain self-prompting, or
/// self-prompting recalibrated by a fitted Platt model.
struct Calibrator {
  std::optional<PlattModel> platt;

  Confidence operator()(const VerificationLogits& logits) const {
    return platt ? apply_platt(*platt, logits) : self_prompt_confidence(logits);
  }
};

struct CalibrationBin {
  double bin_low = 0.0;
  double bin_high = 0.0;
  double mean_confidence = 0.0;  // 0 when count == 0
  double empirical_accuracy = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
};

struct ScoredConfidence {
  Confidence confidence;
  bool correct = false;
};

/// Equal-width binned ECE over [0,1]. Empty bins contribute nothing.
inline CalibrationReport calibration_report(std::span<const ScoredConfidence> scored,
                                            int num_bins = 10) {
  if (num_bins < 1) throw InvalidInput("calibration_report: num_bins must be >= 1");
  if (scored.empty()) throw InvalidInput("calibration_report: empty input");

  const auto nb = static_cast<std::size_t>(num_bins);
  std::vector<double> conf_sum(nb, 0.0);
  std::vector<double> hit_sum(nb, 0.0);
  std::vector<std::size_t> counts(nb, 0);
  for (const auto& s : scored) {
    const double c = s.confidence.value();
    auto idx = static_cast<std::size_t>(std::floor(c * num_bins));
    idx = std::min(idx, nb - 1);
    conf_sum[idx] += c;
    hit_sum[idx] += s.correct ? 1.0 : 0.0;
    ++counts[idx];
  }

  CalibrationReport report;
  report.bins.reserve(nb);
  const auto total = static_cast<double>(scored.size());
  for (std::size_t b = 0; b < nb; ++b) {
    CalibrationBin bin;
    bin.bin_low = static_cast<double>(b) / num_bins;
    bin.bin_high = static_cast<double>(b + 1) / num_bins;
    bin.count = counts[b];
    if (counts[b] > 0) {
      const auto n = static_cast<double>(counts[b]);
      bin.mean_confidence = conf_sum[b] / n;
      bin.empirical_accuracy = hit_sum[b] / n;
      report.ece += (n / total) * std::abs(bin.empirical_accuracy - bin.mean_confidence);
    }
    report.bins.push_back(bin);
  }
  report.ece = std::clamp(report.ece, 0.0, 1.0);
  return report;
}

// JSON forms used by the on-disk artifacts.

inline void to_json(nlohmann::json& j, const PlattModel& m) {
  j = nlohmann::json{{"weight_yes", m.weight_yes},
                     {"weight_no", m.weight_no},
                     {"bias", m.bias},
                     {"fitted_on", m.fitted_on}};
}

inline void from_json(const nlohmann::json& j, PlattModel& m) {
  j.at("weight_yes").get_to(m.weight_yes);
  j.at("weight_no").get_to(m.weight_no);
  j.at("bias").get_to(m.bias);
  m.fitted_on = j.value("fitted_on", std::size_t{0});
}

inline void to_json(nlohmann::json& j, const CalibrationReport& r) {
  j = nlohmann::json{{"ece", r.ece}, {"bins", nlohmann::json::array()}};
  for (const auto& b : r.bins) {
    nlohmann::json jb{{"bin_low", b.bin_low}, {"bin_high", b.bin_high}, {"count", b.count}};
    if (b.count > 0) {
      jb["mean_confidence"] = b.mean_confidence;
      jb["empirical_accuracy"] = b.empirical_accuracy;
    } else {
      jb["mean_confidence"] = nullptr;
      jb["empirical_accuracy"] = nullptr;
    }
    j["bins"].push_back(std::move(jb));
  }
}

}  // namespace confidence

inline void to_json(nlohmann::json& j, const VerificationLogits& l) {
  j = nlohmann::json{{"logit_yes", l.logit_yes}, {"logit_no", l.logit_no}};
}

inline void from_json(const nlohmann::json& j, VerificationLogits& l) {
  j.at("logit_yes").get_to(l.logit_yes);
  j.at("logit_no").get_to(l.logit_no);
}

}  // namespace recoverr

#endif  // RECOVERR_CONFIDENCE_HPP_
