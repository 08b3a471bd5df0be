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

/** @file profile.hpp
 *
 * Confidence behaviour of the simulated VLM.
 *
 * For every answer a latent confidence c is drawn from the density of the
 * question's kind (base or derived), and the answer is correct with
 * probability c. The latent confidence is therefore calibrated by
 * construction. The reported confidence is c itself, or a warped version
 * of it; only the report is warped, never correctness.
 */

#ifndef RECOVERR_SIM_PROFILE_HPP_
#define RECOVERR_SIM_PROFILE_HPP_

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include <json.hpp>

#include "recoverr/confidence.hpp"
#include "recoverr/error.hpp"

namespace recoverr::sim {

/// Density of the latent confidence. Beta is parameterized by its mean
/// (the expected accuracy) and concentration a + b. A mean of exactly 1 is
/// a point mass at 1.
struct ConfidenceDensity {
  enum class Kind { kBeta, kUniform };
  Kind kind = Kind::kBeta;
  double mean = 0.9;
  double concentration = 10.0;
  double lo = 0.0;
  double hi = 1.0;

  static ConfidenceDensity beta(double mean, double concentration) {
    ConfidenceDensity d;
    d.kind = Kind::kBeta;
    d.mean = mean;
    d.concentration = concentration;
    d.validate();
    return d;
  }

  static ConfidenceDensity uniform(double lo, double hi) {
    ConfidenceDensity d;
    d.kind = Kind::kUniform;
    d.lo = lo;
    d.hi = hi;
    d.validate();
    return d;
  }

  double alpha() const { return mean * concentration; }
  double beta_param() const { return (1.0 - mean) * concentration; }
  bool point_mass() const { return kind == Kind::kBeta && (mean >= 1.0 || mean <= 0.0); }

  /// Expected accuracy.
  double expected() const { return kind == Kind::kUniform ? 0.5 * (lo + hi) : mean; }

  void validate() const {
    if (kind == Kind::kUniform) {
      if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) throw InvalidInput("uniform density needs 0 <= lo < hi <= 1");
    } else {
      if (!(mean >= 0.0 && mean <= 1.0)) throw InvalidInput("beta density mean must lie in [0,1]");
      if (!(concentration > 0.0)) throw InvalidInput("beta density concentration must be > 0");
    }
  }

  template <typename Rng>
  double sample(Rng& rng) const {
    if (kind == Kind::kUniform) return std::uniform_real_distribution<double>(lo, hi)(rng);
    if (point_mass()) return mean >= 1.0 ? 1.0 : 0.0;
    const double x = std::gamma_distribution<double>(alpha(), 1.0)(rng);
    const double y = std::gamma_distribution<double>(beta_param(), 1.0)(rng);
    if (x + y <= 0.0) return mean;
    return x / (x + y);
  }
};

enum class ConfidenceMode { kCalibrated, kDistorted, kOverconfident };

inline const char* to_string(ConfidenceMode m) {
  switch (m) {
    case ConfidenceMode::kCalibrated:
      return "calibrated";
    case ConfidenceMode::kDistorted:
      return "distorted";
    case ConfidenceMode::kOverconfident:
      return "overconfident";
  }
  return "unknown";
}

inline ConfidenceMode confidence_mode_from_string(std::string_view s) {
  if (s == "calibrated") return ConfidenceMode::kCalibrated;
  if (s == "distorted") return ConfidenceMode::kDistorted;
  if (s == "overconfident") return ConfidenceMode::kOverconfident;
  throw ConfigError("unknown confidence mode '" + std::string(s) + "'");
}

struct SimVlmProfile {
  ConfidenceDensity base = ConfidenceDensity::beta(0.95, 20.0);
  ConfidenceDensity derived = ConfidenceDensity::beta(0.55, 20.0);
  ConfidenceMode mode = ConfidenceMode::kCalibrated;
  double temperature = 1.0;  // distorted: logit(reported) = logit(c) / temperature
  double shift = 0.0;        // overconfident: logit(reported) = logit(c) + shift
  std::uint64_t seed = 0;

  double base_fact_accuracy() const { return base.expected(); }
  double derived_fact_accuracy() const { return derived.expected(); }

  void validate() const {
    base.validate();
    derived.validate();
    if (!(temperature > 0.0)) throw InvalidInput("SimVlmProfile: temperature must be > 0");
    if (!(shift >= 0.0)) throw InvalidInput("SimVlmProfile: shift must be >= 0");
  }

  /// Reported confidence for a latent one.
  double report(double latent) const {
    if (mode == ConfidenceMode::kCalibrated || latent <= 0.0 || latent >= 1.0) return latent;
    const double z = std::log(latent) - std::log1p(-latent);
    if (mode == ConfidenceMode::kDistorted) return confidence::sigmoid(z / temperature);
    return confidence::sigmoid(z + shift);
  }
};

/// Verification logits whose self-prompt normalization gives p. Log-probs
/// are floored at -700.
inline VerificationLogits logits_for(double p) {
  constexpr double kFloor = -700.0;
  VerificationLogits l;
  l.logit_yes = p > 0.0 ? std::max(std::log(p), kFloor) : kFloor;
  l.logit_no = p < 1.0 ? std::max(std::log1p(-p), kFloor) : kFloor;
  return l;
}

/// E[1 - c | c >= gamma] for a calibrated profile's derived-question
/// density: the expected risk of answering every target question whose
/// confidence reaches gamma. Where no mass lies above gamma, returns the
/// limit from below.
inline double closed_form_vanilla_risk(const SimVlmProfile& profile, double gamma) {
  if (profile.mode != ConfidenceMode::kCalibrated) {
    throw Unsupported("closed_form_vanilla_risk: profile is not calibrated");
  }
  const auto& d = profile.derived;
  if (d.kind == ConfidenceDensity::Kind::kUniform) {
    const double a = std::clamp(gamma, d.lo, d.hi);
    return 1.0 - 0.5 * (a + d.hi);
  }
  if (d.point_mass()) return 1.0 - (d.mean >= 1.0 ? 1.0 : 0.0);
  const double a = d.alpha();
  const double b = d.beta_param();
  const double g = std::clamp(gamma, 0.0, 1.0);
  const double tail = boost::math::ibetac(a, b, g);
  if (tail <= 0.0) return 1.0 - g;
  const double mean_tail = d.mean * boost::math::ibetac(a + 1.0, b, g) / tail;
  return 1.0 - mean_tail;
}

inline void to_json(nlohmann::json& j, const ConfidenceDensity& d) {
  if (d.kind == ConfidenceDensity::Kind::kUniform) {
    j = nlohmann::json{{"kind", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
  } else {
    j = nlohmann::json{{"kind", "beta"}, {"mean", d.mean}, {"concentration", d.concentration}};
  }
}

inline void from_json(const nlohmann::json& j, ConfidenceDensity& d) {
  const std::string kind = j.value("kind", std::string("beta"));
  if (kind == "uniform") {
    d = ConfidenceDensity::uniform(j.value("lo", 0.0), j.value("hi", 1.0));
  } else if (kind == "beta") {
    d = ConfidenceDensity::beta(j.value("mean", 0.9), j.value("concentration", 10.0));
  } else {
    throw ConfigError("unknown density kind '" + kind + "'");
  }
}

inline void to_json(nlohmann::json& j, const SimVlmProfile& p) {
  j = nlohmann::json{{"base", p.base},           {"derived", p.derived},
                     {"mode", to_string(p.mode)}, {"temperature", p.temperature},
                     {"shift", p.shift},           {"seed", p.seed}};
}

inline void from_json(const nlohmann::json& j, SimVlmProfile& p) {
  if (j.contains("base")) p.base = j["base"].get<ConfidenceDensity>();
  if (j.contains("derived")) p.derived = j["derived"].get<ConfidenceDensity>();
  if (j.contains("mode")) p.mode = confidence_mode_from_string(j["mode"].get<std::string>());
  p.temperature = j.value("temperature", p.temperature);
  p.shift = j.value("shift", p.shift);
  p.seed = j.value("seed", p.seed);
  p.validate();
}

}  // namespace recoverr::sim

#endif  // RECOVERR_SIM_PROFILE_HPP_
