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

// Quickstart: generate a synthetic world, calibrate, then compare vanilla
// selective prediction with evidence-based recovery at r = 0.2. Prints one
// traced recovery.

#include <cstdio>
#include <memory>

#include "recoverr/harness/calibration.hpp"
#include "recoverr/harness/eval.hpp"
#include "recoverr/sim/dataset.hpp"

using namespace recoverr;

int main() {
  sim::SimDatasetSpec spec;
  spec.n_instances = 10000;
  spec.calibration_size = 5000;
  auto data = sim::gen_dataset(spec, 7);
  auto worlds = std::make_shared<const sim::WorldStore>(data.worlds);

  harness::SimSettings settings;
  settings.profile.base = sim::ConfidenceDensity::beta(0.95, 20.0);
  settings.profile.derived = sim::ConfidenceDensity::beta(0.55, 20.0);
  harness::Seeds seeds;
  seeds.vlm = 1;
  seeds.tools = 2;
  const auto bundle = harness::ClientBundle::simulated(worlds, settings, seeds, false);

  const auto samples = harness::score_calibration_set(data.calibration, *bundle->set().vlm, {}, 0.5);
  const auto artifacts = harness::calibrate_samples(samples, 0.2, harness::CalibrationConfig{});
  std::printf("gamma@0.2 = %.4f  ECE %.4f -> %.4f\n", artifacts.threshold.gamma, artifacts.before.ece,
              artifacts.after.ece);

  verifier::RecoverrParams params;
  params.r = 0.2;
  params.gamma = artifacts.threshold.gamma;

  for (auto method : {harness::Method::kVanilla, harness::Method::kVisionTools, harness::Method::kRecoverr}) {
    auto p = params;
    if (method == harness::Method::kVisionTools) p.n_turns = 0;
    const auto res = harness::evaluate(data.test, method, p, bundle->set(), artifacts.calibrator(), {}, {}, {});
    const auto& m = *res.metrics;
    std::printf("%-13s coverage %.3f  risk %.3f  phi_1 %.3f  recovered %zu\n", harness::to_string(method),
                m.coverage, m.risk.value_or(0.0), m.effective_reliability, m.recovered_size);
  }

  for (const auto& in : data.test) {
    const auto pred = harness::predict(in, *bundle->set().vlm, artifacts.calibrator(), {});
    if (selective::decide(pred.prediction.confidence, params.gamma)) continue;
    const auto res = verifier::run(in, pred.prediction, params, bundle->set(), artifacts.calibrator());
    if (res.outcome.provenance != Provenance::kRecovered) continue;
    std::printf("\nQ: %s\nA: %s (confidence %.3f)\nH: %s\n", in.question.c_str(), pred.prediction.answer.c_str(),
                pred.prediction.confidence.value(), res.trace.hypothesis->statement.c_str());
    for (const auto& turn : res.trace.turns) {
      for (const auto& v : turn.evidences) {
        if (v.relevant) std::printf("  turn %d evidence: %s\n", turn.turn, v.evidence.statement.c_str());
      }
      std::printf("  turn %d P(H | evidence) = %.2f\n", turn.turn, turn.sufficiency.probability);
    }
    break;
  }
  return 0;
}
