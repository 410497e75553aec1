#pragma once

// Synthetic replay generation with recoverable root causes.
//
// Templates use "{obj}" for the database object an episode touches. A
// context-dependent root cause first emits its signature events into the
// session, then the failure itself. Root causes inside an overlap block share
// error and statement texts, so only the signature tells them apart.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtriage/core_model.hpp"
#include "rtriage/replay_log.hpp"

namespace rtriage {

struct SignatureStep {
  std::string statement_template;
  EventStatus status = EventStatus::skipped;
  std::string message_template;  // error message (failed) or skip reason (skipped)
  std::int64_t error_code = 0;   // failed steps only
  std::string label_id;          // ground truth of the step itself when it fails
};

struct RootCauseSpec {
  std::string label_id;
  std::string display_name;
  double weight = 1.0;
  std::vector<std::string> error_templates;
  std::vector<std::string> statement_templates;
  std::vector<std::int64_t> error_codes;
  std::vector<std::string> request_names;
  bool context_dependent = false;
  std::vector<SignatureStep> context_signature;
  int overlap_block = -1;  // >= 0 groups specs into one indistinguishable block
};

struct SynthScenario {
  std::uint64_t seed = 7;
  std::string replay_id = "R0001";
  std::string capture_id = "C0001";
  int num_sessions = 1000;
  int failed_events = 3000;  // primary failures; signature failures come on top
  int max_filler = 2;        // succeeded statements per episode, drawn in [0, max_filler]
  int object_pool = 30;
  std::vector<RootCauseSpec> root_causes;
};

struct SynthResult {
  ReplayLog log;
  GroundTruth truth;
};

/// Throws ValidationError when the scenario is inconsistent.
void validate_scenario(const SynthScenario& s);

/// Pure function of the scenario, seed included.
SynthResult generate(const SynthScenario& scenario);

/// Twelve-class scenario; the last `overlap_classes` classes form one overlap
/// block separated only by their session context.
SynthScenario overlap_scenario(std::uint64_t seed = 7, int overlap_classes = 3,
                               int failed_events = 3000);

/// `classes` fully distinguishable root causes (no context dependence).
SynthScenario plain_scenario(std::uint64_t seed, int classes, int failed_events);

std::string object_name(int index);
std::string instantiate(std::string_view tmpl, std::string_view object);

void to_json(nlohmann::json& j, const SynthScenario& s);
void from_json(const nlohmann::json& j, SynthScenario& s);

}  // namespace rtriage
