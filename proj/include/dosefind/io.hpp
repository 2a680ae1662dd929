#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include <json.hpp>

#include "dosefind/design.hpp"
#include "dosefind/simulation.hpp"

namespace dosefind {

using nlohmann::json;

// Design payload: flat settings and prior fields (`num_doses`, `target`,
// `phi1`, `phi2`, `max_n`, `cohort_size`, `start_dose`, `skeleton`, `pess`,
// `robustify`, `mixture_weight`) plus `design` and an optional `options`
// object. Malformed fields are reported together as a ValidationError.
Design design_from_json(const json& payload);
json design_to_json(const Design& design);

TrialSettings settings_from_json(const json& payload);
json settings_to_json(const TrialSettings& settings);

json to_json(const DesignOptions& options);
DesignOptions design_options_from_json(const json& j);

json to_json(const DoseData& d);
json to_json(const CohortRecord& r);

/// Trial state with derived `status` and `total_enrolled` fields.
json trial_state_to_json(const TrialState& state, const TrialSettings& settings);
/// Parses and checks a state against its design's settings.
TrialState trial_state_from_json(const json& j, const TrialSettings& settings);

json to_json(const MtdSelection& s);

/// Decision table exports. BOIN: Table-1 layout, one escalate, de-escalate and
/// eliminate row per dose, one column per sample size, NA where no count
/// triggers the action. Keyboard: one row per (dose, n), one column per DLT
/// count y = 0..max_n. CRM designs have no table and throw ValidationError.
json decision_table_json(const Design& design);
std::string decision_table_csv(const Design& design);
std::string boin_table_csv(const BoinTable& table);
json boin_table_json(const BoinTable& table);
std::string keyboard_table_csv(const KeyboardTable& table);
json keyboard_table_json(const KeyboardTable& table);

/// Stable 64-bit FNV-1a digest of the table export, as 16 hex digits.
std::string table_digest(const Design& design);

// Plan files. `designs` holds standard labels or objects
// {label, base?, design?, informative?, robustify?, mixture_weight?, options?};
// `scenarios` is "reference", a list of reference labels ("S1".."S10") or
// objects {label, true_p, skeleton}.
SimulationPlan plan_from_json(const json& j);
json plan_to_json(const SimulationPlan& plan);
DesignConfig design_config_from_json(const json& j);

json to_json(const OpCharacteristics& oc);

/// One row per design x scenario.
std::string oc_summary_csv(const SimulationResult& result);
/// Mean and SD of each metric over all scenarios, per design.
std::string aggregate_csv(const SimulationResult& result);
json aggregate_json(const SimulationResult& result);
json result_to_json(const SimulationResult& result);
void write_trials_jsonl(std::ostream& out, const SimulationResult& result);

}  // namespace dosefind
