#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dosefind/design.hpp"
#include "dosefind/rng.hpp"
#include "dosefind/types.hpp"

namespace dosefind {

/// A true dose-toxicity curve paired with the skeleton the designs are given.
struct StudyScenario {
    Scenario scenario;
    Eigen::VectorXd skeleton;
};

/// How the prior MTD relates to the true MTD in random scenarios.
enum class ScenarioFamily { Correct, OneBelow, OneAbove, TwoBelow, TwoAbove };

std::string to_string(ScenarioFamily f);
ScenarioFamily scenario_family_from_string(const std::string& s);

/// Signed offset prior MTD - true MTD for a family.
int prior_offset(ScenarioFamily f);

/// Skeleton whose value at `prior_mtd` equals the target. For five doses at
/// target 0.3 these are the five reference skeletons of the standard study;
/// otherwise they are built by the usual spacing recursion of the power model.
Eigen::VectorXd reference_skeleton(const TrialSettings& settings, DoseLevel prior_mtd);

/// The ten fixed scenarios of the standard study (J = 5, target 0.3).
std::vector<StudyScenario> reference_scenarios();

/// Pseudo-uniform random curve: MTD level uniform over 1..J (or `mtd` when
/// given), an upper bound B = phi + (1 - phi) M with M ~ Beta(max(J - j, 0.5), 1),
/// then sorted uniforms on [0, B] redrawn until dose j is the MTD. Curves
/// whose MTD is not within 0.05 of phi, or whose neighbouring gaps fall
/// outside (0.05, 0.3), are dropped and M is redrawn.
Scenario generate_random_scenario(double phi, int num_doses, RngStream& rng,
                                  std::optional<DoseLevel> mtd = std::nullopt);

inline constexpr int kRandomScenarioAttempts = 1000000;

/// Random scenario with true MTD drawn uniformly over the levels the family
/// allows, paired with the reference skeleton at the offset prior MTD.
StudyScenario misspecified_family(ScenarioFamily family, const TrialSettings& settings, RngStream& rng);

struct RandomScenarios {
    int count = 0;
    ScenarioFamily family = ScenarioFamily::Correct;
};

struct SimulationPlan {
    TrialSettings settings;
    std::vector<DesignConfig> designs;
    std::vector<StudyScenario> scenarios;
    RandomScenarios random;
    Eigen::VectorXd pess;  // informative PESS per dose; empty means 3 everywhere
    int n_trials = 2000;
    std::uint64_t seed = 0;
    int workers = 0;  // 0: hardware concurrency
    bool keep_trials = false;
};

/// Throws ValidationError on an unusable plan.
void validate_plan(const SimulationPlan& plan);

/// Exact integer tallies for one design on one scenario.
struct OcCounts {
    std::int64_t trials = 0;
    std::int64_t correct = 0;
    std::int64_t no_selection = 0;
    std::int64_t patients = 0;
    std::int64_t at_mtd = 0;
    std::int64_t above_mtd = 0;
    std::int64_t dlts = 0;
    std::int64_t overdosing_trials = 0;
    std::int64_t poor_allocation_trials = 0;
    std::vector<std::int64_t> selected;   // per dose
    std::vector<std::int64_t> allocated;  // patients per dose

    void merge(const OcCounts& other);
};

/// Percentages in [0, 100]. PCS counts trials without a selection as incorrect.
struct OpCharacteristics {
    double pcs = 0.0;
    double pct_at_mtd = 0.0;
    double pct_above_mtd = 0.0;
    double risk_overdosing = 0.0;
    double risk_poor_allocation = 0.0;
    double pct_no_selection = 0.0;
    double mean_patients = 0.0;
    double mean_dlts = 0.0;
    std::vector<double> selection_pct;
    std::vector<double> allocation_pct;
};

OpCharacteristics summarize(const OcCounts& counts);

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {"pcs", "pct_at_mtd", "pct_above_mtd",
                                                   "risk_overdosing", "risk_poor_allocation"};
    return names;
}
double metric(const OpCharacteristics& oc, const std::string& name);

struct TrialRecord {
    int design = 0;
    int scenario = 0;
    int trial = 0;
    std::vector<DoseData> doses;
    std::optional<DoseLevel> selected;
    bool terminated = false;
};

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;
};

struct SimulationResult {
    std::vector<std::string> design_labels;
    std::vector<StudyScenario> scenarios;  // fixed then generated
    std::vector<std::vector<OcCounts>> counts;  // [design][scenario]
    std::vector<std::vector<OpCharacteristics>> oc;  // [design][scenario]
    std::vector<TrialRecord> trials;  // only when keep_trials
    int n_trials = 0;
    std::uint64_t seed = 0;

    /// Mean and sample SD of a metric over scenarios, for one design.
    MetricSummary across_scenarios(std::size_t design, const std::string& metric) const;
};

class SimulationCanceled : public std::runtime_error {
   public:
    SimulationCanceled() : std::runtime_error("simulation canceled") {}
};

struct SimulationHooks {
    std::function<void(double)> progress;  // fraction done, called from one thread
    const std::atomic<bool>* cancel = nullptr;
};

/// Scenarios materialised from the plan: fixed ones, then random draws each
/// seeded from (seed, scenario index, kScenarioStreamId).
std::vector<StudyScenario> materialize_scenarios(const SimulationPlan& plan);

/// Plays one trial to completion; `rng` supplies patient outcomes.
TrialState simulate_trial(const DoseRule& rule, const TrialSettings& settings,
                          const EliminationRule& elimination, const Eigen::VectorXd& true_p,
                          RngStream& rng);

/// Every design sees the same patient stream for a given (scenario, trial),
/// and aggregates are exact integer sums, so results do not depend on the
/// worker count.
SimulationResult run_simulation(const SimulationPlan& plan, const SimulationHooks& hooks = {});

}  // namespace dosefind
