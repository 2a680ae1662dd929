#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dosefind {

// Dose levels are 1-based in every public structure.
using DoseLevel = int;

struct FieldError {
    std::string field;
    std::string message;
};

/// Raised when user-supplied settings or priors fail validation. Carries the
/// full list of problems rather than only the first.
class ValidationError : public std::invalid_argument {
   public:
    explicit ValidationError(std::vector<FieldError> errors);
    ValidationError(std::string field, std::string message)
        : ValidationError(std::vector<FieldError>{{std::move(field), std::move(message)}}) {}
    const std::vector<FieldError>& errors() const noexcept { return errors_; }

   private:
    std::vector<FieldError> errors_;
};

enum class DesignKind { Crm, Boin, Keyboard };

std::string to_string(DesignKind kind);
DesignKind design_kind_from_string(const std::string& s);

struct TrialSettings {
    int num_doses = 5;
    double target = 0.3;
    std::optional<double> phi1;  // defaults to 0.6 * target
    std::optional<double> phi2;  // defaults to 1.4 * target
    int max_n = 30;
    int cohort_size = 3;
    DoseLevel start_dose = 1;

    double underdose() const { return phi1.value_or(0.6 * target); }
    double overdose() const { return phi2.value_or(1.4 * target); }
    int num_cohorts() const { return max_n / cohort_size; }
};

struct PriorSpec {
    Eigen::VectorXd skeleton;
    Eigen::VectorXd pess;
    bool robustify = false;
    std::optional<double> mixture_weight;
};

struct DoseData {
    int n = 0;
    int y = 0;

    double rate() const { return n > 0 ? static_cast<double>(y) / n : 0.0; }
    friend bool operator==(const DoseData&, const DoseData&) = default;
};

enum class Decision { Escalate, Stay, DeEscalate, EliminateAndDeEscalate, TerminateTrial };

std::string to_string(Decision d);
Decision decision_from_string(const std::string& s);

/// Direction proposed by a design before clipping and safety rules.
enum class Move { Down = -1, Stay = 0, Up = 1 };

struct Scenario {
    std::string label;
    Eigen::VectorXd true_p;
    DoseLevel mtd = 0;
};

/// Builds a scenario and locates its MTD; rejects non-monotone curves and
/// curves with two doses equally close to the target.
Scenario make_scenario(const Eigen::VectorXd& true_p, double target, std::string label = {});

/// Dose whose value is closest to target. Throws on an exact tie.
DoseLevel closest_dose(const Eigen::VectorXd& values, double target);

struct CohortRecord {
    int cohort_index = 0;
    DoseLevel dose = 0;
    int n = 0;
    int n_dlt = 0;
    Decision decision = Decision::Stay;
    DoseLevel next_dose = 0;
    // Design-specific numbers used for the decision: BOIN boundaries,
    // the keyboard strongest key, or CRM posterior means.
    std::vector<double> boundaries_used;
};

enum class TrialStatus { Active, Complete, Terminated };

std::string to_string(TrialStatus s);

struct TrialState {
    std::vector<DoseData> doses;
    DoseLevel current_dose = 1;
    std::optional<DoseLevel> eliminated_from;
    bool terminated = false;
    std::vector<CohortRecord> history;

    static TrialState start(const TrialSettings& settings);

    int num_doses() const { return static_cast<int>(doses.size()); }
    const DoseData& at(DoseLevel d) const { return doses.at(static_cast<std::size_t>(d - 1)); }
    DoseData& at(DoseLevel d) { return doses.at(static_cast<std::size_t>(d - 1)); }
    int total_enrolled() const;
    bool is_eliminated(DoseLevel d) const { return eliminated_from && d >= *eliminated_from; }
    /// Highest dose level still open to patients (0 if none).
    DoseLevel highest_admissible() const;
    TrialStatus status(const TrialSettings& settings) const;

    friend bool operator==(const TrialState& a, const TrialState& b) {
        return a.doses == b.doses && a.current_dose == b.current_dose &&
               a.eliminated_from == b.eliminated_from && a.terminated == b.terminated &&
               a.history.size() == b.history.size();
    }
};

struct ValidatedDesign {
    TrialSettings settings;  // phi1/phi2 filled in
    PriorSpec prior;
    DoseLevel prior_mtd = 0;  // j*, the skeleton dose closest to target
};

/// Checks settings and prior together and fills defaulted fields.
ValidatedDesign validate_settings(const TrialSettings& settings, const PriorSpec& prior);

/// Settings-only checks (no prior involved).
TrialSettings validate_settings(const TrialSettings& settings);

}  // namespace dosefind
