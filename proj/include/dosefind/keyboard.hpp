#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "dosefind/conduct.hpp"
#include "dosefind/prior.hpp"
#include "dosefind/types.hpp"

namespace dosefind {

/// Equal-width intervals tiling [0, 1] around the target key
/// [phi - half_width, phi + half_width]. Keys that would cross 0 or 1 are
/// dropped.
struct Keys {
    std::vector<std::pair<double, double>> intervals;  // ascending
    int target_index = 0;
};

Keys build_keys(double phi, double half_width = 0.05);

/// Prior on one dose's toxicity probability: weight * Beta(a, b) +
/// (1 - weight) * Beta(1, 1).
struct KeyboardDosePrior {
    BetaParams informative;
    double weight = 1.0;
};

/// Posterior probability of each key given the data at one dose.
Eigen::VectorXd key_masses(const Keys& keys, const KeyboardDosePrior& prior, const DoseData& data);

/// Index of the key with the largest posterior mass. Masses within 1e-12 of
/// each other tie; ties go to the key nearer the target key, then the lower one.
int strongest_key(const Keys& keys, const Eigen::VectorXd& masses);

Move keyboard_move(const Keys& keys, const KeyboardDosePrior& prior, const DoseData& data);

/// Per-dose priors for a validated design, after robustification.
std::vector<KeyboardDosePrior> keyboard_priors(const ValidatedDesign& design);

/// Precomputed moves for every dose, n = 1..max_n and y = 0..n.
struct KeyboardTable {
    TrialSettings settings;
    Keys keys;
    std::vector<KeyboardDosePrior> priors;
    std::vector<Eigen::MatrixXi> moves;       // per dose, indexed (n, y); -1/0/1
    std::vector<Eigen::MatrixXi> strongest;   // per dose, key index at (n, y)
    Eigen::VectorXi eliminate_min;            // indexed by n; -1: never

    Move move(DoseLevel d, const DoseData& data) const;
};

KeyboardTable keyboard_decision_table(const ValidatedDesign& design, double half_width = 0.05,
                                      const EliminationRule& elimination = {});

DoseChoice keyboard_next_dose(const KeyboardTable& table, const TrialState& state);

class KeyboardRule : public DoseRule {
   public:
    explicit KeyboardRule(KeyboardTable table, std::optional<SelectionPrior> selection = std::nullopt)
        : table_(std::move(table)), selection_(std::move(selection)) {}
    Move decide(const TrialState& state, std::vector<double>* detail) const override;
    MtdSelection select(const TrialState& state, double phi) const override;
    const KeyboardTable& table() const { return table_; }

   private:
    KeyboardTable table_;
    std::optional<SelectionPrior> selection_;
};

}  // namespace dosefind
