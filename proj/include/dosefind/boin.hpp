#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dosefind/conduct.hpp"
#include "dosefind/prior.hpp"
#include "dosefind/types.hpp"

namespace dosefind {

/// Escalation and de-escalation cut-offs on the observed DLT rate y/n.
struct Boundaries {
    double lambda_e = 0.0;
    double lambda_d = 1.0;
};

/// Boundaries at sample size n minimising the posterior probability of an
/// incorrect decision under hypothesis prior pi. lambda_e is floored at 0 and
/// lambda_d capped at 1. The uniform prior gives the noninformative design.
Boundaries boundaries(double phi, double phi1, double phi2, const HypothesisPrior& pi, int n);

/// The same before the floor and cap. A strong prior on a high dose can push
/// lambda_d below 0, which makes de-escalation certain.
Boundaries unclamped_boundaries(double phi, double phi1, double phi2, const HypothesisPrior& pi, int n);

/// Integer decision table over doses (rows) and cumulative sample sizes
/// (columns n = cohort, 2 cohort, ..., max_n).
struct BoinTable {
    TrialSettings settings;
    std::vector<int> sample_sizes;
    Eigen::MatrixXi escalate_max;    // escalate if y <= this (-1: never)
    Eigen::MatrixXi deescalate_min;  // de-escalate if y >= this (n + 1: never)
    Eigen::MatrixXi eliminate_min;   // eliminate if y >= this (-1: never)
    Eigen::MatrixXd lambda_e;
    Eigen::MatrixXd lambda_d;
    HypothesisPriorTable pi;
    std::vector<std::string> warnings;

    /// Column of sample size n; throws if n is not a multiple of the cohort size.
    int column(int n) const;
};

/// Table for an explicit per-dose hypothesis prior. Throws std::domain_error
/// if the unclamped lambda_e exceeds lambda_d anywhere.
BoinTable decision_table(const TrialSettings& settings, const HypothesisPriorTable& pi,
                         const EliminationRule& elimination = {});

/// Table for a validated design; applies robustification and mixing from the
/// prior spec. A PESS of zero everywhere reproduces the noninformative table.
BoinTable decision_table(const ValidatedDesign& design, const EliminationRule& elimination = {});

/// Hypothesis prior per dose implied by a validated design.
HypothesisPriorTable design_hypothesis_priors(const ValidatedDesign& design);

Move boin_move(const BoinTable& table, const TrialState& state);
DoseChoice boin_next_dose(const BoinTable& table, const TrialState& state);

class BoinRule : public DoseRule {
   public:
    explicit BoinRule(BoinTable table, std::optional<SelectionPrior> selection = std::nullopt)
        : table_(std::move(table)), selection_(std::move(selection)) {}
    Move decide(const TrialState& state, std::vector<double>* detail) const override;
    MtdSelection select(const TrialState& state, double phi) const override;
    const BoinTable& table() const { return table_; }

   private:
    BoinTable table_;
    std::optional<SelectionPrior> selection_;
};

}  // namespace dosefind
