#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "dosefind/types.hpp"

namespace dosefind {

/// Overdose control: dose j and above close when Pr(p_j > phi | data) exceeds
/// `threshold` under a Beta(1, 1) prior and at least `min_n` patients have
/// been treated at j.
struct EliminationRule {
    double threshold = 0.95;
    int min_n = 3;
};

/// Raised for transitions that are not allowed in the current trial state.
class IllegalTransition : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

bool check_elimination(const DoseData& data, double phi, const EliminationRule& rule = {});

/// Smallest DLT count out of n that triggers elimination, or -1 if none does.
int elimination_boundary(int n, double phi, const EliminationRule& rule = {});

/// A design's escalation logic. `decide` sees the state after the latest
/// cohort was recorded and proposes a direction; clipping at the ends of the
/// dose range and at eliminated doses happens in apply_cohort. Implementations
/// must be safe to call concurrently.
struct MtdSelection;

class DoseRule {
   public:
    virtual ~DoseRule() = default;
    /// `detail`, when given, receives the numbers behind the decision.
    virtual Move decide(const TrialState& state, std::vector<double>* detail) const = 0;
    /// End-of-trial MTD; isotonic with vague pseudo-counts unless overridden.
    virtual MtdSelection select(const TrialState& state, double phi) const;
    /// Whether the safety rule closes the current dose; the beta rule unless
    /// overridden.
    virtual bool eliminates(const TrialState& state, double phi, const EliminationRule& rule) const;
};

struct DoseChoice {
    Decision decision = Decision::Stay;
    DoseLevel next_dose = 1;
};

/// Turns a proposed move into a decision that respects the dose range and the
/// elimination set.
DoseChoice clip_move(const TrialState& state, Move move);

/// Records one cohort at the current dose, applies the elimination rule and
/// then the design's rule. Pure: returns the successor state. `audit = false`
/// skips history and the design call on the final cohort.
TrialState apply_cohort(TrialState state, int n_dlt, const TrialSettings& settings,
                        const DoseRule& rule, const EliminationRule& elimination = {},
                        bool audit = true);

/// Weighted least-squares projection onto non-decreasing sequences (pool
/// adjacent violators).
template <class Derived, class WeightDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> pava(
    const Eigen::MatrixBase<Derived>& values, const Eigen::MatrixBase<WeightDerived>& weights) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = values.size();
    if (weights.size() != n) throw std::invalid_argument("pava: values and weights differ in length");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(weights(i) > 0)) throw std::invalid_argument("pava: weights must be positive");

    // Blocks as (weighted mean, total weight, length), merged from the left.
    std::vector<Scalar> mean, weight;
    std::vector<Eigen::Index> length;
    for (Eigen::Index i = 0; i < n; ++i) {
        mean.push_back(values(i));
        weight.push_back(weights(i));
        length.push_back(1);
        while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
            const std::size_t k = mean.size() - 1;
            const Scalar w = weight[k - 1] + weight[k];
            mean[k - 1] = (weight[k - 1] * mean[k - 1] + weight[k] * mean[k]) / w;
            weight[k - 1] = w;
            length[k - 1] += length[k];
            mean.pop_back();
            weight.pop_back();
            length.pop_back();
        }
    }
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n);
    Eigen::Index pos = 0;
    for (std::size_t b = 0; b < mean.size(); ++b)
        for (Eigen::Index i = 0; i < length[b]; ++i) out(pos++) = mean[b];
    return out;
}

struct MtdSelection {
    std::optional<DoseLevel> selected;
    std::vector<DoseLevel> admissible;  // tried and not eliminated
    Eigen::VectorXd isotonic_estimates;  // one per admissible dose
};

/// Beta pseudo-counts per dose for the end-of-trial estimate.
struct SelectionPrior {
    Eigen::VectorXd a;
    Eigen::VectorXd b;
};

/// Beta(0.05, 0.05) at every dose.
SelectionPrior vague_selection_prior(int num_doses);

/// End-of-trial MTD: beta posterior means at admissible doses, isotonic
/// regression weighted by inverse posterior variance, then the dose closest to
/// phi. Ties go to the higher dose below phi and the lower dose above it.
MtdSelection select_mtd(const TrialState& state, double phi, const SelectionPrior& prior);
MtdSelection select_mtd(const TrialState& state, double phi);

}  // namespace dosefind
