#pragma once

#include <array>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "dosefind/conduct.hpp"
#include "dosefind/types.hpp"

namespace dosefind {

/// One-parameter power model p_j = q_j^exp(alpha), alpha ~ N(0, sigma2).
struct CrmModel {
    Eigen::VectorXd skeleton;
    double sigma2 = 2.0;
};

/// Default prior variance of alpha for the noninformative CRM. Operating
/// characteristics are flat in sigma2 from about 8 upward.
inline constexpr double kNoninformativeCrmSigma2 = 8.0;

/// Posterior mean toxicity at every dose, integrated over alpha in
/// [-10 sigma, 10 sigma] with relative error at most 1e-8.
Eigen::VectorXd posterior_means(const CrmModel& model, const std::vector<DoseData>& doses);

/// Posterior probability that each dose's toxicity exceeds phi under the
/// power model.
Eigen::VectorXd posterior_overdose_probabilities(const CrmModel& model, const std::vector<DoseData>& doses,
                                                 double phi);

/// Dose whose posterior mean is closest to phi among non-eliminated doses,
/// lower dose on ties.
DoseLevel crm_target_dose(const Eigen::VectorXd& means, const TrialState& state, double phi);

/// Direction toward the target dose, at most one level per cohort.
DoseChoice crm_next_dose(const CrmModel& model, const TrialState& state, double phi);

/// CRM as a DoseRule. Posterior means are memoised on the data, which repeat
/// heavily across simulated trials.
class CrmRule : public DoseRule {
   public:
    /// `model_selection` picks the final MTD from the posterior means instead
    /// of the isotonic estimate.
    /// `model_safety` evaluates the overdose rule under the power-model
    /// posterior instead of the uniform beta posterior.
    CrmRule(CrmModel model, double phi, bool model_selection = false, bool model_safety = false);
    bool eliminates(const TrialState& state, double phi, const EliminationRule& rule) const override;
    Move decide(const TrialState& state, std::vector<double>* detail) const override;
    MtdSelection select(const TrialState& state, double phi) const override;
    Eigen::VectorXd means(const std::vector<DoseData>& doses) const;
    Eigen::VectorXd overdose_probabilities(const std::vector<DoseData>& doses) const;
    const CrmModel& model() const { return model_; }

   private:
    static constexpr std::size_t kShards = 16;
    static constexpr std::size_t kShardCapacity = 1 << 14;
    struct Entry {
        Eigen::VectorXd means;
        Eigen::VectorXd overdose;  // empty until first needed
    };
    struct Shard {
        std::mutex mutex;
        std::unordered_map<std::string, Entry> entries;
    };

    Eigen::VectorXd cached(const std::vector<DoseData>& doses, bool overdose) const;

    CrmModel model_;
    double phi_;
    bool model_selection_;
    bool model_safety_;
    mutable std::array<Shard, kShards> shards_;
};

}  // namespace dosefind
