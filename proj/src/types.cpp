#include "dosefind/types.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dosefind {

namespace {

std::string join_errors(const std::vector<FieldError>& errors) {
    std::ostringstream os;
    os << "validation failed:";
    for (const auto& e : errors) os << " [" << e.field << "] " << e.message << ";";
    return os.str();
}

bool is_probability(double p) { return std::isfinite(p) && p > 0.0 && p < 1.0; }

void check_settings(const TrialSettings& s, std::vector<FieldError>& errors) {
    if (s.num_doses < 2) errors.push_back({"num_doses", "need at least 2 doses"});
    if (!is_probability(s.target)) errors.push_back({"target", "must lie in (0, 1)"});
    const double phi1 = s.underdose();
    const double phi2 = s.overdose();
    if (!is_probability(phi1)) errors.push_back({"phi1", "must lie in (0, 1)"});
    if (!is_probability(phi2)) errors.push_back({"phi2", "must lie in (0, 1)"});
    if (!(phi1 < s.target && s.target < phi2))
        errors.push_back({"phi1", "require 0 < phi1 < target < phi2 < 1"});
    if (s.cohort_size < 1) errors.push_back({"cohort_size", "must be at least 1"});
    if (s.max_n < 1 || s.max_n < s.cohort_size)
        errors.push_back({"max_n", "must be at least the cohort size"});
    else if (s.cohort_size >= 1 && s.max_n % s.cohort_size != 0)
        errors.push_back({"max_n", "must be a multiple of cohort_size"});
    if (s.start_dose < 1 || s.start_dose > s.num_doses)
        errors.push_back({"start_dose", "must be a dose level in [1, num_doses]"});
}

}  // namespace

ValidationError::ValidationError(std::vector<FieldError> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

std::string to_string(DesignKind kind) {
    switch (kind) {
        case DesignKind::Crm: return "crm";
        case DesignKind::Boin: return "boin";
        case DesignKind::Keyboard: return "keyboard";
    }
    return "unknown";
}

DesignKind design_kind_from_string(const std::string& s) {
    if (s == "crm") return DesignKind::Crm;
    if (s == "boin") return DesignKind::Boin;
    if (s == "keyboard") return DesignKind::Keyboard;
    throw ValidationError("design", "unknown design '" + s + "' (expected crm, boin or keyboard)");
}

std::string to_string(Decision d) {
    switch (d) {
        case Decision::Escalate: return "Escalate";
        case Decision::Stay: return "Stay";
        case Decision::DeEscalate: return "DeEscalate";
        case Decision::EliminateAndDeEscalate: return "EliminateAndDeEscalate";
        case Decision::TerminateTrial: return "TerminateTrial";
    }
    return "Unknown";
}

Decision decision_from_string(const std::string& s) {
    for (auto d : {Decision::Escalate, Decision::Stay, Decision::DeEscalate,
                   Decision::EliminateAndDeEscalate, Decision::TerminateTrial})
        if (to_string(d) == s) return d;
    throw std::invalid_argument("unknown decision '" + s + "'");
}

std::string to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::Active: return "active";
        case TrialStatus::Complete: return "complete";
        case TrialStatus::Terminated: return "terminated";
    }
    return "unknown";
}

DoseLevel closest_dose(const Eigen::VectorXd& values, double target) {
    DoseLevel best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    bool tied = false;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        // Distances within 1e-12 count as a tie so that rounding in the
        // inputs cannot silently pick a side.
        const double dist = std::abs(values[i] - target);
        if (dist < best_dist - 1e-12) {
            best_dist = dist;
            best = static_cast<DoseLevel>(i + 1);
            tied = false;
        } else if (std::abs(dist - best_dist) <= 1e-12) {
            tied = true;
        }
    }
    if (tied) throw ValidationError("skeleton", "two doses are equally close to the target");
    return best;
}

Scenario make_scenario(const Eigen::VectorXd& true_p, double target, std::string label) {
    std::vector<FieldError> errors;
    if (true_p.size() < 2) errors.push_back({"true_p", "need at least 2 doses"});
    for (Eigen::Index i = 0; i < true_p.size(); ++i) {
        if (!(true_p[i] >= 0.0 && true_p[i] <= 1.0))
            errors.push_back({"true_p", "entries must be probabilities"});
        if (i > 0 && true_p[i] < true_p[i - 1])
            errors.push_back({"true_p", "must be non-decreasing"});
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));
    Scenario s;
    s.label = std::move(label);
    s.true_p = true_p;
    try {
        s.mtd = closest_dose(true_p, target);
    } catch (const ValidationError&) {
        throw ValidationError("true_p", "two doses are equally close to the target");
    }
    return s;
}

TrialState TrialState::start(const TrialSettings& settings) {
    TrialState s;
    s.doses.assign(static_cast<std::size_t>(settings.num_doses), DoseData{});
    s.current_dose = settings.start_dose;
    return s;
}

int TrialState::total_enrolled() const {
    return std::accumulate(doses.begin(), doses.end(), 0,
                           [](int acc, const DoseData& d) { return acc + d.n; });
}

DoseLevel TrialState::highest_admissible() const {
    if (eliminated_from) return *eliminated_from - 1;
    return num_doses();
}

TrialStatus TrialState::status(const TrialSettings& settings) const {
    if (terminated) return TrialStatus::Terminated;
    if (total_enrolled() >= settings.max_n) return TrialStatus::Complete;
    return TrialStatus::Active;
}

TrialSettings validate_settings(const TrialSettings& settings) {
    std::vector<FieldError> errors;
    check_settings(settings, errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    TrialSettings out = settings;
    out.phi1 = settings.underdose();
    out.phi2 = settings.overdose();
    return out;
}

ValidatedDesign validate_settings(const TrialSettings& settings, const PriorSpec& prior) {
    std::vector<FieldError> errors;
    check_settings(settings, errors);

    const auto J = static_cast<Eigen::Index>(settings.num_doses);
    if (prior.skeleton.size() != J)
        errors.push_back({"skeleton", "length must equal num_doses"});
    for (Eigen::Index i = 0; i < prior.skeleton.size(); ++i) {
        if (!is_probability(prior.skeleton[i])) {
            errors.push_back({"skeleton", "entries must lie in (0, 1)"});
            break;
        }
    }
    for (Eigen::Index i = 1; i < prior.skeleton.size(); ++i) {
        if (!(prior.skeleton[i] > prior.skeleton[i - 1])) {
            errors.push_back({"skeleton", "must be strictly increasing (non-monotone skeleton)"});
            break;
        }
    }
    if (prior.pess.size() != J) errors.push_back({"pess", "length must equal num_doses"});
    for (Eigen::Index i = 0; i < prior.pess.size(); ++i) {
        if (!std::isfinite(prior.pess[i]) || prior.pess[i] < 0.0) {
            errors.push_back({"pess", "entries must be finite and non-negative"});
            break;
        }
    }
    if (prior.mixture_weight &&
        !(*prior.mixture_weight >= 0.0 && *prior.mixture_weight <= 1.0))
        errors.push_back({"mixture_weight", "must lie in [0, 1]"});

    DoseLevel prior_mtd = 0;
    if (errors.empty()) {
        try {
            prior_mtd = closest_dose(prior.skeleton, settings.target);
        } catch (const ValidationError& e) {
            errors.insert(errors.end(), e.errors().begin(), e.errors().end());
        }
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));

    ValidatedDesign out;
    out.settings = settings;
    out.settings.phi1 = settings.underdose();
    out.settings.phi2 = settings.overdose();
    out.prior = prior;
    out.prior_mtd = prior_mtd;
    return out;
}

}  // namespace dosefind
