#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dosefind/boin.hpp"
#include "dosefind/conduct.hpp"
#include "dosefind/crm.hpp"
#include "dosefind/keyboard.hpp"
#include "dosefind/types.hpp"

namespace dosefind {

/// How the final MTD is chosen. `PriorIsotonic` seeds the isotonic estimate
/// with the design's beta prior; `Model` uses CRM posterior means.
enum class SelectionMethod { Isotonic, PriorIsotonic, Model };

std::string to_string(SelectionMethod m);
SelectionMethod selection_method_from_string(const std::string& s);

/// Knobs that sit beside the prior: keyboard key width, an explicit CRM prior
/// variance, the safety rule and the final selection method.
struct DesignOptions {
    double half_width = 0.05;
    std::optional<double> crm_sigma2;
    EliminationRule elimination;
    std::optional<SelectionMethod> selection;  // unset: Model for CRM, PriorIsotonic otherwise
    bool crm_model_safety = true;              // false: uniform beta posterior as for BOIN
};

/// A fully specified design ready to drive trials.
struct Design {
    DesignKind kind = DesignKind::Boin;
    ValidatedDesign validated;
    DesignOptions options;
};

Design make_design(DesignKind kind, const TrialSettings& settings, const PriorSpec& prior,
                   const DesignOptions& options = {});

/// Prior variance of the CRM parameter: the explicit value if set, the
/// variance matching the PESS at the prior MTD when that PESS is positive,
/// otherwise the noninformative default.
double crm_sigma2(const Design& design);

SelectionMethod selection_method(const Design& design);

/// Pseudo-counts n0 q and n0 (1 - q) at doses with positive (robustified)
/// PESS, Beta(0.05, 0.05) elsewhere.
SelectionPrior design_selection_prior(const ValidatedDesign& design);

std::shared_ptr<const DoseRule> make_rule(const Design& design);

/// A named design variant for simulation studies. `informative = false`
/// zeroes the PESS, giving the standard design on the same skeleton.
struct DesignConfig {
    std::string label;
    DesignKind kind = DesignKind::Boin;
    bool informative = true;
    bool robustify = false;
    std::optional<double> mixture_weight;
    DesignOptions options;
};

/// The labelled variants: CRM, iCRM, BOIN, iBOIN, iBOIN_R, iBOIN_M50,
/// iBOIN_M90, Keyboard, iKeyboard, iKeyboard_R, iKeyboard_M50, iKeyboard_M90.
DesignConfig standard_design(const std::string& label);
std::vector<std::string> standard_design_labels();

/// Design for `config` on a given skeleton and informative PESS vector.
Design make_design(const DesignConfig& config, const TrialSettings& settings,
                   const Eigen::VectorXd& skeleton, const Eigen::VectorXd& pess);

}  // namespace dosefind
