#include "dosefind/design.hpp"

#include <stdexcept>

namespace dosefind {

Design make_design(DesignKind kind, const TrialSettings& settings, const PriorSpec& prior,
                   const DesignOptions& options) {
    Design d;
    d.kind = kind;
    d.validated = validate_settings(settings, prior);
    d.options = options;
    if (options.crm_sigma2 && !(*options.crm_sigma2 > 0.0))
        throw ValidationError("crm_sigma2", "must be positive");
    if (!(options.half_width > 0.0)) throw ValidationError("half_width", "must be positive");
    if (kind == DesignKind::Keyboard) build_keys(d.validated.settings.target, options.half_width);
    return d;
}

double crm_sigma2(const Design& design) {
    if (design.options.crm_sigma2) return *design.options.crm_sigma2;
    const ValidatedDesign& v = design.validated;
    const double n0 = v.prior.pess[v.prior_mtd - 1];
    if (n0 > 0.0) return calibrate_sigma(v.prior.skeleton, v.prior_mtd, n0);
    return kNoninformativeCrmSigma2;
}

std::string to_string(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::Isotonic: return "isotonic";
        case SelectionMethod::PriorIsotonic: return "prior-isotonic";
        case SelectionMethod::Model: return "model";
    }
    return "unknown";
}

SelectionMethod selection_method_from_string(const std::string& s) {
    for (auto m : {SelectionMethod::Isotonic, SelectionMethod::PriorIsotonic, SelectionMethod::Model})
        if (to_string(m) == s) return m;
    throw ValidationError("selection", "unknown selection method '" + s +
                                           "' (expected isotonic, prior-isotonic or model)");
}

SelectionMethod selection_method(const Design& design) {
    if (design.options.selection) return *design.options.selection;
    return design.kind == DesignKind::Crm ? SelectionMethod::Model : SelectionMethod::PriorIsotonic;
}

SelectionPrior design_selection_prior(const ValidatedDesign& v) {
    const int J = v.settings.num_doses;
    const Eigen::VectorXd pess =
        v.prior.robustify ? robustify_pess(v.prior.pess, v.prior_mtd, J) : v.prior.pess;
    SelectionPrior prior = vague_selection_prior(J);
    for (int j = 0; j < J; ++j) {
        if (pess[j] > 0.0) {
            prior.a[j] = pess[j] * v.prior.skeleton[j];
            prior.b[j] = pess[j] * (1.0 - v.prior.skeleton[j]);
        }
    }
    return prior;
}

std::shared_ptr<const DoseRule> make_rule(const Design& design) {
    const ValidatedDesign& v = design.validated;
    const SelectionMethod method = selection_method(design);
    if (method == SelectionMethod::Model && design.kind != DesignKind::Crm)
        throw ValidationError("selection", "model-based selection needs a CRM design");
    std::optional<SelectionPrior> prior;
    if (method == SelectionMethod::PriorIsotonic) prior = design_selection_prior(v);
    switch (design.kind) {
        case DesignKind::Crm:
            if (prior) throw ValidationError("selection", "prior-isotonic selection is not defined for CRM");
            return std::make_shared<CrmRule>(CrmModel{v.prior.skeleton, crm_sigma2(design)},
                                             v.settings.target, method == SelectionMethod::Model,
                                             design.options.crm_model_safety);
        case DesignKind::Boin:
            return std::make_shared<BoinRule>(decision_table(v, design.options.elimination), prior);
        case DesignKind::Keyboard:
            return std::make_shared<KeyboardRule>(
                keyboard_decision_table(v, design.options.half_width, design.options.elimination), prior);
    }
    throw std::logic_error("unknown design kind");
}

namespace {

DesignConfig config(std::string label, DesignKind kind, bool informative, bool robust = false,
                    std::optional<double> w = std::nullopt) {
    DesignConfig c;
    c.label = std::move(label);
    c.kind = kind;
    c.informative = informative;
    c.robustify = robust;
    c.mixture_weight = w;
    return c;
}

}  // namespace

std::vector<std::string> standard_design_labels() {
    return {"CRM",      "iCRM",        "BOIN",      "iBOIN",         "iBOIN_R",       "iBOIN_M50",
            "iBOIN_M90", "Keyboard",   "iKeyboard", "iKeyboard_R",   "iKeyboard_M50", "iKeyboard_M90"};
}

DesignConfig standard_design(const std::string& label) {
    if (label == "CRM") return config(label, DesignKind::Crm, false);
    if (label == "iCRM") return config(label, DesignKind::Crm, true);
    if (label == "BOIN") return config(label, DesignKind::Boin, false);
    if (label == "iBOIN") return config(label, DesignKind::Boin, true);
    if (label == "iBOIN_R") return config(label, DesignKind::Boin, true, true);
    if (label == "iBOIN_M50") return config(label, DesignKind::Boin, true, false, 0.5);
    if (label == "iBOIN_M90") return config(label, DesignKind::Boin, true, false, 0.9);
    if (label == "Keyboard") return config(label, DesignKind::Keyboard, false);
    if (label == "iKeyboard") return config(label, DesignKind::Keyboard, true);
    if (label == "iKeyboard_R") return config(label, DesignKind::Keyboard, true, true);
    if (label == "iKeyboard_M50") return config(label, DesignKind::Keyboard, true, false, 0.5);
    if (label == "iKeyboard_M90") return config(label, DesignKind::Keyboard, true, false, 0.9);
    throw ValidationError("design", "unknown design label '" + label + "'");
}

Design make_design(const DesignConfig& config, const TrialSettings& settings,
                   const Eigen::VectorXd& skeleton, const Eigen::VectorXd& pess) {
    PriorSpec prior;
    prior.skeleton = skeleton;
    prior.pess = config.informative ? pess : Eigen::VectorXd::Zero(skeleton.size());
    prior.robustify = config.robustify;
    prior.mixture_weight = config.mixture_weight;
    return make_design(config.kind, settings, prior, config.options);
}

}  // namespace dosefind
