#include <algorithm>
#include "dosefind/io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dosefind {

namespace {

// Collects type errors for every field before giving up, so a client sees
// all problems in one response.
class Reader {
   public:
    Reader(const json& j, std::string prefix, std::vector<FieldError>& errors)
        : j_(j), prefix_(std::move(prefix)), errors_(errors) {
        if (!j_.is_object()) fail("", "must be a JSON object");
    }

    bool has(const char* key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }

    std::optional<double> number(const char* key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if (!v.is_number()) return fail(key, "must be a number"), std::nullopt;
        return v.get<double>();
    }

    std::optional<int> integer(const char* key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if (!v.is_number_integer()) {
            if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()) &&
                std::abs(v.get<double>()) < 1e9)
                return static_cast<int>(v.get<double>());
            return fail(key, "must be an integer"), std::nullopt;
        }
        return v.get<int>();
    }

    std::optional<std::uint64_t> unsigned64(const char* key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
        return fail(key, "must be a non-negative integer"), std::nullopt;
    }

    std::optional<bool> boolean(const char* key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if (!v.is_boolean()) return fail(key, "must be true or false"), std::nullopt;
        return v.get<bool>();
    }

    std::optional<std::string> string(const char* key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if (!v.is_string()) return fail(key, "must be a string"), std::nullopt;
        return v.get<std::string>();
    }

    std::optional<Eigen::VectorXd> vector(const char* key) {
        if (!has(key)) return std::nullopt;
        const json& v = j_.at(key);
        if (!v.is_array()) return fail(key, "must be an array of numbers"), std::nullopt;
        Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) return fail(key, "must be an array of numbers"), std::nullopt;
            out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
        }
        return out;
    }

    const json* object(const char* key) {
        if (!has(key)) return nullptr;
        if (!j_.at(key).is_object()) return fail(key, "must be an object"), nullptr;
        return &j_.at(key);
    }

    void fail(const std::string& key, const std::string& message) {
        std::string field = prefix_;
        if (!key.empty()) field += (field.empty() ? "" : ".") + key;
        errors_.push_back({field.empty() ? "payload" : field, message});
    }

    std::string field(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

   private:
    const json& j_;
    std::string prefix_;
    std::vector<FieldError>& errors_;
};

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

template <class Int>
json na_or(Int value, bool defined) {
    return defined ? json(value) : json(nullptr);
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

TrialSettings read_settings(Reader& r) {
    TrialSettings s;
    if (auto v = r.integer("num_doses")) s.num_doses = *v;
    if (auto v = r.number("target")) s.target = *v;
    s.phi1 = r.number("phi1");
    s.phi2 = r.number("phi2");
    if (auto v = r.integer("max_n")) s.max_n = *v;
    if (auto v = r.integer("cohort_size")) s.cohort_size = *v;
    if (auto v = r.integer("start_dose")) s.start_dose = *v;
    return s;
}

void append_errors(const ValidationError& e, const std::string& prefix, std::vector<FieldError>& errors) {
    for (const auto& fe : e.errors()) errors.push_back({prefix.empty() ? fe.field : prefix + "." + fe.field, fe.message});
}

}  // namespace

TrialSettings settings_from_json(const json& payload) {
    std::vector<FieldError> errors;
    Reader r(payload, "", errors);
    TrialSettings s = read_settings(r);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return validate_settings(s);
}

json settings_to_json(const TrialSettings& s) {
    return {{"num_doses", s.num_doses},   {"target", s.target},         {"phi1", s.underdose()},
            {"phi2", s.overdose()},       {"max_n", s.max_n},           {"cohort_size", s.cohort_size},
            {"start_dose", s.start_dose}};
}

json to_json(const DesignOptions& o) {
    json j = {{"half_width", o.half_width},
              {"elimination", {{"threshold", o.elimination.threshold}, {"min_n", o.elimination.min_n}}},
              {"crm_model_safety", o.crm_model_safety}};
    j["crm_sigma2"] = o.crm_sigma2 ? json(*o.crm_sigma2) : json(nullptr);
    j["selection"] = o.selection ? json(to_string(*o.selection)) : json(nullptr);
    return j;
}

namespace {

DesignOptions read_options(const json& j, const std::string& prefix, std::vector<FieldError>& errors) {
    DesignOptions o;
    Reader r(j, prefix, errors);
    if (auto v = r.number("half_width")) o.half_width = *v;
    o.crm_sigma2 = r.number("crm_sigma2");
    if (o.crm_sigma2 && !(*o.crm_sigma2 > 0.0)) r.fail("crm_sigma2", "must be positive");
    if (auto v = r.boolean("crm_model_safety")) o.crm_model_safety = *v;
    if (auto v = r.string("selection")) {
        try {
            o.selection = selection_method_from_string(*v);
        } catch (const ValidationError& e) {
            append_errors(e, prefix, errors);
        }
    }
    if (const json* e = r.object("elimination")) {
        Reader er(*e, r.field("elimination"), errors);
        if (auto v = er.number("threshold")) o.elimination.threshold = *v;
        if (auto v = er.integer("min_n")) o.elimination.min_n = *v;
        if (!(o.elimination.threshold > 0.5 && o.elimination.threshold < 1.0))
            er.fail("threshold", "must lie in (0.5, 1)");
        if (o.elimination.min_n < 1) er.fail("min_n", "must be at least 1");
    }
    if (!(o.half_width > 0.0 && o.half_width < 0.5)) r.fail("half_width", "must lie in (0, 0.5)");
    return o;
}

}  // namespace

DesignOptions design_options_from_json(const json& j) {
    std::vector<FieldError> errors;
    DesignOptions o = read_options(j, "options", errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return o;
}

Design design_from_json(const json& payload) {
    std::vector<FieldError> errors;
    Reader r(payload, "", errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));

    DesignKind kind = DesignKind::Boin;
    if (auto v = r.string("design")) {
        try {
            kind = design_kind_from_string(*v);
        } catch (const ValidationError& e) {
            append_errors(e, "", errors);
        }
    } else if (!r.has("design")) {
        r.fail("design", "is required (crm, boin or keyboard)");
    }
    const TrialSettings settings = read_settings(r);

    PriorSpec prior;
    if (auto v = r.vector("skeleton")) prior.skeleton = *v;
    else if (!r.has("skeleton")) r.fail("skeleton", "is required");
    if (auto v = r.vector("pess")) prior.pess = *v;
    else if (!r.has("pess")) prior.pess = Eigen::VectorXd::Zero(prior.skeleton.size());
    if (auto v = r.boolean("robustify")) prior.robustify = *v;
    prior.mixture_weight = r.number("mixture_weight");

    DesignOptions options;
    if (const json* o = r.object("options")) options = read_options(*o, "options", errors);
    if (!errors.empty()) {
        // Report range errors on the fields that did parse as well.
        try {
            (void)make_design(kind, settings, prior, options);
        } catch (const ValidationError& e) {
            for (const auto& fe : e.errors()) {
                const bool seen = std::any_of(errors.begin(), errors.end(),
                                              [&](const FieldError& x) { return x.field == fe.field; });
                if (!seen) errors.push_back(fe);
            }
        } catch (const std::exception&) {
        }
        throw ValidationError(std::move(errors));
    }

    Design d = make_design(kind, settings, prior, options);
    // Build the rule once so that table-construction failures surface here.
    try {
        (void)make_rule(d);
    } catch (const std::domain_error& e) {
        throw ValidationError("prior", e.what());
    }
    return d;
}

json design_to_json(const Design& d) {
    const ValidatedDesign& v = d.validated;
    json j = settings_to_json(v.settings);
    j["design"] = to_string(d.kind);
    j["skeleton"] = vec(v.prior.skeleton);
    j["pess"] = vec(v.prior.pess);
    j["robustify"] = v.prior.robustify;
    j["mixture_weight"] = v.prior.mixture_weight ? json(*v.prior.mixture_weight) : json(nullptr);
    j["options"] = to_json(d.options);
    json resolved = {{"prior_mtd", v.prior_mtd}, {"selection", to_string(selection_method(d))}};
    if (d.kind == DesignKind::Crm) resolved["crm_sigma2"] = crm_sigma2(d);
    j["resolved"] = resolved;
    return j;
}

json to_json(const DoseData& d) { return {{"n", d.n}, {"y", d.y}}; }

json to_json(const CohortRecord& r) {
    return {{"cohort_index", r.cohort_index}, {"dose", r.dose},           {"n", r.n},
            {"n_dlt", r.n_dlt},               {"decision", to_string(r.decision)},
            {"next_dose", r.next_dose},       {"boundaries_used", r.boundaries_used}};
}

json trial_state_to_json(const TrialState& s, const TrialSettings& settings) {
    json doses = json::array();
    for (const auto& d : s.doses) doses.push_back(to_json(d));
    json history = json::array();
    for (const auto& h : s.history) history.push_back(to_json(h));
    return {{"doses", doses},
            {"current_dose", s.current_dose},
            {"eliminated_from", s.eliminated_from ? json(*s.eliminated_from) : json(nullptr)},
            {"terminated", s.terminated},
            {"status", to_string(s.status(settings))},
            {"total_enrolled", s.total_enrolled()},
            {"history", history}};
}

TrialState trial_state_from_json(const json& j, const TrialSettings& settings) {
    std::vector<FieldError> errors;
    Reader r(j, "state", errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    TrialState s = TrialState::start(settings);
    const int J = settings.num_doses;

    if (r.has("doses")) {
        const json& doses = j.at("doses");
        if (!doses.is_array() || static_cast<int>(doses.size()) != J) {
            r.fail("doses", "must list one {n, y} entry per dose");
        } else {
            for (int k = 0; k < J; ++k) {
                Reader dr(doses[static_cast<std::size_t>(k)], "state.doses[" + std::to_string(k) + "]", errors);
                const int n = dr.integer("n").value_or(0), y = dr.integer("y").value_or(0);
                if (n < 0 || y < 0 || y > n) dr.fail("", "need 0 <= y <= n");
                s.doses[static_cast<std::size_t>(k)] = {n, y};
            }
        }
    }
    if (auto v = r.integer("current_dose")) s.current_dose = *v;
    s.eliminated_from = r.integer("eliminated_from");
    if (auto v = r.boolean("terminated")) s.terminated = *v;

    if (s.current_dose < 1 || s.current_dose > J) r.fail("current_dose", "must be a dose level");
    if (s.eliminated_from && (*s.eliminated_from < 1 || *s.eliminated_from > J))
        r.fail("eliminated_from", "must be a dose level");
    if (s.eliminated_from && *s.eliminated_from == 1 && !s.terminated)
        r.fail("terminated", "must be true when dose 1 is eliminated");
    if (s.eliminated_from && *s.eliminated_from > 1 && s.current_dose >= *s.eliminated_from)
        r.fail("current_dose", "must lie below the eliminated doses");
    if (s.total_enrolled() > settings.max_n) r.fail("doses", "enrol more than max_n patients");

    if (r.has("history")) {
        const json& h = j.at("history");
        if (!h.is_array()) {
            r.fail("history", "must be an array");
        } else {
            for (std::size_t i = 0; i < h.size(); ++i) {
                Reader hr(h[i], "state.history[" + std::to_string(i) + "]", errors);
                CohortRecord rec;
                rec.cohort_index = hr.integer("cohort_index").value_or(static_cast<int>(i) + 1);
                rec.dose = hr.integer("dose").value_or(0);
                rec.n = hr.integer("n").value_or(0);
                rec.n_dlt = hr.integer("n_dlt").value_or(0);
                rec.next_dose = hr.integer("next_dose").value_or(0);
                if (auto d = hr.string("decision")) {
                    try {
                        rec.decision = decision_from_string(*d);
                    } catch (const std::invalid_argument& e) {
                        hr.fail("decision", e.what());
                    }
                }
                if (hr.has("boundaries_used") && h[i].at("boundaries_used").is_array())
                    for (const auto& x : h[i].at("boundaries_used"))
                        if (x.is_number()) rec.boundaries_used.push_back(x.get<double>());
                s.history.push_back(std::move(rec));
            }
        }
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return s;
}

json to_json(const MtdSelection& s) {
    json iso = json::array();
    for (Eigen::Index k = 0; k < s.isotonic_estimates.size(); ++k) {
        const double v = s.isotonic_estimates[k];
        iso.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    }
    return {{"selected_dose", s.selected ? json(*s.selected) : json(nullptr)},
            {"admissible", s.admissible},
            {"isotonic_estimates", iso}};
}

json boin_table_json(const BoinTable& t) {
    json doses = json::array();
    const int J = static_cast<int>(t.escalate_max.rows());
    for (int j = 0; j < J; ++j) {
        json esc = json::array(), de = json::array(), el = json::array(), le = json::array(), ld = json::array();
        for (std::size_t c = 0; c < t.sample_sizes.size(); ++c) {
            const auto ci = static_cast<Eigen::Index>(c);
            const int n = t.sample_sizes[c];
            esc.push_back(na_or(t.escalate_max(j, ci), t.escalate_max(j, ci) >= 0));
            de.push_back(na_or(t.deescalate_min(j, ci), t.deescalate_min(j, ci) <= n));
            el.push_back(na_or(t.eliminate_min(j, ci), t.eliminate_min(j, ci) >= 0));
            le.push_back(t.lambda_e(j, ci));
            ld.push_back(t.lambda_d(j, ci));
        }
        doses.push_back({{"dose", j + 1},
                         {"escalate", esc},
                         {"deescalate", de},
                         {"eliminate", el},
                         {"lambda_e", le},
                         {"lambda_d", ld},
                         {"hypothesis_prior", vec(t.pi.row(j).transpose())}});
    }
    return {{"design", "boin"},
            {"sample_sizes", t.sample_sizes},
            {"doses", doses},
            {"warnings", t.warnings},
            {"notes",
             {"escalate: escalate if DLTs <= value", "deescalate: de-escalate if DLTs >= value",
              "eliminate: eliminate this and higher doses if DLTs >= value (added safety row)",
              "null: no DLT count triggers the action"}}};
}

std::string boin_table_csv(const BoinTable& t) {
    std::ostringstream os;
    os << "dose,boundary";
    for (int n : t.sample_sizes) os << ',' << n;
    os << '\n';
    const int J = static_cast<int>(t.escalate_max.rows());
    for (int j = 0; j < J; ++j) {
        for (const char* kind : {"escalate", "deescalate", "eliminate"}) {
            os << j + 1 << ',' << kind;
            for (std::size_t c = 0; c < t.sample_sizes.size(); ++c) {
                const auto ci = static_cast<Eigen::Index>(c);
                const int n = t.sample_sizes[c];
                int v = 0;
                bool defined = false;
                if (kind[0] == 'e' && kind[1] == 's') {
                    v = t.escalate_max(j, ci);
                    defined = v >= 0;
                } else if (kind[0] == 'd') {
                    v = t.deescalate_min(j, ci);
                    defined = v <= n;
                } else {
                    v = t.eliminate_min(j, ci);
                    defined = v >= 0;
                }
                os << ',';
                if (defined) os << v;
                else os << "NA";
            }
            os << '\n';
        }
    }
    return os.str();
}

namespace {

const char* cell_name(const KeyboardTable& t, int dose, int n, int y) {
    const int elim = t.eliminate_min[n];
    if (elim >= 0 && y >= elim) return "Eliminate";
    switch (t.moves[static_cast<std::size_t>(dose)](n, y)) {
        case 1: return "Escalate";
        case -1: return "DeEscalate";
        default: return "Stay";
    }
}

}  // namespace

json keyboard_table_json(const KeyboardTable& t) {
    json keys = json::array();
    for (const auto& [lo, hi] : t.keys.intervals) keys.push_back({lo, hi});
    const int N = t.settings.max_n;
    json doses = json::array();
    for (std::size_t d = 0; d < t.moves.size(); ++d) {
        json rows = json::array();
        for (int n = 1; n <= N; ++n) {
            json cells = json::array();
            for (int y = 0; y <= n; ++y)
                cells.push_back({{"decision", cell_name(t, static_cast<int>(d), n, y)},
                                 {"strongest_key", t.strongest[d](n, y)}});
            rows.push_back({{"n", n}, {"cells", cells}});
        }
        const auto& p = t.priors[d];
        doses.push_back({{"dose", d + 1},
                         {"prior", {{"a", p.informative.a}, {"b", p.informative.b}, {"weight", p.weight}}},
                         {"rows", rows}});
    }
    json elim = json::array();
    for (int n = 1; n <= N; ++n) elim.push_back(na_or(t.eliminate_min[n], t.eliminate_min[n] >= 0));
    return {{"design", "keyboard"},
            {"keys", keys},
            {"target_key", t.keys.target_index},
            {"eliminate", elim},
            {"doses", doses},
            {"notes",
             {"cells are indexed by DLT count y = 0..n",
              "Eliminate: this and higher doses are closed (added safety rule)",
              "eliminate[n-1]: smallest DLT count out of n that eliminates, null if none"}}};
}

std::string keyboard_table_csv(const KeyboardTable& t) {
    std::ostringstream os;
    const int N = t.settings.max_n;
    os << "dose,n";
    for (int y = 0; y <= N; ++y) os << ',' << y;
    os << '\n';
    for (std::size_t d = 0; d < t.moves.size(); ++d) {
        for (int n = 1; n <= N; ++n) {
            os << d + 1 << ',' << n;
            for (int y = 0; y <= N; ++y) os << ',' << (y <= n ? cell_name(t, static_cast<int>(d), n, y) : "NA");
            os << '\n';
        }
    }
    return os.str();
}

namespace {

void require_table(const Design& d) {
    if (d.kind == DesignKind::Crm)
        throw ValidationError("design", "CRM decisions come from the model; there is no decision table");
}

}  // namespace

json decision_table_json(const Design& d) {
    require_table(d);
    if (d.kind == DesignKind::Boin) return boin_table_json(decision_table(d.validated, d.options.elimination));
    return keyboard_table_json(keyboard_decision_table(d.validated, d.options.half_width, d.options.elimination));
}

std::string decision_table_csv(const Design& d) {
    require_table(d);
    if (d.kind == DesignKind::Boin) return boin_table_csv(decision_table(d.validated, d.options.elimination));
    return keyboard_table_csv(keyboard_decision_table(d.validated, d.options.half_width, d.options.elimination));
}

std::string table_digest(const Design& d) {
    const std::string text = d.kind == DesignKind::Crm ? design_to_json(d).dump() : decision_table_json(d).dump();
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

DesignConfig design_config_from_json(const json& j) {
    if (j.is_string()) return standard_design(j.get<std::string>());
    std::vector<FieldError> errors;
    Reader r(j, "design", errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    DesignConfig c;
    if (auto base = r.string("base")) {
        c = standard_design(*base);
    } else if (auto kind = r.string("design")) {
        try {
            c.kind = design_kind_from_string(*kind);
        } catch (const ValidationError& e) {
            append_errors(e, "", errors);
        }
    } else {
        r.fail("design", "needs a 'base' label or a 'design' kind");
    }
    if (auto v = r.string("label")) c.label = *v;
    if (c.label.empty()) c.label = to_string(c.kind);
    if (auto v = r.boolean("informative")) c.informative = *v;
    if (auto v = r.boolean("robustify")) c.robustify = *v;
    if (auto v = r.number("mixture_weight")) c.mixture_weight = *v;
    if (const json* o = r.object("options")) c.options = read_options(*o, "design.options", errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return c;
}

namespace {

StudyScenario scenario_from_json(const json& j, const TrialSettings& settings, const std::string& prefix,
                                 std::vector<FieldError>& errors) {
    StudyScenario s;
    if (j.is_string()) {
        for (const auto& ref : reference_scenarios())
            if (ref.scenario.label == j.get<std::string>()) return ref;
        errors.push_back({prefix, "unknown reference scenario '" + j.get<std::string>() + "'"});
        return s;
    }
    Reader r(j, prefix, errors);
    const auto label = r.string("label");
    const auto true_p = r.vector("true_p");
    const auto skeleton = r.vector("skeleton");
    if (!true_p) r.fail("true_p", "is required");
    if (!skeleton) r.fail("skeleton", "is required");
    if (!true_p || !skeleton) return s;
    try {
        s.scenario = make_scenario(*true_p, settings.target, label.value_or(""));
    } catch (const ValidationError& e) {
        append_errors(e, prefix, errors);
    }
    s.skeleton = *skeleton;
    return s;
}

}  // namespace

SimulationPlan plan_from_json(const json& j) {
    std::vector<FieldError> errors;
    Reader r(j, "", errors);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    SimulationPlan plan;

    if (const json* s = r.object("settings")) {
        Reader sr(*s, "settings", errors);
        plan.settings = read_settings(sr);
    }
    if (r.has("designs")) {
        const json& ds = j.at("designs");
        if (!ds.is_array()) {
            r.fail("designs", "must be an array");
        } else {
            for (std::size_t i = 0; i < ds.size(); ++i) {
                try {
                    plan.designs.push_back(design_config_from_json(ds[i]));
                } catch (const ValidationError& e) {
                    append_errors(e, "designs[" + std::to_string(i) + "]", errors);
                }
            }
        }
    }
    if (r.has("scenarios")) {
        const json& sc = j.at("scenarios");
        if (sc.is_string() && sc.get<std::string>() == "reference") {
            plan.scenarios = reference_scenarios();
        } else if (sc.is_array()) {
            for (std::size_t i = 0; i < sc.size(); ++i) {
                StudyScenario s = scenario_from_json(sc[i], plan.settings, "scenarios[" + std::to_string(i) + "]", errors);
                if (s.scenario.true_p.size() > 0) {
                    if (s.scenario.label.empty()) s.scenario.label = "S" + std::to_string(i + 1);
                    plan.scenarios.push_back(std::move(s));
                }
            }
        } else {
            r.fail("scenarios", "must be \"reference\" or an array");
        }
    }
    if (const json* rnd = r.object("random")) {
        Reader rr(*rnd, "random", errors);
        if (auto v = rr.integer("count")) plan.random.count = *v;
        if (auto v = rr.string("family")) {
            try {
                plan.random.family = scenario_family_from_string(*v);
            } catch (const ValidationError& e) {
                append_errors(e, "random", errors);
            }
        }
    }
    if (auto v = r.vector("pess")) plan.pess = *v;
    if (auto v = r.integer("n_trials")) plan.n_trials = *v;
    if (auto v = r.unsigned64("seed")) plan.seed = *v;
    if (auto v = r.integer("workers")) plan.workers = *v;
    if (auto v = r.boolean("keep_trials")) plan.keep_trials = *v;
    if (!errors.empty()) throw ValidationError(std::move(errors));
    validate_plan(plan);
    return plan;
}

json plan_to_json(const SimulationPlan& plan) {
    json designs = json::array();
    for (const auto& d : plan.designs) {
        json dj = {{"label", d.label},
                   {"design", to_string(d.kind)},
                   {"informative", d.informative},
                   {"robustify", d.robustify},
                   {"options", to_json(d.options)}};
        dj["mixture_weight"] = d.mixture_weight ? json(*d.mixture_weight) : json(nullptr);
        designs.push_back(dj);
    }
    json scenarios = json::array();
    for (const auto& s : plan.scenarios)
        scenarios.push_back(
            {{"label", s.scenario.label}, {"true_p", vec(s.scenario.true_p)}, {"skeleton", vec(s.skeleton)}});
    return {{"settings", settings_to_json(plan.settings)},
            {"designs", designs},
            {"scenarios", scenarios},
            {"random", {{"count", plan.random.count}, {"family", to_string(plan.random.family)}}},
            {"pess", vec(plan.pess)},
            {"n_trials", plan.n_trials},
            {"seed", plan.seed},
            {"workers", plan.workers},
            {"keep_trials", plan.keep_trials}};
}

json to_json(const OpCharacteristics& oc) {
    return {{"pcs", oc.pcs},
            {"pct_at_mtd", oc.pct_at_mtd},
            {"pct_above_mtd", oc.pct_above_mtd},
            {"risk_overdosing", oc.risk_overdosing},
            {"risk_poor_allocation", oc.risk_poor_allocation},
            {"pct_no_selection", oc.pct_no_selection},
            {"mean_patients", oc.mean_patients},
            {"mean_dlts", oc.mean_dlts},
            {"selection_pct", oc.selection_pct},
            {"allocation_pct", oc.allocation_pct}};
}

std::string oc_summary_csv(const SimulationResult& r) {
    std::ostringstream os;
    os << "design,scenario,mtd,n_trials";
    for (const auto& m : metric_names()) os << ',' << m;
    os << ",pct_no_selection,mean_patients,mean_dlts\n";
    for (std::size_t d = 0; d < r.design_labels.size(); ++d) {
        for (std::size_t s = 0; s < r.scenarios.size(); ++s) {
            const OpCharacteristics& oc = r.oc[d][s];
            os << csv_field(r.design_labels[d]) << ',' << csv_field(r.scenarios[s].scenario.label) << ','
               << r.scenarios[s].scenario.mtd << ',' << r.counts[d][s].trials;
            for (const auto& m : metric_names()) os << ',' << fmt(metric(oc, m));
            os << ',' << fmt(oc.pct_no_selection) << ',' << fmt(oc.mean_patients) << ',' << fmt(oc.mean_dlts)
               << '\n';
        }
    }
    return os.str();
}

std::string aggregate_csv(const SimulationResult& r) {
    std::ostringstream os;
    os << "design,metric,mean,sd,n_scenarios\n";
    for (std::size_t d = 0; d < r.design_labels.size(); ++d)
        for (const auto& m : metric_names()) {
            const MetricSummary s = r.across_scenarios(d, m);
            os << csv_field(r.design_labels[d]) << ',' << m << ',' << fmt(s.mean) << ',' << fmt(s.sd) << ','
               << r.scenarios.size() << '\n';
        }
    return os.str();
}

json aggregate_json(const SimulationResult& r) {
    json out = json::object();
    for (std::size_t d = 0; d < r.design_labels.size(); ++d) {
        json per = json::object();
        for (const auto& m : metric_names()) {
            const MetricSummary s = r.across_scenarios(d, m);
            per[m] = {{"mean", s.mean}, {"sd", s.sd}};
        }
        out[r.design_labels[d]] = per;
    }
    return out;
}

json result_to_json(const SimulationResult& r) {
    json scenarios = json::array();
    for (const auto& s : r.scenarios)
        scenarios.push_back({{"label", s.scenario.label},
                             {"true_p", vec(s.scenario.true_p)},
                             {"mtd", s.scenario.mtd},
                             {"skeleton", vec(s.skeleton)}});
    json rows = json::array();
    for (std::size_t d = 0; d < r.design_labels.size(); ++d)
        for (std::size_t s = 0; s < r.scenarios.size(); ++s) {
            json row = to_json(r.oc[d][s]);
            row["design"] = r.design_labels[d];
            row["scenario"] = r.scenarios[s].scenario.label;
            rows.push_back(row);
        }
    return {{"seed", r.seed},
            {"n_trials", r.n_trials},
            {"designs", r.design_labels},
            {"scenarios", scenarios},
            {"oc", rows},
            {"aggregate", aggregate_json(r)},
            {"metadata",
             {{"pcs_denominator", "all trials; trials without a selected MTD count as incorrect"},
              {"allocation_denominator", "patients actually enrolled"}}}};
}

void write_trials_jsonl(std::ostream& out, const SimulationResult& r) {
    for (const auto& t : r.trials) {
        std::vector<int> n, y;
        for (const auto& d : t.doses) {
            n.push_back(d.n);
            y.push_back(d.y);
        }
        const json row = {{"design", r.design_labels[static_cast<std::size_t>(t.design)]},
                          {"scenario", r.scenarios[static_cast<std::size_t>(t.scenario)].scenario.label},
                          {"trial", t.trial},
                          {"n", n},
                          {"y", y},
                          {"selected", t.selected ? json(*t.selected) : json(nullptr)},
                          {"terminated", t.terminated}};
        out << row.dump() << '\n';
    }
}

}  // namespace dosefind
