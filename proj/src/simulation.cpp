#include "dosefind/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace dosefind {

std::string to_string(ScenarioFamily f) {
    switch (f) {
        case ScenarioFamily::Correct: return "correct";
        case ScenarioFamily::OneBelow: return "one-below";
        case ScenarioFamily::OneAbove: return "one-above";
        case ScenarioFamily::TwoBelow: return "two-below";
        case ScenarioFamily::TwoAbove: return "two-above";
    }
    return "unknown";
}

ScenarioFamily scenario_family_from_string(const std::string& s) {
    for (auto f : {ScenarioFamily::Correct, ScenarioFamily::OneBelow, ScenarioFamily::OneAbove,
                   ScenarioFamily::TwoBelow, ScenarioFamily::TwoAbove})
        if (to_string(f) == s) return f;
    throw ValidationError("family", "unknown scenario family '" + s +
                                        "' (expected correct, one-below, one-above, two-below or two-above)");
}

int prior_offset(ScenarioFamily f) {
    switch (f) {
        case ScenarioFamily::Correct: return 0;
        case ScenarioFamily::OneBelow: return -1;
        case ScenarioFamily::OneAbove: return 1;
        case ScenarioFamily::TwoBelow: return -2;
        case ScenarioFamily::TwoAbove: return 2;
    }
    return 0;
}

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

const std::vector<Eigen::VectorXd>& five_dose_skeletons() {
    static const std::vector<Eigen::VectorXd> s = {
        vec({0.30, 0.42, 0.54, 0.64, 0.73}), vec({0.19, 0.30, 0.42, 0.54, 0.64}),
        vec({0.10, 0.19, 0.30, 0.42, 0.54}), vec({0.04, 0.10, 0.19, 0.30, 0.42}),
        vec({0.01, 0.04, 0.10, 0.19, 0.30})};
    return s;
}

}  // namespace

Eigen::VectorXd reference_skeleton(const TrialSettings& settings, DoseLevel prior_mtd) {
    const int J = settings.num_doses;
    if (prior_mtd < 1 || prior_mtd > J) throw std::out_of_range("prior MTD outside dose range");
    if (J == 5 && std::abs(settings.target - 0.3) < 1e-12)
        return five_dose_skeletons()[static_cast<std::size_t>(prior_mtd - 1)];
    // Neighbouring doses sit where the power model with the target at
    // prior_mtd would move the estimate by +-delta.
    const double phi = settings.target, delta = 0.2 * phi;
    const double up = std::log(phi + delta) / std::log(phi - delta);
    Eigen::VectorXd q(J);
    q[prior_mtd - 1] = phi;
    for (int j = prior_mtd; j < J; ++j) q[j] = std::exp(std::log(q[j - 1]) * up);
    for (int j = prior_mtd - 2; j >= 0; --j) q[j] = std::exp(std::log(q[j + 1]) / up);
    return q;
}

std::vector<StudyScenario> reference_scenarios() {
    const auto& sk = five_dose_skeletons();
    const std::vector<std::pair<Eigen::VectorXd, int>> rows = {
        {vec({0.30, 0.42, 0.50, 0.60, 0.65}), 0}, {vec({0.15, 0.27, 0.40, 0.50, 0.65}), 1},
        {vec({0.08, 0.15, 0.31, 0.45, 0.55}), 2}, {vec({0.09, 0.12, 0.15, 0.30, 0.45}), 3},
        {vec({0.05, 0.08, 0.10, 0.14, 0.30}), 4}, {vec({0.09, 0.12, 0.15, 0.30, 0.45}), 4},
        {vec({0.08, 0.15, 0.31, 0.45, 0.55}), 1}, {vec({0.08, 0.15, 0.31, 0.45, 0.55}), 4},
        {vec({0.04, 0.08, 0.10, 0.18, 0.27}), -1}, {vec({0.08, 0.10, 0.28, 0.40, 0.45}), 0}};
    std::vector<StudyScenario> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        StudyScenario s;
        s.scenario = make_scenario(rows[i].first, 0.3, "S" + std::to_string(i + 1));
        s.skeleton = rows[i].second >= 0 ? sk[static_cast<std::size_t>(rows[i].second)]
                                         : vec({0.04, 0.09, 0.30, 0.40, 0.45});
        out.push_back(std::move(s));
    }
    return out;
}

Scenario generate_random_scenario(double phi, int num_doses, RngStream& rng, std::optional<DoseLevel> mtd) {
    const int J = num_doses;
    if (J < 2) throw std::invalid_argument("need at least two doses");
    const DoseLevel j = mtd ? *mtd : static_cast<DoseLevel>(rng.below(static_cast<std::uint64_t>(J))) + 1;
    if (j < 1 || j > J) throw std::out_of_range("MTD outside dose range");
    const double shape = J > j ? static_cast<double>(J - j) : 0.5;

    // Inner loop: uniforms on [0, B] until dose j is the closest to phi.
    // Outer loop: curves failing the window/gap filter are discarded along
    // with their M, keeping the MTD level fixed.
    Eigen::VectorXd p(J);
    int attempts = 0;
    while (attempts < kRandomScenarioAttempts) {
        const double bound = phi + (1.0 - phi) * std::pow(rng.uniform(), 1.0 / shape);
        bool found = false;
        while (!found && attempts < kRandomScenarioAttempts) {
            ++attempts;
            for (int k = 0; k < J; ++k) p[k] = rng.uniform(0.0, bound);
            std::sort(p.data(), p.data() + J);
            found = true;
            for (int k = 0; k < J && found; ++k)
                if (k != j - 1 && std::abs(p[k] - phi) <= std::abs(p[j - 1] - phi)) found = false;
        }
        if (!found) break;
        const double mid = p[j - 1];
        bool ok = std::abs(mid - phi) <= 0.05;
        if (j > 1) ok = ok && mid - p[j - 2] > 0.05 && mid - p[j - 2] < 0.3;
        if (j < J) ok = ok && p[j] - mid > 0.05 && p[j] - mid < 0.3;
        if (ok) return make_scenario(p, phi);
    }
    throw std::runtime_error("random scenario generation exceeded " +
                             std::to_string(kRandomScenarioAttempts) + " attempts");
}

StudyScenario misspecified_family(ScenarioFamily family, const TrialSettings& settings, RngStream& rng) {
    const int J = settings.num_doses;
    const int offset = prior_offset(family);
    const int lo = std::max(1, 1 - offset), hi = std::min(J, J - offset);
    if (lo > hi) throw std::invalid_argument("scenario family needs more doses");
    const DoseLevel mtd = lo + static_cast<DoseLevel>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    StudyScenario s;
    s.scenario = generate_random_scenario(settings.target, J, rng, mtd);
    s.skeleton = reference_skeleton(settings, mtd + offset);
    return s;
}

void validate_plan(const SimulationPlan& plan) {
    std::vector<FieldError> errors;
    try {
        validate_settings(plan.settings);
    } catch (const ValidationError& e) {
        for (const auto& fe : e.errors()) errors.push_back({"settings." + fe.field, fe.message});
    }
    const int J = plan.settings.num_doses;
    if (plan.n_trials < 1) errors.push_back({"n_trials", "must be at least 1"});
    if (plan.designs.empty()) errors.push_back({"designs", "at least one design is required"});
    if (plan.scenarios.empty() && plan.random.count < 1)
        errors.push_back({"scenarios", "at least one fixed or random scenario is required"});
    if (plan.random.count < 0) errors.push_back({"random.count", "must be non-negative"});
    if (plan.workers < 0) errors.push_back({"workers", "must be non-negative"});
    if (plan.pess.size() != 0 && plan.pess.size() != J)
        errors.push_back({"pess", "must have one entry per dose"});
    for (std::size_t i = 0; i < plan.scenarios.size(); ++i) {
        const auto& s = plan.scenarios[i];
        const std::string f = "scenarios[" + std::to_string(i) + "]";
        if (s.scenario.true_p.size() != J) errors.push_back({f + ".true_p", "must have one entry per dose"});
        if (s.skeleton.size() != J) errors.push_back({f + ".skeleton", "must have one entry per dose"});
    }
    if (!errors.empty()) throw ValidationError(std::move(errors));
}

void OcCounts::merge(const OcCounts& o) {
    trials += o.trials;
    correct += o.correct;
    no_selection += o.no_selection;
    patients += o.patients;
    at_mtd += o.at_mtd;
    above_mtd += o.above_mtd;
    dlts += o.dlts;
    overdosing_trials += o.overdosing_trials;
    poor_allocation_trials += o.poor_allocation_trials;
    if (selected.size() < o.selected.size()) selected.resize(o.selected.size(), 0);
    if (allocated.size() < o.allocated.size()) allocated.resize(o.allocated.size(), 0);
    for (std::size_t j = 0; j < o.selected.size(); ++j) selected[j] += o.selected[j];
    for (std::size_t j = 0; j < o.allocated.size(); ++j) allocated[j] += o.allocated[j];
}

OpCharacteristics summarize(const OcCounts& c) {
    OpCharacteristics oc;
    const double t = static_cast<double>(std::max<std::int64_t>(c.trials, 1));
    const double p = static_cast<double>(std::max<std::int64_t>(c.patients, 1));
    oc.pcs = 100.0 * c.correct / t;
    oc.pct_at_mtd = 100.0 * c.at_mtd / p;
    oc.pct_above_mtd = 100.0 * c.above_mtd / p;
    oc.risk_overdosing = 100.0 * c.overdosing_trials / t;
    oc.risk_poor_allocation = 100.0 * c.poor_allocation_trials / t;
    oc.pct_no_selection = 100.0 * c.no_selection / t;
    oc.mean_patients = c.patients / t;
    oc.mean_dlts = c.dlts / t;
    for (auto s : c.selected) oc.selection_pct.push_back(100.0 * s / t);
    for (auto a : c.allocated) oc.allocation_pct.push_back(100.0 * a / p);
    return oc;
}

double metric(const OpCharacteristics& oc, const std::string& name) {
    if (name == "pcs") return oc.pcs;
    if (name == "pct_at_mtd") return oc.pct_at_mtd;
    if (name == "pct_above_mtd") return oc.pct_above_mtd;
    if (name == "risk_overdosing") return oc.risk_overdosing;
    if (name == "risk_poor_allocation") return oc.risk_poor_allocation;
    throw std::invalid_argument("unknown metric '" + name + "'");
}

MetricSummary SimulationResult::across_scenarios(std::size_t design, const std::string& name) const {
    MetricSummary s;
    const auto& row = oc.at(design);
    if (row.empty()) return s;
    double sum = 0.0;
    for (const auto& v : row) sum += metric(v, name);
    s.mean = sum / static_cast<double>(row.size());
    if (row.size() > 1) {
        double ss = 0.0;
        for (const auto& v : row) ss += std::pow(metric(v, name) - s.mean, 2);
        s.sd = std::sqrt(ss / static_cast<double>(row.size() - 1));
    }
    return s;
}

std::vector<StudyScenario> materialize_scenarios(const SimulationPlan& plan) {
    std::vector<StudyScenario> out = plan.scenarios;
    const auto fixed = out.size();
    for (int i = 0; i < plan.random.count; ++i) {
        const auto id = static_cast<std::uint64_t>(fixed + static_cast<std::size_t>(i));
        RngStream rng = derive_rng_stream(plan.seed, id, kScenarioStreamId);
        StudyScenario s = misspecified_family(plan.random.family, plan.settings, rng);
        s.scenario.label = "R" + std::to_string(i + 1);
        out.push_back(std::move(s));
    }
    return out;
}

TrialState simulate_trial(const DoseRule& rule, const TrialSettings& settings,
                          const EliminationRule& elimination, const Eigen::VectorXd& true_p,
                          RngStream& rng) {
    TrialState state = TrialState::start(settings);
    while (!state.terminated && state.total_enrolled() < settings.max_n) {
        const double p = true_p[state.current_dose - 1];
        int dlt = 0;
        for (int i = 0; i < settings.cohort_size; ++i) dlt += rng.bernoulli(p) ? 1 : 0;
        state = apply_cohort(std::move(state), dlt, settings, rule, elimination, false);
    }
    return state;
}

namespace {

// Rules depend on the design and the skeleton only, so scenarios sharing a
// skeleton share rules (and the CRM posterior cache).
struct RuleSet {
    std::vector<std::shared_ptr<const DoseRule>> rules;  // per design
    std::vector<EliminationRule> elimination;
};

std::vector<std::size_t> build_rule_sets(const SimulationPlan& plan, const std::vector<StudyScenario>& scenarios,
                                         std::vector<RuleSet>& sets) {
    const int J = plan.settings.num_doses;
    const Eigen::VectorXd pess = plan.pess.size() == J ? plan.pess : Eigen::VectorXd::Constant(J, 3.0);
    std::map<std::vector<double>, std::size_t> index;
    std::vector<std::size_t> which;
    for (const auto& s : scenarios) {
        std::vector<double> key(s.skeleton.data(), s.skeleton.data() + s.skeleton.size());
        auto it = index.find(key);
        if (it == index.end()) {
            RuleSet rs;
            for (const auto& config : plan.designs) {
                const Design d = make_design(config, plan.settings, s.skeleton, pess);
                rs.rules.push_back(make_rule(d));
                rs.elimination.push_back(d.options.elimination);
            }
            it = index.emplace(std::move(key), sets.size()).first;
            sets.push_back(std::move(rs));
        }
        which.push_back(it->second);
    }
    return which;
}

void tally(OcCounts& c, const TrialState& state, const MtdSelection& sel, const Scenario& scenario) {
    const int J = state.num_doses();
    if (c.selected.empty()) {
        c.selected.assign(static_cast<std::size_t>(J), 0);
        c.allocated.assign(static_cast<std::size_t>(J), 0);
    }
    ++c.trials;
    if (!sel.selected) {
        ++c.no_selection;
    } else {
        ++c.selected[static_cast<std::size_t>(*sel.selected - 1)];
        if (*sel.selected == scenario.mtd) ++c.correct;
    }
    std::int64_t total = 0, above = 0, at = 0;
    for (DoseLevel d = 1; d <= J; ++d) {
        const DoseData& data = state.at(d);
        total += data.n;
        c.dlts += data.y;
        c.allocated[static_cast<std::size_t>(d - 1)] += data.n;
        if (d == scenario.mtd) at += data.n;
        if (d > scenario.mtd) above += data.n;
    }
    c.patients += total;
    c.at_mtd += at;
    c.above_mtd += above;
    if (total > 0 && 2 * above >= total) ++c.overdosing_trials;
    if (at < 6) ++c.poor_allocation_trials;
}

}  // namespace

SimulationResult run_simulation(const SimulationPlan& plan, const SimulationHooks& hooks) {
    validate_plan(plan);
    const TrialSettings settings = validate_settings(plan.settings);
    SimulationResult result;
    result.scenarios = materialize_scenarios(plan);
    result.n_trials = plan.n_trials;
    result.seed = plan.seed;
    for (const auto& d : plan.designs) result.design_labels.push_back(d.label);

    std::vector<RuleSet> sets;
    const std::vector<std::size_t> rule_of = build_rule_sets(plan, result.scenarios, sets);

    const std::size_t n_designs = plan.designs.size();
    const std::size_t n_scen = result.scenarios.size();
    const auto n_trials = static_cast<std::size_t>(plan.n_trials);
    constexpr std::size_t kChunk = 50;
    const std::size_t chunks_per_scenario = (n_trials + kChunk - 1) / kChunk;
    const std::size_t n_chunks = chunks_per_scenario * n_scen;
    if (plan.keep_trials) result.trials.resize(n_designs * n_scen * n_trials);

    unsigned workers = plan.workers > 0 ? static_cast<unsigned>(plan.workers) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_chunks)));

    std::atomic<std::size_t> next_chunk{0}, done_chunks{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex mutex;
    std::condition_variable cv;
    std::vector<std::vector<OcCounts>> partial(workers, std::vector<OcCounts>(n_designs * n_scen));

    auto work = [&](unsigned w) {
        try {
            auto& mine = partial[w];
            while (!failed.load()) {
                if (hooks.cancel && hooks.cancel->load()) return;
                const std::size_t chunk = next_chunk.fetch_add(1);
                if (chunk >= n_chunks) return;
                const std::size_t s = chunk / chunks_per_scenario;
                const std::size_t first = (chunk % chunks_per_scenario) * kChunk;
                const std::size_t last = std::min(n_trials, first + kChunk);
                const Scenario& scenario = result.scenarios[s].scenario;
                const RuleSet& rs = sets[rule_of[s]];
                for (std::size_t t = first; t < last; ++t) {
                    for (std::size_t d = 0; d < n_designs; ++d) {
                        RngStream rng = derive_rng_stream(plan.seed, s, t);
                        const TrialState state =
                            simulate_trial(*rs.rules[d], settings, rs.elimination[d], scenario.true_p, rng);
                        const MtdSelection sel = rs.rules[d]->select(state, settings.target);
                        tally(mine[d * n_scen + s], state, sel, scenario);
                        if (plan.keep_trials) {
                            TrialRecord& rec = result.trials[(d * n_scen + s) * n_trials + t];
                            rec.design = static_cast<int>(d);
                            rec.scenario = static_cast<int>(s);
                            rec.trial = static_cast<int>(t);
                            rec.doses = state.doses;
                            rec.selected = sel.selected;
                            rec.terminated = state.terminated;
                        }
                    }
                }
                done_chunks.fetch_add(1);
                cv.notify_one();
            }
        } catch (...) {
            std::lock_guard lock(mutex);
            if (!error) error = std::current_exception();
            failed.store(true);
            cv.notify_one();
        }
    };

    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    {
        std::unique_lock lock(mutex);
        while (done_chunks.load() < n_chunks && !failed.load() && !(hooks.cancel && hooks.cancel->load())) {
            cv.wait_for(lock, std::chrono::milliseconds(100));
            if (hooks.progress) hooks.progress(static_cast<double>(done_chunks.load()) / n_chunks);
        }
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    if (hooks.cancel && hooks.cancel->load() && done_chunks.load() < n_chunks) throw SimulationCanceled();
    if (hooks.progress) hooks.progress(1.0);

    result.counts.assign(n_designs, std::vector<OcCounts>(n_scen));
    result.oc.assign(n_designs, std::vector<OpCharacteristics>(n_scen));
    for (std::size_t d = 0; d < n_designs; ++d) {
        for (std::size_t s = 0; s < n_scen; ++s) {
            OcCounts& c = result.counts[d][s];
            for (const auto& p : partial) c.merge(p[d * n_scen + s]);
            result.oc[d][s] = summarize(c);
        }
    }
    return result;
}

}  // namespace dosefind
