#include "dosefind/conduct.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dosefind/prior.hpp"

namespace dosefind {

bool check_elimination(const DoseData& data, double phi, const EliminationRule& rule) {
    if (data.n < rule.min_n) return false;
    const double above = 1.0 - beta_cdf(phi, 1.0 + data.y, 1.0 + data.n - data.y);
    return above > rule.threshold;
}

int elimination_boundary(int n, double phi, const EliminationRule& rule) {
    for (int y = 0; y <= n; ++y)
        if (check_elimination({n, y}, phi, rule)) return y;
    return -1;
}

DoseChoice clip_move(const TrialState& state, Move move) {
    const DoseLevel d = state.current_dose;
    switch (move) {
        case Move::Up:
            if (d < state.num_doses() && !state.is_eliminated(d + 1)) return {Decision::Escalate, d + 1};
            return {Decision::Stay, d};
        case Move::Down:
            if (d > 1) return {Decision::DeEscalate, d - 1};
            return {Decision::Stay, d};
        case Move::Stay:
            break;
    }
    return {Decision::Stay, d};
}

TrialState apply_cohort(TrialState state, int n_dlt, const TrialSettings& settings,
                        const DoseRule& rule, const EliminationRule& elimination, bool audit) {
    if (state.terminated) throw IllegalTransition("trial has been terminated");
    if (state.num_doses() != settings.num_doses)
        throw std::invalid_argument("trial state has " + std::to_string(state.num_doses()) +
                                    " doses, settings have " + std::to_string(settings.num_doses));
    if (state.total_enrolled() >= settings.max_n)
        throw IllegalTransition("trial is complete: maximum sample size reached");
    if (n_dlt < 0 || n_dlt > settings.cohort_size)
        throw ValidationError("n_dlt", "must lie between 0 and the cohort size " +
                                           std::to_string(settings.cohort_size));

    const DoseLevel d = state.current_dose;
    if (state.is_eliminated(d)) throw IllegalTransition("current dose is eliminated");
    DoseData& data = state.at(d);
    data.n += settings.cohort_size;
    data.y += n_dlt;

    CohortRecord record;
    record.cohort_index = static_cast<int>(state.history.size()) + 1;
    record.dose = d;
    record.n = settings.cohort_size;
    record.n_dlt = n_dlt;

    if (rule.eliminates(state, settings.target, elimination)) {
        state.eliminated_from = state.eliminated_from ? std::min(*state.eliminated_from, d) : d;
        if (d == 1) {
            state.terminated = true;
            record.decision = Decision::TerminateTrial;
            record.next_dose = 0;
        } else {
            state.current_dose = d - 1;
            record.decision = Decision::EliminateAndDeEscalate;
            record.next_dose = d - 1;
        }
    } else if (!audit && state.total_enrolled() >= settings.max_n) {
        return state;
    } else {
        const Move move = rule.decide(state, audit ? &record.boundaries_used : nullptr);
        const DoseChoice choice = clip_move(state, move);
        state.current_dose = choice.next_dose;
        record.decision = choice.decision;
        record.next_dose = choice.next_dose;
    }
    if (audit) state.history.push_back(std::move(record));
    return state;
}

bool DoseRule::eliminates(const TrialState& state, double phi, const EliminationRule& rule) const {
    return check_elimination(state.at(state.current_dose), phi, rule);
}

MtdSelection DoseRule::select(const TrialState& state, double phi) const { return select_mtd(state, phi); }

SelectionPrior vague_selection_prior(int num_doses) {
    return {Eigen::VectorXd::Constant(num_doses, 0.05), Eigen::VectorXd::Constant(num_doses, 0.05)};
}

MtdSelection select_mtd(const TrialState& state, double phi) {
    return select_mtd(state, phi, vague_selection_prior(state.num_doses()));
}

MtdSelection select_mtd(const TrialState& state, double phi, const SelectionPrior& prior) {
    if (prior.a.size() != state.num_doses() || prior.b.size() != state.num_doses())
        throw std::invalid_argument("selection prior must have one entry per dose");
    MtdSelection out;
    for (DoseLevel d = 1; d <= state.num_doses(); ++d)
        if (state.at(d).n > 0 && !state.is_eliminated(d)) out.admissible.push_back(d);
    const auto k = static_cast<Eigen::Index>(out.admissible.size());
    out.isotonic_estimates.resize(k);
    if (k == 0) return out;

    Eigen::VectorXd estimate(k), weight(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const DoseLevel d = out.admissible[static_cast<std::size_t>(i)];
        const DoseData& data = state.at(d);
        const double a = data.y + prior.a[d - 1], b = data.n - data.y + prior.b[d - 1];
        estimate[i] = a / (a + b);
        weight[i] = (a + b) * (a + b) * (a + b + 1.0) / (a * b);
    }
    out.isotonic_estimates = pava(estimate, weight);

    // The tiny increasing offset breaks ties inside pooled blocks.
    Eigen::Index best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < k; ++i) {
        const double dist = std::abs(out.isotonic_estimates[i] + (i + 1) * 1e-10 - phi);
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    out.selected = out.admissible[static_cast<std::size_t>(best)];
    return out;
}

}  // namespace dosefind
