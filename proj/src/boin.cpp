#include "dosefind/boin.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dosefind {

Boundaries unclamped_boundaries(double phi, double phi1, double phi2, const HypothesisPrior& pi, int n) {
    if (n <= 0) throw std::domain_error("sample size must be positive");
    if (!(0.0 < phi1 && phi1 < phi && phi < phi2 && phi2 < 1.0))
        throw std::domain_error("need 0 < phi1 < phi < phi2 < 1");
    if (!(pi.minCoeff() > 0.0)) throw std::domain_error("hypothesis prior must be positive");
    const double inv_n = 1.0 / n;
    Boundaries b;
    b.lambda_e = (std::log((1.0 - phi1) / (1.0 - phi)) + inv_n * std::log(pi[1] / pi[0])) /
                 std::log(phi * (1.0 - phi1) / (phi1 * (1.0 - phi)));
    b.lambda_d = (std::log((1.0 - phi) / (1.0 - phi2)) + inv_n * std::log(pi[0] / pi[2])) /
                 std::log(phi2 * (1.0 - phi) / (phi * (1.0 - phi2)));
    return b;
}

Boundaries boundaries(double phi, double phi1, double phi2, const HypothesisPrior& pi, int n) {
    Boundaries b = unclamped_boundaries(phi, phi1, phi2, pi, n);
    b.lambda_e = std::max(0.0, b.lambda_e);
    b.lambda_d = std::min(1.0, b.lambda_d);
    return b;
}

int BoinTable::column(int n) const {
    if (n <= 0 || n % settings.cohort_size != 0 || n > settings.max_n)
        throw std::out_of_range("sample size " + std::to_string(n) + " is not in the decision table");
    return n / settings.cohort_size - 1;
}

BoinTable decision_table(const TrialSettings& settings, const HypothesisPriorTable& pi,
                         const EliminationRule& elimination) {
    const int J = settings.num_doses;
    if (pi.rows() != J) throw std::invalid_argument("hypothesis prior rows must match num_doses");
    const double phi = settings.target, phi1 = settings.underdose(), phi2 = settings.overdose();

    BoinTable t;
    t.settings = settings;
    t.pi = pi;
    for (int n = settings.cohort_size; n <= settings.max_n; n += settings.cohort_size)
        t.sample_sizes.push_back(n);
    const auto cols = static_cast<Eigen::Index>(t.sample_sizes.size());
    t.escalate_max.resize(J, cols);
    t.deescalate_min.resize(J, cols);
    t.eliminate_min.resize(J, cols);
    t.lambda_e.resize(J, cols);
    t.lambda_d.resize(J, cols);

    for (Eigen::Index c = 0; c < cols; ++c) {
        const int n = t.sample_sizes[static_cast<std::size_t>(c)];
        const int elim = elimination_boundary(n, phi, elimination);
        for (int j = 0; j < J; ++j) {
            const Boundaries raw = unclamped_boundaries(phi, phi1, phi2, pi.row(j).transpose(), n);
            if (raw.lambda_e > raw.lambda_d)
                throw std::domain_error("escalation boundary exceeds de-escalation boundary at dose " +
                                        std::to_string(j + 1) + ", n = " + std::to_string(n));
            const Boundaries b{std::max(0.0, raw.lambda_e), std::min(1.0, raw.lambda_d)};
            t.lambda_e(j, c) = b.lambda_e;
            t.lambda_d(j, c) = b.lambda_d;
            int esc = -1;
            while (esc + 1 <= n && (esc + 1.0) / n < b.lambda_e) ++esc;
            int de = n + 1;
            while (de - 1 >= 0 && (de - 1.0) / n > b.lambda_d) --de;
            t.escalate_max(j, c) = esc;
            t.deescalate_min(j, c) = de;
            t.eliminate_min(j, c) = elim;
        }
    }
    return t;
}

HypothesisPriorTable design_hypothesis_priors(const ValidatedDesign& design) {
    const TrialSettings& s = design.settings;
    const PriorSpec& prior = design.prior;
    const Eigen::VectorXd pess =
        prior.robustify ? robustify_pess(prior.pess, design.prior_mtd, s.num_doses) : prior.pess;
    HypothesisPriorTable pi =
        hypothesis_priors(prior.skeleton, pess, s.target, s.underdose(), s.overdose());
    if (prior.mixture_weight)
        for (Eigen::Index j = 0; j < pi.rows(); ++j)
            pi.row(j) = mixture_hypothesis_prior(pi.row(j).transpose(), *prior.mixture_weight).transpose();
    return pi;
}

BoinTable decision_table(const ValidatedDesign& design, const EliminationRule& elimination) {
    BoinTable t = decision_table(design.settings, design_hypothesis_priors(design), elimination);
    for (Eigen::Index j = 0; j < design.prior.pess.size(); ++j) {
        const double n0 = design.prior.pess[j];
        if (n0 != std::round(n0))
            t.warnings.push_back("PESS " + std::to_string(n0) + " at dose " + std::to_string(j + 1) +
                                 " rounded to " + std::to_string(integer_pess(n0)));
    }
    return t;
}

Move boin_move(const BoinTable& table, const TrialState& state) {
    if (state.num_doses() != table.settings.num_doses)
        throw std::invalid_argument("trial state and decision table differ in dose count");
    const DoseLevel d = state.current_dose;
    const DoseData& data = state.at(d);
    const int c = table.column(data.n);
    if (data.y <= table.escalate_max(d - 1, c)) return Move::Up;
    if (data.y >= table.deescalate_min(d - 1, c)) return Move::Down;
    return Move::Stay;
}

DoseChoice boin_next_dose(const BoinTable& table, const TrialState& state) {
    return clip_move(state, boin_move(table, state));
}

Move BoinRule::decide(const TrialState& state, std::vector<double>* detail) const {
    const Move move = boin_move(table_, state);
    if (detail) {
        const DoseLevel d = state.current_dose;
        const int c = table_.column(state.at(d).n);
        *detail = {table_.lambda_e(d - 1, c), table_.lambda_d(d - 1, c)};
    }
    return move;
}

MtdSelection BoinRule::select(const TrialState& state, double phi) const {
    return selection_ ? select_mtd(state, phi, *selection_) : select_mtd(state, phi);
}

}  // namespace dosefind
