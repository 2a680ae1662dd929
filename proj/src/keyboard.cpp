#include "dosefind/keyboard.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace dosefind {

namespace {

constexpr double kEdgeSlack = 1e-12;
constexpr double kMassTie = 1e-12;

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double interval_mass(double lo, double hi, double a, double b) {
    return beta_cdf(hi, a, b) - beta_cdf(lo, a, b);
}

}  // namespace

Keys build_keys(double phi, double half_width) {
    if (!(phi > 0.0 && phi < 1.0)) throw std::domain_error("target must lie in (0, 1)");
    if (!(half_width > 0.0) || phi - half_width < -kEdgeSlack || phi + half_width > 1.0 + kEdgeSlack)
        throw std::domain_error("target key does not fit inside [0, 1]");
    std::vector<std::pair<double, double>> left, right;
    for (int k = 1;; ++k) {
        const double lo = phi - (2 * k + 1) * half_width;
        if (lo < -kEdgeSlack) break;
        left.emplace_back(std::max(0.0, lo), phi - (2 * k - 1) * half_width);
    }
    for (int k = 1;; ++k) {
        const double hi = phi + (2 * k + 1) * half_width;
        if (hi > 1.0 + kEdgeSlack) break;
        right.emplace_back(phi + (2 * k - 1) * half_width, std::min(1.0, hi));
    }
    Keys keys;
    keys.intervals.assign(left.rbegin(), left.rend());
    keys.target_index = static_cast<int>(keys.intervals.size());
    keys.intervals.emplace_back(phi - half_width, phi + half_width);
    keys.intervals.insert(keys.intervals.end(), right.begin(), right.end());
    return keys;
}

Eigen::VectorXd key_masses(const Keys& keys, const KeyboardDosePrior& prior, const DoseData& data) {
    const double y = data.y, f = data.n - data.y;
    const double a = prior.informative.a, b = prior.informative.b;
    const double w = prior.weight;

    // Posterior component weights are prior weights times beta-binomial
    // marginal likelihoods (the binomial coefficient cancels).
    double w_inf = 1.0, w_flat = 0.0;
    if (w < 1.0) {
        const double log_inf = std::log(w) + log_beta(a + y, b + f) - log_beta(a, b);
        const double log_flat = std::log1p(-w) + log_beta(1.0 + y, 1.0 + f);
        if (w <= 0.0) {
            w_inf = 0.0;
            w_flat = 1.0;
        } else {
            const double top = std::max(log_inf, log_flat);
            const double ei = std::exp(log_inf - top), ef = std::exp(log_flat - top);
            w_inf = ei / (ei + ef);
            w_flat = ef / (ei + ef);
        }
    }

    Eigen::VectorXd masses(static_cast<Eigen::Index>(keys.intervals.size()));
    for (std::size_t k = 0; k < keys.intervals.size(); ++k) {
        const auto [lo, hi] = keys.intervals[k];
        double m = 0.0;
        if (w_inf > 0.0) m += w_inf * interval_mass(lo, hi, a + y, b + f);
        if (w_flat > 0.0) m += w_flat * interval_mass(lo, hi, 1.0 + y, 1.0 + f);
        masses[static_cast<Eigen::Index>(k)] = m;
    }
    return masses;
}

int strongest_key(const Keys& keys, const Eigen::VectorXd& masses) {
    int best = 0;
    for (int k = 1; k < masses.size(); ++k) {
        const double diff = masses[k] - masses[best];
        if (diff > kMassTie) {
            best = k;
        } else if (diff >= -kMassTie &&
                   std::abs(k - keys.target_index) < std::abs(best - keys.target_index)) {
            best = k;
        }
    }
    return best;
}

Move keyboard_move(const Keys& keys, const KeyboardDosePrior& prior, const DoseData& data) {
    const int k = strongest_key(keys, key_masses(keys, prior, data));
    if (k < keys.target_index) return Move::Up;
    if (k > keys.target_index) return Move::Down;
    return Move::Stay;
}

std::vector<KeyboardDosePrior> keyboard_priors(const ValidatedDesign& design) {
    const PriorSpec& prior = design.prior;
    const Eigen::VectorXd pess =
        prior.robustify ? robustify_pess(prior.pess, design.prior_mtd, design.settings.num_doses)
                        : prior.pess;
    std::vector<KeyboardDosePrior> out;
    for (Eigen::Index j = 0; j < pess.size(); ++j) {
        KeyboardDosePrior p;
        p.informative = keyboard_hyperparams(prior.skeleton[j], pess[j]);
        p.weight = pess[j] > 0.0 ? prior.mixture_weight.value_or(1.0) : 1.0;
        out.push_back(p);
    }
    return out;
}

Move KeyboardTable::move(DoseLevel d, const DoseData& data) const {
    if (d < 1 || d > settings.num_doses) throw std::out_of_range("dose outside keyboard table");
    if (data.n < 1 || data.n > settings.max_n || data.y < 0 || data.y > data.n)
        throw std::out_of_range("data (" + std::to_string(data.n) + ", " + std::to_string(data.y) +
                                ") outside keyboard table");
    return static_cast<Move>(moves[static_cast<std::size_t>(d - 1)](data.n, data.y));
}

KeyboardTable keyboard_decision_table(const ValidatedDesign& design, double half_width,
                                      const EliminationRule& elimination) {
    KeyboardTable t;
    t.settings = design.settings;
    t.keys = build_keys(design.settings.target, half_width);
    t.priors = keyboard_priors(design);
    const int N = design.settings.max_n;
    t.eliminate_min = Eigen::VectorXi::Constant(N + 1, -1);
    for (int n = 1; n <= N; ++n) t.eliminate_min[n] = elimination_boundary(n, design.settings.target, elimination);
    for (const auto& prior : t.priors) {
        Eigen::MatrixXi moves = Eigen::MatrixXi::Zero(N + 1, N + 1);
        Eigen::MatrixXi strongest = Eigen::MatrixXi::Constant(N + 1, N + 1, -1);
        for (int n = 1; n <= N; ++n) {
            for (int y = 0; y <= n; ++y) {
                const int k = strongest_key(t.keys, key_masses(t.keys, prior, {n, y}));
                strongest(n, y) = k;
                moves(n, y) = k < t.keys.target_index ? 1 : (k > t.keys.target_index ? -1 : 0);
            }
        }
        t.moves.push_back(std::move(moves));
        t.strongest.push_back(std::move(strongest));
    }
    return t;
}

DoseChoice keyboard_next_dose(const KeyboardTable& table, const TrialState& state) {
    return clip_move(state, table.move(state.current_dose, state.at(state.current_dose)));
}

Move KeyboardRule::decide(const TrialState& state, std::vector<double>* detail) const {
    const DoseLevel d = state.current_dose;
    const DoseData& data = state.at(d);
    const Move move = table_.move(d, data);
    if (detail) {
        const int k = table_.strongest[static_cast<std::size_t>(d - 1)](data.n, data.y);
        const auto [lo, hi] = table_.keys.intervals[static_cast<std::size_t>(k)];
        *detail = {lo, hi};
    }
    return move;
}

MtdSelection KeyboardRule::select(const TrialState& state, double phi) const {
    return selection_ ? select_mtd(state, phi, *selection_) : select_mtd(state, phi);
}

}  // namespace dosefind
