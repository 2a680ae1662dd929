#include "dosefind/crm.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <stdexcept>

#include "dosefind/quadrature.hpp"

namespace dosefind {

namespace {

struct LogLikelihood {
    Eigen::VectorXd log_q;
    Eigen::VectorXd n;
    Eigen::VectorXd y;

    double operator()(double alpha) const {
        const double scale = std::exp(alpha);
        double ll = 0.0;
        for (Eigen::Index j = 0; j < log_q.size(); ++j) {
            if (n[j] == 0.0) continue;
            const double log_p = scale * log_q[j];
            // log(1 - p) via expm1 stays accurate as p approaches 1.
            ll += y[j] * log_p;
            if (n[j] > y[j]) ll += (n[j] - y[j]) * std::log(-std::expm1(log_p));
        }
        return ll;
    }
};

}  // namespace

namespace {

// Log-likelihood plus log-prior of alpha, with the normalising shift that
// keeps exp() in range.
struct LogPosterior {
    LogLikelihood ll;
    double sigma2;
    double lo, hi, shift;

    LogPosterior(const CrmModel& model, const std::vector<DoseData>& doses) : sigma2(model.sigma2) {
        const Eigen::Index J = model.skeleton.size();
        if (static_cast<Eigen::Index>(doses.size()) != J)
            throw std::invalid_argument("posterior: data and skeleton differ in length");
        if (!(model.sigma2 > 0.0)) throw std::domain_error("sigma2 must be positive");
        ll = {model.skeleton.array().log().matrix(), Eigen::VectorXd(J), Eigen::VectorXd(J)};
        for (Eigen::Index j = 0; j < J; ++j) {
            ll.n[j] = doses[static_cast<std::size_t>(j)].n;
            ll.y[j] = doses[static_cast<std::size_t>(j)].y;
        }
        const double sigma = std::sqrt(sigma2);
        lo = -10.0 * sigma;
        hi = 10.0 * sigma;
        // Shift by the largest log-posterior on a coarse grid so the
        // integrand stays in range when the data are informative.
        shift = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= 200; ++i) shift = std::max(shift, raw(lo + (hi - lo) * i / 200.0));
    }

    double raw(double alpha) const { return ll(alpha) - alpha * alpha / (2.0 * sigma2); }
    double operator()(double alpha) const { return std::exp(raw(alpha) - shift); }
};

QuadratureOptions posterior_quadrature() {
    QuadratureOptions opts;
    opts.rel_tol = 1e-10;
    opts.abs_tol = 1e-300;
    opts.initial_intervals = 16;
    return opts;
}

}  // namespace

Eigen::VectorXd posterior_means(const CrmModel& model, const std::vector<DoseData>& doses) {
    const LogPosterior post(model, doses);
    const Eigen::Index J = model.skeleton.size();
    auto integrand = [&](double alpha, Eigen::ArrayXd& out) {
        const double w = post(alpha);
        const double scale = std::exp(alpha);
        out[0] = w;
        for (Eigen::Index j = 0; j < J; ++j) out[j + 1] = w * std::exp(scale * post.ll.log_q[j]);
    };
    const auto result = integrate_adaptive<double>(integrand, post.lo, post.hi, J + 1, posterior_quadrature());
    return (result.value.tail(J) / result.value[0]).matrix();
}

Eigen::VectorXd posterior_overdose_probabilities(const CrmModel& model, const std::vector<DoseData>& doses,
                                                 double phi) {
    const LogPosterior post(model, doses);
    const QuadratureOptions opts = posterior_quadrature();
    const double total = integrate_adaptive_scalar(post, post.lo, post.hi, opts);
    const Eigen::Index J = model.skeleton.size();
    Eigen::VectorXd out(J);
    // p_j > phi exactly when alpha < log(log(phi) / log(q_j)).
    for (Eigen::Index j = 0; j < J; ++j) {
        const double cut = std::min(post.hi, std::log(std::log(phi) / post.ll.log_q[j]));
        out[j] = cut <= post.lo ? 0.0 : std::min(1.0, integrate_adaptive_scalar(post, post.lo, cut, opts) / total);
    }
    return out;
}

DoseLevel crm_target_dose(const Eigen::VectorXd& means, const TrialState& state, double phi) {
    DoseLevel best = 1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (DoseLevel d = 1; d <= state.num_doses(); ++d) {
        if (state.is_eliminated(d)) break;
        const double dist = std::abs(means[d - 1] - phi);
        if (dist < best_dist) {
            best_dist = dist;
            best = d;
        }
    }
    return best;
}

namespace {

Move toward(DoseLevel target, DoseLevel current) {
    if (target > current) return Move::Up;
    if (target < current) return Move::Down;
    return Move::Stay;
}

}  // namespace

DoseChoice crm_next_dose(const CrmModel& model, const TrialState& state, double phi) {
    const Eigen::VectorXd means = posterior_means(model, state.doses);
    return clip_move(state, toward(crm_target_dose(means, state, phi), state.current_dose));
}

CrmRule::CrmRule(CrmModel model, double phi, bool model_selection, bool model_safety)
    : model_(std::move(model)), phi_(phi), model_selection_(model_selection), model_safety_(model_safety) {}

bool CrmRule::eliminates(const TrialState& state, double phi, const EliminationRule& rule) const {
    if (!model_safety_) return DoseRule::eliminates(state, phi, rule);
    const DoseLevel d = state.current_dose;
    if (state.at(d).n < rule.min_n) return false;
    const Eigen::VectorXd tail =
        phi == phi_ ? overdose_probabilities(state.doses) : posterior_overdose_probabilities(model_, state.doses, phi);
    return tail[d - 1] > rule.threshold;
}

Eigen::VectorXd CrmRule::means(const std::vector<DoseData>& doses) const { return cached(doses, false); }

Eigen::VectorXd CrmRule::overdose_probabilities(const std::vector<DoseData>& doses) const {
    return cached(doses, true);
}

Eigen::VectorXd CrmRule::cached(const std::vector<DoseData>& doses, bool overdose) const {
    std::string key(doses.size() * 2 * sizeof(std::uint16_t), '\0');
    for (std::size_t j = 0; j < doses.size(); ++j) {
        const std::uint16_t pair[2] = {static_cast<std::uint16_t>(doses[j].n),
                                       static_cast<std::uint16_t>(doses[j].y)};
        std::memcpy(key.data() + j * sizeof(pair), pair, sizeof(pair));
    }
    Shard& shard = shards_[std::hash<std::string>{}(key) % kShards];
    {
        std::lock_guard lock(shard.mutex);
        if (auto it = shard.entries.find(key); it != shard.entries.end()) {
            const Eigen::VectorXd& hit = overdose ? it->second.overdose : it->second.means;
            if (hit.size() > 0) return hit;
        }
    }
    Eigen::VectorXd value =
        overdose ? posterior_overdose_probabilities(model_, doses, phi_) : posterior_means(model_, doses);
    std::lock_guard lock(shard.mutex);
    if (shard.entries.size() >= kShardCapacity) shard.entries.clear();
    Entry& entry = shard.entries[std::move(key)];
    (overdose ? entry.overdose : entry.means) = value;
    return value;
}

Move CrmRule::decide(const TrialState& state, std::vector<double>* detail) const {
    const Eigen::VectorXd m = means(state.doses);
    if (detail) detail->assign(m.data(), m.data() + m.size());
    return toward(crm_target_dose(m, state, phi_), state.current_dose);
}

MtdSelection CrmRule::select(const TrialState& state, double phi) const {
    if (!model_selection_) return select_mtd(state, phi);
    MtdSelection out = select_mtd(state, phi);
    if (state.terminated || out.admissible.empty()) {
        out.selected.reset();
        return out;
    }
    out.selected = crm_target_dose(means(state.doses), state, phi);
    return out;
}

}  // namespace dosefind
