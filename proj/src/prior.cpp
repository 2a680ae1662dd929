#include "dosefind/prior.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "dosefind/quadrature.hpp"

namespace dosefind {

namespace {

void require_probability(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0))
        throw std::domain_error(std::string(name) + " must lie strictly inside (0, 1)");
}

double normal_density(double x, double sigma2) {
    return std::exp(-x * x / (2.0 * sigma2)) / std::sqrt(2.0 * std::numbers::pi * sigma2);
}

}  // namespace

double induced_density(double q, double sigma2, double p) {
    require_probability(q, "q");
    require_probability(p, "p");
    if (!(sigma2 > 0.0)) throw std::domain_error("sigma2 must be positive");
    const double log_p = std::log(p);
    const double alpha = std::log(log_p / std::log(q));
    return -normal_density(alpha, sigma2) / (p * log_p);
}

InducedBeta moment_match(double q, double sigma2) {
    require_probability(q, "q");
    if (!(sigma2 > 0.0)) throw std::domain_error("sigma2 must be positive");

    const double sigma = std::sqrt(sigma2);
    const double log_q = std::log(q);
    QuadratureOptions opts;
    opts.rel_tol = 1e-12;
    opts.abs_tol = 1e-300;

    auto mean_integrand = [&](double alpha) {
        return std::exp(log_q * std::exp(alpha)) * normal_density(alpha, sigma2);
    };
    const double mean = integrate_adaptive_scalar(mean_integrand, -10.0 * sigma, 10.0 * sigma, opts);
    // Central second moment integrated directly; m2 - mean^2 cancels badly
    // when sigma2 is small.
    auto var_integrand = [&](double alpha) {
        const double d = std::exp(log_q * std::exp(alpha)) - mean;
        return d * d * normal_density(alpha, sigma2);
    };
    const double variance =
        integrate_adaptive_scalar(var_integrand, -10.0 * sigma, 10.0 * sigma, opts);

    InducedBeta out;
    out.mean = mean;
    out.variance = variance;
    out.a = mean * mean * (1.0 - mean) / variance - mean;
    out.b = out.a * (1.0 - mean) / mean;
    if (!(out.a > 0.0 && out.b > 0.0) || !std::isfinite(out.a))
        throw std::domain_error("moment matching degenerate for q=" + std::to_string(q) +
                                ", sigma2=" + std::to_string(sigma2) +
                                ": prior variance too large for a beta fit");
    return out;
}

std::vector<InducedBeta> moment_match(const Eigen::VectorXd& skeleton, double sigma2) {
    std::vector<InducedBeta> out;
    out.reserve(static_cast<std::size_t>(skeleton.size()));
    for (Eigen::Index j = 0; j < skeleton.size(); ++j) out.push_back(moment_match(skeleton[j], sigma2));
    return out;
}

double calibrate_sigma(const Eigen::VectorXd& skeleton, DoseLevel j_star, double target_pess) {
    if (j_star < 1 || j_star > skeleton.size()) throw std::out_of_range("j_star outside skeleton");
    if (!(target_pess > 1.0)) throw std::domain_error("target PESS must exceed 1");
    const double q = skeleton[j_star - 1];
    auto pess_at = [q](double sigma2) { return moment_match(q, sigma2).pess(); };

    // Bisect in log(sigma2); PESS spans orders of magnitude across the bracket.
    double lo = std::log(kSigmaBracketLo), hi = std::log(kSigmaBracketHi);
    double pess_lo = pess_at(kSigmaBracketLo), pess_hi = pess_at(kSigmaBracketHi);
    if (!(pess_lo >= target_pess && target_pess >= pess_hi))
        throw std::domain_error("target PESS " + std::to_string(target_pess) +
                                " unattainable for sigma2 in [1e-4, 25] (PESS range " +
                                std::to_string(pess_hi) + " .. " + std::to_string(pess_lo) + ")");
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double pess_mid = pess_at(std::exp(mid));
        if (!(pess_lo >= pess_mid && pess_mid >= pess_hi))
            throw std::runtime_error("PESS not monotone in sigma2 near " + std::to_string(std::exp(mid)));
        if (pess_mid > target_pess) {
            lo = mid;
            pess_lo = pess_mid;
        } else {
            hi = mid;
            pess_hi = pess_mid;
        }
        if (hi - lo < 1e-12) break;
    }
    const double sigma2 = std::exp(0.5 * (lo + hi));
    if (std::abs(pess_at(sigma2) - target_pess) > 0.01)
        throw std::runtime_error("sigma2 calibration did not reach the target PESS");
    return sigma2;
}

int integer_pess(double n0) {
    if (!(n0 >= 0.0) || !std::isfinite(n0)) throw std::domain_error("PESS must be finite and >= 0");
    return static_cast<int>(std::lround(n0));
}

HypothesisPrior hypothesis_prior(double q, double n0, double phi, double phi1, double phi2) {
    const int m = integer_pess(n0);
    if (m == 0) return noninformative_hypothesis_prior();
    require_probability(q, "q");

    const std::array<double, 3> rates = {phi, phi1, phi2};
    const double log_q = std::log(q), log_1q = std::log1p(-q);
    HypothesisPrior pi = HypothesisPrior::Zero();
    for (int x = 0; x <= m; ++x) {
        // Posterior over hypotheses given x of m, computed in log space.
        Eigen::Vector3d loglik;
        for (int k = 0; k < 3; ++k)
            loglik[k] = x * std::log(rates[k]) + (m - x) * std::log1p(-rates[k]);
        const double top = loglik.maxCoeff();
        const Eigen::Vector3d weights = (loglik.array() - top).exp().matrix();
        const double log_binom = std::lgamma(m + 1.0) - std::lgamma(x + 1.0) -
                                 std::lgamma(m - x + 1.0) + x * log_q + (m - x) * log_1q;
        pi += weights / weights.sum() * std::exp(log_binom);
    }
    return pi;
}

HypothesisPriorTable hypothesis_priors(const Eigen::VectorXd& skeleton, const Eigen::VectorXd& pess,
                                       double phi, double phi1, double phi2) {
    if (skeleton.size() != pess.size()) throw std::invalid_argument("skeleton/pess length mismatch");
    HypothesisPriorTable out(skeleton.size(), 3);
    for (Eigen::Index j = 0; j < skeleton.size(); ++j)
        out.row(j) = hypothesis_prior(skeleton[j], pess[j], phi, phi1, phi2).transpose();
    return out;
}

Eigen::VectorXd robustify_pess(const Eigen::VectorXd& pess, DoseLevel j_star, int num_doses) {
    if (2 * j_star < num_doses) return pess;
    Eigen::VectorXd out = pess;
    for (Eigen::Index j = j_star; j < out.size(); ++j) out[j] = 0.0;
    return out;
}

HypothesisPrior mixture_hypothesis_prior(const HypothesisPrior& informative, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw std::domain_error("mixture weight must lie in [0, 1]");
    if (w == 1.0) return informative;
    return w * informative + (1.0 - w) * noninformative_hypothesis_prior();
}

BetaParams keyboard_hyperparams(double q, double n0) {
    if (!(n0 >= 0.0)) throw std::domain_error("PESS must be non-negative");
    if (n0 == 0.0) return {1.0, 1.0};
    return {n0 * q, n0 * (1.0 - q)};
}

double beta_cdf(double x, double a, double b) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return boost::math::ibeta(a, b, x);
}

}  // namespace dosefind
