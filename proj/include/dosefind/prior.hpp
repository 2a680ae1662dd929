#pragma once

#include <vector>

#include <Eigen/Core>

#include "dosefind/types.hpp"

namespace dosefind {

/// Beta(a, b) matched to the first two moments of the prior on a dose's
/// toxicity probability induced by the power model p = q^exp(alpha),
/// alpha ~ N(0, sigma2).
struct InducedBeta {
    double a = 1.0;
    double b = 1.0;
    double mean = 0.5;
    double variance = 1.0 / 12.0;
    double pess() const { return a + b; }
};

struct BetaParams {
    double a = 1.0;
    double b = 1.0;
};

/// Prior probabilities of (H1: p = phi, H2: p = phi1, H3: p = phi2) at one dose.
using HypothesisPrior = Eigen::Vector3d;
/// One HypothesisPrior per dose, stored row-wise.
using HypothesisPriorTable = Eigen::Matrix<double, Eigen::Dynamic, 3>;

inline HypothesisPrior noninformative_hypothesis_prior() {
    return HypothesisPrior::Constant(1.0 / 3.0);
}

/// Density of p induced by alpha ~ N(0, sigma2) under p = q^exp(alpha).
/// Throws std::domain_error at p = 0 or p = 1.
double induced_density(double q, double sigma2, double p);

/// Moment-matched beta for one skeleton value. Moments are integrated in alpha
/// space. Throws std::domain_error if the implied a or b is not positive.
InducedBeta moment_match(double q, double sigma2);

/// Moment-matched beta at every dose of a skeleton.
std::vector<InducedBeta> moment_match(const Eigen::VectorXd& skeleton, double sigma2);

/// sigma2 in [1e-4, 25] whose induced PESS at dose j_star equals target_pess
/// (within 0.01). Found by bisection; throws if the target is outside the
/// bracket or if PESS fails to decrease monotonically in sigma2.
double calibrate_sigma(const Eigen::VectorXd& skeleton, DoseLevel j_star, double target_pess);

inline constexpr double kSigmaBracketLo = 1e-4;
inline constexpr double kSigmaBracketHi = 25.0;

/// Rounds a PESS value to the integer number of pseudo-patients used by the
/// binomial hypothesis-prior sum.
int integer_pess(double n0);

/// Prior hypothesis probabilities implied by skeleton value q with n0
/// pseudo-patients: pi_k = sum_x Pr(H_k | x) Binom(x; n0, q) with a uniform
/// prior over hypotheses. Non-integer n0 is rounded to the nearest integer.
HypothesisPrior hypothesis_prior(double q, double n0, double phi, double phi1, double phi2);

HypothesisPriorTable hypothesis_priors(const Eigen::VectorXd& skeleton, const Eigen::VectorXd& pess,
                                       double phi, double phi1, double phi2);

/// Zeroes the PESS above j_star when j_star >= J/2; otherwise returns pess as is.
Eigen::VectorXd robustify_pess(const Eigen::VectorXd& pess, DoseLevel j_star, int num_doses);

/// w * informative + (1 - w) * (1/3, 1/3, 1/3).
HypothesisPrior mixture_hypothesis_prior(const HypothesisPrior& informative, double w);

/// a = n0 q, b = n0 (1 - q); the uniform Beta(1, 1) when n0 = 0.
BetaParams keyboard_hyperparams(double q, double n0);

/// Regularized incomplete beta I_x(a, b).
double beta_cdf(double x, double a, double b);

}  // namespace dosefind
