#include "oracles.hpp"

#include <cmath>
#include <limits>

namespace oracle {

double lambda_e(double phi, double phi1, double pi1, double pi2, int n) {
    return (std::log((1 - phi1) / (1 - phi)) + std::log(pi2 / pi1) / n) /
           std::log(phi * (1 - phi1) / (phi1 * (1 - phi)));
}

double lambda_d(double phi, double phi2, double pi1, double pi3, int n) {
    return (std::log((1 - phi) / (1 - phi2)) + std::log(pi1 / pi3) / n) /
           std::log(phi2 * (1 - phi) / (phi * (1 - phi2)));
}

std::array<double, 3> hypothesis_prior(double q, int n0, double phi, double phi1, double phi2) {
    const double h[3] = {phi, phi1, phi2};
    std::array<double, 3> pi{0, 0, 0};
    for (int x = 0; x <= n0; ++x) {
        double like[3], total = 0;
        for (int k = 0; k < 3; ++k) {
            like[k] = std::pow(h[k], x) * std::pow(1 - h[k], n0 - x);
            total += like[k];
        }
        double binom = 1;
        for (int i = 0; i < x; ++i) binom = binom * (n0 - i) / (i + 1);
        const double w = binom * std::pow(q, x) * std::pow(1 - q, n0 - x);
        for (int k = 0; k < 3; ++k) pi[k] += like[k] / total * w;
    }
    return pi;
}

double induced_density(double q, double s2, double p) {
    const double a = std::log(std::log(p) / std::log(q));
    const double normal = std::exp(-a * a / (2 * s2)) / std::sqrt(2 * M_PI * s2);
    return normal / std::abs(p * std::log(p));
}

std::array<double, 2> induced_moments(double q, double s2, int points) {
    // p = exp(-exp(u)) spreads the mass piled up near 0 and 1 over a wide u range.
    // Past hi, p underflows; that tail adds nothing to the raw moments, so they
    // are not renormalised.
    const double lo = -40.0, hi = 7.0, h = (hi - lo) / (points - 1);
    double m1 = 0, m2 = 0;
    for (int i = 0; i < points; ++i) {
        const double u = lo + i * h;
        const double p = std::exp(-std::exp(u));
        if (p < 1e-280 || p >= 1) continue;  // the density overflows before p underflows
        const double jac = p * std::exp(u);
        const double f = induced_density(q, s2, p) * jac * h * (i == 0 || i == points - 1 ? 0.5 : 1.0);
        m1 += p * f;
        m2 += p * p * f;
    }
    return {m1, m2 - m1 * m1};
}

namespace {

template <class F>
Eigen::VectorXd alpha_integral(const Eigen::VectorXd& skeleton, double s2, const std::vector<dosefind::DoseData>& doses,
                               int points, F integrand) {
    const int J = static_cast<int>(skeleton.size());
    const double sd = std::sqrt(s2), lo = -10 * sd, h = 20 * sd / (points - 1);
    // Log-likelihood is shifted by its maximum on the grid for stability.
    std::vector<double> loglik(points);
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        const double a = lo + i * h;
        double ll = -a * a / (2 * s2);
        for (int j = 0; j < J; ++j) {
            const double p = std::pow(skeleton[j], std::exp(a));
            const auto& d = doses[j];
            if (d.y > 0) ll += d.y * std::log(p);
            if (d.n - d.y > 0) ll += (d.n - d.y) * std::log1p(-p);
        }
        loglik[i] = ll;
        best = std::max(best, ll);
    }
    Eigen::VectorXd num = Eigen::VectorXd::Zero(J);
    double den = 0;
    for (int i = 0; i < points; ++i) {
        const double wt = (i == 0 || i == points - 1 ? 0.5 : 1.0) * std::exp(loglik[i] - best);
        const double a = lo + i * h;
        den += wt;
        for (int j = 0; j < J; ++j) num[j] += wt * integrand(skeleton[j], a);
    }
    return num / den;
}

}  // namespace

Eigen::VectorXd crm_posterior_means(const Eigen::VectorXd& skeleton, double s2,
                                    const std::vector<dosefind::DoseData>& doses, int points) {
    return alpha_integral(skeleton, s2, doses, points, [](double q, double a) { return std::pow(q, std::exp(a)); });
}

Eigen::VectorXd crm_overdose(const Eigen::VectorXd& skeleton, double s2, const std::vector<dosefind::DoseData>& doses,
                             double phi, int points) {
    return alpha_integral(skeleton, s2, doses, points,
                          [phi](double q, double a) { return std::pow(q, std::exp(a)) > phi ? 1.0 : 0.0; });
}

double beta_cdf(double x, double a, double b, int points) {
    const double norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
    auto density = [&](double t) {
        // Endpoint limits; a or b below 1 is not supported.
        if (t <= 0) return a == 1 ? std::exp(norm) : 0.0;
        if (t >= 1) return b == 1 ? std::exp(norm) : 0.0;
        return std::exp((a - 1) * std::log(t) + (b - 1) * std::log1p(-t) + norm);
    };
    if (points % 2) ++points;
    const double h = x / points;
    double s = density(0) + density(x);
    for (int i = 1; i < points; ++i) s += (i % 2 ? 4 : 2) * density(i * h);
    return s * h / 3;
}

Eigen::VectorXd brute_force_isotonic(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
    const int n = static_cast<int>(v.size());
    Eigen::VectorXd best_fit;
    double best = std::numeric_limits<double>::infinity();
    // Bit i set: a block ends after element i.
    for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
        Eigen::VectorXd fit(n);
        int start = 0;
        double prev = -std::numeric_limits<double>::infinity();
        bool monotone = true;
        for (int i = 0; i < n; ++i) {
            if (i == n - 1 || (mask >> i & 1u)) {
                double sw = 0, sv = 0;
                for (int k = start; k <= i; ++k) {
                    sw += w[k];
                    sv += w[k] * v[k];
                }
                const double m = sv / sw;
                if (m < prev - 1e-15) monotone = false;
                prev = m;
                for (int k = start; k <= i; ++k) fit[k] = m;
                start = i + 1;
            }
        }
        if (!monotone) continue;
        const double sse = (w.array() * (v - fit).array().square()).sum();
        if (sse < best) {
            best = sse;
            best_fit = fit;
        }
    }
    return best_fit;
}

const int kExampleEscalate[5][10] = {
    {1, 1, 2, 3, 4, 4, 5, 6, 6, 7},
    {0, 1, 2, 3, 3, 4, 5, 5, 6, 7},
    {0, 1, 2, 2, 3, 4, 4, 5, 6, 7},
    {0, 1, 1, 2, 3, 3, 4, 5, 6, 6},
    {0, 0, 1, 2, 2, 3, 4, 5, 5, 6},
};
const int kExampleDeescalate[5][10] = {
    {2, 3, 4, 5, 7, 8, 9, 10, 11, 12},
    {2, 3, 4, 5, 6, 7, 8, 9, 11, 12},
    {2, 3, 4, 5, 6, 7, 8, 9, 10, 11},
    {1, 2, 3, 4, 6, 7, 8, 9, 10, 11},
    {1, 2, 3, 4, 5, 6, 7, 8, 10, 11},
};

}  // namespace oracle
