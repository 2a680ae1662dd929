#include <doctest.h>

#include <chrono>

#include "dosefind/boin.hpp"
#include "dosefind/rng.hpp"
#include "oracles.hpp"

using namespace dosefind;

namespace {

ValidatedDesign example_design(double pess = 3.0) {
    TrialSettings s;
    PriorSpec p;
    p.skeleton = (Eigen::VectorXd(5) << 0.10, 0.19, 0.30, 0.42, 0.54).finished();
    p.pess = Eigen::VectorXd::Constant(5, pess);
    return validate_settings(s, p);
}

}  // namespace

TEST_CASE("noninformative boundaries") {
    const Boundaries b = boundaries(0.3, 0.18, 0.42, noninformative_hypothesis_prior(), 3);
    CHECK(b.lambda_e == doctest::Approx(0.2365).epsilon(1e-4));
    CHECK(b.lambda_d == doctest::Approx(0.3586).epsilon(1e-4));
    CHECK(b.lambda_e == doctest::Approx(oracle::lambda_e(0.3, 0.18, 1, 1, 3)).epsilon(1e-14));
    CHECK(b.lambda_d == doctest::Approx(oracle::lambda_d(0.3, 0.42, 1, 1, 3)).epsilon(1e-14));
    // Independent of n.
    const Boundaries b30 = boundaries(0.3, 0.18, 0.42, noninformative_hypothesis_prior(), 30);
    CHECK(b30.lambda_e == doctest::Approx(b.lambda_e).epsilon(1e-14));
}

TEST_CASE("the example table is reproduced cell for cell") {
    const auto t0 = std::chrono::steady_clock::now();
    const BoinTable t = decision_table(example_design());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 1.0);
    REQUIRE(t.sample_sizes.size() == 10);
    for (int j = 0; j < 5; ++j)
        for (int c = 0; c < 10; ++c) {
            CAPTURE(j);
            CAPTURE(c);
            CHECK(t.escalate_max(j, c) == oracle::kExampleEscalate[j][c]);
            CHECK(t.deescalate_min(j, c) == oracle::kExampleDeescalate[j][c]);
        }
    CHECK(t.warnings.empty());
}

TEST_CASE("informative boundaries follow the closed form") {
    const ValidatedDesign v = example_design();
    const HypothesisPriorTable pi = design_hypothesis_priors(v);
    for (int j = 0; j < 5; ++j)
        for (int n = 1; n <= 30; ++n) {
            const Boundaries raw = unclamped_boundaries(0.3, 0.18, 0.42, pi.row(j).transpose(), n);
            CHECK(raw.lambda_e == doctest::Approx(oracle::lambda_e(0.3, 0.18, pi(j, 0), pi(j, 1), n)).epsilon(1e-13));
            CHECK(raw.lambda_d == doctest::Approx(oracle::lambda_d(0.3, 0.42, pi(j, 0), pi(j, 2), n)).epsilon(1e-13));
        }
}

TEST_CASE("n times the shift from the noninformative boundary is constant in n") {
    RngStream rng(11);
    const Boundaries star = unclamped_boundaries(0.3, 0.18, 0.42, noninformative_hypothesis_prior(), 1);
    for (int rep = 0; rep < 200; ++rep) {
        HypothesisPrior pi(0.05 + rng.uniform(), 0.05 + rng.uniform(), 0.05 + rng.uniform());
        pi /= pi.sum();
        const Boundaries b1 = unclamped_boundaries(0.3, 0.18, 0.42, pi, 1);
        for (int n : {2, 3, 9, 30}) {
            const Boundaries bn = unclamped_boundaries(0.3, 0.18, 0.42, pi, n);
            CHECK(n * (bn.lambda_e - star.lambda_e) == doctest::Approx(b1.lambda_e - star.lambda_e).epsilon(1e-10));
            CHECK(n * (bn.lambda_d - star.lambda_d) == doctest::Approx(b1.lambda_d - star.lambda_d).epsilon(1e-10));
        }
    }
}

TEST_CASE("boundaries depend only on prior ratios") {
    RngStream rng(12);
    for (int rep = 0; rep < 200; ++rep) {
        const HypothesisPrior pi(0.05 + rng.uniform(), 0.05 + rng.uniform(), 0.05 + rng.uniform());
        const double c = 0.01 + 100 * rng.uniform();
        const int n = 1 + static_cast<int>(rng.below(30));
        const Boundaries a = unclamped_boundaries(0.25, 0.15, 0.35, pi, n);
        const Boundaries b = unclamped_boundaries(0.25, 0.15, 0.35, HypothesisPrior(c * pi), n);
        CHECK(a.lambda_e == doctest::Approx(b.lambda_e).epsilon(1e-12));
        CHECK(a.lambda_d == doctest::Approx(b.lambda_d).epsilon(1e-12));
    }
}

TEST_CASE("zero PESS reproduces the standard BOIN table") {
    const BoinTable zero = decision_table(example_design(0.0));
    TrialSettings s = validate_settings(TrialSettings{});
    HypothesisPriorTable flat(5, 3);
    flat.setConstant(1.0 / 3.0);
    const BoinTable standard = decision_table(s, flat);
    CHECK(zero.escalate_max == standard.escalate_max);
    CHECK(zero.deescalate_min == standard.deescalate_min);
    CHECK(zero.eliminate_min == standard.eliminate_min);
    // Every row is identical.
    for (int j = 1; j < 5; ++j) CHECK(standard.escalate_max.row(j) == standard.escalate_max.row(0));
}

TEST_CASE("table lookups agree with direct comparisons against the boundaries") {
    for (double pess : {0.0, 3.0, 7.0}) {
        const ValidatedDesign v = example_design(pess);
        const BoinTable t = decision_table(v);
        BoinRule rule(t);
        const HypothesisPriorTable pi = design_hypothesis_priors(v);
        for (int j = 1; j <= 5; ++j)
            for (int n = 3; n <= 30; n += 3)
                for (int y = 0; y <= n; ++y) {
                    const Boundaries b = boundaries(0.3, 0.18, 0.42, pi.row(j - 1).transpose(), n);
                    const double rate = static_cast<double>(y) / n;
                    const Move expected = rate < b.lambda_e ? Move::Up : rate > b.lambda_d ? Move::Down : Move::Stay;
                    TrialState st = TrialState::start(v.settings);
                    st.current_dose = j;
                    st.at(j) = {n, y};
                    CHECK(rule.decide(st, nullptr) == expected);
                }
    }
}

TEST_CASE("elimination row matches the uniform-prior beta tail") {
    const BoinTable t = decision_table(example_design());
    for (std::size_t c = 0; c < t.sample_sizes.size(); ++c) {
        const int n = t.sample_sizes[c];
        int expected = -1;
        for (int y = 0; y <= n && expected < 0; ++y)
            if (1.0 - oracle::beta_cdf(0.3, y + 1, n - y + 1) > 0.95) expected = y;
        for (int j = 0; j < 5; ++j) CHECK(t.eliminate_min(j, static_cast<Eigen::Index>(c)) == expected);
    }
}

TEST_CASE("clamped boundaries and the ordering check") {
    TrialSettings s = validate_settings(TrialSettings{});
    HypothesisPriorTable pi(5, 3);
    pi.setConstant(1.0 / 3.0);
    // Nearly certain H1: both raw boundaries leave [0, 1] at n = 3.
    pi.row(4) << 1.0 - 2e-4, 1e-4, 1e-4;
    const Boundaries raw = unclamped_boundaries(0.3, 0.18, 0.42, pi.row(4).transpose(), 3);
    CHECK(raw.lambda_e < 0.0);
    CHECK(raw.lambda_d > 1.0);
    const BoinTable t = decision_table(s, pi);
    CHECK(t.lambda_e(4, 0) == 0.0);
    CHECK(t.lambda_d(4, 0) == 1.0);
    CHECK(t.escalate_max(4, 0) == -1);
    CHECK(t.deescalate_min(4, 0) == 4);

    // A prior that favours H2 and H3 over H1 crosses the boundaries.
    pi.row(2) << 1e-6, 0.5, 0.5;
    CHECK_THROWS_AS(decision_table(s, pi), std::domain_error);
}

TEST_CASE("non-integer PESS is rounded with a warning") {
    TrialSettings s;
    PriorSpec p;
    p.skeleton = (Eigen::VectorXd(5) << 0.10, 0.19, 0.30, 0.42, 0.54).finished();
    p.pess = (Eigen::VectorXd(5) << 3, 3, 3, 3.1, 3.4).finished();
    const BoinTable t = decision_table(validate_settings(s, p));
    CHECK(t.warnings.size() == 2);
    CHECK(t.escalate_max == decision_table(example_design()).escalate_max);
}
