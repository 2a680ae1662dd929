#include <doctest.h>

#include <cmath>

#include "dosefind/design.hpp"
#include "dosefind/rng.hpp"
#include "oracles.hpp"

using namespace dosefind;

namespace {

Design example_design(DesignKind kind, double pess = 3.0) {
    PriorSpec p;
    p.skeleton = (Eigen::VectorXd(5) << 0.10, 0.19, 0.30, 0.42, 0.54).finished();
    p.pess = Eigen::VectorXd::Constant(5, pess);
    return make_design(kind, TrialSettings{}, p);
}

}  // namespace

TEST_CASE("elimination uses the uniform-prior beta tail") {
    // Pr(p > 0.3) for Beta(4, 1) and Beta(3, 2), in closed form.
    const double beta41 = 1.0 - std::pow(0.3, 4);
    const double beta32 = 1.0 - (4 * std::pow(0.3, 3) - 3 * std::pow(0.3, 4));
    CHECK(std::abs(beta41 - 0.9919) < 1e-10);
    CHECK(std::abs(beta32 - 0.9163) < 1e-10);
    CHECK(std::abs((1.0 - beta_cdf(0.3, 4, 1)) - beta41) < 1e-10);
    CHECK(std::abs((1.0 - beta_cdf(0.3, 3, 2)) - beta32) < 1e-10);
    CHECK(check_elimination({3, 3}, 0.3, {}));
    CHECK_FALSE(check_elimination({3, 2}, 0.3, {}));
    CHECK_FALSE(check_elimination({2, 2}, 0.3, {}));  // fewer than 3 patients
    CHECK(elimination_boundary(3, 0.3, {}) == 3);
    CHECK(elimination_boundary(6, 0.3, {}) == 4);
}

TEST_CASE("PAVA equals the brute-force isotonic fit") {
    RngStream rng(31);
    for (int rep = 0; rep < 1000; ++rep) {
        Eigen::VectorXd v(6), w(6);
        for (int i = 0; i < 6; ++i) {
            v[i] = rng.uniform();
            w[i] = 0.1 + 5 * rng.uniform();
        }
        if (rep % 10 == 0) w.setOnes();
        const Eigen::VectorXd fit = pava(v, w);
        const Eigen::VectorXd o = oracle::brute_force_isotonic(v, w);
        CHECK((fit - o).cwiseAbs().maxCoeff() < 1e-12);
    }
    Eigen::VectorXd v(3), w(2);
    CHECK_THROWS_AS(pava(v, w), std::invalid_argument);
}

TEST_CASE("isotonic selection on a small example") {
    TrialSettings s;
    s.num_doses = 3;
    TrialState st = TrialState::start(s);
    st.at(1) = {9, 1};
    st.at(2) = {9, 3};
    st.at(3) = {6, 3};
    const MtdSelection sel = select_mtd(st, 0.3);
    REQUIRE(sel.selected);
    CHECK(*sel.selected == 2);
    CHECK(sel.admissible.size() == 3);
    for (int i = 1; i < 3; ++i) CHECK(sel.isotonic_estimates[i] >= sel.isotonic_estimates[i - 1]);

    // Violators get pooled.
    st.at(2) = {9, 0};
    const MtdSelection pooled = select_mtd(st, 0.3);
    CHECK(pooled.isotonic_estimates[0] == doctest::Approx(pooled.isotonic_estimates[1]));

    // Untried and eliminated doses are not candidates.
    st.at(3) = {0, 0};
    CHECK(select_mtd(st, 0.3).admissible.size() == 2);
    st.eliminated_from = 2;
    CHECK(*select_mtd(st, 0.3).selected == 1);
}

TEST_CASE("cohorts follow the table and the elimination rule") {
    const Design d = example_design(DesignKind::Boin);
    const auto rule = make_rule(d);
    const TrialSettings& s = d.validated.settings;

    TrialState st = TrialState::start(s);
    st = apply_cohort(st, 0, s, *rule);
    CHECK(st.history.back().decision == Decision::Escalate);
    CHECK(st.current_dose == 2);
    st = apply_cohort(st, 0, s, *rule);
    st = apply_cohort(st, 0, s, *rule);
    CHECK(st.current_dose == 4);  // 0/3 at dose 3 escalates
    st = apply_cohort(st, 3, s, *rule);
    CHECK(st.history.back().decision == Decision::EliminateAndDeEscalate);
    CHECK(st.eliminated_from == 4);
    CHECK(st.current_dose == 3);
    st = apply_cohort(st, 0, s, *rule);
    CHECK(st.history.back().decision == Decision::Stay);  // dose 4 is closed
    CHECK(st.history.back().boundaries_used.size() == 2);

    TrialState t = TrialState::start(s);
    t = apply_cohort(t, 3, s, *rule);
    CHECK(t.history.back().decision == Decision::TerminateTrial);
    CHECK(t.history.back().next_dose == 0);
    CHECK(t.status(s) == TrialStatus::Terminated);
    CHECK_THROWS_AS(apply_cohort(t, 0, s, *rule), IllegalTransition);
    CHECK_THROWS_AS(apply_cohort(TrialState::start(s), 4, s, *rule), ValidationError);
    CHECK_THROWS_AS(apply_cohort(TrialState::start(s), -1, s, *rule), ValidationError);
}

TEST_CASE("a full trial ends complete and refuses more cohorts") {
    const Design d = example_design(DesignKind::Keyboard);
    const auto rule = make_rule(d);
    const TrialSettings& s = d.validated.settings;
    TrialState st = TrialState::start(s);
    for (int c = 0; c < s.num_cohorts(); ++c) st = apply_cohort(st, c % 2, s, *rule);
    CHECK(st.status(s) == TrialStatus::Complete);
    CHECK(st.history.size() == 10);
    CHECK_THROWS_AS(apply_cohort(st, 0, s, *rule), IllegalTransition);
}

TEST_CASE("random trajectories keep the trial state consistent") {
    RngStream rng(77);
    for (DesignKind kind : {DesignKind::Boin, DesignKind::Keyboard, DesignKind::Crm}) {
        const Design d = example_design(kind);
        const auto rule = make_rule(d);
        const TrialSettings& s = d.validated.settings;
        for (int rep = 0; rep < (kind == DesignKind::Crm ? 100 : 300); ++rep) {
            TrialState st = TrialState::start(s);
            while (st.status(s) == TrialStatus::Active) {
                const DoseLevel before = st.current_dose;
                const int y = static_cast<int>(rng.below(4));
                st = apply_cohort(st, y, s, *rule);
                const CohortRecord& r = st.history.back();
                CHECK(r.dose == before);
                CHECK(r.n_dlt == y);
                if (!st.terminated) {
                    CHECK(std::abs(st.current_dose - before) <= 1);
                    CHECK_FALSE(st.is_eliminated(st.current_dose));
                    CHECK(r.next_dose == st.current_dose);
                }
            }
            int n = 0, y = 0;
            for (const auto& r : st.history) {
                n += r.n;
                y += r.n_dlt;
            }
            int dn = 0, dy = 0;
            for (const auto& x : st.doses) {
                CHECK(x.n % s.cohort_size == 0);
                CHECK(x.y <= x.n);
                dn += x.n;
                dy += x.y;
            }
            CHECK(n == dn);
            CHECK(y == dy);
            CHECK(dn <= s.max_n);
            if (st.terminated) CHECK(st.eliminated_from == 1);
        }
    }
}

TEST_CASE("design rules and selection defaults") {
    CHECK(selection_method(example_design(DesignKind::Crm)) == SelectionMethod::Model);
    CHECK(selection_method(example_design(DesignKind::Boin)) == SelectionMethod::PriorIsotonic);
    Design bad = example_design(DesignKind::Boin);
    bad.options.selection = SelectionMethod::Model;
    CHECK_THROWS_AS(make_rule(bad), ValidationError);
    Design crm = example_design(DesignKind::Crm);
    crm.options.selection = SelectionMethod::PriorIsotonic;
    CHECK_THROWS_AS(make_rule(crm), ValidationError);
    CHECK(crm_sigma2(example_design(DesignKind::Crm, 0.0)) == kNoninformativeCrmSigma2);
    // Informative CRM is calibrated to the PESS at the prior MTD.
    CHECK(moment_match(0.30, crm_sigma2(example_design(DesignKind::Crm))).pess() == doctest::Approx(3.0).epsilon(0.01));

    const SelectionPrior sp = design_selection_prior(example_design(DesignKind::Boin).validated);
    CHECK(sp.a[0] == doctest::Approx(0.3));
    CHECK(sp.b[4] == doctest::Approx(3 * 0.46));
    const SelectionPrior vague = design_selection_prior(example_design(DesignKind::Boin, 0.0).validated);
    CHECK(vague.a[2] == 0.05);
}
