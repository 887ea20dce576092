#include <doctest.h>

#include "hwobs/placement.hpp"
#include "hwobs/rng.hpp"

using namespace hwobs;

namespace {

GramianTerms toy_terms(const std::vector<double>& t) {
    GramianTerms terms;
    terms.n = static_cast<int>(t.size());
    terms.t = VecX::Zero(terms.n);
    terms.W.assign(static_cast<std::size_t>(terms.n), MatX::Zero(terms.n, terms.n));
    for (int i = 0; i < terms.n; ++i) {
        terms.t[i] = t[static_cast<std::size_t>(i)];
        terms.W[static_cast<std::size_t>(i)](i, i) = t[static_cast<std::size_t>(i)];
    }
    return terms;
}

GramianTerms highway7_terms(int N_window, std::uint64_t seed) {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, N_window, seed, 10);
    Rng rng(seed + 1);
    VecX x0(ss.n());
    for (int i = 0; i < x0.size(); ++i) x0[i] = cfg.fd.rho_m * (1.0 - rng.uniform());
    return make_gramian_terms(ss, x0, sched, N_window);
}

} // namespace

TEST_CASE("capped simplex projection") {
    VecX v(4);
    v << 0.9, 0.2, -0.3, 2.0;
    const VecX g = project_capped_simplex(v, 2.0);
    CHECK(g.sum() == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(g.minCoeff() >= 0.0);
    CHECK(g.maxCoeff() <= 1.0);
    // A feasible point projects to itself.
    VecX f(4);
    f << 1.0, 0.5, 0.5, 0.0;
    CHECK((project_capped_simplex(f, 2.0) - f).cwiseAbs().maxCoeff() < 1e-9);
    // Degenerate budgets.
    CHECK(project_capped_simplex(v, 0.0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(project_capped_simplex(v, 4.0).minCoeff() == 1.0);
}

TEST_CASE("trace placement is a sort") {
    const auto terms = toy_terms({3.0, 1.0, 2.0});
    const auto res = solve_trace_exact(terms, 2);
    CHECK(res.gamma_star.indices() == std::vector<int>{0, 2});
    CHECK(res.kappa == doctest::Approx(5.0));

    const auto all = solve_trace_exact(terms, 3);
    CHECK(all.gamma_star.r == 3);

    CHECK_THROWS(solve_trace_exact(terms, 4));

    SUBCASE("ties break toward the lower index") {
        const auto tied = solve_trace_exact(toy_terms({2.0, 2.0, 2.0}), 2);
        CHECK(tied.gamma_star.indices() == std::vector<int>{0, 1});
    }
    SUBCASE("invariant under positive rescaling") {
        auto scaled = toy_terms({30.0, 10.0, 20.0});
        const auto res2 = solve_trace_exact(scaled, 2);
        CHECK(res2.gamma_star.indices() == res.gamma_star.indices());
    }
}

TEST_CASE("exhaustive enumeration") {
    const auto res = exhaustive(toy_terms({1.0, 5.0, 2.0}), Metric::Trace, 1);
    CHECK(res.gamma_star.indices() == std::vector<int>{1});

    GramianTerms big;
    big.n = 60;
    big.t = VecX::Ones(60);
    CHECK_THROWS(exhaustive(big, Metric::Trace, 30));
}

TEST_CASE("trace solvers agree with enumeration on the 7-segment highway") {
    const auto terms = highway7_terms(20, 3);
    for (int r : {2, 3, 4}) {
        const auto sorted = solve_trace_exact(terms, r);
        const auto brute = exhaustive(terms, Metric::Trace, r);
        CHECK(sorted.gamma_star.indices() == brute.gamma_star.indices());
        CHECK(sorted.kappa == doctest::Approx(brute.kappa).epsilon(1e-12));
        const auto bnb = solve_bnb(terms, Metric::Trace, r);
        CHECK(bnb.gamma_star.indices() == brute.gamma_star.indices());
    }
}

TEST_CASE("branch and bound matches enumeration for the determinant metric") {
    const auto terms = highway7_terms(14, 9);
    for (int r : {2, 3, 4, 5, 6}) {
        const auto brute = exhaustive(terms, Metric::GeomeanDet, r);
        const auto bnb = solve_bnb(terms, Metric::GeomeanDet, r);
        CHECK(bnb.status == PlacementResult::Status::Optimal);
        CHECK(bnb.kappa == doctest::Approx(brute.kappa).epsilon(1e-9));
        CHECK(bnb.gamma_star.indices() == brute.gamma_star.indices());
    }

    SUBCASE("full budget selects everything") {
        const auto res = solve_bnb(terms, Metric::GeomeanDet, terms.n);
        CHECK(res.gamma_star.r == terms.n);
    }
}

TEST_CASE("optimal objective grows with the budget") {
    const auto terms = highway7_terms(16, 21);
    double prev = -1.0;
    for (int r = 2; r <= 8; ++r) {
        const auto res = solve_bnb(terms, Metric::GeomeanDet, r);
        CHECK(res.kappa >= prev - 1e-12);
        prev = res.kappa;
    }
}

TEST_CASE("cost-aware placement") {
    const auto terms = highway7_terms(18, 5);
    const int r = 4;
    const auto free_opt = solve_trace_exact(terms, r);

    SUBCASE("zero weight reduces to the cost-free problem") {
        const auto res = solve_p4(terms, r, VecX::Ones(terms.n), 0.0);
        CHECK(res.gamma_star.indices() == free_opt.gamma_star.indices());
    }
    SUBCASE("uniform costs shift every score equally") {
        const auto res = solve_p4(terms, r, VecX::Constant(terms.n, 0.7), 50.0);
        CHECK(res.gamma_star.indices() == free_opt.gamma_star.indices());
    }
    SUBCASE("expensive sensors lower the achieved trace") {
        Rng rng(77);
        VecX costs(terms.n);
        for (int i = 0; i < costs.size(); ++i) costs[i] = rng.uniform();
        for (double w : {100.0, 1000.0}) {
            const auto res = solve_p4(terms, r, costs, w);
            CHECK(metric_value(terms, res.gamma_star, Metric::Trace) <= free_opt.kappa + 1e-12);
        }
    }
}

TEST_CASE("baseline selections") {
    const auto uni4 = baseline_uniform(7, 4);
    CHECK(uni4.indices() == std::vector<int>{0, 2, 4, 6});
    const auto uni5 = baseline_uniform(7, 5);
    CHECK(uni5.indices() == std::vector<int>{0, 1, 2, 4, 6});

    const auto ra = baseline_random(21, 8, 42);
    const auto rb = baseline_random(21, 8, 42);
    CHECK(ra.indices() == rb.indices());
    CHECK(ra.r == 8);
    const auto rc = baseline_random(21, 8, 43);
    CHECK(ra.indices() != rc.indices());
}

TEST_CASE("trace selections nest as the budget grows") {
    const auto terms = highway7_terms(25, 13);
    SensorSelection prev;
    for (int r = 2; r <= terms.n; r += 2) {
        const auto res = solve_trace_exact(terms, r);
        if (prev.p() > 0) CHECK(selection_nested(prev, res.gamma_star));
        prev = res.gamma_star;
    }
}
