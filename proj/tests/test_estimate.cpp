#include <doctest.h>

#include "hwobs/estimate.hpp"
#include "hwobs/placement.hpp"
#include "hwobs/rng.hpp"

using namespace hwobs;

namespace {

VecX random_x0(const HighwayConfig& cfg, Rng& rng) {
    VecX x(cfg.state_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = cfg.fd.rho_m * (1.0 - rng.uniform());
    return x;
}

} // namespace

TEST_CASE("relative error") {
    VecX x0(3);
    x0 << 1.0, 2.0, 2.0;
    CHECK(relative_error(x0, x0) == 0.0);
    CHECK(relative_error(2.0 * x0, x0) == doctest::Approx(1.0));
    CHECK(relative_error(VecX::Zero(3), x0) == doctest::Approx(1.0));
    CHECK_THROWS(relative_error(x0, VecX::Zero(3)));
}

TEST_CASE("already-optimal guess returns immediately") {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 30, 4);
    Rng rng(6);
    const VecX x0 = random_x0(cfg, rng);
    const auto sel = SensorSelection::from_indices(ss.n(), {1, 4, 8});

    LsqProblem prob;
    prob.gamma = sel;
    prob.y_tilde = measurement_window(ss, x0, sched, 30, sel);
    prob.guess = x0;
    const auto res = solve_p3(ss, prob, sched);
    CHECK(res.converged);
    CHECK(res.cost <= 1e-18);
    CHECK((res.x0 - x0).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("full measurement with a single step is read off directly") {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::constant(VecX::Zero(ss.m()), 1);
    Rng rng(12);
    const VecX x0 = random_x0(cfg, rng);
    const auto sel = SensorSelection::all(ss.n());

    LsqProblem prob;
    prob.gamma = sel;
    prob.y_tilde = measurement_window(ss, x0, sched, 1, sel);
    prob.guess = VecX::Constant(ss.n(), 0.5 * cfg.fd.rho_m);
    const auto res = solve_p3(ss, prob, sched);
    CHECK(res.converged);
    CHECK((res.x0 - x0).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("noiseless full observation recovers the initial state") {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 20, 8);
    Rng rng(3);
    const VecX x0 = random_x0(cfg, rng);
    const auto sel = SensorSelection::all(ss.n());

    LsqProblem prob;
    prob.gamma = sel;
    prob.y_tilde = measurement_window(ss, x0, sched, 20, sel);
    prob.guess = random_x0(cfg, rng);
    const auto res = solve_p3(ss, prob, sched);
    CHECK(res.converged);
    CHECK((res.x0 - x0).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("descent, bounds and partial-observation recovery") {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const int N = 100;
    const auto sched = InputSchedule::random_dwell(cfg, N, 15, 25);
    Rng rng(29);
    const VecX x0 = random_x0(cfg, rng);

    // Determinant-optimal four-sensor placement as the window selector.
    const auto terms = make_gramian_terms(ss, x0, sched, N);
    const auto sel = exhaustive(terms, Metric::GeomeanDet, 4).gamma_star;

    LsqProblem prob;
    prob.gamma = sel;
    prob.y_tilde = measurement_window(ss, x0, sched, N, sel);

    SUBCASE("exact recovery from inside the basin") {
        Rng g(7);
        VecX dir(ss.n());
        for (int i = 0; i < dir.size(); ++i) dir[i] = g.uniform(-1.0, 1.0);
        prob.guess = (x0 + 0.05 * cfg.fd.rho_m * dir).cwiseMax(0.0).cwiseMin(cfg.fd.rho_m);
        const auto res = solve_p3(ss, prob, sched);
        CHECK(res.converged);
        CHECK(relative_error(res.x0, x0) <= 1e-8);
    }

    SUBCASE("cold starts always descend and respect the box") {
        // The fit is nonconvex and cold starts can stall in local minima;
        // those runs still have to be honest descents inside the bounds.
        int global_hits = 0;
        for (int trial = 0; trial < 4; ++trial) {
            prob.guess = random_x0(cfg, rng);
            LsqProblem at_guess = prob;
            at_guess.max_iters = 0;
            const double guess_cost = solve_p3(ss, at_guess, sched).cost;

            const auto res = solve_p3(ss, prob, sched);
            CHECK(res.cost <= guess_cost);
            CHECK(res.x0.minCoeff() >= 0.0);
            CHECK(res.x0.maxCoeff() <= cfg.fd.rho_m);
            global_hits += (relative_error(res.x0, x0) <= 1e-3);
        }
        MESSAGE("global recoveries from cold starts: ", global_hits, "/4");
    }
}

TEST_CASE("empty selection leaves the guess untouched") {
    const auto cfg = make_reference_highway(7);
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::constant(VecX::Zero(ss.m()), 5);
    LsqProblem prob;
    prob.gamma = SensorSelection::none(ss.n());
    prob.guess = VecX::Constant(ss.n(), 0.02);
    const auto res = solve_p3(ss, prob, sched);
    CHECK((res.x0 - prob.guess).cwiseAbs().maxCoeff() == 0.0);
}
