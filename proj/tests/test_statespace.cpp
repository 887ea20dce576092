#include <doctest.h>

#include "hwobs/rng.hpp"
#include "hwobs/statespace.hpp"

using namespace hwobs;

namespace {

VecX random_state(const HighwayConfig& cfg, Rng& rng) {
    VecX x(cfg.state_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, cfg.fd.rho_m);
    return x;
}

VecX random_input(const HighwayConfig& cfg, Rng& rng) {
    VecX u(cfg.input_dim());
    for (int i = 0; i < u.size(); ++i) u[i] = rng.uniform(0.0, cfg.fd.v_f * cfg.fd.rho_c);
    return u;
}

} // namespace

TEST_CASE("A, B_u entries match the closed-form decomposition") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const double T = cfg.topo.T, l = cfg.topo.l;
    const double v_f = cfg.fd.v_f, w_c = cfg.fd.w_c;
    const double xi = cfg.ramps.xi_at(2);
    const double beta = cfg.ramps.beta_at(12);
    const double bb = 1.0 - beta;

    CHECK(ss.n() == 21);
    CHECK(ss.m() == 10);

    // First row: nonzeros only at columns 1, 2 and the first on-ramp cell.
    CHECK(ss.A(0, 0) == doctest::Approx(1.0 - T / (4 * l) * (v_f + w_c)));
    CHECK(ss.A(0, 0) == doctest::Approx(0.977778).epsilon(1e-6));
    CHECK(ss.A(0, 1) == doctest::Approx(T / (4 * l) * (w_c - 0.5 * xi)));
    CHECK(ss.A(0, 13) == doctest::Approx(T / (4 * l) * v_f));
    for (int j = 0; j < ss.n(); ++j)
        if (j != 0 && j != 1 && j != 13) CHECK(ss.A(0, j) == 0.0);

    // Last row: upstream off-ramp coupling ends at the final off-ramp cell.
    CHECK(ss.A(12, 12) == doctest::Approx(1.0 - T / (4 * l) * (v_f + w_c)));
    CHECK(ss.A(12, 11) == doctest::Approx(T * bb / (8 * l) * v_f));
    CHECK(ss.A(12, 20) == doctest::Approx(-T * bb / (4 * l * beta) * w_c));

    // On-ramp segment 2 and its cell.
    CHECK(ss.A(1, 1) == doctest::Approx(1.0 - T / (4 * l) * (v_f + w_c + 0.5 * xi)));
    CHECK(ss.A(1, 0) == doctest::Approx(T / (4 * l) * v_f));
    CHECK(ss.A(1, 2) == doctest::Approx(T / (4 * l) * w_c));
    CHECK(ss.A(13, 13) == doctest::Approx(1.0 - T / (2 * l) * (v_f + 0.5 * w_c)));
    CHECK(ss.A(13, 1) == doctest::Approx(T * xi / (4 * l)));

    // Off-ramp segment 3.
    CHECK(ss.A(2, 2) == doctest::Approx(1.0 - T / (4 * l) * (0.5 * v_f + w_c)));
    CHECK(ss.A(2, 3) == doctest::Approx(T / (4 * l * bb) * w_c));
    CHECK(ss.A(2, 17) == doctest::Approx(T / (4 * l * beta) * w_c));

    // Input coefficients: boundary flows enter with +-T/(2l).
    CHECK(ss.B_u(0, 0) == doctest::Approx(T / (2 * l)));
    for (int j = 1; j < ss.m(); ++j) CHECK(ss.B_u(0, j) == 0.0);
    CHECK(ss.B_u(12, 1) == doctest::Approx(-T / (2 * l)));
    CHECK(ss.B_u(13, 2) == doctest::Approx(T / (2 * l)));
    CHECK(ss.B_u(20, 9) == doctest::Approx(-T / (2 * l)));
}

TEST_CASE("nonlinearity block lengths per segment class") {
    const auto ss = build_state_space(highway_a());
    auto block_len = [&](int row) { return ss.blocks[row].second - ss.blocks[row].first; };

    CHECK(block_len(0) == 7);   // first segment
    CHECK(block_len(12) == 7);  // last segment
    CHECK(block_len(3) == 9);   // interior plain
    CHECK(block_len(1) == 9);   // on-ramp segment
    CHECK(block_len(2) == 8);   // off-ramp segment
    CHECK(block_len(13) == 5);  // on-ramp cell
    CHECK(block_len(17) == 7);  // off-ramp cell
    CHECK(ss.g() == 157);

    // G is block diagonal: row r only touches its own block columns.
    for (int r = 0; r < ss.n(); ++r)
        for (int c = 0; c < ss.g(); ++c)
            if (c < ss.blocks[r].first || c >= ss.blocks[r].second) CHECK(ss.G(r, c) == 0.0);
}

TEST_CASE("compact form reproduces the direct dynamics") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    Rng rng(42);

    SUBCASE("zero state and input") {
        const VecX x = VecX::Zero(ss.n());
        const VecX u = VecX::Zero(ss.m());
        CHECK((step_compact(ss, x, u) - step_direct(x, u, cfg)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(step_compact(ss, x, u).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("random states and inputs") {
        double worst = 0.0;
        for (int t = 0; t < 2000; ++t) {
            const VecX x = random_state(cfg, rng);
            const VecX u = random_input(cfg, rng);
            const double err =
                (step_compact(ss, x, u) - step_direct(x, u, cfg)).cwiseAbs().maxCoeff();
            worst = std::max(worst, err);
        }
        CHECK(worst <= 1e-9);
    }

    SUBCASE("states at kinks") {
        // Densities pinned to the critical/jam values sit exactly on min ties.
        for (int t = 0; t < 200; ++t) {
            VecX x = random_state(cfg, rng);
            const VecX u = random_input(cfg, rng);
            x[t % ss.n()] = (t % 2) ? cfg.fd.rho_c : cfg.fd.rho_m;
            const double err =
                (step_compact(ss, x, u) - step_direct(x, u, cfg)).cwiseAbs().maxCoeff();
            CHECK(err <= 1e-9);
        }
    }
}

TEST_CASE("equivalence holds on Highway B and on the 7-segment highway") {
    Rng rng(5);
    for (int N : {7, 40}) {
        const auto cfg = make_reference_highway(N);
        const auto ss = build_state_space(cfg);
        double worst = 0.0;
        for (int t = 0; t < 400; ++t) {
            const VecX x = random_state(cfg, rng);
            const VecX u = random_input(cfg, rng);
            worst = std::max(
                worst, (step_compact(ss, x, u) - step_direct(x, u, cfg)).cwiseAbs().maxCoeff());
        }
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("equivalence holds off the repeating ramp pattern") {
    // Adjacent ramps and a bare tail exercise neighbor cases the reference
    // highways never hit.
    HighwayConfig cfg;
    cfg.fd = reference_diagram();
    cfg.topo.N = 9;
    cfg.topo.l = 400.0;
    cfg.topo.T = 1.0;
    cfg.topo.onramps = {2, 3, 7};
    cfg.topo.offramps = {4, 5, 8};
    for (int i : cfg.topo.onramps) cfg.ramps.xi[i] = 2.5;
    for (int i : cfg.topo.offramps) cfg.ramps.beta[i] = 0.3;
    cfg.validate();

    const auto ss = build_state_space(cfg);
    Rng rng(17);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const VecX x = random_state(cfg, rng);
        const VecX u = random_input(cfg, rng);
        worst =
            std::max(worst, (step_compact(ss, x, u) - step_direct(x, u, cfg)).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("linear harness: zero G reduces to A x + B u") {
    const auto cfg = highway_a();
    const auto lin = build_state_space(cfg).linear_only();
    Rng rng(3);
    const VecX x = random_state(cfg, rng);
    const VecX u = random_input(cfg, rng);
    CHECK((step_compact(lin, x, u) - (lin.A * x + lin.B_u * u)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("f is identical for identical arguments and tails are constant") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    Rng rng(9);
    const VecX x = random_state(cfg, rng);
    const VecX u = random_input(cfg, rng);
    CHECK((eval_f(ss, x, u) - eval_f(ss, x, u)).norm() == 0.0);

    const MatX J = jacobian_f(ss, x, u);
    for (int k = 0; k < ss.g(); ++k)
        if (ss.entries[k].is_tail) CHECK(J.row(k).cwiseAbs().maxCoeff() == 0.0);
}
