#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "hwobs/rng.hpp"
#include "hwobs/simulate.hpp"

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

// Scalar system x' = 0.5 x with full measurement, no nonlinearity.
StateSpace scalar_system(double a) {
    StateSpace ss;
    ss.A = MatX::Constant(1, 1, a);
    ss.G = MatX::Zero(1, 0);
    ss.B_u = MatX::Zero(1, 1);
    ss.blocks = {{0, 0}};
    return ss;
}

} // namespace

TEST_CASE("jacobian_f matches central finite differences away from kinks") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    Rng rng(2024);
    const double h = 1e-6;

    int accepted = 0;
    while (accepted < 100) {
        const VecX x = random_state(cfg, rng);
        const VecX u = random_input(cfg, rng);
        double margin = 0.0;
        const MatX J = jacobian_f(ss, x, u, &margin);
        if (margin < 1e-3) continue; // too close to a tie for finite differences
        ++accepted;

        MatX J_fd(ss.g(), ss.n());
        for (int s = 0; s < ss.n(); ++s) {
            VecX xp = x, xm = x;
            xp[s] += h;
            xm[s] -= h;
            J_fd.col(s) = (eval_f(ss, xp, u) - eval_f(ss, xm, u)) / (2.0 * h);
        }
        const double scale = std::max(1.0, J.cwiseAbs().maxCoeff());
        CHECK((J - J_fd).cwiseAbs().maxCoeff() / scale <= 1e-5);
    }
}

TEST_CASE("tied kink terms contribute zero derivative") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    VecX x = VecX::Constant(ss.n(), 0.01);
    const VecX u = VecX::Constant(ss.m(), 0.1);

    // Pin segment 4 exactly on the supply kink w_c(rho_m - x) = v_f rho_c.
    x[3] = cfg.fd.rho_m - cfg.fd.v_f * cfg.fd.rho_c / cfg.fd.w_c;
    const MatX J = jacobian_f(ss, x, u);
    for (int k = 0; k < ss.g(); ++k) {
        const auto& e = ss.entries[k];
        if (!e.is_tail && e.arg.kind == AbsArg::Kind::MKink && e.arg.idx == 3)
            CHECK(J.row(k).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("transition jacobians") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 20, 5, 4);
    Rng rng(31);
    const VecX x0 = random_state(cfg, rng);

    SUBCASE("k = 0 is the identity") {
        const auto phis = transition_jacobians(ss, x0, sched, 3);
        CHECK((phis[0] - MatX::Identity(ss.n(), ss.n())).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("linear mode gives matrix powers") {
        const auto lin = ss.linear_only();
        const auto phis = transition_jacobians(lin, x0, sched, 4);
        MatX Ak = MatX::Identity(ss.n(), ss.n());
        for (int k = 0; k < 4; ++k) {
            CHECK((phis[k] - Ak).cwiseAbs().maxCoeff() < 1e-12);
            Ak = lin.A * Ak;
        }
    }

    SUBCASE("finite-difference sensitivity of the composed map") {
        const int k_check = 2;
        const auto phis = transition_jacobians(ss, x0, sched, k_check + 1);
        const double h = 1e-6;
        MatX fd(ss.n(), ss.n());
        for (int s = 0; s < ss.n(); ++s) {
            VecX xp = x0, xm = x0;
            xp[s] += h;
            xm[s] -= h;
            VecX yp = xp, ym = xm;
            for (int k = 0; k < k_check; ++k) {
                yp = step_compact(ss, yp, sched.at(k));
                ym = step_compact(ss, ym, sched.at(k));
            }
            fd.col(s) = (yp - ym) / (2.0 * h);
        }
        const double scale = std::max(1.0, phis[k_check].cwiseAbs().maxCoeff());
        CHECK((phis[k_check] - fd).cwiseAbs().maxCoeff() / scale <= 1e-4);
    }
}

TEST_CASE("stacked output sensitivity") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 12, 77);
    Rng rng(8);
    const VecX x0 = random_state(cfg, rng);
    const int N = 4;

    SUBCASE("empty selection gives the zero matrix") {
        const MatX Jw = build_Jw(ss, SensorSelection::none(ss.n()), x0, sched, N);
        CHECK(Jw.rows() == N * ss.n());
        CHECK(Jw.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("linear mode stacks C, CA, CA^2, ...") {
        const auto lin = ss.linear_only();
        const MatX Jw = build_Jw(lin, SensorSelection::all(ss.n()), x0, sched, N);
        MatX Ak = MatX::Identity(ss.n(), ss.n());
        for (int k = 0; k < N; ++k) {
            CHECK((Jw.middleRows(k * ss.n(), ss.n()) - Ak).cwiseAbs().maxCoeff() < 1e-12);
            Ak = lin.A * Ak;
        }
        // Jw' Jw equals the direct observability-Gramian sum.
        MatX direct = MatX::Zero(ss.n(), ss.n());
        Ak = MatX::Identity(ss.n(), ss.n());
        for (int k = 0; k < N; ++k) {
            direct += Ak.transpose() * Ak;
            Ak = lin.A * Ak;
        }
        CHECK(((Jw.transpose() * Jw) - direct).cwiseAbs().maxCoeff() <= 1e-10);
    }

    SUBCASE("window of zero is rejected") {
        CHECK_THROWS(build_Jw(ss, SensorSelection::all(ss.n()), x0, sched, 0));
    }
}

TEST_CASE("gramian metrics") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 40, 13);
    Rng rng(123);
    const VecX x0 = random_state(cfg, rng);

    SUBCASE("scalar geometric series") {
        const auto ss1 = scalar_system(0.5);
        const auto sched1 = InputSchedule::constant(VecX::Zero(1), 10);
        const auto res = gramian(ss1, SensorSelection::all(1), VecX::Zero(1), sched1, 3);
        CHECK(res.trace_value == doctest::Approx(1.3125).epsilon(1e-12));
        CHECK(res.geomean_det == doctest::Approx(1.3125).epsilon(1e-12));
    }

    SUBCASE("empty selection gives zero Gramian") {
        const auto res = gramian(ss, SensorSelection::none(ss.n()), x0, sched, 5);
        CHECK(res.trace_value == 0.0);
        CHECK(res.geomean_det == 0.0);
        CHECK(res.W_o.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("symmetry and positive semidefiniteness") {
        const auto res = gramian(ss, SensorSelection::from_indices(ss.n(), {1, 5, 9}), x0, sched, 20);
        CHECK((res.W_o - res.W_o.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        Eigen::SelfAdjointEigenSolver<MatX> es(res.W_o);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }

    SUBCASE("trace additivity over disjoint selections") {
        const auto s1 = SensorSelection::from_indices(ss.n(), {0, 3, 14});
        const auto s2 = SensorSelection::from_indices(ss.n(), {6, 11});
        auto both = s1;
        for (int i : s2.indices()) both.gamma[i] = 1;
        both.r += s2.r;
        const double t1 = gramian(ss, s1, x0, sched, 15).trace_value;
        const double t2 = gramian(ss, s2, x0, sched, 15).trace_value;
        const double t12 = gramian(ss, both, x0, sched, 15).trace_value;
        CHECK(std::abs(t12 - (t1 + t2)) <= 1e-10 * std::max(1.0, t12));
    }

    SUBCASE("monotonicity in added sensors") {
        const auto small = SensorSelection::from_indices(ss.n(), {2, 7});
        const auto large = SensorSelection::from_indices(ss.n(), {2, 7, 12, 18});
        const auto ws = gramian(ss, small, x0, sched, 20);
        const auto wl = gramian(ss, large, x0, sched, 20);
        Eigen::SelfAdjointEigenSolver<MatX> es(wl.W_o - ws.W_o);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        CHECK(wl.trace_value >= ws.trace_value);
        CHECK(wl.geomean_det >= ws.geomean_det);
    }

    SUBCASE("window monotonicity") {
        const auto sel = SensorSelection::from_indices(ss.n(), {1, 6, 10, 15, 19});
        double prev_trace = -1.0, prev_det = -1.0;
        for (int N : {5, 10, 20, 40}) {
            const auto res = gramian(ss, sel, x0, sched, N);
            CHECK(res.trace_value >= prev_trace);
            CHECK(res.geomean_det >= prev_det);
            prev_trace = res.trace_value;
            prev_det = res.geomean_det;
        }
    }
}

TEST_CASE("trace contributions decompose the full trace") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const auto sched = InputSchedule::random_dwell(cfg, 30, 3);
    Rng rng(55);
    const VecX x0 = random_state(cfg, rng);
    const int N = 12;

    const VecX t = trace_contributions(ss, x0, sched, N);
    CHECK(t.minCoeff() >= 0.0);

    const double full = gramian(ss, SensorSelection::all(ss.n()), x0, sched, N).trace_value;
    CHECK(t.sum() == doctest::Approx(full).epsilon(1e-12));

    const auto e4 = SensorSelection::from_indices(ss.n(), {4});
    CHECK(gramian(ss, e4, x0, sched, N).trace_value == doctest::Approx(t[4]).epsilon(1e-12));
}
