#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "hwobs/observer.hpp"
#include "hwobs/rng.hpp"

using namespace hwobs;

namespace {

// The closed-form per-class coefficient sums, written out independently of
// the entry bookkeeping the library uses.
double closed_form_gamma(const HighwayConfig& cfg) {
    const double v = cfg.fd.v_f, w = cfg.fd.w_c, l = cfg.topo.l;
    const double s2 = std::sqrt(2.0);
    const int N = cfg.topo.N;
    auto beta = [&](int i) { return cfg.ramps.beta_at(i); };
    auto bb = [&](int i) { return 1.0 - cfg.ramps.beta_at(i); };
    auto xi = [&](int i) { return cfg.ramps.xi_at(i); };

    double sum_sq = 0.0;
    auto add = [&](double g) { sum_sq += (g / l) * (g / l); };

    add((1.0 + s2) / w + 1.0 / v + xi(2) / (v * w) + 4.0);
    add(2.0 * bb(N - 1) / w + (1.0 + 2.0 * bb(N - 1) / beta(N - 1)) / v + 4.0);
    for (int i = 2; i < N; ++i) {
        if (cfg.topo.has_onramp(i)) {
            add((2.0 + s2) / w + 2.0 / v + xi(i) / (v * w) + 5.0);
            add(1.0 / w + xi(i) / (v * w) + 3.0); // its ramp cell
        } else if (cfg.topo.has_offramp(i)) {
            add((2.0 + bb(i)) / w + (2.0 + bb(i) / beta(i) + 1.0 / beta(i)) / v + 4.0);
            add((1.0 + bb(i)) / w + (1.0 + bb(i) / beta(i) + 1.0 / beta(i)) / v + 4.0); // cell
        } else {
            add((1.0 + 2.0 * bb(i - 1) + s2) / w + (1.0 + bb(i - 1) / beta(i - 1)) * 2.0 / v +
                xi(i + 1) / (v * w) + 4.0);
        }
    }
    return std::sqrt(sum_sq);
}

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

TEST_CASE("Lipschitz constant matches the closed-form class sums") {
    for (int N : {7, 13}) {
        const auto cfg = make_reference_highway(N);
        const auto ss = build_state_space(cfg);
        const auto cert = lipschitz_constant(ss);
        CHECK(cert.gamma_l == doctest::Approx(closed_form_gamma(cfg)).epsilon(1e-12));
        CHECK(cert.per_block.minCoeff() > 0.0);
    }
}

TEST_CASE("Lipschitz constant scales as 1/l") {
    auto cfg = highway_a();
    const double g1 = lipschitz_constant(build_state_space(cfg)).gamma_l;
    cfg.topo.l *= 2.0;
    const double g2 = lipschitz_constant(build_state_space(cfg)).gamma_l;
    CHECK(g2 == doctest::Approx(0.5 * g1).epsilon(1e-12));
}

TEST_CASE("sampled increments never violate the Lipschitz bounds") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const double gamma_l = lipschitz_constant(ss).gamma_l;
    const auto lumped = lipschitz_constant_lumped(ss);
    Rng rng(2718);
    double worst_f = 0.0, worst_phi = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const VecX x = random_state(cfg, rng);
        const VecX xh = random_state(cfg, rng);
        const VecX u = random_input(cfg, rng);
        const VecX df = eval_f(ss, x, u) - eval_f(ss, xh, u);
        const double dx = (x - xh).norm();
        if (dx == 0.0) continue;
        worst_f = std::max(worst_f, df.norm() / dx);
        worst_phi = std::max(worst_phi, (ss.G * df).norm() / dx);
    }
    CHECK(worst_f <= gamma_l);
    CHECK(worst_phi <= lumped.gamma_phi);
    CHECK(lumped.gamma_phi < 1.0); // the lumped channel supports synthesis
}

TEST_CASE("rmse is the sum of per-state root mean squares") {
    CHECK(rmse({VecX::Zero(3), VecX::Zero(3)}) == 0.0);
    CHECK(rmse({VecX::Constant(1, -0.4), VecX::Constant(1, 0.4)}) == doctest::Approx(0.4));
    CHECK(rmse({VecX::Constant(2, 0.25), VecX::Constant(2, 0.25)}) == doctest::Approx(0.5));
    CHECK_THROWS(rmse({}));
}

TEST_CASE("scalar observer synthesis") {
    ObserverDesign d;
    d.A = MatX::Constant(1, 1, 0.5);
    d.Gnl = MatX::Zero(1, 1);
    d.Ct = MatX::Identity(1, 1);
    d.Bw = MatX::Constant(1, 2, 0.0);
    d.Bw(0, 0) = 0.1;
    d.Dw = MatX::Constant(1, 2, 0.0);
    d.Dw(0, 1) = 0.1;
    d.Z = MatX::Identity(1, 1);
    d.gamma = 0.0;

    const auto syn = try_synthesize(d, 0.1, 1e4);
    REQUIRE(syn.has_value());
    CHECK(syn->lmi_eig_13b <= 1e-7);
    CHECK(syn->lmi_eig_13c <= 1e-7);
    CHECK(syn->mu >= 0.0);
    CHECK(syn->P(0, 0) > 0.0);
    CHECK(std::abs(syn->L(0, 0) - syn->Y(0, 0) / syn->P(0, 0)) <= 1e-8);
    // Error dynamics a - l c must certify the contraction alpha.
    CHECK(std::abs(d.A(0, 0) - syn->L(0, 0)) <= std::sqrt(1.0 - 0.1) + 1e-9);
}

TEST_CASE("highway observer: synthesis, decay and bound") {
    const auto cfg = highway_a();
    const auto ss = build_state_space(cfg);
    const int r = 13;
    const auto sel = SensorSelection::from_indices(
        ss.n(), [] {
            std::vector<int> v;
            for (int i = 0; i < 13; ++i) v.push_back(i);
            return v;
        }());
    const auto noise = NoiseModel::input_and_measurement(ss, r, 1e-3, 1e-3, 7);

    const auto syn = synthesize(ss, sel, noise.B_w, noise.D_w);
    CHECK(syn.lmi_eig_13b <= 1e-7);
    CHECK(syn.lmi_eig_13c <= 1e-7);
    CHECK(syn.mu > 0.0);

    // Noiseless run from the true state stays at zero error.
    const int k_f = 2000;
    auto sched = InputSchedule::random_dwell(cfg, k_f, 11, 60);
    Rng rng(4);
    const VecX x0 = random_state(cfg, rng);
    const auto clean = rollout(ss, x0, sched, k_f, sel);
    const auto exact = run_observer(ss, syn.L, sel, clean, x0);
    for (const auto& e : exact.errors) CHECK(e.cwiseAbs().maxCoeff() <= 1e-12);

    // Wrong initialization converges.
    const VecX xh0 = random_state(cfg, rng);
    const auto run = run_observer(ss, syn.L, sel, clean, xh0);
    CHECK(run.errors.back().norm() <= 1e-6);

    // Noisy run honors the performance bound on the last quarter.
    const auto noisy = rollout(ss, x0, sched, k_f, sel, noise);
    const auto nrun = run_observer(ss, syn.L, sel, noisy, xh0);
    double w_inf = 0.0;
    for (const auto& w : noisy.disturbances) w_inf = std::max(w_inf, w.norm());
    double z_post = 0.0;
    for (std::size_t k = noisy.states.size() * 3 / 4; k < noisy.states.size(); ++k)
        z_post = std::max(z_post, 0.01 * nrun.errors[k].norm());
    CHECK(z_post <= syn.mu * w_inf);
}
