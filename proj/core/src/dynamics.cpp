#include "hwobs/dynamics.hpp"

namespace hwobs {

namespace {

void check_dims(const VecX& x, const VecX& u, const HighwayConfig& cfg) {
    if (x.size() != cfg.state_dim()) throw std::invalid_argument("state vector has wrong dimension");
    if (u.size() != cfg.input_dim()) throw std::invalid_argument("input vector has wrong dimension");
}

} // namespace

double demand(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg) {
    const auto& fd = cfg.fd;
    if (i == 0) return u[0]; // upstream boundary demand
    if (i < 1 || i > cfg.topo.N) throw std::out_of_range("demand: segment index out of range");
    const double rho = x[i - 1];
    const double m = min_analytic(fd.v_f * rho, fd.v_f * fd.rho_c);
    if (cfg.topo.has_offramp(i)) {
        const double beta = cfg.ramps.beta_at(i);
        const double beta_bar = 1.0 - beta;
        const double rho_off = x[cfg.topo.offramp_state(i)];
        return min_analytic(beta_bar * m, (beta_bar / beta) * fd.w_c * (fd.rho_m - rho_off));
    }
    return m;
}

double onramp_merge_flow(int i, const VecX& x, const HighwayConfig& cfg) {
    const auto& fd = cfg.fd;
    const double xi = cfg.ramps.xi_at(i);
    const double rho = x[i - 1];
    const double rho_on = x[cfg.topo.onramp_state(i)];
    const double cap = min_analytic(fd.w_c * (fd.rho_m - rho), fd.v_f * fd.rho_c);
    return min_analytic(fd.v_f * rho_on, (xi / fd.w_c) * cap);
}

double supply(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg) {
    const auto& fd = cfg.fd;
    if (i == cfg.topo.N + 1) return u[1]; // downstream boundary supply
    if (i < 1 || i > cfg.topo.N) throw std::out_of_range("supply: segment index out of range");
    const double rho = x[i - 1];
    double s = min_analytic(fd.w_c * (fd.rho_m - rho), fd.v_f * fd.rho_c);
    if (cfg.topo.has_onramp(i)) s -= onramp_merge_flow(i, x, cfg);
    return s;
}

double onramp_boundary_flow(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg) {
    const auto& fd = cfg.fd;
    const double rho_on = x[cfg.topo.onramp_state(i)];
    const double sup = min_analytic(fd.w_c * (fd.rho_m - rho_on), fd.v_f * fd.rho_c);
    return min_analytic(u[cfg.topo.onramp_input(i)], sup);
}

double offramp_boundary_flow(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg) {
    const auto& fd = cfg.fd;
    const double rho_off = x[cfg.topo.offramp_state(i)];
    const double dem = min_analytic(fd.v_f * rho_off, fd.v_f * fd.rho_c);
    return min_analytic(dem, u[cfg.topo.offramp_input(i)]);
}

VecX step_direct(const VecX& x, const VecX& u, const HighwayConfig& cfg) {
    check_dims(x, u, cfg);
    const auto& topo = cfg.topo;
    const double Tl = topo.T / topo.l;
    const int N = topo.N;

    VecX next(x.size());

    // Interface flows q_0..q_N; q_{i-1} feeds segment i, q_i drains it.
    VecX q(N + 1);
    for (int i = 0; i <= N; ++i) q[i] = min_analytic(demand(i, x, u, cfg), supply(i + 1, x, u, cfg));

    for (int i = 1; i <= N; ++i) {
        double flux = q[i - 1];
        if (topo.has_offramp(i)) {
            const double beta_bar = 1.0 - cfg.ramps.beta_at(i);
            flux -= q[i] / beta_bar;
        } else {
            flux -= q[i];
            if (topo.has_onramp(i)) flux += onramp_merge_flow(i, x, cfg);
        }
        next[i - 1] = x[i - 1] + Tl * flux;
    }

    for (int i : topo.onramps) {
        const int s = topo.onramp_state(i);
        next[s] = x[s] + Tl * (onramp_boundary_flow(i, x, u, cfg) - onramp_merge_flow(i, x, cfg));
    }
    for (int i : topo.offramps) {
        const int s = topo.offramp_state(i);
        const double beta = cfg.ramps.beta_at(i);
        const double gain = (beta / (1.0 - beta)) * q[i];
        next[s] = x[s] + Tl * (gain - offramp_boundary_flow(i, x, u, cfg));
    }
    return next;
}

} // namespace hwobs
