#include "hwobs/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace hwobs {

namespace {

int ordinal_of(const std::vector<int>& v, int i) {
    const auto it = std::lower_bound(v.begin(), v.end(), i);
    if (it == v.end() || *it != i) return -1;
    return static_cast<int>(it - v.begin());
}

} // namespace

bool HighwayTopology::has_onramp(int i) const { return ordinal_of(onramps, i) >= 0; }
bool HighwayTopology::has_offramp(int i) const { return ordinal_of(offramps, i) >= 0; }

int HighwayTopology::onramp_state(int i) const {
    const int k = ordinal_of(onramps, i);
    if (k < 0) throw std::out_of_range("segment " + std::to_string(i) + " has no on-ramp");
    return N + k;
}

int HighwayTopology::offramp_state(int i) const {
    const int k = ordinal_of(offramps, i);
    if (k < 0) throw std::out_of_range("segment " + std::to_string(i) + " has no off-ramp");
    return N + n_onramps() + k;
}

int HighwayTopology::onramp_input(int i) const {
    const int k = ordinal_of(onramps, i);
    if (k < 0) throw std::out_of_range("segment " + std::to_string(i) + " has no on-ramp");
    return 2 + k;
}

int HighwayTopology::offramp_input(int i) const {
    const int k = ordinal_of(offramps, i);
    if (k < 0) throw std::out_of_range("segment " + std::to_string(i) + " has no off-ramp");
    return 2 + n_onramps() + k;
}

double RampParams::beta_at(int i) const {
    const auto it = beta.find(i);
    if (it == beta.end()) throw std::out_of_range("no split ratio for segment " + std::to_string(i));
    return it->second;
}

double RampParams::xi_at(int i) const {
    const auto it = xi.find(i);
    if (it == xi.end()) throw std::out_of_range("no allocation parameter for segment " + std::to_string(i));
    return it->second;
}

std::vector<std::string> HighwayConfig::validate() const {
    std::vector<std::string> warnings;

    if (!(fd.v_f > 0.0) || !(fd.w_c > 0.0))
        throw std::invalid_argument("fundamental diagram speeds must be positive");
    if (!(fd.rho_c > 0.0) || !(fd.rho_c < fd.rho_m))
        throw std::invalid_argument("fundamental diagram requires 0 < rho_c < rho_m");

    if (topo.N < 2) throw std::invalid_argument("need at least two mainline segments");
    if (!(topo.l > 0.0) || !(topo.T > 0.0))
        throw std::invalid_argument("discretization l and T must be positive");
    if (fd.v_f * topo.T / topo.l > 1.0)
        throw std::invalid_argument("CFL condition violated: v_f*T/l must be <= 1");

    auto check_ramp_list = [&](const std::vector<int>& v, const char* what) {
        if (!std::is_sorted(v.begin(), v.end()))
            throw std::invalid_argument(std::string(what) + " list must be ascending");
        if (std::adjacent_find(v.begin(), v.end()) != v.end())
            throw std::invalid_argument(std::string(what) + " list has duplicates");
        for (int i : v) {
            if (i <= 1 || i >= topo.N)
                throw std::invalid_argument("first and last segments must be plain; bad " +
                                            std::string(what) + " at segment " + std::to_string(i));
        }
    };
    check_ramp_list(topo.onramps, "on-ramp");
    check_ramp_list(topo.offramps, "off-ramp");
    for (int i : topo.onramps)
        if (topo.has_offramp(i))
            throw std::invalid_argument("segment " + std::to_string(i) +
                                        " cannot carry both an on-ramp and an off-ramp");

    for (int i : topo.offramps) {
        const double b = ramps.beta_at(i);
        if (!(b > 0.0) || !(b < 1.0))
            throw std::invalid_argument("split ratio at segment " + std::to_string(i) +
                                        " must satisfy 0 < beta < 1");
    }
    for (int i : topo.onramps) {
        const double x = ramps.xi_at(i);
        if (!(x > 0.0) || !(x <= fd.w_c))
            throw std::invalid_argument("allocation parameter at segment " + std::to_string(i) +
                                        " must satisfy 0 < xi <= w_c");
    }

    const double lhs = fd.v_f * fd.rho_c;
    const double rhs = fd.w_c * (fd.rho_m - fd.rho_c);
    if (std::abs(lhs - rhs) / lhs > 0.05) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "fundamental diagram inconsistent: v_f*rho_c = %.6g but w_c*(rho_m - rho_c) = %.6g",
                      lhs, rhs);
        warnings.emplace_back(buf);
    }
    return warnings;
}

HighwayTopology generate_paper_topology(int N, double l, double T) {
    if (N < 4) throw std::invalid_argument("paper topology needs at least 4 mainline segments");
    HighwayTopology topo;
    topo.N = N;
    topo.l = l;
    topo.T = T;
    for (int i = 2; i < N; ++i) {
        if (i % 3 == 2) topo.onramps.push_back(i);
        if (i % 3 == 0) topo.offramps.push_back(i);
    }
    return topo;
}

FundamentalDiagram reference_diagram() {
    FundamentalDiagram fd;
    fd.v_f = 28.8889;
    fd.w_c = 6.6667;
    fd.rho_c = 0.0249;
    fd.rho_m = 0.1333;
    return fd;
}

HighwayConfig make_reference_highway(int N) {
    HighwayConfig cfg;
    cfg.fd = reference_diagram();
    cfg.topo = generate_paper_topology(N);
    for (int i : cfg.topo.offramps) cfg.ramps.beta[i] = 0.2;
    for (int i : cfg.topo.onramps) cfg.ramps.xi[i] = 0.5 * cfg.fd.w_c;
    cfg.validate();
    return cfg;
}

} // namespace hwobs
