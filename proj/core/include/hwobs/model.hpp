#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwobs {

// Triangular fundamental diagram. SI units throughout: speeds in m/s,
// densities in veh/m, flows in veh/s.
struct FundamentalDiagram {
    double v_f = 0.0;   // free-flow speed
    double w_c = 0.0;   // congestion wave speed
    double rho_c = 0.0; // critical density
    double rho_m = 0.0; // maximum (jam) density

    double capacity() const { return v_f * rho_c; }
};

// Stretched highway: N mainline segments, plus one extra cell per ramp.
// State ordering is [rho_1..rho_N | on-ramp cells in ascending segment
// order | off-ramp cells in ascending segment order].
struct HighwayTopology {
    int N = 0;
    std::vector<int> onramps;  // 1-based mainline segments with an on-ramp
    std::vector<int> offramps; // 1-based mainline segments with an off-ramp
    double l = 0.0;            // segment length (m)
    double T = 0.0;            // time step (s)

    int n_onramps() const { return static_cast<int>(onramps.size()); }
    int n_offramps() const { return static_cast<int>(offramps.size()); }
    int state_dim() const { return N + n_onramps() + n_offramps(); }
    int input_dim() const { return 2 + n_onramps() + n_offramps(); }

    bool has_onramp(int i) const;
    bool has_offramp(int i) const;

    // 0-based state index of the ramp cell attached to mainline segment i.
    int onramp_state(int i) const;
    int offramp_state(int i) const;
    // 0-based input index of the ramp boundary flow for segment i.
    int onramp_input(int i) const;
    int offramp_input(int i) const;
};

struct RampParams {
    std::map<int, double> beta; // off-ramp segment -> split ratio, 0 < beta < 1
    std::map<int, double> xi;   // on-ramp segment -> allocation, 0 < xi <= w_c

    double beta_at(int i) const;
    double xi_at(int i) const;
};

struct HighwayConfig {
    FundamentalDiagram fd;
    HighwayTopology topo;
    RampParams ramps;

    int state_dim() const { return topo.state_dim(); }
    int input_dim() const { return topo.input_dim(); }

    // Throws on hard invariant violations; returns non-fatal warnings
    // (e.g. the fundamental diagram consistency check).
    std::vector<std::string> validate() const;
};

// Repeating plain / on-ramp / off-ramp structure: on-ramps at interior
// segments with i mod 3 == 2, off-ramps at i mod 3 == 0, first and last
// segments plain. N=7 gives on-ramps {2,5} and off-ramps {3,6}.
HighwayTopology generate_paper_topology(int N, double l = 400.0, double T = 1.0);

// v_f = 28.8889 m/s, w_c = 6.6667 m/s, rho_c = 0.0249 veh/m,
// rho_m = 0.1333 veh/m, l = 400 m, T = 1 s.
FundamentalDiagram reference_diagram();

// Reference case-study highways: the mod-3 topology with uniform
// beta = 0.2 and xi = 0.5 * w_c. Highway A has N = 13 (21 states),
// Highway B has N = 40 (66 states).
HighwayConfig make_reference_highway(int N);
inline HighwayConfig highway_a() { return make_reference_highway(13); }
inline HighwayConfig highway_b() { return make_reference_highway(40); }

} // namespace hwobs
