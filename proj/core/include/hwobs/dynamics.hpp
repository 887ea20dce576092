#pragma once

#include "hwobs/model.hpp"
#include "hwobs/types.hpp"

namespace hwobs {

// min(a,b) through the identity (a + b - |a - b|) / 2.
inline double min_analytic(double a, double b) { return 0.5 * (a + b - std::abs(a - b)); }

// Demand of mainline segment i (1..N); i == 0 is the upstream boundary and
// returns f_in. Off-ramp segments use the three-term form with the off-ramp
// supply shortcut w_c*(rho_m - rho_off).
double demand(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg);

// Supply of mainline segment i (1..N); i == N+1 is the downstream boundary
// and returns f_out. On-ramp segments subtract the merge flow r_i.
double supply(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg);

// Merge flow r_i from the on-ramp of segment i into the mainline.
double onramp_merge_flow(int i, const VecX& x, const HighwayConfig& cfg);

// Flow admitted from the upstream boundary into the on-ramp cell of segment i.
double onramp_boundary_flow(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg);

// Flow released from the off-ramp cell of segment i to the downstream boundary.
double offramp_boundary_flow(int i, const VecX& x, const VecX& u, const HighwayConfig& cfg);

// One step of the nonlinear dynamics evaluated case by case with nested
// min functions. Saturating physics: no exceptions for extreme densities.
VecX step_direct(const VecX& x, const VecX& u, const HighwayConfig& cfg);

} // namespace hwobs
