#pragma once

#include <cstdint>
#include <vector>

#include "hwobs/observability.hpp"
#include "hwobs/simulate.hpp"

namespace hwobs {

// Initial-state recovery from an N-step measurement window:
//   minimize || y_tilde - g_gamma(x0) ||^2   s.t.  0 <= x0 <= rho_m.
struct LsqProblem {
    SensorSelection gamma;
    std::vector<VecX> y_tilde; // N reduced measurement vectors
    VecX guess;
    double tol = 1e-6; // optimality tolerance on the projected gradient
    int max_iters = 500;
    int starts = 1; // extra seeded restarts beyond the provided guess
    std::uint64_t start_seed = 0;
};

struct LsqResult {
    VecX x0;
    double cost = 0.0;          // squared residual norm at the solution
    double gradient_norm = 0.0; // projected gradient, infinity norm
    int iterations = 0;
    bool converged = false;
};

// Projected Levenberg-Marquardt with the Gauss-Newton Jacobian from the
// window sensitivities, re-linearized at every accepted iterate.
LsqResult solve_p3(const StateSpace& ss, const LsqProblem& prob, const InputSchedule& sched);

// Window of reduced outputs from a noiseless rollout; the data source for y_tilde.
std::vector<VecX> measurement_window(const StateSpace& ss, const VecX& x0,
                                     const InputSchedule& sched, int N,
                                     const SensorSelection& sel);

// zeta = ||x_est - x_true|| / ||x_true||; rejects a zero true state.
double relative_error(const VecX& x_est, const VecX& x_true);

} // namespace hwobs
