#pragma once

#include <optional>
#include <vector>

#include "hwobs/sdp.hpp"
#include "hwobs/simulate.hpp"

namespace hwobs {

// Closed-form Lipschitz bound ||f(x,u) - f(x',u)|| <= gamma_l ||x - x'||
// assembled from the per-coordinate coefficient sums of the nonlinearity,
// pairing equal coefficients inside one coordinate by sqrt(2).
struct LipschitzCertificate {
    double gamma_l = 0.0;
    VecX per_block; // per-state coefficients gamma_i, gamma_l = ||per_block||_2
};
LipschitzCertificate lipschitz_constant(const StateSpace& ss);

// Lipschitz bound for the lumped nonlinearity phi(x,u) = G f(x,u):
// gamma_phi is the spectral norm of the entrywise Jacobian bound, much
// tighter than pushing gamma_l through ||G||.
struct LumpedLipschitz {
    double gamma_phi = 0.0;
    MatX row_coeffs; // d_{i,s}: |phi_i(x) - phi_i(x')| <= sum_s d_{i,s} |x_s - x'_s|
};
LumpedLipschitz lipschitz_constant_lumped(const StateSpace& ss);

// Matrices of one observer-gain LMI instance. Gnl and gamma describe the
// nonlinearity channel: the stacked (G, gamma_l) pair or the lumped
// (I, gamma_phi) pair.
struct ObserverDesign {
    MatX A;
    MatX Gnl;
    MatX Ct;
    MatX Bw;
    MatX Dw;
    MatX Z;
    double gamma = 0.0;
};

struct P2Problem {
    SdpProblem sdp;
    SdpProblem::SymVar P;
    SdpProblem::RectVar Y;
    int eps_var = 0, mu0_var = 0, mu2_var = 0;
    double alpha = 0.0, mu1 = 0.0;
};

// The synthesis LMIs exactly as the error-dynamics derivation states them:
// block one couples (alpha-1)P + eps*gamma^2 I, -eps I, -alpha mu0 I with the
// Schur row [PA - YCt, P Gnl, P Bw - Y Dw, -P]; block two bounds the
// performance channel via [-P, -mu2 I, Z row, -mu1 I].
P2Problem assemble_p2(const ObserverDesign& d, double alpha, double mu1);

struct ObserverSynthesis {
    MatX L, P, Y;
    double eps = 0.0, mu0 = 0.0, mu1 = 0.0, mu2 = 0.0;
    double alpha = 0.0;
    double mu = 0.0; // sqrt(mu0*mu1 + mu2)
    double gamma_used = 0.0;
    bool lumped = false;      // nonlinearity handled as phi = G f
    double lmi_eig_13b = 0.0; // re-verified block eigenvalues at the solution
    double lmi_eig_13c = 0.0;
    SdpStatus sdp_status = SdpStatus::IterationCap;
    long sdp_iterations = 0;
};

struct SynthesisOptions {
    std::vector<double> alpha_grid{0.1, 0.05, 0.2, 0.4, 0.02, 0.01, 0.005, 0.002};
    double mu1 = 1e4;
    double z_scale = 0.01;
    bool try_stacked = true; // attempt the stacked (G, gamma_l) route first
    bool allow_lumped = true;
    SdpOptions sdp = [] {
        SdpOptions o;
        o.max_iters = 6000;
        o.rho = 10.0;
        o.adapt_every = 0;
        o.tol_primal = 1e-9;
        o.tol_dual = 1e-9;
        return o;
    }();
};

// Solves one P2 instance (internally rescaled, then re-verified against the
// as-stated blocks at tolerance 1e-7); empty when infeasible or unverified.
std::optional<ObserverSynthesis> try_synthesize(const ObserverDesign& d, double alpha, double mu1,
                                                const SdpOptions& opts = {});

// Full synthesis for a sensor selection: Eq-form nonlinearity first when its
// feasibility precondition gamma_l * max|G| <= sqrt(1-alpha) holds, then the
// lumped route over the alpha grid. Throws std::runtime_error when every
// candidate fails.
ObserverSynthesis synthesize(const StateSpace& ss, const SensorSelection& sel, const MatX& Bw,
                             const MatX& Dw, const SynthesisOptions& opts = {});

struct ObserverRun {
    std::vector<VecX> estimates; // k_f + 1
    std::vector<VecX> errors;    // x[k] - xhat[k]
};

// Luenberger filter xhat' = A xhat + G f(xhat,u) + B_u u + L (y - Ct xhat).
ObserverRun run_observer(const StateSpace& ss, const MatX& L, const SensorSelection& sel,
                         const Trajectory& traj, const VecX& xhat0);

// Sum over states of the per-state root mean square error.
double rmse(const std::vector<VecX>& errors);

} // namespace hwobs
