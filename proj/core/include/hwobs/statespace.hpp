#pragma once

#include <utility>
#include <vector>

#include "hwobs/dynamics.hpp"
#include "hwobs/model.hpp"
#include "hwobs/types.hpp"

namespace hwobs {

// Argument of one |.| coordinate of the nonlinearity f(x,u).
struct AbsArg {
    enum class Kind {
        FlowGap,  // delta_{i-1} - sigma_i at interface idx in 1..N+1
        OffOuter, // beta_bar*m_j - (beta_bar/beta)*w_c*(rho_m - rho_off), segment idx
        MKink,    // w_c*(rho_m - x_s) - v_f*rho_c, state idx
        VKink,    // v_f*x_s - v_f*rho_c, state idx
        RampMin,  // v_f*rho_on - (xi/w_c)*min(w_c*(rho_m - x_j), v_f*rho_c), segment idx
        RampIn,   // sigma_hat_j - fhat_j, segment idx
        OffOut,   // delta_check_j - fcheck_j, segment idx
    };
    Kind kind = Kind::MKink;
    int idx = 0;
    bool normalized = false; // OffOuter only: argument divided by beta_bar
};

// One coordinate of f: either prefactor*|arg| or a constant tail term.
struct NonlinEntry {
    bool is_tail = false;
    AbsArg arg{};
    double prefactor = 0.0;
    double tail_value = 0.0;
    double g_coeff = 0.0; // matching entry of G
    int row = 0;          // 0-based state this entry's block belongs to
};

// Compact form x[k+1] = A x + G f(x,u) + B_u u. G is block diagonal with one
// row vector per state; `entries` lists the coordinates of f in order and
// `blocks[s]` gives the [begin,end) span of state s inside f.
struct StateSpace {
    HighwayConfig cfg;
    MatX A;
    MatX G;
    MatX B_u;
    std::vector<NonlinEntry> entries;
    std::vector<std::pair<int, int>> blocks;

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B_u.cols()); }
    int g() const { return static_cast<int>(entries.size()); }

    // Copy with G zeroed: x[k+1] = A x + B_u u. Used by the linear-mode
    // reduction checks (the Gramian then collapses to the N-step form).
    StateSpace linear_only() const;
};

StateSpace build_state_space(const HighwayConfig& cfg);

VecX eval_f(const StateSpace& ss, const VecX& x, const VecX& u);

VecX step_compact(const StateSpace& ss, const VecX& x, const VecX& u);

// df/dx with the tie convention of the absolute-value kink: d|z|/dz = z/|z|
// away from zero and 0 when |z| <= kink_tol. If `kink_margin` is given it
// receives the smallest |z| seen across every kink site.
MatX jacobian_f(const StateSpace& ss, const VecX& x, const VecX& u,
                double* kink_margin = nullptr, double kink_tol = 1e-12);

// Per-state Lipschitz coefficients of the raw argument (before the entry
// prefactor): |arg(x) - arg(x')| <= sum_s c_s |x_s - x'_s|.
std::vector<std::pair<int, double>> arg_state_coeffs(const StateSpace& ss, const AbsArg& arg);

} // namespace hwobs
