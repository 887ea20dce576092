#include "hwobs/statespace.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <map>

namespace hwobs {

namespace {

// ---------------------------------------------------------------------------
// Symbolic expansion used while assembling A, G, B_u and the constant tails.
// Coefficients are in flow units; the final (T/l) scaling happens at the end.
// ---------------------------------------------------------------------------

struct Expansion {
    std::map<int, double> lin; // state index -> coefficient
    std::map<int, double> inp; // input index -> coefficient
    double cst = 0.0;
    std::vector<std::pair<AbsArg, double>> abs; // (argument, coefficient)

    void add(const Expansion& e, double s) {
        for (const auto& [k, v] : e.lin) lin[k] += s * v;
        for (const auto& [k, v] : e.inp) inp[k] += s * v;
        cst += s * e.cst;
        for (const auto& [a, c] : e.abs) abs.emplace_back(a, s * c);
    }

    void add_abs(AbsArg::Kind kind, int idx, double coeff, bool normalized = false) {
        abs.push_back({AbsArg{kind, idx, normalized}, coeff});
    }
};

struct Builder {
    const HighwayConfig& cfg;
    const FundamentalDiagram& fd;

    double cap() const { return fd.v_f * fd.rho_c; }

    // m_j = min(v_f x_j, v_f rho_c) on any state index s.
    Expansion inner_demand(int s) const {
        Expansion e;
        e.lin[s] = 0.5 * fd.v_f;
        e.cst = 0.5 * cap();
        e.add_abs(AbsArg::Kind::VKink, s, -0.5);
        return e;
    }

    // M_j = min(w_c (rho_m - x_j), v_f rho_c) on any state index s.
    Expansion inner_supply(int s) const {
        Expansion e;
        e.lin[s] = -0.5 * fd.w_c;
        e.cst = 0.5 * (fd.w_c * fd.rho_m + cap());
        e.add_abs(AbsArg::Kind::MKink, s, -0.5);
        return e;
    }

    // Full demand delta_i of mainline segment i (no boundary case).
    Expansion demand_exp(int i) const {
        const int s = i - 1;
        if (!cfg.topo.has_offramp(i)) return inner_demand(s);
        const double beta = cfg.ramps.beta_at(i);
        const double bb = 1.0 - beta;
        const int off = cfg.topo.offramp_state(i);
        Expansion e;
        e.add(inner_demand(s), 0.5 * bb);
        e.lin[off] += -0.5 * (bb / beta) * fd.w_c;
        e.cst += 0.5 * (bb / beta) * fd.w_c * fd.rho_m;
        e.add_abs(AbsArg::Kind::OffOuter, i, -0.5);
        return e;
    }

    // Merge flow r_i of an on-ramp segment.
    Expansion merge_exp(int i) const {
        const double xi = cfg.ramps.xi_at(i);
        const int on = cfg.topo.onramp_state(i);
        Expansion e;
        e.lin[on] = 0.5 * fd.v_f;
        e.add(inner_supply(i - 1), 0.5 * xi / fd.w_c);
        e.add_abs(AbsArg::Kind::RampMin, i, -0.5);
        return e;
    }

    // Full supply sigma_i of mainline segment i (no boundary case). For an
    // on-ramp segment the merge subtraction folds into a single M kink with
    // coefficient (1 - xi/(2 w_c)) plus one ramp-min coordinate.
    Expansion supply_exp(int i) const {
        if (!cfg.topo.has_onramp(i)) return inner_supply(i - 1);
        const double xi = cfg.ramps.xi_at(i);
        const int s = i - 1;
        const int on = cfg.topo.onramp_state(i);
        const double scale = 1.0 - 0.5 * xi / fd.w_c;
        Expansion e;
        e.lin[s] = -0.5 * fd.w_c * scale;
        e.lin[on] = -0.5 * fd.v_f;
        e.cst = 0.5 * scale * (fd.w_c * fd.rho_m + cap());
        e.add_abs(AbsArg::Kind::MKink, s, -0.5 * scale);
        e.add_abs(AbsArg::Kind::RampMin, i, 0.5);
        return e;
    }

    // Own supply plus merge flow of an on-ramp segment, grouped the way the
    // compact form keeps them: the M kink split into its plain and xi parts
    // and a single merged ramp-min coordinate.
    Expansion own_supply_and_merge(int i) const {
        const double xi = cfg.ramps.xi_at(i);
        const int s = i - 1;
        const int on = cfg.topo.onramp_state(i);
        Expansion e;
        e.lin[s] = -0.25 * (fd.w_c + 0.5 * xi);
        e.lin[on] = 0.25 * fd.v_f;
        e.cst = 0.25 * (1.0 + 0.5 * xi / fd.w_c) * (fd.w_c * fd.rho_m + cap());
        e.add_abs(AbsArg::Kind::MKink, s, -0.25);
        e.add_abs(AbsArg::Kind::MKink, s, -0.125 * xi / fd.w_c);
        e.add_abs(AbsArg::Kind::RampMin, i, -0.25);
        return e;
    }

    void normalize_own_off_outer(Expansion& e, int i) const {
        const double bb = 1.0 - cfg.ramps.beta_at(i);
        for (auto& [a, c] : e.abs) {
            if (a.kind == AbsArg::Kind::OffOuter && a.idx == i && !a.normalized) {
                a.normalized = true;
                c *= bb;
            }
        }
    }

    Expansion mainline(int i) const {
        const int N = cfg.topo.N;
        const bool on = cfg.topo.has_onramp(i);
        const bool off = cfg.topo.has_offramp(i);
        Expansion e;

        // Inflow min(delta_{i-1}, sigma_i).
        if (i == 1) {
            e.inp[0] += 0.5;
        } else {
            e.add(demand_exp(i - 1), 0.5);
        }
        if (on) {
            e.add(own_supply_and_merge(i), 1.0);
        } else {
            e.add(supply_exp(i), 0.5);
        }
        e.add_abs(AbsArg::Kind::FlowGap, i, -0.5);

        // Outflow min(delta_i, sigma_{i+1}), divided by beta_bar on
        // off-ramp segments (the off-ramp share leaves through s_i).
        const double s_out = off ? 1.0 / (1.0 - cfg.ramps.beta_at(i)) : 1.0;
        e.add(demand_exp(i), -0.5 * s_out);
        if (i == N) {
            e.inp[1] += -0.5 * s_out;
        } else {
            e.add(supply_exp(i + 1), -0.5 * s_out);
        }
        e.add_abs(AbsArg::Kind::FlowGap, i + 1, 0.5 * s_out);
        if (off) normalize_own_off_outer(e, i);
        return e;
    }

    Expansion onramp_cell(int j) const {
        const int c = cfg.topo.onramp_state(j);
        Expansion e;
        e.inp[cfg.topo.onramp_input(j)] += 0.5;
        e.add(inner_supply(c), 0.5);
        e.add_abs(AbsArg::Kind::RampIn, j, -0.5);
        e.add(merge_exp(j), -1.0);
        return e;
    }

    Expansion offramp_cell(int j) const {
        const int c = cfg.topo.offramp_state(j);
        const double beta = cfg.ramps.beta_at(j);
        const double ratio = beta / (1.0 - beta);
        Expansion e;
        e.add(demand_exp(j), 0.5 * ratio);
        e.add(supply_exp(j + 1), 0.5 * ratio);
        e.add_abs(AbsArg::Kind::FlowGap, j + 1, -0.5 * ratio);
        normalize_own_off_outer(e, j);
        e.add(inner_demand(c), -0.5);
        e.inp[cfg.topo.offramp_input(j)] += -0.5;
        e.add_abs(AbsArg::Kind::OffOut, j, 0.5);
        return e;
    }

    double prefactor(const AbsArg& a) const {
        const double l = cfg.topo.l;
        switch (a.kind) {
            case AbsArg::Kind::FlowGap:
                if (a.idx == 1) return 1.0 / (fd.w_c * l);
                if (a.idx == cfg.topo.N + 1) return 1.0 / (fd.v_f * l);
                return 1.0 / (fd.v_f * fd.w_c * l);
            case AbsArg::Kind::OffOuter: return 1.0 / (fd.v_f * fd.w_c * l);
            case AbsArg::Kind::MKink: return 1.0 / (fd.w_c * l);
            case AbsArg::Kind::VKink: return 1.0 / (fd.v_f * l);
            case AbsArg::Kind::RampMin: return 1.0 / (fd.v_f * fd.w_c * l);
            case AbsArg::Kind::RampIn: return 1.0 / (fd.w_c * l);
            case AbsArg::Kind::OffOut: return 1.0 / (fd.v_f * l);
        }
        return 0.0;
    }
};

// ---------------------------------------------------------------------------
// Argument evaluation: values plus sparse gradients with the kink rule.
// ---------------------------------------------------------------------------

struct SparseGrad {
    std::array<int, 8> idx{};
    std::array<double, 8> w{};
    int n = 0;

    void add(int i, double v) {
        for (int k = 0; k < n; ++k) {
            if (idx[k] == i) {
                w[k] += v;
                return;
            }
        }
        idx[n] = i;
        w[n] = v;
        ++n;
    }

    void axpy(double s, const SparseGrad& o) {
        for (int k = 0; k < o.n; ++k) add(o.idx[k], s * o.w[k]);
    }
};

struct ValGrad {
    double v = 0.0;
    SparseGrad g;
};

struct Evaluator {
    const StateSpace& ss;
    const VecX& x;
    const VecX& u;
    double kink_tol;
    double* margin;

    double sign0(double z) const {
        const double az = std::abs(z);
        if (margin && az < *margin) *margin = az;
        if (az <= kink_tol) return 0.0;
        return z > 0.0 ? 1.0 : -1.0;
    }

    ValGrad vg_min(const ValGrad& a, const ValGrad& b) const {
        const double s = sign0(a.v - b.v);
        ValGrad out;
        out.v = min_analytic(a.v, b.v);
        out.g.axpy(0.5 * (1.0 - s), a.g);
        out.g.axpy(0.5 * (1.0 + s), b.g);
        return out;
    }

    ValGrad vg_const(double c) const { return ValGrad{c, {}}; }

    ValGrad vg_inner_demand(int s) const {
        const auto& fd = ss.cfg.fd;
        ValGrad a{fd.v_f * x[s], {}};
        a.g.add(s, fd.v_f);
        return vg_min(a, vg_const(fd.v_f * fd.rho_c));
    }

    ValGrad vg_inner_supply(int s) const {
        const auto& fd = ss.cfg.fd;
        ValGrad a{fd.w_c * (fd.rho_m - x[s]), {}};
        a.g.add(s, -fd.w_c);
        return vg_min(a, vg_const(fd.v_f * fd.rho_c));
    }

    ValGrad vg_demand(int i) const {
        const auto& cfg = ss.cfg;
        if (i == 0) return vg_const(u[0]);
        ValGrad m = vg_inner_demand(i - 1);
        if (!cfg.topo.has_offramp(i)) return m;
        const double beta = cfg.ramps.beta_at(i);
        const double bb = 1.0 - beta;
        const int off = cfg.topo.offramp_state(i);
        ValGrad lhs;
        lhs.v = bb * m.v;
        lhs.g.axpy(bb, m.g);
        ValGrad rhs{(bb / beta) * cfg.fd.w_c * (cfg.fd.rho_m - x[off]), {}};
        rhs.g.add(off, -(bb / beta) * cfg.fd.w_c);
        return vg_min(lhs, rhs);
    }

    ValGrad vg_merge(int i) const {
        const auto& cfg = ss.cfg;
        const double xi = cfg.ramps.xi_at(i);
        const int on = cfg.topo.onramp_state(i);
        ValGrad lhs{cfg.fd.v_f * x[on], {}};
        lhs.g.add(on, cfg.fd.v_f);
        ValGrad cap = vg_inner_supply(i - 1);
        ValGrad rhs;
        rhs.v = (xi / cfg.fd.w_c) * cap.v;
        rhs.g.axpy(xi / cfg.fd.w_c, cap.g);
        return vg_min(lhs, rhs);
    }

    ValGrad vg_supply(int i) const {
        const auto& cfg = ss.cfg;
        if (i == cfg.topo.N + 1) return vg_const(u[1]);
        ValGrad s = vg_inner_supply(i - 1);
        if (cfg.topo.has_onramp(i)) {
            ValGrad r = vg_merge(i);
            s.v -= r.v;
            s.g.axpy(-1.0, r.g);
        }
        return s;
    }

    ValGrad vg_arg(const AbsArg& a) const {
        const auto& cfg = ss.cfg;
        const auto& fd = cfg.fd;
        switch (a.kind) {
            case AbsArg::Kind::FlowGap: {
                ValGrad d = vg_demand(a.idx - 1);
                ValGrad s = vg_supply(a.idx);
                d.v -= s.v;
                d.g.axpy(-1.0, s.g);
                return d;
            }
            case AbsArg::Kind::OffOuter: {
                const double beta = cfg.ramps.beta_at(a.idx);
                const double bb = 1.0 - beta;
                const double scale = a.normalized ? 1.0 : bb;
                const int off = cfg.topo.offramp_state(a.idx);
                ValGrad m = vg_inner_demand(a.idx - 1);
                ValGrad out;
                out.v = scale * m.v - (scale / beta) * fd.w_c * (fd.rho_m - x[off]);
                out.g.axpy(scale, m.g);
                out.g.add(off, (scale / beta) * fd.w_c);
                return out;
            }
            case AbsArg::Kind::MKink: {
                ValGrad out{fd.w_c * (fd.rho_m - x[a.idx]) - fd.v_f * fd.rho_c, {}};
                out.g.add(a.idx, -fd.w_c);
                return out;
            }
            case AbsArg::Kind::VKink: {
                ValGrad out{fd.v_f * x[a.idx] - fd.v_f * fd.rho_c, {}};
                out.g.add(a.idx, fd.v_f);
                return out;
            }
            case AbsArg::Kind::RampMin: {
                const double xi = cfg.ramps.xi_at(a.idx);
                const int on = cfg.topo.onramp_state(a.idx);
                ValGrad cap = vg_inner_supply(a.idx - 1);
                ValGrad out;
                out.v = fd.v_f * x[on] - (xi / fd.w_c) * cap.v;
                out.g.add(on, fd.v_f);
                out.g.axpy(-xi / fd.w_c, cap.g);
                return out;
            }
            case AbsArg::Kind::RampIn: {
                const int on = cfg.topo.onramp_state(a.idx);
                ValGrad s = vg_inner_supply(on);
                s.v -= u[cfg.topo.onramp_input(a.idx)];
                return s;
            }
            case AbsArg::Kind::OffOut: {
                const int off = cfg.topo.offramp_state(a.idx);
                ValGrad d = vg_inner_demand(off);
                d.v -= u[cfg.topo.offramp_input(a.idx)];
                return d;
            }
        }
        return {};
    }
};

double arg_value(const StateSpace& ss, const AbsArg& a, const VecX& x, const VecX& u) {
    const auto& cfg = ss.cfg;
    const auto& fd = cfg.fd;
    switch (a.kind) {
        case AbsArg::Kind::FlowGap:
            return demand(a.idx - 1, x, u, cfg) - supply(a.idx, x, u, cfg);
        case AbsArg::Kind::OffOuter: {
            const double beta = cfg.ramps.beta_at(a.idx);
            const double bb = 1.0 - beta;
            const double scale = a.normalized ? 1.0 : bb;
            const double m = min_analytic(fd.v_f * x[a.idx - 1], fd.v_f * fd.rho_c);
            return scale * m - (scale / beta) * fd.w_c * (fd.rho_m - x[cfg.topo.offramp_state(a.idx)]);
        }
        case AbsArg::Kind::MKink:
            return fd.w_c * (fd.rho_m - x[a.idx]) - fd.v_f * fd.rho_c;
        case AbsArg::Kind::VKink:
            return fd.v_f * x[a.idx] - fd.v_f * fd.rho_c;
        case AbsArg::Kind::RampMin: {
            const double xi = cfg.ramps.xi_at(a.idx);
            const double cap = min_analytic(fd.w_c * (fd.rho_m - x[a.idx - 1]), fd.v_f * fd.rho_c);
            return fd.v_f * x[cfg.topo.onramp_state(a.idx)] - (xi / fd.w_c) * cap;
        }
        case AbsArg::Kind::RampIn: {
            const double rho_on = x[cfg.topo.onramp_state(a.idx)];
            return min_analytic(fd.w_c * (fd.rho_m - rho_on), fd.v_f * fd.rho_c) -
                   u[cfg.topo.onramp_input(a.idx)];
        }
        case AbsArg::Kind::OffOut: {
            const double rho_off = x[cfg.topo.offramp_state(a.idx)];
            return min_analytic(fd.v_f * rho_off, fd.v_f * fd.rho_c) -
                   u[cfg.topo.offramp_input(a.idx)];
        }
    }
    return 0.0;
}

} // namespace

StateSpace StateSpace::linear_only() const {
    StateSpace out = *this;
    out.G.setZero();
    return out;
}

StateSpace build_state_space(const HighwayConfig& cfg) {
    cfg.validate();
    const auto& topo = cfg.topo;
    const int n = topo.state_dim();
    const int m = topo.input_dim();
    const double Tl = topo.T / topo.l;

    StateSpace ss;
    ss.cfg = cfg;
    ss.A = MatX::Zero(n, n);
    ss.B_u = MatX::Zero(n, m);
    ss.blocks.resize(n);

    Builder builder{cfg, cfg.fd};

    auto emit = [&](int row, const Expansion& e) {
        ss.A(row, row) += 1.0;
        for (const auto& [s, c] : e.lin) ss.A(row, s) += Tl * c;
        for (const auto& [k, c] : e.inp) ss.B_u(row, k) += Tl * c;
        const int begin = static_cast<int>(ss.entries.size());
        for (const auto& [arg, coeff] : e.abs) {
            NonlinEntry ne;
            ne.arg = arg;
            ne.prefactor = builder.prefactor(arg);
            ne.g_coeff = Tl * coeff / ne.prefactor;
            ne.row = row;
            ss.entries.push_back(ne);
        }
        NonlinEntry tail;
        tail.is_tail = true;
        tail.tail_value = Tl * e.cst;
        tail.g_coeff = 1.0;
        tail.row = row;
        ss.entries.push_back(tail);
        ss.blocks[row] = {begin, static_cast<int>(ss.entries.size())};
    };

    for (int i = 1; i <= topo.N; ++i) emit(i - 1, builder.mainline(i));
    for (int j : topo.onramps) emit(topo.onramp_state(j), builder.onramp_cell(j));
    for (int j : topo.offramps) emit(topo.offramp_state(j), builder.offramp_cell(j));

    ss.G = MatX::Zero(n, ss.g());
    for (int col = 0; col < ss.g(); ++col) ss.G(ss.entries[col].row, col) = ss.entries[col].g_coeff;
    return ss;
}

VecX eval_f(const StateSpace& ss, const VecX& x, const VecX& u) {
    VecX f(ss.g());
    for (int k = 0; k < ss.g(); ++k) {
        const auto& e = ss.entries[k];
        f[k] = e.is_tail ? e.tail_value : e.prefactor * std::abs(arg_value(ss, e.arg, x, u));
    }
    return f;
}

VecX step_compact(const StateSpace& ss, const VecX& x, const VecX& u) {
    return ss.A * x + ss.G * eval_f(ss, x, u) + ss.B_u * u;
}

MatX jacobian_f(const StateSpace& ss, const VecX& x, const VecX& u, double* kink_margin,
                double kink_tol) {
    if (kink_margin) *kink_margin = std::numeric_limits<double>::infinity();
    MatX J = MatX::Zero(ss.g(), ss.n());
    Evaluator ev{ss, x, u, kink_tol, kink_margin};
    for (int k = 0; k < ss.g(); ++k) {
        const auto& e = ss.entries[k];
        if (e.is_tail) continue;
        const ValGrad a = ev.vg_arg(e.arg);
        const double s = ev.sign0(a.v);
        if (s == 0.0) continue;
        for (int t = 0; t < a.g.n; ++t) J(k, a.g.idx[t]) += e.prefactor * s * a.g.w[t];
    }
    return J;
}

std::vector<std::pair<int, double>> arg_state_coeffs(const StateSpace& ss, const AbsArg& a) {
    const auto& cfg = ss.cfg;
    const auto& fd = cfg.fd;
    std::vector<std::pair<int, double>> c;

    auto demand_coeffs = [&](int i) {
        if (i == 0) return;
        if (cfg.topo.has_offramp(i)) {
            const double beta = cfg.ramps.beta_at(i);
            const double bb = 1.0 - beta;
            c.emplace_back(i - 1, bb * fd.v_f);
            c.emplace_back(cfg.topo.offramp_state(i), (bb / beta) * fd.w_c);
        } else {
            c.emplace_back(i - 1, fd.v_f);
        }
    };
    auto supply_coeffs = [&](int i) {
        if (i == cfg.topo.N + 1) return;
        c.emplace_back(i - 1, fd.w_c);
        if (cfg.topo.has_onramp(i)) c.emplace_back(cfg.topo.onramp_state(i), fd.v_f);
    };

    switch (a.kind) {
        case AbsArg::Kind::FlowGap:
            demand_coeffs(a.idx - 1);
            supply_coeffs(a.idx);
            break;
        case AbsArg::Kind::OffOuter: {
            const double beta = cfg.ramps.beta_at(a.idx);
            const double scale = a.normalized ? 1.0 : 1.0 - beta;
            c.emplace_back(a.idx - 1, scale * fd.v_f);
            c.emplace_back(cfg.topo.offramp_state(a.idx), (scale / beta) * fd.w_c);
            break;
        }
        case AbsArg::Kind::MKink: c.emplace_back(a.idx, fd.w_c); break;
        case AbsArg::Kind::VKink: c.emplace_back(a.idx, fd.v_f); break;
        case AbsArg::Kind::RampMin:
            c.emplace_back(cfg.topo.onramp_state(a.idx), fd.v_f);
            c.emplace_back(a.idx - 1, cfg.ramps.xi_at(a.idx));
            break;
        case AbsArg::Kind::RampIn: c.emplace_back(cfg.topo.onramp_state(a.idx), fd.w_c); break;
        case AbsArg::Kind::OffOut: c.emplace_back(cfg.topo.offramp_state(a.idx), fd.v_f); break;
    }
    return c;
}

} // namespace hwobs
