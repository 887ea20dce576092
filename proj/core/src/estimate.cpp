#include "hwobs/estimate.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "hwobs/rng.hpp"

namespace hwobs {

std::vector<VecX> measurement_window(const StateSpace& ss, const VecX& x0,
                                     const InputSchedule& sched, int N,
                                     const SensorSelection& sel) {
    std::vector<VecX> window;
    window.reserve(static_cast<std::size_t>(N));
    VecX x = x0;
    for (int k = 0; k < N; ++k) {
        window.push_back(measure(x, sel));
        if (k + 1 < N) x = step_compact(ss, x, sched.at(k));
    }
    return window;
}

double relative_error(const VecX& x_est, const VecX& x_true) {
    const double denom = x_true.norm();
    if (denom == 0.0) throw std::invalid_argument("relative error undefined for a zero true state");
    return (x_est - x_true).norm() / denom;
}

namespace {

struct Linearization {
    VecX residual; // stacked C~ x[k] - y[k]
    MatX jacobian; // (N p~) x n
    double cost = 0.0;
};

Linearization linearize(const StateSpace& ss, const LsqProblem& prob, const InputSchedule& sched,
                        const VecX& x0) {
    const int N = static_cast<int>(prob.y_tilde.size());
    const auto idx = prob.gamma.indices();
    const int p = static_cast<int>(idx.size());
    const int n = ss.n();

    Linearization lin;
    lin.residual.resize(N * p);
    lin.jacobian.resize(N * p, n);

    VecX x = x0;
    MatX phi = MatX::Identity(n, n);
    for (int k = 0; k < N; ++k) {
        for (int r = 0; r < p; ++r) {
            lin.residual[k * p + r] = x[idx[r]] - prob.y_tilde[static_cast<std::size_t>(k)][r];
            lin.jacobian.row(k * p + r) = phi.row(idx[r]);
        }
        if (k + 1 < N) {
            const VecX& u = sched.at(k);
            phi = (ss.A + ss.G * jacobian_f(ss, x, u)) * phi;
            x = step_compact(ss, x, u);
        }
    }
    if (!lin.residual.allFinite()) throw std::runtime_error("initial-state fit produced non-finite residuals");
    lin.cost = lin.residual.squaredNorm();
    return lin;
}

double projected_gradient_norm(const VecX& g, const VecX& x, double lo, double hi) {
    double norm = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        double gi = g[i];
        if (x[i] <= lo + 1e-14 && gi > 0.0) gi = 0.0;
        if (x[i] >= hi - 1e-14 && gi < 0.0) gi = 0.0;
        norm = std::max(norm, std::abs(gi));
    }
    return norm;
}

LsqResult solve_single(const StateSpace& ss, const LsqProblem& prob, const InputSchedule& sched,
                       const VecX& start) {
    const double rho_m = ss.cfg.fd.rho_m;
    const int n = ss.n();

    LsqResult res;
    res.x0 = start.cwiseMax(0.0).cwiseMin(rho_m);

    if (prob.gamma.r == 0 || prob.y_tilde.empty()) {
        // Nothing measured: the guess is as good as anything.
        res.converged = true;
        return res;
    }

    Linearization lin = linearize(ss, prob, sched, res.x0);
    res.cost = lin.cost;
    double lambda = 1e-3;

    // Near a regular solution the damped steps stall at the gradient
    // tolerance with parameter error well above it; a few pure Gauss-Newton
    // steps finish the local convergence.
    auto polish = [&]() {
        for (int gn = 0; gn < 4; ++gn) {
            const MatX JtJ = lin.jacobian.transpose() * lin.jacobian;
            MatX H = JtJ;
            H.diagonal() += 1e-14 * JtJ.diagonal().cwiseMax(1e-12);
            const VecX d = Eigen::LLT<MatX>(H).solve(-lin.jacobian.transpose() * lin.residual);
            const VecX cand = (res.x0 + d).cwiseMax(0.0).cwiseMin(rho_m);
            Linearization cand_lin = linearize(ss, prob, sched, cand);
            if (!(cand_lin.cost < res.cost)) break;
            res.x0 = cand;
            res.cost = cand_lin.cost;
            lin = std::move(cand_lin);
        }
        const VecX grad = 2.0 * lin.jacobian.transpose() * lin.residual;
        res.gradient_norm = projected_gradient_norm(grad, res.x0, 0.0, rho_m);
    };

    for (int it = 0; it < prob.max_iters; ++it) {
        const VecX grad = 2.0 * lin.jacobian.transpose() * lin.residual;
        res.gradient_norm = projected_gradient_norm(grad, res.x0, 0.0, rho_m);
        res.iterations = it;
        if (res.gradient_norm <= prob.tol) {
            polish();
            res.converged = true;
            return res;
        }

        const MatX JtJ = lin.jacobian.transpose() * lin.jacobian;
        VecX damping = JtJ.diagonal().cwiseMax(1e-12);
        bool accepted = false;
        for (int attempt = 0; attempt < 25; ++attempt) {
            MatX H = JtJ;
            H.diagonal() += lambda * damping;
            const VecX d = Eigen::LLT<MatX>(H).solve(-0.5 * grad);
            const VecX cand = (res.x0 + d).cwiseMax(0.0).cwiseMin(rho_m);
            if ((cand - res.x0).cwiseAbs().maxCoeff() < 1e-16) {
                lambda *= 4.0;
                continue;
            }
            Linearization cand_lin = linearize(ss, prob, sched, cand);
            if (cand_lin.cost < res.cost) {
                res.x0 = cand;
                res.cost = cand_lin.cost;
                lin = std::move(cand_lin);
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                break;
            }
            lambda = std::min(lambda * 4.0, 1e14);
        }
        if (!accepted) {
            // No descent direction within the damping ladder: local stationarity.
            polish();
            res.converged = res.gradient_norm <= prob.tol;
            return res;
        }
    }
    res.iterations = prob.max_iters;
    return res;
}

} // namespace

LsqResult solve_p3(const StateSpace& ss, const LsqProblem& prob, const InputSchedule& sched) {
    prob.gamma.validate();
    if (prob.guess.size() != ss.n()) throw std::invalid_argument("guess has wrong dimension");
    for (const auto& y : prob.y_tilde)
        if (y.size() != prob.gamma.r) throw std::invalid_argument("measurement window row has wrong dimension");
    if (static_cast<int>(prob.y_tilde.size()) > sched.steps() + 1)
        throw std::invalid_argument("schedule shorter than the measurement window");

    LsqResult best = solve_single(ss, prob, sched, prob.guess);
    Rng rng(prob.start_seed);
    for (int s = 1; s < prob.starts; ++s) {
        VecX start(ss.n());
        for (int i = 0; i < start.size(); ++i) start[i] = ss.cfg.fd.rho_m * (1.0 - rng.uniform());
        const LsqResult alt = solve_single(ss, prob, sched, start);
        if (alt.cost < best.cost) best = alt;
    }
    return best;
}

} // namespace hwobs
