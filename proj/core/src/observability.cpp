#include "hwobs/observability.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "hwobs/simulate.hpp"

namespace hwobs {

SensorSelection SensorSelection::none(int p) {
    SensorSelection s;
    s.gamma = VecXi::Zero(p);
    s.r = 0;
    return s;
}

SensorSelection SensorSelection::all(int p) {
    SensorSelection s;
    s.gamma = VecXi::Ones(p);
    s.r = p;
    return s;
}

SensorSelection SensorSelection::from_indices(int p, const std::vector<int>& idx) {
    SensorSelection s = none(p);
    for (int i : idx) {
        if (i < 0 || i >= p) throw std::out_of_range("sensor index out of range");
        s.gamma[i] = 1;
    }
    s.r = s.gamma.sum();
    return s;
}

SensorSelection SensorSelection::from_mask(const VecXi& gamma) {
    SensorSelection s;
    s.gamma = gamma;
    s.r = 0;
    for (int i = 0; i < gamma.size(); ++i) {
        if (gamma[i] != 0 && gamma[i] != 1) throw std::invalid_argument("gamma entries must be 0/1");
        s.r += gamma[i];
    }
    return s;
}

std::vector<int> SensorSelection::indices() const {
    std::vector<int> idx;
    for (int i = 0; i < gamma.size(); ++i)
        if (gamma[i]) idx.push_back(i);
    return idx;
}

MatX SensorSelection::reduced_C() const {
    const auto idx = indices();
    MatX C = MatX::Zero(static_cast<int>(idx.size()), p());
    for (int k = 0; k < static_cast<int>(idx.size()); ++k) C(k, idx[k]) = 1.0;
    return C;
}

void SensorSelection::validate() const {
    int sum = 0;
    for (int i = 0; i < gamma.size(); ++i) {
        if (gamma[i] != 0 && gamma[i] != 1) throw std::invalid_argument("gamma entries must be 0/1");
        sum += gamma[i];
    }
    if (sum != r) throw std::invalid_argument("selection cardinality mismatch");
}

std::vector<MatX> transition_jacobians(const StateSpace& ss, const VecX& x0,
                                       const InputSchedule& sched, int N) {
    if (N < 1) throw std::invalid_argument("observation window must be at least 1");
    const int n = ss.n();
    std::vector<MatX> phis;
    phis.reserve(N);
    phis.push_back(MatX::Identity(n, n));
    VecX x = x0;
    for (int k = 1; k < N; ++k) {
        const VecX& u = sched.at(k - 1);
        const MatX step_jac = ss.A + ss.G * jacobian_f(ss, x, u);
        phis.push_back(step_jac * phis.back());
        x = step_compact(ss, x, u);
    }
    return phis;
}

MatX build_Jw(const StateSpace& ss, const SensorSelection& sel, const VecX& x0,
              const InputSchedule& sched, int N) {
    sel.validate();
    const int n = ss.n();
    const int p = sel.p();
    const auto phis = transition_jacobians(ss, x0, sched, N);
    MatX Jw = MatX::Zero(N * p, n);
    for (int k = 0; k < N; ++k)
        for (int i = 0; i < p; ++i)
            if (sel.gamma[i]) Jw.row(k * p + i) = phis[k].row(i);
    return Jw;
}

double geomean_det_of(const MatX& W) {
    Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (W + W.transpose()));
    const VecX ev = es.eigenvalues();
    double log_sum = 0.0;
    for (int i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-10)
            throw std::runtime_error("Gramian has a significantly negative eigenvalue");
        if (ev[i] <= 0.0) return 0.0;
        log_sum += std::log(ev[i]);
    }
    return std::exp(log_sum / static_cast<double>(ev.size()));
}

GramianResult gramian_from_jacobians(const std::vector<MatX>& phis, const SensorSelection& sel) {
    sel.validate();
    const int n = static_cast<int>(phis.front().cols());
    MatX W = MatX::Zero(n, n);
    const auto idx = sel.indices();
    for (const auto& phi : phis)
        for (int i : idx) W.noalias() += phi.row(i).transpose() * phi.row(i);
    GramianResult res;
    res.W_o = 0.5 * (W + W.transpose());
    res.trace_value = res.W_o.trace();
    res.geomean_det = geomean_det_of(res.W_o);
    res.window = static_cast<int>(phis.size());
    return res;
}

GramianResult gramian(const StateSpace& ss, const SensorSelection& sel, const VecX& x0,
                      const InputSchedule& sched, int N) {
    const auto phis = transition_jacobians(ss, x0, sched, N);
    GramianResult res = gramian_from_jacobians(phis, sel);
    res.anchor = x0;
    return res;
}

VecX trace_contributions_from_jacobians(const std::vector<MatX>& phis) {
    const int n = static_cast<int>(phis.front().cols());
    VecX t = VecX::Zero(n);
    for (const auto& phi : phis)
        for (int i = 0; i < n; ++i) t[i] += phi.row(i).squaredNorm();
    return t;
}

VecX trace_contributions(const StateSpace& ss, const VecX& x0, const InputSchedule& sched, int N) {
    return trace_contributions_from_jacobians(transition_jacobians(ss, x0, sched, N));
}

std::vector<MatX> sensor_gramian_terms(const std::vector<MatX>& phis) {
    const int n = static_cast<int>(phis.front().cols());
    std::vector<MatX> terms(n, MatX::Zero(n, n));
    for (const auto& phi : phis)
        for (int i = 0; i < n; ++i) terms[i].noalias() += phi.row(i).transpose() * phi.row(i);
    return terms;
}

} // namespace hwobs
