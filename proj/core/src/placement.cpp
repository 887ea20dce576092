#include "hwobs/placement.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "hwobs/rng.hpp"

namespace hwobs {

std::string to_string(Metric m) { return m == Metric::Trace ? "trace" : "det"; }

Metric metric_from_string(const std::string& s) {
    if (s == "trace") return Metric::Trace;
    if (s == "det" || s == "geomean" || s == "geomean_det") return Metric::GeomeanDet;
    throw std::invalid_argument("unknown metric '" + s + "' (expected trace or det)");
}

GramianTerms make_gramian_terms(const StateSpace& ss, const VecX& x0_hat,
                                const InputSchedule& sched, int N) {
    const auto phis = transition_jacobians(ss, x0_hat, sched, N);
    GramianTerms terms;
    terms.W = sensor_gramian_terms(phis);
    terms.t = trace_contributions_from_jacobians(phis);
    terms.n = static_cast<int>(terms.t.size());
    terms.window = N;
    return terms;
}

double metric_value(const GramianTerms& terms, const SensorSelection& sel, Metric metric) {
    if (metric == Metric::Trace) {
        double v = 0.0;
        for (int i : sel.indices()) v += terms.t[i];
        return v;
    }
    MatX W = MatX::Zero(terms.n, terms.n);
    for (int i : sel.indices()) W += terms.W[i];
    return geomean_det_of(W);
}

namespace {

// Indices of the r largest scores, ties toward the lower index.
std::vector<int> top_indices(const VecX& score, int r) {
    std::vector<int> order(score.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
    order.resize(r);
    std::sort(order.begin(), order.end());
    return order;
}

} // namespace

PlacementResult solve_trace_exact(const GramianTerms& terms, int r) {
    if (r < 1 || r > terms.n) throw std::invalid_argument("sensor budget out of range");
    PlacementResult res;
    res.gamma_star = SensorSelection::from_indices(terms.n, top_indices(terms.t, r));
    res.kappa = metric_value(terms, res.gamma_star, Metric::Trace);
    return res;
}

PlacementResult solve_p4(const GramianTerms& terms, int r, const VecX& costs, double weight) {
    if (r < 1 || r > terms.n) throw std::invalid_argument("sensor budget out of range");
    if (costs.size() != terms.n) throw std::invalid_argument("cost vector has wrong length");
    if (weight < 0.0) throw std::invalid_argument("cost weight must be nonnegative");
    const VecX score = terms.t - weight * costs;
    PlacementResult res;
    res.gamma_star = SensorSelection::from_indices(terms.n, top_indices(score, r));
    res.kappa = metric_value(terms, res.gamma_star, Metric::Trace);
    return res;
}

VecX project_capped_simplex(const VecX& v, double budget) {
    const int p = static_cast<int>(v.size());
    if (budget <= 0.0) return VecX::Zero(p);
    if (budget >= static_cast<double>(p)) return VecX::Ones(p);
    double lo = v.minCoeff() - 1.0, hi = v.maxCoeff();
    for (int it = 0; it < 100; ++it) {
        const double tau = 0.5 * (lo + hi);
        double s = 0.0;
        for (int i = 0; i < p; ++i) s += std::clamp(v[i] - tau, 0.0, 1.0);
        (s > budget ? lo : hi) = tau;
    }
    const double tau = 0.5 * (lo + hi);
    VecX g(p);
    for (int i = 0; i < p; ++i) g[i] = std::clamp(v[i] - tau, 0.0, 1.0);
    return g;
}

namespace {

struct Node {
    std::vector<std::int8_t> state; // -1 free, 0 fixed out, 1 fixed in
    VecX relax;                     // warm start for the child relaxations
    double bound = 0.0;
    long id = 0;
};

struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const {
        if (a.bound != b.bound) return a.bound < b.bound; // max-heap on bound
        return a.id > b.id;
    }
};

// Relaxation machinery for the geomean-det objective, shared across nodes.
class DetRelaxation {
  public:
    DetRelaxation(const GramianTerms& terms, int pg_iters, double pg_tol)
        : terms_(terms), pg_iters_(pg_iters), pg_tol_(pg_tol) {
        MatX all = MatX::Zero(terms.n, terms.n);
        for (const auto& W : terms.W) all += W;
        delta_ = std::max(1e-300, 1e-12 * all.trace() / terms.n);
    }

    // log of geomean(W(g) + delta I), plus inverse for the gradient. Uses an
    // eigendecomposition with clamping so near-singular iterates still
    // evaluate (an LLT can fail there, which would corrupt the node bound).
    double objective(const VecX& g, MatX* inv = nullptr) const {
        const int n = terms_.n;
        MatX W = MatX::Zero(n, n);
        for (int i = 0; i < n; ++i)
            if (g[i] > 0.0) W += g[i] * terms_.W[i];
        Eigen::SelfAdjointEigenSolver<MatX> es(W);
        const VecX lam = es.eigenvalues().cwiseMax(0.0).array() + delta_;
        double logdet = 0.0;
        for (int i = 0; i < n; ++i) logdet += std::log(lam[i]);
        if (inv)
            *inv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                   es.eigenvectors().transpose();
        return logdet / n;
    }

    VecX gradient(const MatX& inv, const std::vector<int>& free) const {
        VecX grad = VecX::Zero(terms_.n);
        for (int i : free) grad[i] = inv.cwiseProduct(terms_.W[i]).sum() / terms_.n;
        return grad;
    }

    // Maximizes the relaxed objective over the node's feasible box-simplex;
    // returns a rigorous upper bound on log geomean over binary completions
    // via the concavity linearization gap.
    double solve(const Node& node, int r, VecX& g) const {
        const int n = terms_.n;
        std::vector<int> free;
        double r_free = r;
        for (int i = 0; i < n; ++i) {
            if (node.state[i] == -1) free.push_back(i);
            if (node.state[i] == 1) r_free -= 1.0;
        }

        auto project = [&](VecX& v) {
            VecX sub(static_cast<int>(free.size()));
            for (std::size_t k = 0; k < free.size(); ++k) sub[static_cast<int>(k)] = v[free[k]];
            sub = project_capped_simplex(sub, r_free);
            for (std::size_t k = 0; k < free.size(); ++k) v[free[k]] = sub[static_cast<int>(k)];
        };

        g = node.relax;
        for (int i = 0; i < n; ++i)
            if (node.state[i] != -1) g[i] = node.state[i];
        project(g);

        MatX inv;
        double fval = objective(g, &inv);
        double step = 1.0;
        for (int it = 0; it < pg_iters_ && !free.empty(); ++it) {
            const VecX grad = gradient(inv, free);
            VecX cand;
            double cand_val = 0.0;
            bool accepted = false;
            for (int bt = 0; bt < 30; ++bt) {
                cand = g + step * grad;
                project(cand);
                MatX cand_inv;
                cand_val = objective(cand, &cand_inv);
                const double pred = grad.dot(cand - g);
                if (cand_val >= fval + 1e-4 * pred - 1e-15) {
                    inv.swap(cand_inv);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;
            const double move = (cand - g).cwiseAbs().maxCoeff();
            g = cand;
            fval = cand_val;
            step = std::min(step * 1.5, 1e6);
            if (move <= pg_tol_) break;
        }

        // Linearization gap: concavity makes f(g*) <= f(g) + grad'(g* - g).
        const VecX grad = gradient(inv, free);
        std::vector<double> gains;
        gains.reserve(free.size());
        double lin_at_g = 0.0;
        for (int i : free) {
            gains.push_back(grad[i]);
            lin_at_g += grad[i] * g[i];
        }
        std::sort(gains.begin(), gains.end(), std::greater<double>());
        double lin_max = 0.0;
        for (int k = 0; k < static_cast<int>(r_free + 0.5) && k < static_cast<int>(gains.size()); ++k)
            lin_max += gains[static_cast<std::size_t>(k)];
        return fval + std::max(0.0, lin_max - lin_at_g);
    }

    double delta() const { return delta_; }

    // Upper bound on geomean over completions dominated by W: eigenvalues
    // floored at delta so eigensolver round-off near singularity can only
    // loosen the bound, never prune a live branch.
    double geomean_upper(const MatX& W) const {
        Eigen::SelfAdjointEigenSolver<MatX> es(W, Eigen::EigenvaluesOnly);
        const VecX lam = es.eigenvalues().cwiseMax(0.0).array() + delta_;
        double log_sum = 0.0;
        for (int i = 0; i < lam.size(); ++i) log_sum += std::log(lam[i]);
        return std::exp(log_sum / lam.size());
    }

  private:
    const GramianTerms& terms_;
    int pg_iters_;
    double pg_tol_;
    double delta_ = 0.0;
};

SensorSelection round_selection(const GramianTerms& terms, const Node& node, const VecX& relax,
                                int r) {
    VecX score = relax;
    for (int i = 0; i < terms.n; ++i) {
        if (node.state[i] == 1) score[i] = 2.0; // keep fixed-in entries first
        if (node.state[i] == 0) score[i] = -1.0;
    }
    std::vector<int> order(terms.n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
    order.resize(r);
    return SensorSelection::from_indices(terms.n, order);
}

// Greedy forward selection; a strong deterministic incumbent seed.
SensorSelection greedy_selection(const GramianTerms& terms, Metric metric, int r) {
    std::vector<int> chosen;
    MatX W = MatX::Zero(terms.n, terms.n);
    std::vector<bool> used(terms.n, false);
    for (int k = 0; k < r; ++k) {
        int best = -1;
        double best_val = -1.0;
        for (int i = 0; i < terms.n; ++i) {
            if (used[i]) continue;
            double val;
            if (metric == Metric::Trace) {
                val = terms.t[i];
            } else {
                val = geomean_det_of(W + terms.W[i]);
            }
            if (val > best_val + 1e-15) {
                best_val = val;
                best = i;
            }
        }
        used[best] = true;
        chosen.push_back(best);
        W += terms.W[best];
    }
    return SensorSelection::from_indices(terms.n, chosen);
}

} // namespace

PlacementResult solve_bnb(const GramianTerms& terms, Metric metric, int r, const BnbOptions& opts) {
    if (r < 1 || r > terms.n) throw std::invalid_argument("sensor budget out of range");
    if (metric == Metric::Trace) {
        // Modular objective: the relaxation bound is exact at the root, so
        // branch and bound terminates there; reuse the sort-based solver.
        PlacementResult res = solve_trace_exact(terms, r);
        res.node_count = 1;
        return res;
    }

    const DetRelaxation relax(terms, opts.pg_max_iters, opts.pg_tol);

    SensorSelection incumbent = greedy_selection(terms, metric, r);
    double inc_val = metric_value(terms, incumbent, metric);
    if (opts.incumbent) {
        const double v = metric_value(terms, *opts.incumbent, metric);
        if (v > inc_val) {
            incumbent = *opts.incumbent;
            inc_val = v;
        }
    }

    std::priority_queue<Node, std::vector<Node>, NodeOrder> queue;
    long next_id = 0;

    auto push_node = [&](std::vector<std::int8_t> state, const VecX& warm) {
        int fixed_in = 0, free_cnt = 0;
        for (auto s : state) {
            fixed_in += (s == 1);
            free_cnt += (s == -1);
        }
        if (fixed_in > r || fixed_in + free_cnt < r) return;

        Node node;
        node.state = std::move(state);
        node.relax = warm;
        node.id = next_id++;

        if (fixed_in == r || fixed_in + free_cnt == r) {
            // Leaf: the completion is forced.
            std::vector<int> idx;
            for (int i = 0; i < terms.n; ++i)
                if (node.state[i] == 1 || (fixed_in < r && node.state[i] == -1)) idx.push_back(i);
            const auto sel = SensorSelection::from_indices(terms.n, idx);
            const double v = metric_value(terms, sel, metric);
            if (v > inc_val + 1e-15) {
                incumbent = sel;
                inc_val = v;
            }
            return;
        }

        VecX g;
        const double log_bound = relax.solve(node, r, g);
        node.relax = g;
        node.bound = std::exp(log_bound);

        // Monotone bound: every completion is dominated by switching all
        // free sensors on.
        MatX W_all = MatX::Zero(terms.n, terms.n);
        for (int i = 0; i < terms.n; ++i)
            if (node.state[i] != 0) W_all += terms.W[i];
        node.bound = std::min(node.bound, relax.geomean_upper(W_all));

        const auto rounded = round_selection(terms, node, g, r);
        const double v = metric_value(terms, rounded, metric);
        if (v > inc_val + 1e-15) {
            incumbent = rounded;
            inc_val = v;
        }
        if (node.bound > inc_val * (1.0 + 1e-9) + 1e-15) queue.push(std::move(node));
    };

    PlacementResult res;
    push_node(std::vector<std::int8_t>(static_cast<std::size_t>(terms.n), -1),
              VecX::Constant(terms.n, static_cast<double>(r) / terms.n));

    while (!queue.empty()) {
        if (res.node_count >= opts.node_cap) {
            res.status = PlacementResult::Status::IterationCapped;
            break;
        }
        Node node = queue.top();
        queue.pop();
        ++res.node_count;
        if (node.bound <= inc_val * (1.0 + 1e-9) + 1e-15) break; // best bound met

        // Branch on the most fractional relaxation entry.
        int pick = -1;
        double best_frac = 2.0;
        for (int i = 0; i < terms.n; ++i) {
            if (node.state[i] != -1) continue;
            const double frac = std::abs(node.relax[i] - 0.5);
            if (frac < best_frac - 1e-15) {
                best_frac = frac;
                pick = i;
            }
        }
        if (pick < 0) continue;

        auto up = node.state;
        up[static_cast<std::size_t>(pick)] = 1;
        push_node(std::move(up), node.relax);
        auto down = node.state;
        down[static_cast<std::size_t>(pick)] = 0;
        push_node(std::move(down), node.relax);
    }

    res.gamma_star = incumbent;
    res.kappa = inc_val;
    return res;
}

PlacementResult exhaustive(const GramianTerms& terms, Metric metric, int r) {
    if (r < 1 || r > terms.n) throw std::invalid_argument("sensor budget out of range");
    double count = 1.0;
    for (int k = 1; k <= r; ++k) count *= static_cast<double>(terms.n - k + 1) / k;
    if (count > 1e6) throw std::invalid_argument("instance too large for exhaustive enumeration");

    std::vector<int> idx(r);
    std::iota(idx.begin(), idx.end(), 0);
    PlacementResult res;
    double best = -1.0;
    long visited = 0;
    for (;;) {
        ++visited;
        const auto sel = SensorSelection::from_indices(terms.n, idx);
        const double v = metric_value(terms, sel, metric);
        if (v > best + 1e-15) {
            best = v;
            res.gamma_star = sel;
        }
        int pos = r - 1;
        while (pos >= 0 && idx[pos] == terms.n - r + pos) --pos;
        if (pos < 0) break;
        ++idx[pos];
        for (int k = pos + 1; k < r; ++k) idx[k] = idx[k - 1] + 1;
    }
    res.kappa = best;
    res.node_count = visited;
    return res;
}

PlacementResult solve_placement(const StateSpace& ss, const PlacementProblem& prob,
                                const BnbOptions& opts) {
    const auto terms = make_gramian_terms(ss, prob.x0_hat, prob.sched, prob.N);
    if (prob.costs) {
        if (prob.metric != Metric::Trace)
            throw std::invalid_argument("sensor costs are only supported with the trace metric");
        return solve_p4(terms, prob.r, *prob.costs, prob.weight);
    }
    if (prob.metric == Metric::Trace) return solve_trace_exact(terms, prob.r);
    return solve_bnb(terms, prob.metric, prob.r, opts);
}

SensorSelection baseline_uniform(int p, int r) {
    if (r > p) throw std::invalid_argument("sensor budget exceeds candidate count");
    std::vector<int> idx;
    for (int i = 0; i < p && static_cast<int>(idx.size()) < r; i += 2) idx.push_back(i);
    for (int i = 1; i < p && static_cast<int>(idx.size()) < r; i += 2) idx.push_back(i);
    return SensorSelection::from_indices(p, idx);
}

SensorSelection baseline_random(int p, int r, std::uint64_t seed) {
    Rng rng(seed);
    return SensorSelection::from_indices(p, rng.sample_without_replacement(p, r));
}

bool selection_nested(const SensorSelection& inner, const SensorSelection& outer) {
    for (int i = 0; i < inner.gamma.size(); ++i)
        if (inner.gamma[i] == 1 && outer.gamma[i] != 1) return false;
    return true;
}

} // namespace hwobs
