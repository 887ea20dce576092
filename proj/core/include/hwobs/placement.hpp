#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hwobs/observability.hpp"
#include "hwobs/simulate.hpp"

namespace hwobs {

enum class Metric { Trace, GeomeanDet };

std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);

// Per-sensor Gramian decomposition for a fixed anchor, schedule and window:
// W_o(gamma) = sum_i gamma_i * W[i] and trace(W_o(gamma)) = gamma . t.
struct GramianTerms {
    std::vector<MatX> W;
    VecX t;
    int n = 0;
    int window = 0;
};

GramianTerms make_gramian_terms(const StateSpace& ss, const VecX& x0_hat,
                                const InputSchedule& sched, int N);

double metric_value(const GramianTerms& terms, const SensorSelection& sel, Metric metric);

struct PlacementProblem {
    Metric metric = Metric::Trace;
    int r = 1;
    VecX x0_hat;
    InputSchedule sched;
    int N = 1;
    std::optional<VecX> costs; // P4 only
    double weight = 0.0;
};

struct PlacementResult {
    SensorSelection gamma_star;
    double kappa = 0.0; // metric value at gamma_star
    long node_count = 0;
    enum class Status { Optimal, IterationCapped } status = Status::Optimal;
};

struct BnbOptions {
    long node_cap = 10000;
    int pg_max_iters = 500;
    double pg_tol = 1e-8;
    // Optional warm incumbent (e.g. the previous budget's optimum padded by
    // one sensor); must have cardinality r.
    std::optional<SensorSelection> incumbent;
};

// Exact trace placement: the trace is modular, so the r largest single-sensor
// contributions are optimal. Ties break toward the lower segment index.
PlacementResult solve_trace_exact(const GramianTerms& terms, int r);

// Cost-aware trace placement: maximize trace(W_o) - weight * c'gamma subject
// to sum gamma = r; still modular, solved by sorting t_i - weight*c_i.
PlacementResult solve_p4(const GramianTerms& terms, int r, const VecX& costs, double weight);

// Best-first branch and bound over the binary selections. Upper bounds come
// from the concave continuous relaxation (projected gradient on the capped
// simplex) plus a monotonicity bound; node cap per BnbOptions.
PlacementResult solve_bnb(const GramianTerms& terms, Metric metric, int r,
                          const BnbOptions& opts = {});

// Ground-truth enumeration; refuses instances with more than 10^6 subsets.
PlacementResult exhaustive(const GramianTerms& terms, Metric metric, int r);

// Convenience wrappers building the terms from a problem description.
PlacementResult solve_placement(const StateSpace& ss, const PlacementProblem& prob,
                                const BnbOptions& opts = {});

SensorSelection baseline_uniform(int p, int r);
SensorSelection baseline_random(int p, int r, std::uint64_t seed);

// Projection of v onto {0 <= g <= 1, sum g = budget}; exposed for tests.
VecX project_capped_simplex(const VecX& v, double budget);

bool selection_nested(const SensorSelection& inner, const SensorSelection& outer);

} // namespace hwobs
