#pragma once

#include <vector>

#include "hwobs/statespace.hpp"
#include "hwobs/types.hpp"

namespace hwobs {

// Binary sensor mask over the p = n candidate segments (every mainline and
// ramp cell can host a sensor).
struct SensorSelection {
    VecXi gamma; // entries in {0,1}
    int r = 0;   // cardinality, kept equal to gamma.sum()

    static SensorSelection none(int p);
    static SensorSelection all(int p);
    static SensorSelection from_indices(int p, const std::vector<int>& idx); // 0-based
    static SensorSelection from_mask(const VecXi& gamma);

    int p() const { return static_cast<int>(gamma.size()); }
    std::vector<int> indices() const; // ascending 0-based selected segments
    // Reduced state-to-output matrix: the nonzero rows of Gamma*C with C = I.
    MatX reduced_C() const;
    void validate() const;
};

struct GramianResult {
    MatX W_o;
    double trace_value = 0.0;
    double geomean_det = 0.0; // n-th root of det, 0 when singular
    int window = 0;
    VecX anchor; // presumed initial state the linearization ran from
};

// d x[k] / d x[0] for k = 0..N-1 along the nominal noiseless rollout from
// x0: products of per-step Jacobians A + G * df/dx.
std::vector<MatX> transition_jacobians(const StateSpace& ss, const VecX& x0,
                                       const class InputSchedule& sched, int N);

// Stacked output sensitivity, N*p rows (unselected rows are zero).
MatX build_Jw(const StateSpace& ss, const SensorSelection& sel, const VecX& x0,
              const InputSchedule& sched, int N);

GramianResult gramian(const StateSpace& ss, const SensorSelection& sel, const VecX& x0,
                      const InputSchedule& sched, int N);

// Gramian assembled from precomputed transition Jacobians.
GramianResult gramian_from_jacobians(const std::vector<MatX>& phis, const SensorSelection& sel);

// t_i = trace contribution of sensor i alone; trace(W_o(gamma)) = sum gamma_i t_i.
VecX trace_contributions(const StateSpace& ss, const VecX& x0, const InputSchedule& sched, int N);
VecX trace_contributions_from_jacobians(const std::vector<MatX>& phis);

// Rank-structured per-sensor Gramian terms W_i = sum_k Phi_k' e_i e_i' Phi_k,
// so W_o(gamma) = sum_i gamma_i W_i. Shared by the placement solvers.
std::vector<MatX> sensor_gramian_terms(const std::vector<MatX>& phis);

double geomean_det_of(const MatX& W);

} // namespace hwobs
