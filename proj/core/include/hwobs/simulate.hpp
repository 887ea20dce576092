#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hwobs/observability.hpp"
#include "hwobs/statespace.hpp"

namespace hwobs {

// Input trajectory u[0..k_f-1]. Generators keep every entry inside the
// admissible set [0, v_f*rho_c]^m.
class InputSchedule {
  public:
    static InputSchedule constant(VecX u, int steps);
    static InputSchedule from_inputs(std::vector<VecX> inputs);
    // Seeded uniform draws in the admissible set, held over `dwell` steps.
    static InputSchedule random_dwell(const HighwayConfig& cfg, int steps, std::uint64_t seed,
                                      int dwell = 50);

    const VecX& at(int k) const;
    int steps() const { return static_cast<int>(inputs_.size()); }
    void extend_to(int steps); // repeat the last entry as needed

  private:
    std::vector<VecX> inputs_;
};

struct NoiseModel {
    MatX B_w;           // n x q
    MatX D_w;           // p_meas x q
    VecX std_dev;       // per-channel standard deviations, length q
    std::uint64_t seed = 0;

    // B_w = [B_u  O], D_w = [O  I] with process variance q_var on the m input
    // channels and measurement variance r_var on the p selected outputs.
    static NoiseModel input_and_measurement(const StateSpace& ss, int p_meas, double q_var,
                                            double r_var, std::uint64_t seed);
};

struct Trajectory {
    std::vector<VecX> states;       // k_f + 1 entries
    std::vector<VecX> inputs;       // k_f entries
    std::vector<VecX> measurements; // k_f entries (empty selection -> zero-length vectors)
    std::vector<VecX> disturbances; // k_f entries when noise was active
};

// Measurement y = C_tilde x (+ D_w w); rows follow the selected segments.
VecX measure(const VecX& x, const SensorSelection& sel);

Trajectory rollout(const StateSpace& ss, const VecX& x0, const InputSchedule& sched, int k_f,
                   const SensorSelection& sel, const std::optional<NoiseModel>& noise = {});

// CSV with header k, x_1..x_n, u_1..u_m, y_1..y_p; 12 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& is, int n, int m);

} // namespace hwobs
