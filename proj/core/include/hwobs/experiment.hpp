#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hwobs/estimate.hpp"
#include "hwobs/observer.hpp"
#include "hwobs/placement.hpp"

namespace hwobs {

// One case-study recipe: which highway, windows, budgets, metrics, noise
// levels and seeds to sweep. Parsed from the same sectioned text format as
// the highway configuration, plus a [scenario] section.
struct Scenario {
    HighwayConfig cfg;
    std::vector<int> windows{200};
    std::vector<int> budgets;          // absolute sensor counts
    std::vector<Metric> metrics{Metric::Trace, Metric::GeomeanDet};
    double process_noise = 1e-3;       // Q = nu I on the input channels
    double measurement_noise = 1e-3;   // R = nu I on the selected outputs
    int k_f = 2000;
    int estimation_window = 200;       // window used for the observer stage
    int input_dwell = 50;
    int random_repeats = 10;
    bool run_baselines = true;
    std::uint64_t seed = 1;
    std::string config_text;           // canonical text, hashed for provenance
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

// FNV-1a of the canonical scenario text and seed; stamped on every CSV row.
std::uint64_t scenario_hash(const Scenario& sc);

struct CellFailure {
    std::string cell;
    std::string message;
};

struct PlacementCell {
    Metric metric;
    int r = 0;
    int window = 0;
    double kappa = 0.0;
    long nodes = 0;
    bool capped = false;
    double zeta = 0.0;
    int lsq_iterations = 0;
    double wall_ms = 0.0;
    SensorSelection selection;
};

struct EstimationCell {
    std::string placement; // trace | det | uniform | random
    int r = 0;
    double rmse = 0.0;
    double mu = 0.0;
    double w_inf = 0.0;
    double z_post = 0.0; // post-transient sup ||Z e||
    bool bound_ok = false;
    int repeats = 1;
    double wall_ms = 0.0;
};

struct ExperimentResult {
    std::vector<PlacementCell> placements;
    std::vector<EstimationCell> estimations;
    std::vector<CellFailure> failures;
    std::uint64_t hash = 0;

    bool all_ok() const { return failures.empty(); }
};

// Full pipeline: placement and initial-state recovery over the window and
// budget grids, observer synthesis and noisy estimation per budget, and the
// uniform/randomized baseline comparison. Writes fig3a_zeta.csv,
// fig3b_kappa.csv, fig5_rmse.csv, fig8_compare.csv and manifest.json into
// out_dir; returns the collected tables.
ExperimentResult run_experiment(const Scenario& sc, const std::string& out_dir);

// The baseline table only (optimal vs randomized vs uniform placements).
std::vector<EstimationCell> compare_baselines(const Scenario& sc, const StateSpace& ss,
                                              const VecX& x0, const VecX& xhat0,
                                              const InputSchedule& sched,
                                              std::vector<CellFailure>* failures);

// Deterministic sub-seed derivation for a named stage.
std::uint64_t derive_seed(std::uint64_t master, const std::string& tag);

} // namespace hwobs
