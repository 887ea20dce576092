#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "hwobs/config_io.hpp"
#include "hwobs/csvio.hpp"
#include "hwobs/experiment.hpp"
#include "hwobs/rng.hpp"

using namespace hwobs;
using json = nlohmann::json;

namespace {

VecX draw_state(const HighwayConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    VecX x(cfg.state_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = cfg.fd.rho_m * (1.0 - rng.uniform());
    return x;
}

// Accepts a 0/1 mask line, a list of segment indices (1-based), or the
// output of `place` (a header containing segment_index).
SensorSelection read_gamma_csv(const std::string& path, int p) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open gamma file: " + path);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    if (rows.empty()) throw std::runtime_error("gamma file is empty");

    int seg_col = -1;
    for (std::size_t c = 0; c < rows[0].size(); ++c)
        if (rows[0][c] == "segment_index") seg_col = static_cast<int>(c);
    std::vector<int> idx;
    if (seg_col >= 0) {
        for (std::size_t r = 1; r < rows.size(); ++r)
            idx.push_back(std::stoi(rows[r][static_cast<std::size_t>(seg_col)]) - 1);
        return SensorSelection::from_indices(p, idx);
    }

    std::vector<double> vals;
    for (const auto& row : rows)
        for (const auto& cell : row)
            if (!cell.empty()) vals.push_back(std::stod(cell));
    const bool is_mask = static_cast<int>(vals.size()) == p &&
                         std::all_of(vals.begin(), vals.end(),
                                     [](double v) { return v == 0.0 || v == 1.0; });
    if (is_mask) {
        VecXi gamma(p);
        for (int i = 0; i < p; ++i) gamma[i] = static_cast<int>(vals[static_cast<std::size_t>(i)]);
        return SensorSelection::from_mask(gamma);
    }
    for (double v : vals) idx.push_back(static_cast<int>(v) - 1);
    return SensorSelection::from_indices(p, idx);
}

void write_matrix_csv(const std::string& path, const MatX& M) {
    std::ofstream f(path);
    for (int r = 0; r < M.rows(); ++r) {
        for (int c = 0; c < M.cols(); ++c) f << (c ? "," : "") << format_double(M(r, c));
        f << "\n";
    }
}

int cmd_build(const std::string& config, const std::string& out) {
    const auto cfg = load_highway_config(config);
    for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << "\n";
    const auto ss = build_state_space(cfg);
    std::cout << "states " << ss.n() << ", inputs " << ss.m() << ", nonlinearity size " << ss.g()
              << "\n";
    std::cout << "CFL v_f*T/l = " << format_double(cfg.fd.v_f * cfg.topo.T / cfg.topo.l) << "\n";
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        write_matrix_csv(out + "/A.csv", ss.A);
        write_matrix_csv(out + "/G.csv", ss.G);
        write_matrix_csv(out + "/B_u.csv", ss.B_u);
        std::cout << "wrote A.csv, G.csv, B_u.csv to " << out << "\n";
    }
    return 0;
}

int cmd_simulate(const std::string& config, int k_f, std::uint64_t seed, int dwell,
                 const std::string& gamma_path, double nu, double r_noise,
                 const std::string& out) {
    const auto cfg = load_highway_config(config);
    const auto ss = build_state_space(cfg);
    const auto sel = gamma_path.empty() ? SensorSelection::all(ss.n())
                                        : read_gamma_csv(gamma_path, ss.n());
    const auto sched = InputSchedule::random_dwell(cfg, k_f, derive_seed(seed, "inputs"), dwell);
    const VecX x0 = draw_state(cfg, derive_seed(seed, "x0"));
    std::optional<NoiseModel> noise;
    if (nu > 0.0 || r_noise > 0.0)
        noise = NoiseModel::input_and_measurement(ss, sel.r, nu, r_noise, derive_seed(seed, "noise"));
    const auto traj = rollout(ss, x0, sched, k_f, sel, noise);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open output file: " + out);
    write_trajectory_csv(f, traj);
    std::cout << "wrote " << traj.states.size() << " states to " << out << "\n";
    return 0;
}

int cmd_place(const std::string& config, const std::string& metric_name, int budget, int window,
              const std::string& costs_path, double weight, std::uint64_t seed,
              const std::string& out, const std::string& gramian_out) {
    const auto cfg = load_highway_config(config);
    const auto ss = build_state_space(cfg);
    const Metric metric = metric_from_string(metric_name);
    const auto sched =
        InputSchedule::random_dwell(cfg, window, derive_seed(seed, "inputs"), 50);
    const VecX xhat0 = draw_state(cfg, derive_seed(seed, "xhat0"));
    const auto terms = make_gramian_terms(ss, xhat0, sched, window);

    PlacementResult res;
    if (!costs_path.empty()) {
        std::ifstream cf(costs_path);
        if (!cf) throw std::runtime_error("cannot open costs file: " + costs_path);
        VecX costs(ss.n());
        for (int i = 0; i < ss.n(); ++i)
            if (!(cf >> costs[i])) throw std::runtime_error("costs file needs one entry per segment");
        res = solve_p4(terms, budget, costs, weight);
    } else if (metric == Metric::Trace) {
        res = solve_trace_exact(terms, budget);
    } else {
        res = solve_bnb(terms, metric, budget);
    }

    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open output file: " + out);
    f << "rank,segment_index,contribution\n";
    // Rank by single-sensor trace contribution within the chosen set; for
    // the determinant metric this is the natural reporting order as well.
    auto idx = res.gamma_star.indices();
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return terms.t[a] > terms.t[b]; });
    for (std::size_t k = 0; k < idx.size(); ++k)
        f << (k + 1) << "," << (idx[k] + 1) << "," << format_double(terms.t[idx[k]]) << "\n";
    std::cout << "metric " << to_string(metric) << ", objective " << format_double(res.kappa)
              << ", nodes " << res.node_count << "\n";

    if (!gramian_out.empty()) {
        MatX W = MatX::Zero(ss.n(), ss.n());
        for (int i : res.gamma_star.indices()) W += terms.W[static_cast<std::size_t>(i)];
        W = 0.5 * (W + W.transpose());
        write_matrix_csv(gramian_out, W);
        json m;
        m["trace"] = W.trace();
        m["geomean_det"] = geomean_det_of(W);
        m["window"] = window;
        m["budget"] = budget;
        m["metric"] = to_string(metric);
        std::ofstream mf(gramian_out + ".metrics.json");
        mf << m.dump(2) << "\n";
        std::cout << "wrote Gramian to " << gramian_out << "\n";
    }
    return 0;
}

int cmd_estimate_init(const std::string& config, const std::string& gamma_path, int window,
                      const std::string& truth_path, std::uint64_t seed, const std::string& out) {
    const auto cfg = load_highway_config(config);
    const auto ss = build_state_space(cfg);
    const auto sel = read_gamma_csv(gamma_path, ss.n());

    std::ifstream tf(truth_path);
    if (!tf) throw std::runtime_error("cannot open truth trajectory: " + truth_path);
    const auto traj = read_trajectory_csv(tf, ss.n(), ss.m());
    if (static_cast<int>(traj.states.size()) < window)
        throw std::runtime_error("truth trajectory shorter than the window");
    if (traj.inputs.empty()) throw std::runtime_error("truth trajectory lacks input columns");

    const auto sched = InputSchedule::from_inputs(traj.inputs);
    LsqProblem prob;
    prob.gamma = sel;
    for (int k = 0; k < window; ++k) prob.y_tilde.push_back(measure(traj.states[static_cast<std::size_t>(k)], sel));
    prob.guess = draw_state(cfg, derive_seed(seed, "guess"));
    const auto res = solve_p3(ss, prob, sched);

    json j;
    j["x0"] = std::vector<double>(res.x0.data(), res.x0.data() + res.x0.size());
    j["zeta"] = relative_error(res.x0, traj.states.front());
    j["iterations"] = res.iterations;
    j["residual"] = res.cost;
    j["gradient_norm"] = res.gradient_norm;
    j["converged"] = res.converged;
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open output file: " + out);
    f << j.dump(2) << "\n";
    std::cout << "zeta " << format_double(j["zeta"].get<double>()) << ", iterations "
              << res.iterations << "\n";
    return 0;
}

int cmd_observe(const std::string& config, const std::string& gamma_path,
                const std::string& traj_path, double nu, double r_noise, const std::string& out) {
    const auto cfg = load_highway_config(config);
    const auto ss = build_state_space(cfg);
    const auto sel = read_gamma_csv(gamma_path, ss.n());

    std::ifstream tf(traj_path);
    if (!tf) throw std::runtime_error("cannot open trajectory: " + traj_path);
    auto traj = read_trajectory_csv(tf, ss.n(), ss.m());
    if (traj.inputs.empty()) throw std::runtime_error("trajectory lacks input columns");
    if (traj.measurements.empty() ||
        traj.measurements.front().size() != sel.r) {
        traj.measurements.clear();
        for (std::size_t k = 0; k + 1 < traj.states.size(); ++k)
            traj.measurements.push_back(measure(traj.states[k], sel));
    }
    traj.inputs.resize(traj.states.size() - 1);
    traj.measurements.resize(traj.states.size() - 1);

    const auto noise = NoiseModel::input_and_measurement(ss, sel.r, nu, r_noise, 0);
    SynthesisOptions opts;
    const auto syn = synthesize(ss, sel, noise.B_w, noise.D_w, opts);
    const VecX xhat0 = VecX::Constant(ss.n(), 0.5 * cfg.fd.rho_m);
    const auto run = run_observer(ss, syn.L, sel, traj, xhat0);

    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open output file: " + out);
    f << "k,e_norm,z_norm\n";
    for (std::size_t k = 0; k < run.errors.size(); ++k)
        f << k << "," << format_double(run.errors[k].norm()) << ","
          << format_double(opts.z_scale * run.errors[k].norm()) << "\n";

    json cert;
    cert["mu"] = syn.mu;
    cert["alpha"] = syn.alpha;
    cert["eps"] = syn.eps;
    cert["mu0"] = syn.mu0;
    cert["mu1"] = syn.mu1;
    cert["mu2"] = syn.mu2;
    cert["gamma"] = syn.gamma_used;
    cert["lumped_nonlinearity"] = syn.lumped;
    cert["lmi_eig_13b"] = syn.lmi_eig_13b;
    cert["lmi_eig_13c"] = syn.lmi_eig_13c;
    std::ofstream cf(out + ".cert.json");
    cf << cert.dump(2) << "\n";
    std::cout << "mu " << format_double(syn.mu) << " (alpha " << format_double(syn.alpha)
              << "), wrote " << out << "\n";
    return 0;
}

int cmd_experiment(const std::string& config, std::uint64_t seed, const std::string& out) {
    auto sc = load_scenario(config);
    sc.seed = seed;
    const auto result = run_experiment(sc, out);
    std::cout << "experiment " << (result.all_ok() ? "completed" : "completed with failures")
              << "; placements " << result.placements.size() << ", estimations "
              << result.estimations.size() << "\n";
    for (const auto& f : result.failures)
        std::cerr << "cell " << f.cell << " failed: " << f.message << "\n";
    return result.all_ok() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Highway traffic observability toolkit: ACTM simulation, Gramian sensor "
                 "placement and robust density estimation"};
    app.require_subcommand(1);

    std::string config, out, gamma_path, truth_path, costs_path, gramian_out, metric = "trace";
    std::uint64_t seed = 1;
    int k_f = 2000, window = 200, budget = 5, dwell = 50;
    double nu = 0.0, r_noise = 0.0, weight = 0.0;

    auto* build = app.add_subcommand("build", "validate a highway config and export matrices");
    build->add_option("--config", config)->required();
    build->add_option("--out", out);

    auto* simulate = app.add_subcommand("simulate", "roll out a trajectory to CSV");
    simulate->add_option("--config", config)->required();
    simulate->add_option("--kf", k_f);
    simulate->add_option("--seed", seed);
    simulate->add_option("--dwell", dwell);
    simulate->add_option("--gamma", gamma_path);
    simulate->add_option("--nu", nu);
    simulate->add_option("--r-noise", r_noise);
    simulate->add_option("--out", out)->required();

    auto* place = app.add_subcommand("place", "solve the sensor placement problem");
    place->add_option("--config", config)->required();
    place->add_option("--metric", metric)->check(CLI::IsMember({"trace", "det"}));
    place->add_option("--budget", budget)->required();
    place->add_option("--window", window);
    place->add_option("--costs", costs_path);
    place->add_option("--weight", weight);
    place->add_option("--seed", seed);
    place->add_option("--gramian", gramian_out);
    place->add_option("--out", out)->required();

    auto* estimate = app.add_subcommand("estimate-init", "recover the initial state from a window");
    estimate->add_option("--config", config)->required();
    estimate->add_option("--gamma", gamma_path)->required();
    estimate->add_option("--window", window);
    estimate->add_option("--truth", truth_path)->required();
    estimate->add_option("--seed", seed);
    estimate->add_option("--out", out)->required();

    auto* observe = app.add_subcommand("observe", "synthesize and run the robust observer");
    observe->add_option("--config", config)->required();
    observe->add_option("--gamma", gamma_path)->required();
    observe->add_option("--trajectory", truth_path)->required();
    observe->add_option("--nu", nu);
    observe->add_option("--r-noise", r_noise);
    observe->add_option("--out", out)->required();

    auto* experiment = app.add_subcommand("experiment", "run a full case-study scenario");
    experiment->add_option("--config", config)->required();
    experiment->add_option("--seed", seed);
    experiment->add_option("--out", out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) return cmd_build(config, out);
        if (simulate->parsed()) return cmd_simulate(config, k_f, seed, dwell, gamma_path, nu, r_noise, out);
        if (place->parsed())
            return cmd_place(config, metric, budget, window, costs_path, weight, seed, out,
                             gramian_out);
        if (estimate->parsed())
            return cmd_estimate_init(config, gamma_path, window, truth_path, seed, out);
        if (observe->parsed()) return cmd_observe(config, gamma_path, truth_path, nu, r_noise, out);
        if (experiment->parsed()) return cmd_experiment(config, seed, out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
