#include "hwobs/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hwobs/config_io.hpp"
#include "hwobs/csvio.hpp"
#include "hwobs/rng.hpp"

namespace hwobs {

namespace {

using json = nlohmann::json;

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

VecX draw_state(const HighwayConfig& cfg, Rng& rng) {
    VecX x(cfg.state_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = cfg.fd.rho_m * (1.0 - rng.uniform());
    return x;
}

// Greedy extension of a selection to the target cardinality; keeps reported
// optima monotone across budgets and windows even if a solve gets capped.
SensorSelection extend_selection(const GramianTerms& terms, const SensorSelection& base, int r,
                                 Metric metric) {
    auto idx = base.indices();
    std::vector<bool> used(static_cast<std::size_t>(terms.n), false);
    for (int i : idx) used[static_cast<std::size_t>(i)] = true;
    MatX W = MatX::Zero(terms.n, terms.n);
    for (int i : idx) W += terms.W[static_cast<std::size_t>(i)];
    while (static_cast<int>(idx.size()) < r) {
        int best = -1;
        double best_val = -1.0;
        for (int i = 0; i < terms.n; ++i) {
            if (used[static_cast<std::size_t>(i)]) continue;
            const double val = metric == Metric::Trace
                                   ? terms.t[i]
                                   : geomean_det_of(W + terms.W[static_cast<std::size_t>(i)]);
            if (val > best_val + 1e-15) {
                best_val = val;
                best = i;
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        idx.push_back(best);
        W += terms.W[static_cast<std::size_t>(best)];
    }
    return SensorSelection::from_indices(terms.n, idx);
}

struct NoisyRun {
    double rmse = 0.0;
    double mu = 0.0;
    double w_inf = 0.0;
    double z_post = 0.0;
};

NoisyRun estimate_with_selection(const Scenario& sc, const StateSpace& ss,
                                 const SensorSelection& sel, const VecX& x0, const VecX& xhat0,
                                 const InputSchedule& sched, std::uint64_t noise_seed) {
    const auto noise = NoiseModel::input_and_measurement(ss, sel.r, sc.process_noise,
                                                         sc.measurement_noise, noise_seed);
    SynthesisOptions opts;
    const auto syn = synthesize(ss, sel, noise.B_w, noise.D_w, opts);
    const auto traj = rollout(ss, x0, sched, sc.k_f, sel, noise);
    const auto run = run_observer(ss, syn.L, sel, traj, xhat0);

    NoisyRun out;
    out.rmse = rmse(run.errors);
    out.mu = syn.mu;
    for (const auto& w : traj.disturbances) out.w_inf = std::max(out.w_inf, w.norm());
    const std::size_t start = run.errors.size() - run.errors.size() / 4;
    for (std::size_t k = start; k < run.errors.size(); ++k)
        out.z_post = std::max(out.z_post, opts.z_scale * run.errors[k].norm());
    return out;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, const std::string& tag) {
    std::uint64_t h = 1469598103934665603ULL ^ master;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    h ^= master >> 17;
    return h;
}

Scenario parse_scenario(const std::string& text) {
    Scenario sc;
    std::istringstream hw(text);
    sc.cfg = parse_highway_config(hw);
    sc.config_text = text;

    // Pull the [scenario] keys with a light second pass.
    std::istringstream is(text);
    std::string line, section;
    std::map<std::string, std::string> keys;
    while (std::getline(is, line)) {
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto b = line.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r\n");
        line = line.substr(b, e - b + 1);
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (section == "scenario" && eq != std::string::npos) {
            auto trim = [](std::string s) {
                const auto bb = s.find_first_not_of(" \t");
                const auto ee = s.find_last_not_of(" \t");
                return bb == std::string::npos ? std::string() : s.substr(bb, ee - bb + 1);
            };
            keys[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
    }

    const int p = sc.cfg.state_dim();
    if (keys.count("windows")) {
        sc.windows.clear();
        for (const auto& w : split_list(keys.at("windows"))) sc.windows.push_back(std::stoi(w));
    }
    if (keys.count("budgets")) {
        for (const auto& b : split_list(keys.at("budgets"))) sc.budgets.push_back(std::stoi(b));
    } else if (keys.count("budgets_pct")) {
        for (const auto& b : split_list(keys.at("budgets_pct")))
            sc.budgets.push_back(static_cast<int>(std::ceil(p * std::stod(b) / 100.0)));
    }
    if (sc.budgets.empty())
        for (int pct = 20; pct <= 90; pct += 10)
            sc.budgets.push_back(static_cast<int>(std::ceil(p * pct / 100.0)));
    if (keys.count("metrics")) {
        sc.metrics.clear();
        for (const auto& m : split_list(keys.at("metrics"))) sc.metrics.push_back(metric_from_string(m));
    }
    if (keys.count("kf")) sc.k_f = std::stoi(keys.at("kf"));
    if (keys.count("nu")) sc.process_noise = std::stod(keys.at("nu"));
    if (keys.count("r_noise")) sc.measurement_noise = std::stod(keys.at("r_noise"));
    if (keys.count("estimation_window")) sc.estimation_window = std::stoi(keys.at("estimation_window"));
    if (keys.count("dwell")) sc.input_dwell = std::stoi(keys.at("dwell"));
    if (keys.count("random_repeats")) sc.random_repeats = std::stoi(keys.at("random_repeats"));
    if (keys.count("baselines")) sc.run_baselines = keys.at("baselines") != "false";
    if (keys.count("seed")) sc.seed = std::stoull(keys.at("seed"));

    for (int r : sc.budgets)
        if (r < 1 || r > p) throw std::runtime_error("scenario budget out of range");
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open scenario file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_scenario(buf.str());
}

std::uint64_t scenario_hash(const Scenario& sc) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const std::string& s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
    };
    mix(sc.config_text);
    mix(std::to_string(sc.seed));
    return h;
}

std::vector<EstimationCell> compare_baselines(const Scenario& sc, const StateSpace& ss,
                                              const VecX& x0, const VecX& xhat0,
                                              const InputSchedule& sched,
                                              std::vector<CellFailure>* failures) {
    std::vector<EstimationCell> table;
    const int p = ss.n();
    const int N = sc.estimation_window;
    const auto terms = make_gramian_terms(ss, xhat0, sched, N);

    for (int r : sc.budgets) {
        // Optimal placements, one per scenario metric.
        for (Metric metric : sc.metrics) {
            const auto t0 = std::chrono::steady_clock::now();
            EstimationCell cell;
            cell.placement = to_string(metric);
            cell.r = r;
            try {
                const auto sel = metric == Metric::Trace ? solve_trace_exact(terms, r).gamma_star
                                                         : solve_bnb(terms, metric, r).gamma_star;
                const auto run = estimate_with_selection(sc, ss, sel, x0, xhat0, sched,
                                                         derive_seed(sc.seed, "noise-opt"));
                cell.rmse = run.rmse;
                cell.mu = run.mu;
                cell.w_inf = run.w_inf;
                cell.z_post = run.z_post;
                cell.bound_ok = run.z_post <= run.mu * run.w_inf;
                cell.wall_ms = wall_ms_since(t0);
                table.push_back(cell);
            } catch (const std::exception& ex) {
                if (failures)
                    failures->push_back({"baseline-" + cell.placement + "-r" + std::to_string(r),
                                         ex.what()});
            }
        }

        const auto t1 = std::chrono::steady_clock::now();
        EstimationCell uni;
        uni.placement = "uniform";
        uni.r = r;
        try {
            const auto run = estimate_with_selection(sc, ss, baseline_uniform(p, r), x0, xhat0,
                                                     sched, derive_seed(sc.seed, "noise-uni"));
            uni.rmse = run.rmse;
            uni.mu = run.mu;
            uni.w_inf = run.w_inf;
            uni.z_post = run.z_post;
            uni.bound_ok = run.z_post <= run.mu * run.w_inf;
            uni.wall_ms = wall_ms_since(t1);
            table.push_back(uni);
        } catch (const std::exception& ex) {
            if (failures) failures->push_back({"baseline-uniform-r" + std::to_string(r), ex.what()});
        }

        const auto t2 = std::chrono::steady_clock::now();
        EstimationCell rnd;
        rnd.placement = "random";
        rnd.r = r;
        double sum = 0.0;
        int ok = 0;
        for (int rep = 0; rep < sc.random_repeats; ++rep) {
            const std::string tag = "random-r" + std::to_string(r) + "-rep" + std::to_string(rep);
            try {
                const auto sel = baseline_random(p, r, derive_seed(sc.seed, tag));
                const auto run =
                    estimate_with_selection(sc, ss, sel, x0, xhat0, sched, derive_seed(sc.seed, tag + "-noise"));
                sum += run.rmse;
                ++ok;
            } catch (const std::exception& ex) {
                if (failures) failures->push_back({"baseline-" + tag, ex.what()});
            }
        }
        if (ok > 0) {
            rnd.rmse = sum / ok;
            rnd.repeats = ok;
            rnd.wall_ms = wall_ms_since(t2);
            table.push_back(rnd);
        }
    }
    return table;
}

ExperimentResult run_experiment(const Scenario& sc, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    ExperimentResult result;
    result.hash = scenario_hash(sc);
    const std::string hash_hex = [&] {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(result.hash));
        return std::string(buf);
    }();

    const auto ss = build_state_space(sc.cfg);
    const int p = ss.n();

    Rng state_rng(derive_seed(sc.seed, "states"));
    const VecX x0 = draw_state(sc.cfg, state_rng);
    const VecX xhat0 = draw_state(sc.cfg, state_rng);

    const int sched_len = std::max(sc.k_f, *std::max_element(sc.windows.begin(), sc.windows.end()));
    auto sched = InputSchedule::random_dwell(sc.cfg, std::max(sched_len, sc.estimation_window),
                                             derive_seed(sc.seed, "inputs"), sc.input_dwell);

    // Placement and initial-state recovery over (metric, r, N).
    std::map<int, GramianTerms> terms_by_window;
    for (int N : sc.windows) terms_by_window.emplace(N, make_gramian_terms(ss, xhat0, sched, N));

    for (Metric metric : sc.metrics) {
        std::map<int, SensorSelection> prev_by_window; // warm starts across budgets
        for (int r : sc.budgets) {
            SensorSelection prev_window_sel;
            for (int N : sc.windows) {
                const auto& terms = terms_by_window.at(N);
                const auto t0 = std::chrono::steady_clock::now();
                PlacementCell cell;
                cell.metric = metric;
                cell.r = r;
                cell.window = N;
                try {
                    PlacementResult pres;
                    if (metric == Metric::Trace) {
                        pres = solve_trace_exact(terms, r);
                    } else {
                        BnbOptions opts;
                        // Seed the incumbent with the previous budget's set
                        // (extended) and the previous window's set, so the
                        // reported optima stay monotone even when capped.
                        if (prev_by_window.count(N))
                            opts.incumbent = extend_selection(terms, prev_by_window.at(N), r, metric);
                        if (prev_window_sel.p() == p) {
                            const double v = metric_value(terms, prev_window_sel, metric);
                            if (!opts.incumbent ||
                                v > metric_value(terms, *opts.incumbent, metric))
                                opts.incumbent = prev_window_sel;
                        }
                        pres = solve_bnb(terms, metric, r, opts);
                    }
                    cell.kappa = pres.kappa;
                    cell.nodes = pres.node_count;
                    cell.capped = pres.status == PlacementResult::Status::IterationCapped;
                    cell.selection = pres.gamma_star;
                    prev_by_window[N] = pres.gamma_star;
                    prev_window_sel = pres.gamma_star;

                    LsqProblem lsq;
                    lsq.gamma = pres.gamma_star;
                    lsq.y_tilde = measurement_window(ss, x0, sched, N, pres.gamma_star);
                    lsq.guess = xhat0;
                    const auto fit = solve_p3(ss, lsq, sched);
                    cell.zeta = relative_error(fit.x0, x0);
                    cell.lsq_iterations = fit.iterations;
                    cell.wall_ms = wall_ms_since(t0);
                    result.placements.push_back(cell);
                } catch (const std::exception& ex) {
                    result.failures.push_back({"placement-" + to_string(metric) + "-r" +
                                                   std::to_string(r) + "-N" + std::to_string(N),
                                               ex.what()});
                }
            }
        }
    }

    // Noisy estimation per budget (fig5) plus baselines (fig8).
    for (Metric metric : sc.metrics) {
        const auto& terms = terms_by_window.count(sc.estimation_window)
                                ? terms_by_window.at(sc.estimation_window)
                                : terms_by_window.begin()->second;
        for (int r : sc.budgets) {
            const auto t0 = std::chrono::steady_clock::now();
            EstimationCell cell;
            cell.placement = to_string(metric);
            cell.r = r;
            try {
                const auto sel = metric == Metric::Trace ? solve_trace_exact(terms, r).gamma_star
                                                         : solve_bnb(terms, metric, r).gamma_star;
                const auto run = estimate_with_selection(sc, ss, sel, x0, xhat0, sched,
                                                         derive_seed(sc.seed, "fig5"));
                cell.rmse = run.rmse;
                cell.mu = run.mu;
                cell.w_inf = run.w_inf;
                cell.z_post = run.z_post;
                cell.bound_ok = run.z_post <= run.mu * run.w_inf;
                cell.wall_ms = wall_ms_since(t0);
                result.estimations.push_back(cell);
            } catch (const std::exception& ex) {
                result.failures.push_back(
                    {"estimation-" + to_string(metric) + "-r" + std::to_string(r), ex.what()});
            }
        }
    }

    std::vector<EstimationCell> baseline_table;
    if (sc.run_baselines)
        baseline_table = compare_baselines(sc, ss, x0, xhat0, sched, &result.failures);

    // ---- CSV sinks -------------------------------------------------------
    const std::string seed_str = std::to_string(sc.seed);
    {
        std::ofstream f(fs::path(out_dir) / "fig3a_zeta.csv");
        f << "scenario,seed,metric,r,window,zeta,lsq_iterations\n";
        for (const auto& c : result.placements)
            f << hash_hex << "," << seed_str << "," << to_string(c.metric) << "," << c.r << ","
              << c.window << "," << format_double(c.zeta) << "," << c.lsq_iterations << "\n";
    }
    {
        std::ofstream f(fs::path(out_dir) / "fig3b_kappa.csv");
        f << "scenario,seed,metric,r,window,kappa,nodes,capped\n";
        for (const auto& c : result.placements)
            f << hash_hex << "," << seed_str << "," << to_string(c.metric) << "," << c.r << ","
              << c.window << "," << format_double(c.kappa) << "," << c.nodes << ","
              << (c.capped ? 1 : 0) << "\n";
    }
    {
        std::ofstream f(fs::path(out_dir) / "fig5_rmse.csv");
        f << "scenario,seed,metric,r,rmse,mu,w_inf,z_post,bound_ok\n";
        for (const auto& c : result.estimations)
            f << hash_hex << "," << seed_str << "," << c.placement << "," << c.r << ","
              << format_double(c.rmse) << "," << format_double(c.mu) << ","
              << format_double(c.w_inf) << "," << format_double(c.z_post) << ","
              << (c.bound_ok ? 1 : 0) << "\n";
    }
    {
        std::ofstream f(fs::path(out_dir) / "fig8_compare.csv");
        f << "scenario,seed,placement,r,rmse,repeats\n";
        for (const auto& c : baseline_table)
            f << hash_hex << "," << seed_str << "," << c.placement << "," << c.r << ","
              << format_double(c.rmse) << "," << c.repeats << "\n";
    }
    {
        json manifest;
        manifest["scenario_hash"] = hash_hex;
        manifest["seed"] = sc.seed;
        manifest["state_dim"] = p;
        manifest["windows"] = sc.windows;
        manifest["budgets"] = sc.budgets;
        manifest["k_f"] = sc.k_f;
        manifest["outputs"] = {"fig3a_zeta.csv", "fig3b_kappa.csv", "fig5_rmse.csv",
                               "fig8_compare.csv"};
        json fails = json::array();
        for (const auto& f : result.failures) fails.push_back({{"cell", f.cell}, {"error", f.message}});
        manifest["failures"] = fails;
        manifest["config"] = sc.config_text;
        std::ofstream f(fs::path(out_dir) / "manifest.json");
        f << manifest.dump(2) << "\n";
    }

    for (const auto& c : baseline_table) result.estimations.push_back(c);
    return result;
}

} // namespace hwobs
