#include "hwobs/simulate.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "hwobs/csvio.hpp"
#include "hwobs/rng.hpp"

namespace hwobs {

InputSchedule InputSchedule::constant(VecX u, int steps) {
    InputSchedule s;
    s.inputs_.assign(static_cast<std::size_t>(steps), std::move(u));
    return s;
}

InputSchedule InputSchedule::from_inputs(std::vector<VecX> inputs) {
    InputSchedule s;
    s.inputs_ = std::move(inputs);
    return s;
}

InputSchedule InputSchedule::random_dwell(const HighwayConfig& cfg, int steps, std::uint64_t seed,
                                          int dwell) {
    if (dwell < 1) throw std::invalid_argument("dwell must be positive");
    InputSchedule s;
    Rng rng(seed);
    const double cap = cfg.fd.v_f * cfg.fd.rho_c;
    VecX u = VecX::Zero(cfg.input_dim());
    for (int k = 0; k < steps; ++k) {
        if (k % dwell == 0)
            for (int j = 0; j < u.size(); ++j) u[j] = rng.uniform(0.0, cap);
        s.inputs_.push_back(u);
    }
    return s;
}

const VecX& InputSchedule::at(int k) const {
    if (k < 0 || k >= steps()) throw std::out_of_range("input schedule index out of range");
    return inputs_[static_cast<std::size_t>(k)];
}

void InputSchedule::extend_to(int steps) {
    if (inputs_.empty()) throw std::logic_error("cannot extend an empty schedule");
    while (static_cast<int>(inputs_.size()) < steps) inputs_.push_back(inputs_.back());
}

NoiseModel NoiseModel::input_and_measurement(const StateSpace& ss, int p_meas, double q_var,
                                             double r_var, std::uint64_t seed) {
    const int n = ss.n();
    const int m = ss.m();
    const int q = m + p_meas;
    NoiseModel nm;
    nm.B_w = MatX::Zero(n, q);
    nm.B_w.leftCols(m) = ss.B_u;
    nm.D_w = MatX::Zero(p_meas, q);
    nm.D_w.rightCols(p_meas) = MatX::Identity(p_meas, p_meas);
    nm.std_dev = VecX::Zero(q);
    nm.std_dev.head(m).setConstant(std::sqrt(q_var));
    nm.std_dev.tail(p_meas).setConstant(std::sqrt(r_var));
    nm.seed = seed;
    return nm;
}

VecX measure(const VecX& x, const SensorSelection& sel) {
    const auto idx = sel.indices();
    VecX y(static_cast<int>(idx.size()));
    for (int k = 0; k < y.size(); ++k) y[k] = x[idx[k]];
    return y;
}

Trajectory rollout(const StateSpace& ss, const VecX& x0, const InputSchedule& sched, int k_f,
                   const SensorSelection& sel, const std::optional<NoiseModel>& noise) {
    if (x0.size() != ss.n()) throw std::invalid_argument("rollout: x0 has wrong dimension");
    if (sched.steps() < k_f) throw std::invalid_argument("rollout: schedule shorter than horizon");
    if (noise) {
        if (noise->B_w.rows() != ss.n() || noise->D_w.rows() != sel.r ||
            noise->B_w.cols() != noise->D_w.cols() || noise->std_dev.size() != noise->B_w.cols())
            throw std::invalid_argument("rollout: noise model dimensions inconsistent");
    }

    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(k_f) + 1);
    traj.states.push_back(x0);
    Rng rng(noise ? noise->seed : 0);

    for (int k = 0; k < k_f; ++k) {
        const VecX& u = sched.at(k);
        const VecX& x = traj.states.back();
        VecX y = measure(x, sel);
        VecX x_next = step_compact(ss, x, u);
        if (noise) {
            VecX w(noise->std_dev.size());
            for (int j = 0; j < w.size(); ++j) w[j] = noise->std_dev[j] * rng.normal();
            x_next += noise->B_w * w;
            y += noise->D_w * w;
            traj.disturbances.push_back(std::move(w));
        }
        traj.inputs.push_back(u);
        traj.measurements.push_back(std::move(y));
        traj.states.push_back(std::move(x_next));
    }
    return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const int n = traj.states.empty() ? 0 : static_cast<int>(traj.states.front().size());
    const int m = traj.inputs.empty() ? 0 : static_cast<int>(traj.inputs.front().size());
    const int p = traj.measurements.empty() ? 0 : static_cast<int>(traj.measurements.front().size());

    os << "k";
    for (int i = 1; i <= n; ++i) os << ",x_" << i;
    for (int i = 1; i <= m; ++i) os << ",u_" << i;
    for (int i = 1; i <= p; ++i) os << ",y_" << i;
    os << "\n";

    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        os << k;
        for (int i = 0; i < n; ++i) os << "," << format_double(traj.states[k][i]);
        for (int i = 0; i < m; ++i)
            os << "," << (k < traj.inputs.size() ? format_double(traj.inputs[k][i]) : "");
        for (int i = 0; i < p; ++i)
            os << "," << (k < traj.measurements.size() ? format_double(traj.measurements[k][i]) : "");
        os << "\n";
    }
}

Trajectory read_trajectory_csv(std::istream& is, int n, int m) {
    Trajectory traj;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("trajectory CSV is empty");
    int columns = 1;
    for (char c : line) columns += (c == ',');
    const int p = columns - 1 - n - m;
    if (p < 0) throw std::runtime_error("trajectory CSV has fewer columns than n + m + 1");

    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        cells.resize(static_cast<std::size_t>(columns));

        VecX x(n), u(m), y(p);
        for (int i = 0; i < n; ++i) x[i] = std::stod(cells[static_cast<std::size_t>(1 + i)]);
        bool has_u = m > 0 && !cells[static_cast<std::size_t>(1 + n)].empty();
        for (int i = 0; i < m && has_u; ++i) u[i] = std::stod(cells[static_cast<std::size_t>(1 + n + i)]);
        bool has_y = p > 0 && !cells[static_cast<std::size_t>(1 + n + m)].empty();
        for (int i = 0; i < p && has_y; ++i)
            y[i] = std::stod(cells[static_cast<std::size_t>(1 + n + m + i)]);

        traj.states.push_back(x);
        if (has_u) traj.inputs.push_back(u);
        if (has_y) traj.measurements.push_back(y);
    }
    return traj;
}

} // namespace hwobs
