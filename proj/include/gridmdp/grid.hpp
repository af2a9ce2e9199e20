#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridmdp/csv.hpp"
#include "gridmdp/util.hpp"

namespace gridmdp {

struct Bus {
    int id = 0;             // 1-based, slack = 1
    double p_load_mw = 0;   // nominal active load
    double q_load_mvar = 0; // nominal reactive load
    double v_min = 0.95;    // per-unit
    double v_max = 1.05;
};

struct Line {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    double r_ohm = 0;
    double x_ohm = 0;
    double i_max_a = 0; // RMS ampere limit
};

struct GridParams {
    double slack_voltage_pu = 1.05;
    double base_kv = 12.66;    // line-to-line
    double base_mva = 100.0;
    double s_slack_max_mva = 4.0;
    double v_min_pu = 0.95;
    double v_max_pu = 1.05;
};

/// Radial feeder rooted at the slack bus. Immutable after load; the
/// traversal order and per-unit line impedances are precomputed so that
/// many power flows can run concurrently against one model.
class NetworkModel {
public:
    NetworkModel(std::vector<Bus> buses, std::vector<Line> lines, GridParams params)
        : buses_(std::move(buses)), lines_(std::move(lines)), params_(params) {
        validate_and_index();
    }

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Line>& lines() const { return lines_; }
    const GridParams& params() const { return params_; }
    int num_buses() const { return static_cast<int>(buses_.size()); }
    int num_lines() const { return static_cast<int>(lines_.size()); }

    /// Position of a bus id in the buses() vector.
    int bus_pos(int bus_id) const {
        for (std::size_t i = 0; i < buses_.size(); ++i)
            if (buses_[i].id == bus_id) return static_cast<int>(i);
        throw DataError("unknown bus id " + std::to_string(bus_id));
    }

    double total_load_mw() const {
        double s = 0;
        for (const auto& b : buses_) s += b.p_load_mw;
        return s;
    }
    double total_load_mvar() const {
        double s = 0;
        for (const auto& b : buses_) s += b.q_load_mvar;
        return s;
    }

    double z_base_ohm() const { return params_.base_kv * params_.base_kv / params_.base_mva; }
    /// Three-phase ampere base: S_base / (sqrt(3) * V_LL).
    double i_base_a() const { return params_.base_mva * 1e6 / (std::sqrt(3.0) * params_.base_kv * 1e3); }

    // Lines ordered root -> leaves; line k connects parent(bus) to bus.
    const std::vector<int>& sweep_order() const { return sweep_order_; }
    int line_child_pos(int line_idx) const { return line_child_pos_[static_cast<std::size_t>(line_idx)]; }
    int line_parent_pos(int line_idx) const { return line_parent_pos_[static_cast<std::size_t>(line_idx)]; }

private:
    void validate_and_index() {
        if (buses_.empty()) throw DataError("network has no buses");
        std::vector<int> seen;
        for (const auto& b : buses_) {
            if (std::find(seen.begin(), seen.end(), b.id) != seen.end())
                throw DataError("duplicate bus id " + std::to_string(b.id));
            seen.push_back(b.id);
            if (b.v_min >= b.v_max) throw DataError("bus " + std::to_string(b.id) + ": v_min >= v_max");
            if (b.p_load_mw < 0) throw DataError("bus " + std::to_string(b.id) + ": negative load");
        }
        if (std::find(seen.begin(), seen.end(), 1) == seen.end())
            throw DataError("missing slack: no bus with id 1");
        int slack = bus_pos(1);
        if (buses_[static_cast<std::size_t>(slack)].p_load_mw != 0 ||
            buses_[static_cast<std::size_t>(slack)].q_load_mvar != 0)
            throw DataError("slack bus must carry zero load");

        if (lines_.size() + 1 != buses_.size())
            throw DataError("topology-not-radial: " + std::to_string(lines_.size()) + " lines for " +
                            std::to_string(buses_.size()) + " buses");
        for (const auto& l : lines_) {
            if (l.i_max_a <= 0) throw DataError("line " + std::to_string(l.id) + ": i_max must be positive");
            if (l.r_ohm < 0) throw DataError("line " + std::to_string(l.id) + ": negative resistance");
        }

        // BFS from slack; every bus must be reached through exactly one line.
        int n = num_buses();
        std::vector<bool> visited(static_cast<std::size_t>(n), false);
        visited[static_cast<std::size_t>(slack)] = true;
        std::vector<int> queue{slack};
        std::vector<bool> line_used(lines_.size(), false);
        sweep_order_.clear();
        line_parent_pos_.assign(lines_.size(), -1);
        line_child_pos_.assign(lines_.size(), -1);
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            int u = queue[qi];
            int u_id = buses_[static_cast<std::size_t>(u)].id;
            for (std::size_t li = 0; li < lines_.size(); ++li) {
                if (line_used[li]) continue;
                const Line& l = lines_[li];
                int other_id = -1;
                if (l.from_bus == u_id) other_id = l.to_bus;
                else if (l.to_bus == u_id) other_id = l.from_bus;
                else continue;
                int v = bus_pos(other_id);
                if (visited[static_cast<std::size_t>(v)])
                    throw DataError("topology-not-radial: cycle through line " + std::to_string(l.id));
                visited[static_cast<std::size_t>(v)] = true;
                line_used[li] = true;
                sweep_order_.push_back(static_cast<int>(li));
                line_parent_pos_[li] = u;
                line_child_pos_[li] = v;
                queue.push_back(v);
            }
        }
        if (queue.size() != static_cast<std::size_t>(n))
            throw DataError("topology-not-radial: network is disconnected");
    }

    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    GridParams params_;
    std::vector<int> sweep_order_;     // line indices, root to leaves
    std::vector<int> line_parent_pos_; // by line index
    std::vector<int> line_child_pos_;
};

/// Per-bus net injection in MW / MVAr (generation positive).
struct PQ {
    double p_mw = 0;
    double q_mvar = 0;
};

struct PowerFlowSolution {
    std::vector<std::complex<double>> bus_voltages; // per-unit, by bus position
    std::vector<double> line_currents_a;            // RMS ampere, by line position
    double grid_loss_mw = 0;                        // sum of I^2 R over lines
    double slack_p_mw = 0;                          // P_TS: import from transmission
    double slack_q_mvar = 0;                        // Q_TS
    int iterations = 0;
};

struct SweepOptions {
    double tolerance_pu = 1e-6; // max voltage change between sweeps
    int max_iterations = 100;
};

/// Backward-forward sweep power flow. Loads are constant-power at
/// load_scale times nominal; `injections` adds per-bus generation.
/// Returns nullopt when the sweep does not converge, which callers treat
/// as an electrically infeasible operating point.
inline std::optional<PowerFlowSolution> solve_power_flow(const NetworkModel& net,
                                                         std::span<const PQ> injections,
                                                         double load_scale,
                                                         const SweepOptions& opts = {}) {
    using cplx = std::complex<double>;
    const int n = net.num_buses();
    const int m = net.num_lines();
    if (!injections.empty() && static_cast<int>(injections.size()) != n)
        throw DataError("injection vector size does not match bus count");
    if (load_scale < 0) throw DataError("load_scale must be non-negative");

    const double s_base = net.params().base_mva;
    const double z_base = net.z_base_ohm();
    const int slack = net.bus_pos(1);

    // Net consumed complex power per bus, per unit.
    std::vector<cplx> s_cons(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Bus& b = net.buses()[static_cast<std::size_t>(i)];
        double p = b.p_load_mw * load_scale;
        double q = b.q_load_mvar * load_scale;
        if (!injections.empty()) {
            p -= injections[static_cast<std::size_t>(i)].p_mw;
            q -= injections[static_cast<std::size_t>(i)].q_mvar;
        }
        s_cons[static_cast<std::size_t>(i)] = cplx(p / s_base, q / s_base);
    }

    std::vector<cplx> z(static_cast<std::size_t>(m));
    for (int l = 0; l < m; ++l)
        z[static_cast<std::size_t>(l)] =
            cplx(net.lines()[static_cast<std::size_t>(l)].r_ohm / z_base,
                 net.lines()[static_cast<std::size_t>(l)].x_ohm / z_base);

    const cplx v_slack(net.params().slack_voltage_pu, 0.0);
    std::vector<cplx> v(static_cast<std::size_t>(n), v_slack);
    std::vector<cplx> i_branch(static_cast<std::size_t>(m));
    std::vector<cplx> i_accum(static_cast<std::size_t>(n));

    int iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        // Backward: nodal currents, then aggregate leaf -> root.
        for (int i = 0; i < n; ++i)
            i_accum[static_cast<std::size_t>(i)] =
                std::conj(s_cons[static_cast<std::size_t>(i)] / v[static_cast<std::size_t>(i)]);
        const auto& order = net.sweep_order();
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            int l = *it;
            int child = net.line_child_pos(l);
            int parent = net.line_parent_pos(l);
            i_branch[static_cast<std::size_t>(l)] = i_accum[static_cast<std::size_t>(child)];
            i_accum[static_cast<std::size_t>(parent)] += i_accum[static_cast<std::size_t>(child)];
        }
        // Forward: voltage drops root -> leaves.
        double max_dv = 0;
        for (int l : order) {
            int child = net.line_child_pos(l);
            int parent = net.line_parent_pos(l);
            cplx v_new = v[static_cast<std::size_t>(parent)] -
                         z[static_cast<std::size_t>(l)] * i_branch[static_cast<std::size_t>(l)];
            max_dv = std::max(max_dv, std::abs(v_new - v[static_cast<std::size_t>(child)]));
            v[static_cast<std::size_t>(child)] = v_new;
        }
        if (max_dv < opts.tolerance_pu) {
            ++iter;
            break;
        }
        if (iter + 1 == opts.max_iterations) return std::nullopt;
    }

    PowerFlowSolution sol;
    sol.iterations = iter;
    sol.bus_voltages = v;
    sol.line_currents_a.resize(static_cast<std::size_t>(m));
    double loss_pu = 0;
    cplx i_slack(0, 0);
    for (int l = 0; l < m; ++l) {
        double i_pu = std::abs(i_branch[static_cast<std::size_t>(l)]);
        sol.line_currents_a[static_cast<std::size_t>(l)] = i_pu * net.i_base_a();
        loss_pu += i_pu * i_pu * z[static_cast<std::size_t>(l)].real();
        if (net.line_parent_pos(l) == slack) i_slack += i_branch[static_cast<std::size_t>(l)];
    }
    sol.grid_loss_mw = loss_pu * s_base;
    cplx s_slack = v_slack * std::conj(i_slack);
    sol.slack_p_mw = s_slack.real() * s_base;
    sol.slack_q_mvar = s_slack.imag() * s_base;
    return sol;
}

enum class ViolationKind { BusVoltageLow, BusVoltageHigh, LineCurrent, SlackApparentPower, TsoActive, TsoReactive };

struct Violation {
    ViolationKind kind;
    int id = 0;       // bus or line id, 0 for point-of-connection checks
    double value = 0;
    double limit = 0;
};

struct ConstraintReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::size_t count() const { return violations.size(); }
};

/// Transmission-interface box limits for one epoch.
struct TsoLimits {
    double p_min_mw = -1e9;
    double p_max_mw = 1e9;
    double q_min_mvar = -1e9;
    double q_max_mvar = 1e9;
};

constexpr double kLimitSlack = 1e-9;

/// Evaluates bus-voltage, line-current and point-of-connection limits.
/// Violations are data, not errors: an empty report means a feasible point.
inline ConstraintReport check_constraints(const PowerFlowSolution& sol, const NetworkModel& net,
                                          const std::optional<TsoLimits>& tso = std::nullopt) {
    ConstraintReport rep;
    for (int i = 0; i < net.num_buses(); ++i) {
        const Bus& b = net.buses()[static_cast<std::size_t>(i)];
        double vm = std::abs(sol.bus_voltages[static_cast<std::size_t>(i)]);
        if (vm < b.v_min - kLimitSlack)
            rep.violations.push_back({ViolationKind::BusVoltageLow, b.id, vm, b.v_min});
        else if (vm > b.v_max + kLimitSlack)
            rep.violations.push_back({ViolationKind::BusVoltageHigh, b.id, vm, b.v_max});
    }
    for (int l = 0; l < net.num_lines(); ++l) {
        const Line& line = net.lines()[static_cast<std::size_t>(l)];
        double ia = sol.line_currents_a[static_cast<std::size_t>(l)];
        if (ia > line.i_max_a + kLimitSlack * net.i_base_a())
            rep.violations.push_back({ViolationKind::LineCurrent, line.id, ia, line.i_max_a});
    }
    double s_slack = std::hypot(sol.slack_p_mw, sol.slack_q_mvar);
    if (s_slack > net.params().s_slack_max_mva + kLimitSlack)
        rep.violations.push_back({ViolationKind::SlackApparentPower, 0, s_slack, net.params().s_slack_max_mva});
    if (tso) {
        if (sol.slack_p_mw < tso->p_min_mw - kLimitSlack)
            rep.violations.push_back({ViolationKind::TsoActive, 0, sol.slack_p_mw, tso->p_min_mw});
        else if (sol.slack_p_mw > tso->p_max_mw + kLimitSlack)
            rep.violations.push_back({ViolationKind::TsoActive, 0, sol.slack_p_mw, tso->p_max_mw});
        if (sol.slack_q_mvar < tso->q_min_mvar - kLimitSlack)
            rep.violations.push_back({ViolationKind::TsoReactive, 0, sol.slack_q_mvar, tso->q_min_mvar});
        else if (sol.slack_q_mvar > tso->q_max_mvar + kLimitSlack)
            rep.violations.push_back({ViolationKind::TsoReactive, 0, sol.slack_q_mvar, tso->q_max_mvar});
    }
    return rep;
}

/// Loads a network from a CSV file holding a bus table and a line table,
/// separated by section markers:
///
///   [buses]
///   id,p_load_kw,q_load_kvar
///   ...
///   [lines]
///   id,from,to,r_ohm,x_ohm,i_max_a
///   ...
inline NetworkModel load_network(const std::string& path, const GridParams& params = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open network file: " + path);

    std::vector<Bus> buses;
    std::vector<Line> lines;
    enum class Section { None, Buses, Lines } section = Section::None;
    std::vector<std::string> header;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line == "[buses]") { section = Section::Buses; header.clear(); continue; }
        if (line == "[lines]") { section = Section::Lines; header.clear(); continue; }
        if (section == Section::None) throw DataError(path + ": content before [buses]/[lines] section");
        auto cells = csv::split_line(line);
        if (header.empty()) {
            header = cells;
            bool ok = section == Section::Buses
                          ? (header.size() >= 3 && header[0] == "id")
                          : (header.size() >= 6 && header[0] == "id");
            if (!ok) throw DataError(path + ": malformed header row");
            continue;
        }
        if (section == Section::Buses) {
            if (cells.size() < 3) throw DataError(path + ": bus row needs id,p_load_kw,q_load_kvar");
            Bus b;
            b.id = static_cast<int>(csv::to_long(cells[0], path));
            b.p_load_mw = csv::to_double(cells[1], path) / 1000.0;
            b.q_load_mvar = csv::to_double(cells[2], path) / 1000.0;
            b.v_min = params.v_min_pu;
            b.v_max = params.v_max_pu;
            buses.push_back(b);
        } else {
            if (cells.size() < 6) throw DataError(path + ": line row needs id,from,to,r_ohm,x_ohm,i_max_a");
            Line l;
            l.id = static_cast<int>(csv::to_long(cells[0], path));
            l.from_bus = static_cast<int>(csv::to_long(cells[1], path));
            l.to_bus = static_cast<int>(csv::to_long(cells[2], path));
            l.r_ohm = csv::to_double(cells[3], path);
            l.x_ohm = csv::to_double(cells[4], path);
            l.i_max_a = csv::to_double(cells[5], path);
            lines.push_back(l);
        }
    }
    return NetworkModel(std::move(buses), std::move(lines), params);
}

}  // namespace gridmdp
