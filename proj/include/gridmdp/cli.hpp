#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridmdp/fixtures.hpp"
#include "gridmdp/persist.hpp"
#include "gridmdp/reference.hpp"
#include "gridmdp/scenario.hpp"
#include "gridmdp/system.hpp"

namespace gridmdp::cli {

namespace fs = std::filesystem;

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write: " + path);
    out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return j;
}

/// gen-fixtures: writes the synthetic feeder + profile set for a config.
inline void cmd_gen_fixtures(const ScenarioConfig& cfg, const std::string& out_dir, const FixtureParams& fp = {}) {
    FixtureParams params = fp;
    params.seed = cfg.seed;
    write_fixture_set(out_dir, cfg, params);
    std::cerr << "fixtures written to " << out_dir << "\n";
}

/// estimate-matrix: estimates the PV error kernel from the history file.
inline void cmd_estimate_matrix(const ScenarioConfig& cfg, const std::string& out_path) {
    if (cfg.history_file.empty()) throw DataError("config has no profiles.history entry");
    auto hist = load_history(cfg.history_file);
    TransitionMatrix m = estimate_transition_matrix(hist, linspace(-1.0, 1.0, cfg.pv_bins));
    csv::Writer w(out_path);
    for (int r = 0; r < m.size(); ++r) {
        std::vector<std::string> cells;
        for (int c = 0; c < m.size(); ++c) cells.push_back(format_double(m.at(r, c)));
        w.row(cells);
    }
    std::cerr << "kernel (" << m.size() << "x" << m.size() << ") written to " << out_path << "\n";
}

/// solve-offline: backward induction over the predicted view. Writes the
/// utility table plus a machine-readable report; timing goes to stderr so
/// the written artifacts stay byte-reproducible.
inline json cmd_solve_offline(const Scenario& sc, const std::string& out_dir, bool dry_run) {
    fs::create_directories(out_dir);
    const auto& aspace = sc.system.action_space();

    json report;
    report["states"] = sc.system.state_space().num_states();
    report["offline_actions"] = aspace.num_actions(Phase::Offline);
    report["online_actions"] = aspace.num_actions(Phase::Online);
    report["horizon"] = sc.cfg.horizon;
    report["case"] = sc.cfg.case_id;
    report["scenario_checksum"] = sc.scenario_checksum;
    report["offline_checksum"] = sc.offline_checksum;
    report["dry_run"] = dry_run;

    if (!dry_run) {
        auto t0 = std::chrono::steady_clock::now();
        SystemDp dp(sc.system, sc.day.predicted, Phase::Offline);
        DpResult res = backward_induction(dp, sc.dp);
        auto t1 = std::chrono::steady_clock::now();
        double secs = std::chrono::duration<double>(t1 - t0).count();

        std::string table_path = (fs::path(out_dir) / "utility.txt").string();
        save_utility_table(table_path, res.utility, sc.dp, sc.offline_checksum);
        report["utility_table"] = "utility.txt";
        report["infeasible_state_epochs"] = res.infeasible_states;
        std::cerr << "offline solve: " << secs << " s, " << report["states"] << " states x "
                  << report["offline_actions"] << " actions x " << sc.cfg.horizon << " epochs\n";
    }
    write_json((fs::path(out_dir) / "solve_report.json").string(), report);
    return report;
}

inline json cost_to_json(const CostBreakdown& c) {
    return json{{"c_grid", c.c_grid}, {"c_der", c.c_der},   {"c_pv", c.c_pv},
                {"c_load", c.c_load}, {"c_tso", c.c_tso},   {"total", c.total}};
}

inline void write_trajectory_csv(const std::string& path, const Scenario& sc, const Trajectory& traj) {
    const auto& ss = sc.system.state_space();
    csv::Writer w(path);
    std::vector<std::string> head{"t"};
    for (int d = 0; d < ss.num_ders(); ++d) head.push_back("pv_state_" + std::to_string(d + 1));
    for (int b = 0; b < ss.num_bess(); ++b) head.push_back("soc_state_" + std::to_string(b + 1));
    for (int d = 0; d < ss.num_ders(); ++d) head.push_back("a_pv_" + std::to_string(d + 1));
    for (int d = 0; d < ss.num_ders(); ++d) head.push_back("a_q_" + std::to_string(d + 1));
    for (int b = 0; b < ss.num_bess(); ++b) head.push_back("a_bes_" + std::to_string(b + 1));
    head.insert(head.end(), {"a_load", "c_grid", "c_der", "c_pv", "c_load", "c_tso", "total", "p_ts_mw",
                             "q_ts_mvar", "violations", "fallback"});
    w.row(head);
    for (const auto& r : traj.rows) {
        std::vector<std::string> row{std::to_string(r.t)};
        for (int v : r.pv_state) row.push_back(std::to_string(v));
        for (int v : r.soc_state) row.push_back(std::to_string(v));
        for (int v : r.action.pv_idx) row.push_back(std::to_string(v));
        for (int v : r.action.q_idx) row.push_back(std::to_string(v));
        for (int v : r.action.bes_idx) row.push_back(std::to_string(v));
        row.push_back(std::to_string(r.action.load_idx));
        for (double c : {r.cost.c_grid, r.cost.c_der, r.cost.c_pv, r.cost.c_load, r.cost.c_tso, r.cost.total})
            row.push_back(format_double(c));
        row.push_back(format_double(r.p_ts_mw));
        row.push_back(format_double(r.q_ts_mvar));
        row.push_back(std::to_string(r.violations));
        row.push_back(r.fallback ? "1" : "0");
        w.row(row);
    }
}

/// run: simulates one day under the selected controller and writes the
/// per-epoch trajectory plus a summary. For controller "mdp" a solved
/// utility table matching the scenario is required.
inline json cmd_run(const Scenario& sc, const std::string& controller, const std::string& table_path,
                    const std::string& out_dir, std::optional<double> oracle_total = std::nullopt) {
    fs::create_directories(out_dir);
    Trajectory traj;

    if (controller == "mdp") {
        LoadedUtility lu = load_utility_table(table_path);
        require_matching_table(lu, sc.offline_checksum, sc.cfg.horizon, sc.system.state_space().num_states());
        MdpOnlineController ctrl(sc.system, sc.day, std::move(lu.table), sc.dp);
        traj = simulate_day(sc.system, ctrl, sc.day, sc.initial_soc_pct);
    } else if (controller == "deterministic") {
        DeterministicController ctrl(sc.system, sc.day, sc.dp,
                                     sc.cfg.deterministic_online_q ? Phase::Online : Phase::Offline);
        traj = simulate_day(sc.system, ctrl, sc.day, sc.initial_soc_pct);
    } else if (controller == "oracle") {
        OraclePlan plan = solve_optimal_oracle(sc.system, sc.day, sc.initial_soc_pct, sc.dp);
        if (!plan.feasible)
            throw InfeasibleError("no feasible day trajectory exists for case " + std::to_string(sc.cfg.case_id));
        traj = simulate_day(sc.system, make_oracle_controller(sc.system, plan), sc.day, sc.initial_soc_pct);
    } else {
        throw DataError("unknown controller '" + controller + "' (expected mdp|deterministic|oracle)");
    }

    write_trajectory_csv((fs::path(out_dir) / "trajectory.csv").string(), sc, traj);

    json summary;
    summary["case"] = sc.cfg.case_id;
    summary["controller"] = controller;
    summary["scenario_checksum"] = sc.scenario_checksum;
    summary["offline_checksum"] = sc.offline_checksum;
    summary["costs"] = cost_to_json(traj.totals);
    summary["fallback_epochs"] = traj.fallback_epochs;
    summary["violation_epochs"] = traj.violation_epochs;
    summary["trajectory"] = "trajectory.csv";
    if (oracle_total) summary["excessive"] = traj.totals.total - *oracle_total;
    write_json((fs::path(out_dir) / "summary.json").string(), summary);
    return summary;
}

/// compare: aligns several run summaries into one table plus plot-ready
/// CSV files (cost bars, SoC traces, transfer traces against the caps).
inline void cmd_compare(const Scenario& sc, const std::vector<std::string>& summary_paths,
                        const std::string& out_dir) {
    if (summary_paths.size() < 2) throw DataError("compare needs at least two run summaries");
    fs::create_directories(out_dir);

    struct Run {
        json summary;
        std::string dir;
        std::string label;
    };
    std::vector<Run> runs;
    for (const auto& p : summary_paths) {
        Run r;
        r.summary = read_json(p);
        r.dir = fs::path(p).parent_path().string();
        if (r.summary.value("scenario_checksum", "") != sc.scenario_checksum)
            throw ChecksumError(p + ": scenario checksum does not match the compare config");
        r.label = "case" + std::to_string(r.summary.value("case", 0)) + "_" +
                  r.summary.value("controller", std::string("unknown"));
        runs.push_back(std::move(r));
    }

    {
        csv::Writer w((fs::path(out_dir) / "comparison.csv").string());
        w.row({"case", "controller", "c_grid", "c_der", "c_pv", "c_load", "c_tso", "total", "excessive",
               "fallback_epochs", "violation_epochs"});
        for (const auto& r : runs) {
            const auto& c = r.summary["costs"];
            w.row({std::to_string(r.summary.value("case", 0)), r.summary.value("controller", std::string()),
                   format_double(c.value("c_grid", 0.0)), format_double(c.value("c_der", 0.0)),
                   format_double(c.value("c_pv", 0.0)), format_double(c.value("c_load", 0.0)),
                   format_double(c.value("c_tso", 0.0)), format_double(c.value("total", 0.0)),
                   r.summary.contains("excessive") ? format_double(r.summary["excessive"].get<double>()) : "",
                   std::to_string(r.summary.value("fallback_epochs", 0)),
                   std::to_string(r.summary.value("violation_epochs", 0))});
        }
    }
    {
        csv::Writer w((fs::path(out_dir) / "cost_bars.csv").string());
        w.row({"case", "controller", "total"});
        for (const auto& r : runs)
            w.row({std::to_string(r.summary.value("case", 0)), r.summary.value("controller", std::string()),
                   format_double(r.summary["costs"].value("total", 0.0))});
    }

    // Per-epoch traces from the trajectory files.
    std::vector<csv::Table> trajs;
    for (const auto& r : runs)
        trajs.push_back(csv::read_file((fs::path(r.dir) / r.summary.value("trajectory", "trajectory.csv")).string()));

    const auto& ss = sc.system.state_space();
    {
        csv::Writer w((fs::path(out_dir) / "soc_trace.csv").string());
        std::vector<std::string> head{"t"};
        for (const auto& r : runs)
            for (int b = 0; b < ss.num_bess(); ++b)
                head.push_back(r.label + "_soc" + std::to_string(b + 1) + "_pct");
        w.row(head);
        for (int t = 0; t < sc.cfg.horizon; ++t) {
            std::vector<std::string> row{std::to_string(t)};
            for (std::size_t i = 0; i < runs.size(); ++i) {
                for (int b = 0; b < ss.num_bess(); ++b) {
                    int col = trajs[i].require_column("soc_state_" + std::to_string(b + 1), runs[i].label);
                    int idx = static_cast<int>(csv::to_long(trajs[i].rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(col)], "soc"));
                    row.push_back(format_double(ss.soc_axis(b)[static_cast<std::size_t>(idx)]));
                }
            }
            w.row(row);
        }
    }
    {
        csv::Writer w((fs::path(out_dir) / "pts_trace.csv").string());
        std::vector<std::string> head{"t", "p_min_mw", "p_max_mw", "flex_pmax_mw"};
        for (const auto& r : runs) head.push_back(r.label + "_p_ts_mw");
        w.row(head);
        for (int t = 0; t < sc.cfg.horizon; ++t) {
            const auto& e = sc.day.actual[static_cast<std::size_t>(t)];
            std::vector<std::string> row{std::to_string(t), format_double(e.tso.p_min_mw),
                                         format_double(e.tso.p_max_mw),
                                         e.flex ? format_double(e.flex->p_max_mw) : ""};
            for (std::size_t i = 0; i < runs.size(); ++i) {
                int col = trajs[i].require_column("p_ts_mw", runs[i].label);
                row.push_back(trajs[i].rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(col)]);
            }
            w.row(row);
        }
    }
    std::cerr << "comparison over " << runs.size() << " runs written to " << out_dir << "\n";
}

}  // namespace gridmdp::cli
