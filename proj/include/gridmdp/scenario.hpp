#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridmdp/grid.hpp"
#include "gridmdp/mdp.hpp"
#include "gridmdp/profiles.hpp"
#include "gridmdp/system.hpp"

namespace gridmdp {

using nlohmann::json;

struct ScenarioConfig {
    std::string network_file;
    GridParams grid;
    std::vector<DerUnit> ders;

    int pv_bins = 11;        // per DER, symmetric grid on [-1, 1]
    int soc_bins = 17;       // per battery, uniform on [0, 100]
    int pv_levels = 5;       // curtailment grid on [0, 1]
    int q_levels_offline = 5;
    int q_levels_online = 9; // online extension of the reactive grid
    int bes_levels = 9;
    double bes_range_pct = 25.0;
    std::vector<std::vector<int>> load_groups; // empty = feeder33 defaults

    Prices prices;
    int horizon = 96;
    double dt_h = 0.25;
    double gamma = 1.0;
    double big_m = 1e9;
    DiscountMode discounting = DiscountMode::EpochPower;

    int case_id = 1;
    CaseParams case_params;
    std::vector<double> initial_soc_pct; // per battery; default 100%

    ProfilePaths profile_paths;
    std::string history_file;            // for kernel estimation
    std::string transition_matrix_file;  // optional, overrides estimation

    bool allow_grid_charging = true;
    bool tso_flat_reward = false;
    bool deterministic_online_q = true; // reference model uses extended grid
    double salvage_per_mwh = 0.0;       // value of stored energy at horizon end
    int workers = 0;
    unsigned seed = 1; // synthetic fixture generation only
};

inline void validate(const ScenarioConfig& c) {
    if (c.ders.empty()) throw DataError("config: at least one DER required");
    if (c.pv_bins < 1 || c.pv_bins % 2 == 0)
        throw DataError("config: pv_bins must be odd so the zero-error bin exists");
    if (c.soc_bins < 2) throw DataError("config: soc_bins must be at least 2");
    if (c.bes_levels < 1 || c.bes_levels % 2 == 0)
        throw DataError("config: bes_levels must be odd so the idle action exists");
    if (c.q_levels_offline % 2 == 0 || c.q_levels_online % 2 == 0)
        throw DataError("config: reactive grids must be odd so the zero level exists");
    if (std::fabs(c.horizon * c.dt_h - 24.0) > 1e-9)
        throw DataError("config: horizon * dt_h must cover exactly 24 hours");
    if (c.gamma <= 0 || c.gamma > 1) throw DataError("config: gamma must be in (0, 1]");
    if (c.case_id < 1 || c.case_id > 5) throw DataError("config: case must be 1..5");
}

inline std::string resolve_path(const std::string& base_dir, const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return p;
    return (std::filesystem::path(base_dir) / fp).string();
}

inline ScenarioConfig config_from_json(const json& j, const std::string& base_dir = ".") {
    ScenarioConfig c;
    c.network_file = resolve_path(base_dir, j.at("network_file").get<std::string>());
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        c.grid.slack_voltage_pu = g.value("slack_voltage_pu", c.grid.slack_voltage_pu);
        c.grid.base_kv = g.value("base_kv", c.grid.base_kv);
        c.grid.base_mva = g.value("base_mva", c.grid.base_mva);
        c.grid.s_slack_max_mva = g.value("s_slack_max_mva", c.grid.s_slack_max_mva);
        c.grid.v_min_pu = g.value("v_min_pu", c.grid.v_min_pu);
        c.grid.v_max_pu = g.value("v_max_pu", c.grid.v_max_pu);
    }
    for (const auto& dj : j.at("ders")) {
        DerUnit d;
        d.bus = dj.at("bus").get<int>();
        d.pv_rating_mw = dj.at("pv_rating_mw").get<double>();
        d.inverter_s_max_mva = dj.at("inverter_s_max_mva").get<double>();
        d.inverter_efficiency = dj.value("inverter_efficiency", 0.9);
        if (dj.contains("bess")) {
            BessUnit b;
            const auto& bj = dj["bess"];
            b.capacity_mwh = bj.at("capacity_mwh").get<double>();
            b.e_min_mwh = bj.value("e_min_mwh", 0.0);
            b.converter_p_max_mw = bj.at("converter_p_max_mw").get<double>();
            b.converter_efficiency = bj.value("converter_efficiency", 0.95);
            d.bess = b;
        }
        c.ders.push_back(std::move(d));
    }
    if (j.contains("states")) {
        c.pv_bins = j["states"].value("pv_bins", c.pv_bins);
        c.soc_bins = j["states"].value("soc_bins", c.soc_bins);
    }
    if (j.contains("actions")) {
        const auto& a = j["actions"];
        c.pv_levels = a.value("pv_levels", c.pv_levels);
        c.q_levels_offline = a.value("q_levels_offline", c.q_levels_offline);
        c.q_levels_online = a.value("q_levels_online", c.q_levels_online);
        c.bes_levels = a.value("bes_levels", c.bes_levels);
        c.bes_range_pct = a.value("bes_range_pct", c.bes_range_pct);
        if (a.contains("load_groups") && a["load_groups"].is_array())
            c.load_groups = a["load_groups"].get<std::vector<std::vector<int>>>();
    }
    if (j.contains("prices")) {
        const auto& p = j["prices"];
        c.prices.c_pv = p.value("c_pv", c.prices.c_pv);
        c.prices.c_load = p.value("c_load", c.prices.c_load);
        c.prices.c_grid = p.value("c_grid", c.prices.c_grid);
        c.prices.c_der = p.value("c_der", c.prices.c_der);
    }
    c.horizon = j.value("horizon", c.horizon);
    c.dt_h = j.value("dt_h", c.dt_h);
    c.gamma = j.value("gamma", c.gamma);
    c.big_m = j.value("big_m", c.big_m);
    if (j.value("discounting", "epoch-power") == std::string("per-step")) c.discounting = DiscountMode::PerStep;
    c.case_id = j.value("case", c.case_id);
    if (j.contains("case_params")) {
        const auto& cp = j["case_params"];
        c.case_params.load_bump = cp.value("load_bump", c.case_params.load_bump);
        c.case_params.outage_der = cp.value("outage_der", c.case_params.outage_der);
    }
    if (j.contains("initial_soc_pct")) c.initial_soc_pct = j["initial_soc_pct"].get<std::vector<double>>();

    const auto& pj = j.at("profiles");
    c.profile_paths.loads = resolve_path(base_dir, pj.at("loads").get<std::string>());
    for (const auto& pv : pj.at("pv")) c.profile_paths.pv.push_back(resolve_path(base_dir, pv.get<std::string>()));
    c.profile_paths.tso = resolve_path(base_dir, pj.at("tso").get<std::string>());
    c.history_file = resolve_path(base_dir, pj.value("history", ""));
    c.transition_matrix_file = resolve_path(base_dir, pj.value("transition_matrix", ""));

    if (j.contains("options")) {
        const auto& o = j["options"];
        c.allow_grid_charging = o.value("allow_grid_charging", c.allow_grid_charging);
        c.tso_flat_reward = o.value("tso_flat_reward", c.tso_flat_reward);
        c.deterministic_online_q = o.value("deterministic_online_q", c.deterministic_online_q);
        c.salvage_per_mwh = o.value("salvage_per_mwh", c.salvage_per_mwh);
    }
    c.workers = j.value("workers", 0);
    c.seed = j.value("seed", 1u);
    validate(c);
    return c;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    try {
        return config_from_json(j, std::filesystem::path(path).parent_path().string());
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

/// A fully assembled scenario: immutable system, case-transformed profile
/// views, solver options and the checksums that bind persisted artifacts
/// to their inputs.
struct Scenario {
    ScenarioConfig cfg;
    SystemModel system;
    DayProfiles day;
    DpOptions dp;
    std::vector<double> initial_soc_pct;
    std::string scenario_checksum; // case-independent
    std::string offline_checksum;  // binds the offline view the solver sees
};

namespace detail {

inline void hash_file(Fnv1a64& h, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for checksum: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h.add(path.substr(path.find_last_of('/') + 1)).add(content);
}

inline void hash_config(Fnv1a64& h, const ScenarioConfig& c) {
    h.add("grid").add(c.grid.slack_voltage_pu).add(c.grid.base_kv).add(c.grid.base_mva)
        .add(c.grid.s_slack_max_mva).add(c.grid.v_min_pu).add(c.grid.v_max_pu);
    for (const auto& d : c.ders) {
        h.add("der").add(static_cast<std::int64_t>(d.bus)).add(d.pv_rating_mw).add(d.inverter_s_max_mva)
            .add(d.inverter_efficiency);
        if (d.bess)
            h.add("bess").add(d.bess->capacity_mwh).add(d.bess->e_min_mwh).add(d.bess->converter_p_max_mw)
                .add(d.bess->converter_efficiency);
    }
    h.add("grids")
        .add(static_cast<std::int64_t>(c.pv_bins))
        .add(static_cast<std::int64_t>(c.soc_bins))
        .add(static_cast<std::int64_t>(c.pv_levels))
        .add(static_cast<std::int64_t>(c.q_levels_offline))
        .add(static_cast<std::int64_t>(c.q_levels_online))
        .add(static_cast<std::int64_t>(c.bes_levels))
        .add(c.bes_range_pct);
    for (const auto& g : c.load_groups) {
        h.add("group");
        for (int bus : g) h.add(static_cast<std::int64_t>(bus));
    }
    h.add("prices").add(c.prices.c_pv).add(c.prices.c_load).add(c.prices.c_grid).add(c.prices.c_der);
    h.add("time").add(static_cast<std::int64_t>(c.horizon)).add(c.dt_h);
    h.add("dp").add(c.gamma).add(c.big_m).add(c.discounting == DiscountMode::EpochPower ? "ep" : "ps");
    h.add("opts")
        .add(static_cast<std::int64_t>(c.allow_grid_charging))
        .add(static_cast<std::int64_t>(c.tso_flat_reward))
        .add(c.salvage_per_mwh);
    for (double s : c.initial_soc_pct) h.add(s);
}

inline void hash_epochs(Fnv1a64& h, const std::vector<EpochProfile>& view) {
    for (const auto& e : view) {
        h.add(e.load_factor);
        for (double p : e.pv_pred_mw) h.add(p);
        h.add(e.prices.c_pv).add(e.prices.c_load).add(e.prices.c_grid).add(e.prices.c_der);
        h.add(e.tso.p_min_mw).add(e.tso.p_max_mw).add(e.tso.q_min_mvar).add(e.tso.q_max_mvar);
        if (e.flex) h.add("flex").add(e.flex->p_max_mw).add(e.flex->rate_per_mw);
    }
}

inline void hash_kernels(Fnv1a64& h, const std::vector<TransitionMatrix>& ks) {
    for (const auto& k : ks) {
        h.add("kernel");
        for (double b : k.bins()) h.add(b);
        for (int r = 0; r < k.size(); ++r)
            for (int col = 0; col < k.size(); ++col) h.add(k.at(r, col));
    }
}

}  // namespace detail

/// Builds the salvage layer: the terminal utility credits stored battery
/// energy at salvage_per_mwh (zero by default, i.e. no terminal term).
inline std::vector<double> salvage_layer(const SystemModel& sys, double salvage_per_mwh) {
    if (salvage_per_mwh == 0.0) return {};
    const auto& ss = sys.state_space();
    std::vector<double> layer(static_cast<std::size_t>(ss.num_states()), 0.0);
    std::vector<int> pv, soc;
    for (long s = 0; s < ss.num_states(); ++s) {
        ss.decode(s, pv, soc);
        double credit = 0;
        for (int b = 0; b < ss.num_bess(); ++b) {
            const BessUnit& bess = *sys.ders()[static_cast<std::size_t>(sys.bess_der(b))].bess;
            credit += bess.capacity_mwh * ss.soc_axis(b)[static_cast<std::size_t>(soc[static_cast<std::size_t>(b)])] / 100.0;
        }
        layer[static_cast<std::size_t>(s)] = -salvage_per_mwh * credit;
    }
    return layer;
}

/// Loads everything a run needs. `case_override` replaces the config's
/// case id when non-zero.
inline Scenario build_scenario(const ScenarioConfig& cfg_in, int case_override = 0) {
    ScenarioConfig cfg = cfg_in;
    if (case_override > 0) cfg.case_id = case_override;
    validate(cfg);

    NetworkModel net = load_network(cfg.network_file, cfg.grid);

    int num_bess = 0;
    for (const auto& d : cfg.ders)
        if (d.bess) ++num_bess;

    std::vector<std::vector<double>> pv_axes(cfg.ders.size(), linspace(-1.0, 1.0, cfg.pv_bins));
    std::vector<std::vector<double>> soc_axes(static_cast<std::size_t>(num_bess), linspace(0.0, 100.0, cfg.soc_bins));
    StateSpace sspace(std::move(pv_axes), std::move(soc_axes));

    auto groups = cfg.load_groups.empty() ? default_load_groups_33() : cfg.load_groups;
    ActionSpace aspace(static_cast<int>(cfg.ders.size()), num_bess, linspace(0.0, 1.0, cfg.pv_levels),
                       linspace(-1.0, 1.0, cfg.q_levels_offline), linspace(-1.0, 1.0, cfg.q_levels_online),
                       linspace(-cfg.bes_range_pct, cfg.bes_range_pct, cfg.bes_levels), std::move(groups));

    std::vector<TransitionMatrix> kernels;
    if (!cfg.transition_matrix_file.empty()) {
        auto t = csv::read_file(cfg.transition_matrix_file);
        int n = cfg.pv_bins;
        if (static_cast<int>(t.rows.size()) != n)
            throw DataError(cfg.transition_matrix_file + ": expected " + std::to_string(n) + " rows");
        std::vector<double> p;
        for (const auto& row : t.rows) {
            if (static_cast<int>(row.size()) != n)
                throw DataError(cfg.transition_matrix_file + ": expected " + std::to_string(n) + " columns");
            for (const auto& cell : row) p.push_back(csv::to_double(cell, cfg.transition_matrix_file));
        }
        kernels.assign(cfg.ders.size(), TransitionMatrix(linspace(-1.0, 1.0, n), std::move(p)));
    } else if (!cfg.history_file.empty()) {
        auto hist = load_history(cfg.history_file);
        kernels.assign(cfg.ders.size(),
                       estimate_transition_matrix(hist, linspace(-1.0, 1.0, cfg.pv_bins)));
    } else {
        kernels.assign(cfg.ders.size(), TransitionMatrix::identity(linspace(-1.0, 1.0, cfg.pv_bins)));
    }

    SystemOptions sopts;
    sopts.dt_h = cfg.dt_h;
    sopts.allow_grid_charging = cfg.allow_grid_charging;
    sopts.tso_flat_reward = cfg.tso_flat_reward;
    sopts.workers = cfg.workers;

    LoadedProfiles base = load_day_profiles(cfg.profile_paths, cfg.horizon, cfg.dt_h, cfg.prices);

    std::vector<double> initial_soc = cfg.initial_soc_pct;
    if (initial_soc.empty()) initial_soc.assign(static_cast<std::size_t>(num_bess), 100.0);
    if (static_cast<int>(initial_soc.size()) != num_bess)
        throw DataError("config: initial_soc_pct must list one value per battery");
    for (double s : initial_soc) {
        bool on_grid = false;
        for (double g : linspace(0.0, 100.0, cfg.soc_bins)) on_grid = on_grid || std::fabs(g - s) < 1e-9;
        if (!on_grid) throw DataError("config: initial SoC " + format_double(s) + " is not on the SoC grid");
    }

    Scenario sc{cfg,
                SystemModel(std::move(net), cfg.ders, std::move(sspace), std::move(aspace), kernels, sopts),
                apply_case(cfg.case_id, std::move(base), cfg.case_params),
                DpOptions{},
                std::move(initial_soc),
                "",
                ""};
    sc.dp.gamma = cfg.gamma;
    sc.dp.big_m = cfg.big_m;
    sc.dp.discounting = cfg.discounting;
    sc.dp.terminal = salvage_layer(sc.system, cfg.salvage_per_mwh);

    Fnv1a64 hs;
    detail::hash_config(hs, cfg);
    detail::hash_file(hs, cfg.network_file);
    detail::hash_file(hs, cfg.profile_paths.loads);
    for (const auto& p : cfg.profile_paths.pv) detail::hash_file(hs, p);
    detail::hash_file(hs, cfg.profile_paths.tso);
    detail::hash_kernels(hs, sc.system.kernels());
    sc.scenario_checksum = hs.hex();

    Fnv1a64 ho;
    ho.add(sc.scenario_checksum);
    detail::hash_epochs(ho, sc.day.predicted);
    sc.offline_checksum = ho.hex();
    return sc;
}

inline Scenario build_scenario_from_file(const std::string& config_path, int case_override = 0) {
    return build_scenario(load_config(config_path), case_override);
}

}  // namespace gridmdp
