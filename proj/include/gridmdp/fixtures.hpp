#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gridmdp/csv.hpp"
#include "gridmdp/der.hpp"
#include "gridmdp/grid.hpp"
#include "gridmdp/scenario.hpp"
#include "gridmdp/util.hpp"

namespace gridmdp {

/// Shape parameters for the synthetic profile set. The defaults produce a
/// day where the transmission-interface cap binds under large PV shortfalls
/// but not under small forecast errors, which is what the study cases need.
struct FixtureParams {
    unsigned seed = 1;
    double pv_scale = 0.6;          // peak prediction relative to rating
    double small_error_amp = 0.06;  // relative amplitude of the small-error trace
    double shortfall_ratio = 0.4;   // large-error actual = ratio * prediction
    double margin_day_mw = 0.5;     // TSO cap above predicted transfer, daylight
    double margin_night_mw = 1.0;
    double q_margin_mvar = 1.0;
    double flex_begin_h = 16.0;
    double flex_end_h = 18.0;
    double flex_pmax_mw = 1.0;
    double flex_rate = 100.0;
    int history_days = 60;
};

namespace fixture_detail {

inline double bump(double h, double center, double width) {
    double z = (h - center) / width;
    return std::exp(-0.5 * z * z);
}

/// Predicted load factor: overnight base with a morning shoulder and an
/// evening peak just under the feeder's thermal comfort zone.
inline double load_shape(double h) {
    return 0.55 + 0.22 * bump(h, 19.0, 2.2) + 0.12 * bump(h, 10.0, 3.0);
}

/// Clear-ish-day PV shape on [0, 1]; sunrise 06:30, sunset 20:00.
inline double pv_shape(double h) {
    const double rise = 6.5, set = 20.0;
    if (h < rise || h > set) return 0.0;
    double s = std::sin(M_PI * (h - rise) / (set - rise));
    return std::pow(std::max(0.0, s), 1.3);
}

/// Smooth pseudo-noise in [-1, 1] built from a few random harmonics, so
/// the "actual" traces wiggle gently instead of jittering epoch to epoch.
class SmoothNoise {
public:
    SmoothNoise(std::mt19937& rng, int harmonics = 4) {
        std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
        std::uniform_real_distribution<double> freq(1.0, 6.0);
        for (int k = 0; k < harmonics; ++k) {
            phases_.push_back(phase(rng));
            freqs_.push_back(freq(rng));
        }
    }
    double at(double h) const {
        double v = 0;
        for (std::size_t k = 0; k < phases_.size(); ++k)
            v += std::sin(2.0 * M_PI * freqs_[k] * h / 24.0 + phases_[k]);
        return v / static_cast<double>(phases_.size());
    }

private:
    std::vector<double> phases_, freqs_;
};

inline std::string fmt(double x) { return format_double(x); }

}  // namespace fixture_detail

/// The reference feeder data bundled with the project (Baran-Wu tables
/// with per-line ampere ratings).
inline std::string feeder33_csv();

/// Writes the complete synthetic fixture set into `dir`: the feeder file,
/// load/PV/TSO day profiles and the estimation history. Deterministic for
/// a given (params, config) pair.
inline void write_fixture_set(const std::string& dir, const ScenarioConfig& cfg, const FixtureParams& fp = {}) {
    namespace fs = std::filesystem;
    namespace fd = fixture_detail;
    fs::create_directories(dir);
    const int horizon = cfg.horizon;
    const double dt = cfg.dt_h;

    {
        std::ofstream net(fs::path(dir) / "ieee33.csv");
        net << feeder33_csv();
    }
    NetworkModel net = load_network((fs::path(dir) / "ieee33.csv").string(), cfg.grid);

    std::mt19937 rng(fp.seed);
    fd::SmoothNoise load_noise(rng), pv_noise(rng), shortfall_noise(rng);

    // loads.csv
    std::vector<double> lf_pred(static_cast<std::size_t>(horizon)), lf_act(static_cast<std::size_t>(horizon));
    {
        csv::Writer w((fs::path(dir) / "loads.csv").string());
        w.row({"t", "load_factor_pred", "load_factor_actual"});
        for (int t = 0; t < horizon; ++t) {
            double h = t * dt;
            double pred = fd::load_shape(h);
            double act = pred * (1.0 + 0.02 * load_noise.at(h));
            lf_pred[static_cast<std::size_t>(t)] = pred;
            lf_act[static_cast<std::size_t>(t)] = act;
            w.row({std::to_string(t), fd::fmt(pred), fd::fmt(act)});
        }
    }

    // pv_<d>.csv
    std::vector<std::vector<double>> pv_pred(cfg.ders.size());
    for (std::size_t d = 0; d < cfg.ders.size(); ++d) {
        csv::Writer w((fs::path(dir) / ("pv_" + std::to_string(d + 1) + ".csv")).string());
        w.row({"t", "pred_mw", "actual_small_err_mw", "actual_large_err_mw"});
        const double peak = fp.pv_scale * cfg.ders[d].pv_rating_mw;
        for (int t = 0; t < horizon; ++t) {
            double h = t * dt;
            double pred = peak * fd::pv_shape(h);
            if (pred < 1e-6) pred = 0.0;
            double small = pred * (1.0 + fp.small_error_amp * pv_noise.at(h + static_cast<double>(d)));
            double large = pred * fp.shortfall_ratio * (1.0 + 0.05 * shortfall_noise.at(h + static_cast<double>(d)));
            small = std::min(std::max(small, 0.0), cfg.ders[d].pv_rating_mw);
            large = std::min(std::max(large, 0.0), cfg.ders[d].pv_rating_mw);
            pv_pred[d].push_back(pred);
            w.row({std::to_string(t), fd::fmt(pred), fd::fmt(small), fd::fmt(large)});
        }
    }

    // tso.csv: caps follow the power transfer predicted for the do-nothing
    // dispatch (full PV injection, idle batteries, no shedding).
    {
        csv::Writer w((fs::path(dir) / "tso.csv").string());
        w.row({"t", "p_min", "p_max", "q_min", "q_max", "flex_flag", "flex_pmax", "flex_rate"});
        for (int t = 0; t < horizon; ++t) {
            double h = t * dt;
            std::vector<PQ> inj(static_cast<std::size_t>(net.num_buses()));
            double pv_total = 0;
            for (std::size_t d = 0; d < cfg.ders.size(); ++d) {
                DerDispatch disp = dispatch_der(cfg.ders[d], pv_pred[d][static_cast<std::size_t>(t)], 0.0, 0.0,
                                                50.0, 0.0, dt);
                inj[static_cast<std::size_t>(net.bus_pos(cfg.ders[d].bus))].p_mw += disp.p_injection_mw;
                pv_total += pv_pred[d][static_cast<std::size_t>(t)];
            }
            auto pf = solve_power_flow(net, inj, lf_pred[static_cast<std::size_t>(t)]);
            if (!pf) throw DataError("fixture generation: predicted operating point did not converge");
            double margin = pv_total > 0.01 ? fp.margin_day_mw : fp.margin_night_mw;
            double p_max = pf->slack_p_mw + margin;
            double q_max = pf->slack_q_mvar + fp.q_margin_mvar;
            bool flex = h >= fp.flex_begin_h - 1e-9 && h < fp.flex_end_h - 1e-9;
            w.row({std::to_string(t), fd::fmt(-cfg.grid.s_slack_max_mva), fd::fmt(p_max), fd::fmt(-3.0),
                   fd::fmt(q_max), flex ? "1" : "0", fd::fmt(fp.flex_pmax_mw), fd::fmt(fp.flex_rate)});
        }
    }

    // history.csv: a long per-unit record of prediction/actual pairs whose
    // error process is sticky with occasional deep downward excursions.
    {
        csv::Writer w((fs::path(dir) / "history.csv").string());
        w.row({"timestamp", "pred_pu", "actual_pu"});
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        long ts = 0;
        double err = 0.0;
        for (int day = 0; day < fp.history_days; ++day) {
            double amplitude = 0.5 + 0.5 * uni(rng);
            for (int t = 0; t < horizon; ++t, ++ts) {
                double h = t * dt;
                double pred = amplitude * fd::pv_shape(h);
                if (pred < 1e-6) continue; // night rows are not recorded
                double r = uni(rng);
                if (r < 0.04)
                    err -= 0.25 + 0.5 * uni(rng); // sudden cloud cover / fault
                else if (r < 0.10)
                    err += 0.2 * uni(rng); // partial recovery
                err = 0.88 * err + 0.06 * (2.0 * uni(rng) - 1.0);
                err = std::min(1.0, std::max(-1.0, err));
                double actual = err <= 0 ? pred * (1.0 + err) : pred / (1.0 - err);
                actual = std::min(actual, 1.0);
                w.row({std::to_string(ts), fd::fmt(pred), fd::fmt(actual)});
            }
            err = 0.0; // each day starts fresh
        }
    }
}

inline std::string feeder33_csv() {
    return
        "# IEEE 33-bus radial distribution feeder (Baran-Wu data).\n"
        "# Loads in kW / kVAr; impedances in ohm; ampere limits per line.\n"
        "[buses]\n"
        "id,p_load_kw,q_load_kvar\n"
        "1,0,0\n"
        "2,100,60\n"
        "3,90,40\n"
        "4,120,80\n"
        "5,60,30\n"
        "6,60,20\n"
        "7,200,100\n"
        "8,200,100\n"
        "9,60,20\n"
        "10,60,20\n"
        "11,45,30\n"
        "12,60,35\n"
        "13,60,35\n"
        "14,120,80\n"
        "15,60,10\n"
        "16,60,20\n"
        "17,60,20\n"
        "18,90,40\n"
        "19,90,40\n"
        "20,90,40\n"
        "21,90,40\n"
        "22,90,40\n"
        "23,90,50\n"
        "24,420,200\n"
        "25,420,200\n"
        "26,60,25\n"
        "27,60,25\n"
        "28,60,20\n"
        "29,120,70\n"
        "30,200,600\n"
        "31,150,70\n"
        "32,210,100\n"
        "33,60,40\n"
        "[lines]\n"
        "id,from,to,r_ohm,x_ohm,i_max_a\n"
        "1,1,2,0.0922,0.0470,200\n"
        "2,2,3,0.4930,0.2511,200\n"
        "3,3,4,0.3660,0.1864,150\n"
        "4,4,5,0.3811,0.1941,150\n"
        "5,5,6,0.8190,0.7070,150\n"
        "6,6,7,0.1872,0.6188,100\n"
        "7,7,8,0.7114,0.2351,100\n"
        "8,8,9,1.0300,0.7400,50\n"
        "9,9,10,1.0440,0.7400,50\n"
        "10,10,11,0.1966,0.0650,50\n"
        "11,11,12,0.3744,0.1238,50\n"
        "12,12,13,1.4680,1.1550,50\n"
        "13,13,14,0.5416,0.7129,50\n"
        "14,14,15,0.5910,0.5260,50\n"
        "15,15,16,0.7463,0.5450,50\n"
        "16,16,17,1.2890,1.7210,50\n"
        "17,17,18,0.7320,0.5740,50\n"
        "18,2,19,0.1640,0.1565,50\n"
        "19,19,20,1.5042,1.3554,50\n"
        "20,20,21,0.4095,0.4784,50\n"
        "21,21,22,0.7089,0.9373,50\n"
        "22,3,23,0.4512,0.3083,100\n"
        "23,23,24,0.8980,0.7091,100\n"
        "24,24,25,0.8960,0.7011,100\n"
        "25,6,26,0.2030,0.1034,100\n"
        "26,26,27,0.2842,0.1447,100\n"
        "27,27,28,1.0590,0.9337,100\n"
        "28,28,29,0.8042,0.7006,100\n"
        "29,29,30,0.5075,0.2585,100\n"
        "30,30,31,0.9744,0.9630,50\n"
        "31,31,32,0.3105,0.3619,50\n"
        "32,32,33,0.3410,0.5302,50\n";
}

}  // namespace gridmdp
