#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridmdp/csv.hpp"
#include "gridmdp/grid.hpp"
#include "gridmdp/util.hpp"

namespace gridmdp {

/// Relative error of a PV prediction, bounded to [-1, 1]:
///   (actual - predicted) / max(actual, predicted)
/// Both zero (night) is defined as zero error.
inline double relative_error(double actual_mw, double predicted_mw) {
    double m = std::max(actual_mw, predicted_mw);
    if (m <= 0) return 0.0;
    return (actual_mw - predicted_mw) / m;
}

/// Index of the bin representative nearest to `value`; exact midpoint
/// ties resolve toward zero error.
inline int nearest_bin(double value, std::span<const double> bins) {
    int best = 0;
    double best_dist = std::fabs(value - bins[0]);
    for (int i = 1; i < static_cast<int>(bins.size()); ++i) {
        double d = std::fabs(value - bins[static_cast<std::size_t>(i)]);
        if (d < best_dist - 1e-15) {
            best = i;
            best_dist = d;
        } else if (std::fabs(d - best_dist) <= 1e-15 &&
                   std::fabs(bins[static_cast<std::size_t>(i)]) < std::fabs(bins[static_cast<std::size_t>(best)])) {
            best = i; // tie toward the zero-error representative
        }
    }
    return best;
}

/// Row-stochastic Markov kernel over discretized PV prediction errors.
class TransitionMatrix {
public:
    TransitionMatrix() = default;
    TransitionMatrix(std::vector<double> bins, std::vector<double> probs)
        : bins_(std::move(bins)), p_(std::move(probs)) {
        validate();
    }

    static TransitionMatrix identity(std::vector<double> bins) {
        std::size_t n = bins.size();
        std::vector<double> p(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 1.0;
        return TransitionMatrix(std::move(bins), std::move(p));
    }

    int size() const { return static_cast<int>(bins_.size()); }
    const std::vector<double>& bins() const { return bins_; }
    std::span<const double> row(int i) const {
        return std::span<const double>(p_).subspan(static_cast<std::size_t>(i) * bins_.size(), bins_.size());
    }
    double at(int r, int c) const { return p_[static_cast<std::size_t>(r) * bins_.size() + static_cast<std::size_t>(c)]; }

    void validate() const {
        std::size_t n = bins_.size();
        if (n < 1 || p_.size() != n * n) throw DataError("transition matrix shape mismatch");
        for (std::size_t i = 1; i < n; ++i)
            if (bins_[i] <= bins_[i - 1]) throw DataError("transition bins must be strictly increasing");
        for (std::size_t r = 0; r < n; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < n; ++c) {
                double v = p_[r * n + c];
                if (v < 0) throw DataError("negative transition probability");
                s += v;
            }
            if (std::fabs(s - 1.0) > 1e-9)
                throw DataError("transition row " + std::to_string(r) + " sums to " + format_double(s));
        }
    }

private:
    std::vector<double> bins_;
    std::vector<double> p_; // row-major size*size
};

struct HistoryRecord {
    std::int64_t timestamp = 0; // epoch counter; consecutive records differ by 1
    double pred_pu = 0;
    double actual_pu = 0;
};

/// Estimates the error-transition kernel from historical prediction/actual
/// pairs. Night records (both values zero) are dropped; a transition is
/// counted only between records adjacent in time. Bins never observed as
/// a predecessor fall back to the identity row.
inline TransitionMatrix estimate_transition_matrix(std::span<const HistoryRecord> history,
                                                   std::vector<double> bins) {
    if (history.empty()) throw DataError("empty-history: no records to estimate from");
    const std::size_t n = bins.size();
    std::vector<double> counts(n * n, 0.0);
    std::vector<double> occur(n, 0.0);

    std::optional<std::pair<std::int64_t, int>> prev; // (timestamp, bin)
    for (const auto& rec : history) {
        if (rec.pred_pu <= 0 && rec.actual_pu <= 0) {
            prev.reset(); // night breaks the chain
            continue;
        }
        int b = nearest_bin(relative_error(rec.actual_pu, rec.pred_pu), bins);
        if (prev && rec.timestamp == prev->first + 1) {
            counts[static_cast<std::size_t>(prev->second) * n + static_cast<std::size_t>(b)] += 1.0;
            occur[static_cast<std::size_t>(prev->second)] += 1.0;
        }
        prev = {rec.timestamp, b};
    }

    std::vector<double> p(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        if (occur[r] > 0) {
            for (std::size_t c = 0; c < n; ++c) p[r * n + c] = counts[r * n + c] / occur[r];
        } else {
            p[r * n + r] = 1.0;
        }
    }
    return TransitionMatrix(std::move(bins), std::move(p));
}

inline std::vector<HistoryRecord> load_history(const std::string& path) {
    auto t = csv::read_file(path);
    int c_ts = t.require_column("timestamp", path);
    int c_pred = t.require_column("pred_pu", path);
    int c_act = t.require_column("actual_pu", path);
    std::vector<HistoryRecord> out;
    out.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        HistoryRecord r;
        r.timestamp = csv::to_long(row[static_cast<std::size_t>(c_ts)], path);
        r.pred_pu = csv::to_double(row[static_cast<std::size_t>(c_pred)], path);
        r.actual_pu = csv::to_double(row[static_cast<std::size_t>(c_act)], path);
        if (r.pred_pu < 0 || r.actual_pu < 0) throw DataError(path + ": negative per-unit value");
        out.push_back(r);
    }
    return out;
}

struct Prices {
    double c_pv = 200.0;   // $/MWh curtailed
    double c_load = 600.0; // $/MWh shed
    double c_grid = 200.0; // $/MWh grid losses
    double c_der = 200.0;  // $/MWh DER losses
};

struct FlexWindow {
    double p_max_mw = 0;     // transfer cap rewarded by the TSO
    double rate_per_mw = 0;  // $ per MW of margin per epoch
};

struct EpochProfile {
    int t = 0;
    double load_factor = 0;                // relative to nominal bus loads
    std::vector<double> pv_pred_mw;        // per DER
    Prices prices;
    TsoLimits tso;
    std::optional<FlexWindow> flex;
};

/// Day-ahead (predicted) and realized (actual) views of one day.
/// pv_pred_mw is the shared day-ahead forecast in both views; the
/// realized generation per DER lives in realized_pv_mw.
struct DayProfiles {
    std::vector<EpochProfile> predicted;
    std::vector<EpochProfile> actual;
    std::vector<std::vector<double>> realized_pv_mw; // [der][t]
    double dt_h = 0.25;

    int horizon() const { return static_cast<int>(predicted.size()); }
    double hour_of(int t) const { return t * dt_h; }
    /// Epochs whose start time falls in [h_begin, h_end).
    std::pair<int, int> epoch_range(double h_begin, double h_end) const {
        int lo = static_cast<int>(std::ceil(h_begin / dt_h - 1e-9));
        int hi = static_cast<int>(std::ceil(h_end / dt_h - 1e-9));
        return {std::max(0, lo), std::min(horizon(), hi)};
    }
};

struct ProfilePaths {
    std::string loads;
    std::vector<std::string> pv; // one file per DER
    std::string tso;
};

/// Loads the profile CSV set and assembles both views.
/// loads.csv: t,load_factor_pred,load_factor_actual
/// pv_<d>.csv: t,pred_mw,actual_small_err_mw,actual_large_err_mw
/// tso.csv:  t,p_min,p_max,q_min,q_max[,flex_flag,flex_pmax,flex_rate]
struct RawPvProfile {
    std::vector<double> pred, small_err, large_err;
};

struct LoadedProfiles {
    DayProfiles day;                     // actual = small-error variant
    std::vector<RawPvProfile> pv_raw;    // kept for case transforms
    std::vector<double> load_actual;     // unmodified actual factors
};

inline LoadedProfiles load_day_profiles(const ProfilePaths& paths, int horizon, double dt_h,
                                        const Prices& prices) {
    LoadedProfiles out;
    out.day.dt_h = dt_h;

    auto check_rows = [&](const csv::Table& t, const std::string& path) {
        if (static_cast<int>(t.rows.size()) != horizon)
            throw DataError(path + ": wrong row count " + std::to_string(t.rows.size()) + ", expected " +
                            std::to_string(horizon));
    };

    auto loads = csv::read_file(paths.loads);
    check_rows(loads, paths.loads);
    int c_lp = loads.require_column("load_factor_pred", paths.loads);
    int c_la = loads.require_column("load_factor_actual", paths.loads);

    out.pv_raw.resize(paths.pv.size());
    for (std::size_t d = 0; d < paths.pv.size(); ++d) {
        auto pv = csv::read_file(paths.pv[d]);
        check_rows(pv, paths.pv[d]);
        int c_pred = pv.require_column("pred_mw", paths.pv[d]);
        int c_small = pv.require_column("actual_small_err_mw", paths.pv[d]);
        int c_large = pv.require_column("actual_large_err_mw", paths.pv[d]);
        for (const auto& row : pv.rows) {
            double pr = csv::to_double(row[static_cast<std::size_t>(c_pred)], paths.pv[d]);
            double sm = csv::to_double(row[static_cast<std::size_t>(c_small)], paths.pv[d]);
            double lg = csv::to_double(row[static_cast<std::size_t>(c_large)], paths.pv[d]);
            if (pr < 0 || sm < 0 || lg < 0) throw DataError(paths.pv[d] + ": negative PV value");
            out.pv_raw[d].pred.push_back(pr);
            out.pv_raw[d].small_err.push_back(sm);
            out.pv_raw[d].large_err.push_back(lg);
        }
    }

    auto tso = csv::read_file(paths.tso);
    check_rows(tso, paths.tso);
    int c_pmin = tso.require_column("p_min", paths.tso);
    int c_pmax = tso.require_column("p_max", paths.tso);
    int c_qmin = tso.require_column("q_min", paths.tso);
    int c_qmax = tso.require_column("q_max", paths.tso);
    int c_fflag = tso.column("flex_flag"); // optional group
    int c_fpmax = tso.column("flex_pmax");
    int c_frate = tso.column("flex_rate");

    for (int t = 0; t < horizon; ++t) {
        EpochProfile e;
        e.t = t;
        e.prices = prices;
        e.load_factor = csv::to_double(loads.rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(c_lp)],
                                       paths.loads);
        double lf_actual = csv::to_double(loads.rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(c_la)],
                                          paths.loads);
        if (e.load_factor < 0 || lf_actual < 0) throw DataError(paths.loads + ": negative load factor");

        for (std::size_t d = 0; d < out.pv_raw.size(); ++d)
            e.pv_pred_mw.push_back(out.pv_raw[d].pred[static_cast<std::size_t>(t)]);

        const auto& trow = tso.rows[static_cast<std::size_t>(t)];
        e.tso.p_min_mw = csv::to_double(trow[static_cast<std::size_t>(c_pmin)], paths.tso);
        e.tso.p_max_mw = csv::to_double(trow[static_cast<std::size_t>(c_pmax)], paths.tso);
        e.tso.q_min_mvar = csv::to_double(trow[static_cast<std::size_t>(c_qmin)], paths.tso);
        e.tso.q_max_mvar = csv::to_double(trow[static_cast<std::size_t>(c_qmax)], paths.tso);
        if (e.tso.p_min_mw > e.tso.p_max_mw || e.tso.q_min_mvar > e.tso.q_max_mvar)
            throw DataError(paths.tso + ": limits out of order at epoch " + std::to_string(t));
        if (c_fflag >= 0 && c_fpmax >= 0 && c_frate >= 0) {
            double flag = csv::to_double(trow[static_cast<std::size_t>(c_fflag)], paths.tso);
            if (flag != 0) {
                FlexWindow w;
                w.p_max_mw = csv::to_double(trow[static_cast<std::size_t>(c_fpmax)], paths.tso);
                w.rate_per_mw = csv::to_double(trow[static_cast<std::size_t>(c_frate)], paths.tso);
                e.flex = w;
            }
        }

        EpochProfile ea = e;
        ea.load_factor = lf_actual;
        out.day.predicted.push_back(std::move(e));
        out.day.actual.push_back(std::move(ea));
        out.load_actual.push_back(lf_actual);
    }

    out.day.realized_pv_mw.resize(out.pv_raw.size());
    for (std::size_t d = 0; d < out.pv_raw.size(); ++d)
        out.day.realized_pv_mw[d] = out.pv_raw[d].small_err;
    return out;
}

struct CaseParams {
    double load_bump = 0.2;       // additive load-factor increase, case 4
    int outage_der = 1;           // zero-based DER index shut down in case 2
    double outage_begin_h = 12.0; // case-2 window
    double outage_end_h = 14.0;
    double bump_begin_h = 10.0;   // case-4 window
    double bump_end_h = 14.0;
};

/// Applies one of the five study-case transforms to a freshly loaded
/// profile set. Pure: the input is taken by value and the result returned.
///
///   1 default: small prediction errors, flexibility planned
///   2 unplanned shutdown of one DER between 12:00 and 14:00
///   3 significantly lower generation than predicted (both DERs)
///   4 case 3 plus an unpredicted load increase between 10:00 and 14:00
///   5 case 3 with the flexibility demand unplanned (absent offline)
inline DayProfiles apply_case(int case_id, LoadedProfiles base, const CaseParams& params = {}) {
    DayProfiles day = std::move(base.day);
    switch (case_id) {
        case 1:
            break;
        case 2: {
            auto [lo, hi] = day.epoch_range(params.outage_begin_h, params.outage_end_h);
            auto& trace = day.realized_pv_mw.at(static_cast<std::size_t>(params.outage_der));
            for (int t = lo; t < hi; ++t) trace[static_cast<std::size_t>(t)] = 0.0;
            break;
        }
        case 3:
        case 4:
        case 5: {
            for (std::size_t d = 0; d < day.realized_pv_mw.size(); ++d)
                day.realized_pv_mw[d] = base.pv_raw[d].large_err;
            if (case_id == 4) {
                auto [lo, hi] = day.epoch_range(params.bump_begin_h, params.bump_end_h);
                for (int t = lo; t < hi; ++t)
                    day.actual[static_cast<std::size_t>(t)].load_factor += params.load_bump;
            }
            if (case_id == 5) {
                for (auto& e : day.predicted) e.flex.reset(); // offline view expects no reward
            }
            break;
        }
        default:
            throw DataError("unknown case id " + std::to_string(case_id));
    }
    return day;
}

}  // namespace gridmdp
