#pragma once

#include <cmath>
#include <optional>

#include "gridmdp/util.hpp"

namespace gridmdp {

struct BessUnit {
    double capacity_mwh = 0;        // usable energy at 100% state of charge
    double e_min_mwh = 0;           // lower energy bound
    double converter_p_max_mw = 0;  // symmetric charge/discharge limit
    double converter_efficiency = 1.0;
};

struct DerUnit {
    int bus = 0;
    double pv_rating_mw = 0;
    double inverter_s_max_mva = 0;
    double inverter_efficiency = 1.0; // includes transformer/interconnection losses
    std::optional<BessUnit> bess;
};

/// PV power that realizes a given relative prediction error. Inverse of
///   err = (actual - pred) / max(actual, pred)
/// so actual = pred*(1+err) for err <= 0 and pred/(1-err) for err > 0.
/// err = +1 has no finite preimage and saturates at the panel rating.
/// Zero prediction means night: output is zero regardless of the bin.
inline double pv_power_from_error(double p_pred_mw, double error, double rating_mw) {
    if (p_pred_mw <= 0) return 0.0;
    double p;
    if (error <= 0)
        p = p_pred_mw * (1.0 + error);
    else if (error < 1.0)
        p = p_pred_mw / (1.0 - error);
    else
        p = rating_mw;
    return std::min(std::max(p, 0.0), rating_mw);
}

/// One battery step. Positive p_dc_mw draws power from the DC link
/// (charging); negative delivers to it. Conversion losses land on the
/// link side: charging draws stored/eta, discharging delivers stored*eta.
struct BatteryFlow {
    bool feasible = true;
    double soc_next_pct = 0;
    double p_dc_mw = 0;   // signed link-side power
    double loss_mw = 0;   // converter loss
};

inline BatteryFlow battery_transition(double soc_pct, double delta_soc_pct, const BessUnit& bess, double dt_h) {
    BatteryFlow f;
    f.soc_next_pct = soc_pct + delta_soc_pct;
    const double e_min_pct = bess.capacity_mwh > 0 ? 100.0 * bess.e_min_mwh / bess.capacity_mwh : 0.0;
    if (f.soc_next_pct < e_min_pct - 1e-9 || f.soc_next_pct > 100.0 + 1e-9) {
        f.feasible = false;
        return f;
    }
    if (delta_soc_pct == 0.0) return f;

    const double stored_mw = (delta_soc_pct / 100.0) * bess.capacity_mwh / dt_h; // signed, battery side
    const double eta = bess.converter_efficiency;
    if (stored_mw > 0) {
        f.p_dc_mw = stored_mw / eta;
        f.loss_mw = f.p_dc_mw - stored_mw;
    } else {
        f.p_dc_mw = stored_mw * eta;
        f.loss_mw = -stored_mw + f.p_dc_mw; // |stored| - |delivered|
    }
    if (std::fabs(f.p_dc_mw) > bess.converter_p_max_mw + 1e-9) f.feasible = false;
    return f;
}

struct DerDispatch {
    bool feasible = true;
    double p_injection_mw = 0;   // grid-side active, negative when drawing
    double q_injection_mvar = 0; // grid-side reactive
    double der_loss_mw = 0;      // inverter + battery converter losses
    double pv_curtailed_mw = 0;
    double soc_next_pct = 0;     // unchanged when the unit has no battery
};

struct DispatchOptions {
    bool allow_grid_charging = true; // battery may draw from the grid through the inverter
};

/// Dispatches one DER for one epoch given the available PV power.
/// a_pv in [0,1] curtails, a_q in [-1,1] scales the remaining reactive
/// headroom, delta_soc_pct moves the battery (0 when absent).
inline DerDispatch dispatch_der(const DerUnit& der, double available_pv_mw, double a_pv, double a_q,
                                double soc_pct, double delta_soc_pct, double dt_h,
                                const DispatchOptions& opts = {}) {
    DerDispatch d;
    d.soc_next_pct = soc_pct;

    const double curtailed = a_pv * available_pv_mw;
    d.pv_curtailed_mw = curtailed;
    double dc_net = available_pv_mw - curtailed;

    double conv_loss = 0;
    if (der.bess) {
        BatteryFlow bf = battery_transition(soc_pct, delta_soc_pct, *der.bess, dt_h);
        if (!bf.feasible) {
            d.feasible = false;
            return d;
        }
        d.soc_next_pct = bf.soc_next_pct;
        conv_loss = bf.loss_mw;
        dc_net -= bf.p_dc_mw;
    } else if (delta_soc_pct != 0.0) {
        d.feasible = false; // battery action on a unit without storage
        return d;
    }

    if (dc_net < -1e-12 && !opts.allow_grid_charging) {
        d.feasible = false;
        return d;
    }

    const double eta = der.inverter_efficiency;
    double inv_loss;
    if (dc_net >= 0) {
        d.p_injection_mw = dc_net * eta;
        inv_loss = dc_net - d.p_injection_mw;
    } else {
        d.p_injection_mw = dc_net / eta; // grid draw exceeds the DC demand
        inv_loss = -d.p_injection_mw + dc_net;
    }
    d.der_loss_mw = inv_loss + conv_loss;

    const double s_max = der.inverter_s_max_mva;
    if (std::fabs(d.p_injection_mw) > s_max + 1e-9) {
        d.feasible = false;
        return d;
    }
    const double headroom_sq = s_max * s_max - d.p_injection_mw * d.p_injection_mw;
    d.q_injection_mvar = a_q * std::sqrt(std::max(0.0, headroom_sq));
    return d;
}

/// Spec-shaped overload: PV availability reconstructed from the
/// prediction and a discretized relative-error value.
inline DerDispatch dispatch_der_binned(const DerUnit& der, double p_pred_mw, double error_bin, double a_pv,
                                       double a_q, double soc_pct, double delta_soc_pct, double dt_h,
                                       const DispatchOptions& opts = {}) {
    double avail = pv_power_from_error(p_pred_mw, error_bin, der.pv_rating_mw);
    return dispatch_der(der, avail, a_pv, a_q, soc_pct, delta_soc_pct, dt_h, opts);
}

}  // namespace gridmdp
