#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "gridmdp/mdp.hpp"
#include "gridmdp/system.hpp"

namespace gridmdp {

/// Modified smart-persistence forecast update: the day-ahead prediction for
/// t' is scaled by the currently observed actual/predicted ratio. A zero
/// anchor prediction leaves the forecast untouched.
inline double smart_persistence(std::span<const double> pred, int t, double actual_t, int t_prime) {
    double anchor = pred[static_cast<std::size_t>(t)];
    double target = pred[static_cast<std::size_t>(t_prime)];
    if (anchor == 0.0) return target;
    return target * (actual_t / anchor);
}

namespace detail {

/// Degenerate copy of the system whose PV axes hold only the zero-error
/// representative. Point-forecast solves (the deterministic reference and
/// the perfect-information bound) run their dynamic program on it, leaving
/// the battery as the only stochastic-free state dimension.
inline SystemModel make_point_forecast_system(const SystemModel& sys) {
    const StateSpace& ss = sys.state_space();
    std::vector<std::vector<double>> pv_axes(static_cast<std::size_t>(ss.num_ders()), std::vector<double>{0.0});
    std::vector<std::vector<double>> soc_axes;
    for (int b = 0; b < ss.num_bess(); ++b) soc_axes.push_back(ss.soc_axis(b));
    std::vector<TransitionMatrix> kernels;
    for (int d = 0; d < ss.num_ders(); ++d) kernels.push_back(TransitionMatrix::identity({0.0}));
    return SystemModel(sys.network(), sys.ders(), StateSpace(std::move(pv_axes), std::move(soc_axes)),
                       sys.action_space(), std::move(kernels), sys.options());
}

inline long point_state_index(const SystemModel& point_sys, const std::vector<double>& soc_pct) {
    std::vector<int> pv(static_cast<std::size_t>(point_sys.state_space().num_ders()), 0);
    std::vector<int> soc = MdpOnlineController::soc_indices(point_sys, soc_pct);
    return point_sys.state_space().index(pv, soc);
}

}  // namespace detail

/// First reference model: re-solves the remaining horizon each epoch as a
/// deterministic program over (SoC x epoch), with PV point forecasts
/// refreshed by smart persistence from the latest measurement. The current
/// epoch is costed with measured data, so executed actions stay feasible.
class DeterministicController {
public:
    DeterministicController(const SystemModel& sys, const DayProfiles& day, DpOptions opts,
                            Phase action_phase = Phase::Online)
        : sys_(sys),
          day_(day),
          opts_(opts),
          phase_(action_phase),
          point_sys_(detail::make_point_forecast_system(sys)) {}

    ControlDecision operator()(const SimContext& ctx) const {
        const int t = ctx.t;
        const int remaining = day_.horizon() - t;
        std::vector<EpochProfile> view;
        view.reserve(static_cast<std::size_t>(remaining));

        const int num_ders = static_cast<int>(sys_.ders().size());
        std::vector<std::vector<double>> series(static_cast<std::size_t>(num_ders)); // day-ahead per DER
        for (int d = 0; d < num_ders; ++d)
            for (int k = 0; k < day_.horizon(); ++k)
                series[static_cast<std::size_t>(d)].push_back(
                    day_.predicted[static_cast<std::size_t>(k)].pv_pred_mw[static_cast<std::size_t>(d)]);

        EpochProfile now = day_.actual[static_cast<std::size_t>(t)];
        now.pv_pred_mw = ctx.measured_pv;
        view.push_back(std::move(now));
        for (int tp = t + 1; tp < day_.horizon(); ++tp) {
            EpochProfile e = day_.predicted[static_cast<std::size_t>(tp)];
            for (int d = 0; d < num_ders; ++d)
                e.pv_pred_mw[static_cast<std::size_t>(d)] = std::min(
                    smart_persistence(series[static_cast<std::size_t>(d)], t,
                                      ctx.measured_pv[static_cast<std::size_t>(d)], tp),
                    sys_.ders()[static_cast<std::size_t>(d)].pv_rating_mw);
            view.push_back(std::move(e));
        }
        for (int k = 0; k < remaining; ++k) view[static_cast<std::size_t>(k)].t = k;

        SystemDp dp(point_sys_, view, phase_);
        DpOptions opts = opts_;
        opts.store_policy = true;
        opts.terminal.clear();
        DpResult res = backward_induction(dp, opts);

        long s0 = detail::point_state_index(point_sys_, ctx.soc_pct);
        long best = res.policy.at(0, s0);
        ControlDecision dec;
        if (best < 0) {
            dec.action = sys_.action_space().fallback_action(phase_);
            dec.fallback = true;
        } else {
            dec.action = dp.decoded_action(best);
        }
        return dec;
    }

private:
    const SystemModel& sys_;
    const DayProfiles& day_;
    DpOptions opts_;
    Phase phase_;
    SystemModel point_sys_;
};

struct OraclePlan {
    bool feasible = true;
    double planned_total = 0; // dynamic-program value at the initial state
    UtilityTable utility;
    PolicyTable policy;
    std::shared_ptr<SystemModel> point_sys;
    std::vector<EpochProfile> view;
    Phase phase = Phase::Online;
};

/// Second reference model: with the realized generation known up front,
/// the day reduces to a deterministic program over (SoC x epoch) on the
/// extended action set. Its total is the floor no causal controller can
/// beat under the same discretization.
inline OraclePlan solve_optimal_oracle(const SystemModel& sys, const DayProfiles& day,
                                       const std::vector<double>& initial_soc_pct, DpOptions opts,
                                       Phase action_phase = Phase::Online) {
    OraclePlan plan;
    plan.phase = action_phase;
    plan.point_sys = std::make_shared<SystemModel>(detail::make_point_forecast_system(sys));
    plan.view = day.actual;
    for (int t = 0; t < day.horizon(); ++t)
        for (int d = 0; d < static_cast<int>(day.realized_pv_mw.size()); ++d)
            plan.view[static_cast<std::size_t>(t)].pv_pred_mw[static_cast<std::size_t>(d)] =
                day.realized_pv_mw[static_cast<std::size_t>(d)][static_cast<std::size_t>(t)];

    SystemDp dp(*plan.point_sys, plan.view, action_phase);
    opts.store_policy = true;
    DpResult res = backward_induction(dp, opts);
    plan.utility = std::move(res.utility);
    plan.policy = std::move(res.policy);

    long s0 = detail::point_state_index(*plan.point_sys, initial_soc_pct);
    plan.planned_total = plan.utility.at(0, s0);
    plan.feasible = plan.planned_total < opts.big_m;
    return plan;
}

/// Controller that replays an oracle plan during simulation.
inline Controller make_oracle_controller(const SystemModel& sys, const OraclePlan& plan) {
    return [&sys, &plan](const SimContext& ctx) {
        ControlDecision dec;
        long s = detail::point_state_index(*plan.point_sys, ctx.soc_pct);
        long best = plan.policy.at(ctx.t, s);
        if (best < 0) {
            dec.action = sys.action_space().fallback_action(plan.phase);
            dec.fallback = true;
        } else {
            dec.action = sys.action_space().decode(best, plan.phase);
        }
        return dec;
    };
}

}  // namespace gridmdp
