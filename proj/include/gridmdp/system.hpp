#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gridmdp/der.hpp"
#include "gridmdp/grid.hpp"
#include "gridmdp/mdp.hpp"
#include "gridmdp/profiles.hpp"
#include "gridmdp/util.hpp"

namespace gridmdp {

struct SystemOptions {
    double dt_h = 0.25;
    bool allow_grid_charging = true;
    bool tso_flat_reward = false;
    int workers = 0; // 0 = hardware concurrency
};

/// Full evaluation of one epoch under one action: DER dispatch, load
/// shedding, power flow, constraint checks and the cost split.
struct EpochEval {
    bool dispatch_ok = true;
    bool pf_converged = true;
    ConstraintReport report;
    CostBreakdown cost;
    double p_ts_mw = 0;
    double q_ts_mvar = 0;
    double shed_mw = 0;
    std::vector<DerDispatch> dispatches;

    bool feasible() const { return dispatch_ok && pf_converged && report.ok(); }
    std::size_t violations() const { return report.count(); }
};

/// Binds the network, DER fleet, discretization grids and PV-error kernels
/// into one immutable decision system. All evaluation methods are const and
/// safe to call concurrently.
class SystemModel {
public:
    SystemModel(NetworkModel net, std::vector<DerUnit> ders, StateSpace sspace, ActionSpace aspace,
                std::vector<TransitionMatrix> kernels, SystemOptions opts)
        : net_(std::move(net)),
          ders_(std::move(ders)),
          sspace_(std::move(sspace)),
          aspace_(std::move(aspace)),
          kernels_(std::move(kernels)),
          opts_(opts) {
        for (const auto& d : ders_) {
            der_bus_pos_.push_back(net_.bus_pos(d.bus));
            if (d.bess) bess_der_.push_back(static_cast<int>(der_bus_pos_.size()) - 1);
        }
        if (sspace_.num_ders() != static_cast<int>(ders_.size()))
            throw DataError("state space PV axes do not match DER count");
        if (sspace_.num_bess() != static_cast<int>(bess_der_.size()))
            throw DataError("state space SoC axes do not match battery count");
        if (aspace_.num_ders() != static_cast<int>(ders_.size()) ||
            aspace_.num_bess() != static_cast<int>(bess_der_.size()))
            throw DataError("action space axes do not match DER/battery counts");
        if (static_cast<int>(kernels_.size()) != static_cast<int>(ders_.size()))
            throw DataError("one transition kernel per DER required");
        for (int d = 0; d < static_cast<int>(ders_.size()); ++d)
            if (kernels_[static_cast<std::size_t>(d)].size() != static_cast<int>(sspace_.pv_axis(d).size()))
                throw DataError("kernel size does not match PV bin axis");
        for (int g = 0; g < static_cast<int>(aspace_.load_groups().size()); ++g)
            for (int bus : aspace_.load_groups()[static_cast<std::size_t>(g)]) net_.bus_pos(bus);
        build_soc_transitions();
    }

    const NetworkModel& network() const { return net_; }
    const std::vector<DerUnit>& ders() const { return ders_; }
    const StateSpace& state_space() const { return sspace_; }
    const ActionSpace& action_space() const { return aspace_; }
    const std::vector<TransitionMatrix>& kernels() const { return kernels_; }
    const SystemOptions& options() const { return opts_; }
    int bess_der(int b) const { return bess_der_[static_cast<std::size_t>(b)]; }
    int num_bess() const { return static_cast<int>(bess_der_.size()); }

    /// SoC grid index reached from soc_idx under a battery action level,
    /// or -1 when the move leaves the grid (capacity bound).
    int soc_transition(int b, int soc_idx, int bes_idx) const {
        return soc_next_[static_cast<std::size_t>(b)]
                        [static_cast<std::size_t>(soc_idx) * aspace_.bes_levels().size() +
                         static_cast<std::size_t>(bes_idx)];
    }

    /// Evaluates one epoch. `available_pv` is the DC-side PV power per DER
    /// (already reconstructed from an error bin offline, or measured
    /// online); `soc_pct` is the per-battery state of charge.
    EpochEval evaluate_epoch(const EpochProfile& prof, std::span<const double> available_pv,
                             std::span<const double> soc_pct, const Action& act) const {
        EpochEval ev;
        std::vector<PQ> inj(static_cast<std::size_t>(net_.num_buses()));

        double der_loss = 0, curtailed = 0;
        for (int d = 0; d < static_cast<int>(ders_.size()); ++d) {
            const DerUnit& der = ders_[static_cast<std::size_t>(d)];
            int b = bess_index_of_der(d);
            double soc = b >= 0 ? soc_pct[static_cast<std::size_t>(b)] : 0.0;
            double delta = b >= 0 ? aspace_.bes_levels()[static_cast<std::size_t>(
                                        act.bes_idx[static_cast<std::size_t>(b)])]
                                  : 0.0;
            DerDispatch disp = dispatch_der(der, available_pv[static_cast<std::size_t>(d)],
                                            aspace_.pv_levels()[static_cast<std::size_t>(
                                                act.pv_idx[static_cast<std::size_t>(d)])],
                                            q_level(act, d),
                                            soc, delta, opts_.dt_h, DispatchOptions{opts_.allow_grid_charging});
            ev.dispatches.push_back(disp);
            if (!disp.feasible) {
                ev.dispatch_ok = false;
                return ev;
            }
            der_loss += disp.der_loss_mw;
            curtailed += disp.pv_curtailed_mw;
            auto& slot = inj[static_cast<std::size_t>(der_bus_pos_[static_cast<std::size_t>(d)])];
            slot.p_mw += disp.p_injection_mw;
            slot.q_mvar += disp.q_injection_mvar;
        }

        // Shedding zeroes the group's scaled loads; the unserved active
        // power is what the shedding penalty charges for.
        const auto& group = aspace_.load_groups()[static_cast<std::size_t>(act.load_idx)];
        for (int bus_id : group) {
            int pos = net_.bus_pos(bus_id);
            const Bus& bus = net_.buses()[static_cast<std::size_t>(pos)];
            inj[static_cast<std::size_t>(pos)].p_mw += bus.p_load_mw * prof.load_factor;
            inj[static_cast<std::size_t>(pos)].q_mvar += bus.q_load_mvar * prof.load_factor;
            ev.shed_mw += bus.p_load_mw * prof.load_factor;
        }

        auto pf = solve_power_flow(net_, inj, prof.load_factor);
        if (!pf) {
            ev.pf_converged = false;
            return ev;
        }
        ev.p_ts_mw = pf->slack_p_mw;
        ev.q_ts_mvar = pf->slack_q_mvar;
        ev.report = check_constraints(*pf, net_, prof.tso);

        const double dt = opts_.dt_h;
        ev.cost = CostBreakdown::make(dt * prof.prices.c_grid * pf->grid_loss_mw,
                                      dt * prof.prices.c_der * der_loss,
                                      dt * prof.prices.c_pv * curtailed,
                                      dt * prof.prices.c_load * ev.shed_mw,
                                      tso_reward(ev.p_ts_mw, ev.q_ts_mvar, prof.flex, opts_.tso_flat_reward));
        return ev;
    }

    /// evaluate_epoch with PV availability reconstructed from error bins.
    EpochEval evaluate_binned(const EpochProfile& prof, std::span<const int> pv_bin_idx,
                              std::span<const double> soc_pct, const Action& act) const {
        std::vector<double> avail(ders_.size());
        for (int d = 0; d < static_cast<int>(ders_.size()); ++d)
            avail[static_cast<std::size_t>(d)] =
                pv_power_from_error(prof.pv_pred_mw[static_cast<std::size_t>(d)],
                                    sspace_.pv_axis(d)[static_cast<std::size_t>(pv_bin_idx[static_cast<std::size_t>(d)])],
                                    ders_[static_cast<std::size_t>(d)].pv_rating_mw);
        return evaluate_epoch(prof, avail, soc_pct, act);
    }

    int bess_index_of_der(int d) const {
        for (int b = 0; b < static_cast<int>(bess_der_.size()); ++b)
            if (bess_der_[static_cast<std::size_t>(b)] == d) return b;
        return -1;
    }

    double q_level(const Action& act, int d) const {
        const auto& q = aspace_.q_levels(act.q_phase);
        return q[static_cast<std::size_t>(act.q_idx[static_cast<std::size_t>(d)])];
    }

private:
    void build_soc_transitions() {
        soc_next_.resize(static_cast<std::size_t>(num_bess()));
        for (int b = 0; b < num_bess(); ++b) {
            const auto& axis = sspace_.soc_axis(b);
            const auto& levels = aspace_.bes_levels();
            const BessUnit& bess = *ders_[static_cast<std::size_t>(bess_der_[static_cast<std::size_t>(b)])].bess;
            const double e_min_pct = bess.capacity_mwh > 0 ? 100.0 * bess.e_min_mwh / bess.capacity_mwh : 0.0;
            auto& table = soc_next_[static_cast<std::size_t>(b)];
            table.assign(axis.size() * levels.size(), -1);
            for (std::size_t si = 0; si < axis.size(); ++si) {
                for (std::size_t li = 0; li < levels.size(); ++li) {
                    double next = axis[si] + levels[li];
                    if (next < e_min_pct - 1e-9 || next > 100.0 + 1e-9) continue;
                    int hit = -1;
                    for (std::size_t sj = 0; sj < axis.size(); ++sj)
                        if (std::fabs(axis[sj] - next) < 1e-6) {
                            hit = static_cast<int>(sj);
                            break;
                        }
                    if (hit < 0)
                        throw DataError("SoC grid and battery action grid are misaligned: " +
                                        format_double(axis[si]) + " + " + format_double(levels[li]) +
                                        " lands off-grid");
                    table[si * levels.size() + li] = hit;
                }
            }
        }
    }

    NetworkModel net_;
    std::vector<DerUnit> ders_;
    StateSpace sspace_;
    ActionSpace aspace_;
    std::vector<TransitionMatrix> kernels_;
    SystemOptions opts_;
    std::vector<int> der_bus_pos_;
    std::vector<int> bess_der_;
    std::vector<std::vector<int>> soc_next_; // per BESS: soc_idx x bes_idx -> next soc_idx or -1
};

namespace detail {

/// Decoded action with resolved level values, cached to avoid repeated
/// mixed-radix decoding in the hot evaluation loops.
struct CachedAction {
    Action act;
    std::vector<double> bes_delta; // per BESS
};

inline std::vector<CachedAction> cache_actions(const ActionSpace& aspace, Phase ph) {
    std::vector<CachedAction> out;
    long na = aspace.num_actions(ph);
    out.reserve(static_cast<std::size_t>(na));
    for (long a = 0; a < na; ++a) {
        CachedAction ca;
        ca.act = aspace.decode(a, ph);
        ca.act.q_phase = ph;
        for (int b = 0; b < aspace.num_bess(); ++b)
            ca.bes_delta.push_back(
                aspace.bes_levels()[static_cast<std::size_t>(ca.act.bes_idx[static_cast<std::size_t>(b)])]);
        out.push_back(std::move(ca));
    }
    return out;
}

}  // namespace detail

/// Enumerates the composite successor distribution for one state-action
/// pair: the product of the per-DER error kernels (identity collapse to the
/// zero-error bin when the next epoch's prediction is zero) times the
/// deterministic battery moves. Invokes cb(state_index, probability); emits
/// nothing when a battery move is infeasible.
class SuccessorGen {
public:
    SuccessorGen(const SystemModel& sys, std::function<double(int t, int d)> pred_next)
        : sys_(sys), pred_next_(std::move(pred_next)) {}

    template <typename Cb>
    void enumerate(int t, std::span<const int> pv_idx, std::span<const int> soc_idx,
                   const Action& act, Cb&& cb) const {
        const auto& ss = sys_.state_space();
        const int nb = ss.num_bess();
        std::vector<int> soc_next(static_cast<std::size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            int nxt = sys_.soc_transition(b, soc_idx[static_cast<std::size_t>(b)],
                                          act.bes_idx[static_cast<std::size_t>(b)]);
            if (nxt < 0) return; // battery bound violated: no lawful successor
            soc_next[static_cast<std::size_t>(b)] = nxt;
        }
        std::vector<int> pv_next(static_cast<std::size_t>(ss.num_ders()));
        product(t, 0, 1.0, pv_idx, pv_next, soc_next, cb);
    }

private:
    template <typename Cb>
    void product(int t, int d, double prob, std::span<const int> pv_idx, std::vector<int>& pv_next,
                 const std::vector<int>& soc_next, Cb&& cb) const {
        const auto& ss = sys_.state_space();
        if (d == ss.num_ders()) {
            cb(ss.index(pv_next, soc_next), prob);
            return;
        }
        if (pred_next_(t, d) <= 0) {
            // Night epoch ahead: the measured error is zero by definition.
            pv_next[static_cast<std::size_t>(d)] = ss.zero_error_bin(d);
            product(t, d + 1, prob, pv_idx, pv_next, soc_next, cb);
            return;
        }
        auto row = sys_.kernels()[static_cast<std::size_t>(d)].row(pv_idx[static_cast<std::size_t>(d)]);
        for (int j = 0; j < static_cast<int>(row.size()); ++j) {
            double p = row[static_cast<std::size_t>(j)];
            if (p <= 0) continue;
            pv_next[static_cast<std::size_t>(d)] = j;
            product(t, d + 1, prob * p, pv_idx, pv_next, soc_next, cb);
        }
    }

    const SystemModel& sys_;
    std::function<double(int t, int d)> pred_next_;
};

/// Profile-bound view of the decision problem, shaped for
/// backward_induction. Costs for one epoch are filled in parallel into a
/// dense table keyed by (canonical PV tuple, action); the canonical tuple
/// collapses DERs whose prediction is zero, since every error bin then
/// yields zero output. The offline solve runs this over the predicted view
/// with the offline action grid; the reference controllers reuse it over
/// their own profile views with the extended grid.
class SystemDp {
public:
    SystemDp(const SystemModel& sys, const std::vector<EpochProfile>& profiles, Phase phase = Phase::Offline)
        : sys_(sys),
          profiles_(profiles),
          succ_(sys, [this](int t, int d) {
              return t + 1 < static_cast<int>(profiles_.size())
                         ? profiles_[static_cast<std::size_t>(t + 1)].pv_pred_mw[static_cast<std::size_t>(d)]
                         : 0.0;
          }),
          actions_(detail::cache_actions(sys.action_space(), phase)) {
        const auto& ss = sys_.state_space();
        states_pv_.resize(static_cast<std::size_t>(ss.num_states()));
        states_soc_.resize(static_cast<std::size_t>(ss.num_states()));
        std::vector<int> pv, soc;
        for (long s = 0; s < ss.num_states(); ++s) {
            ss.decode(s, pv, soc);
            states_pv_[static_cast<std::size_t>(s)] = pv;
            states_soc_[static_cast<std::size_t>(s)] = soc;
        }
    }

    int horizon() const { return static_cast<int>(profiles_.size()); }
    long num_states() const { return sys_.state_space().num_states(); }
    long num_actions(int) const { return static_cast<long>(actions_.size()); }

    void begin_epoch(int t) {
        const auto& ss = sys_.state_space();
        const auto& prof = profiles_[static_cast<std::size_t>(t)];
        canon_radix_.assign(static_cast<std::size_t>(ss.num_ders()), 1);
        long n_canon = 1;
        for (int d = 0; d < ss.num_ders(); ++d) {
            int r = prof.pv_pred_mw[static_cast<std::size_t>(d)] > 0
                        ? static_cast<int>(ss.pv_axis(d).size())
                        : 1;
            canon_radix_[static_cast<std::size_t>(d)] = r;
            n_canon *= r;
        }
        n_canon_ = n_canon;
        const long na = num_actions(t);
        cost_table_.assign(static_cast<std::size_t>(n_canon * na), std::numeric_limits<double>::quiet_NaN());

        parallel_for(n_canon * na, sys_.options().workers, [&](long idx) {
            const long ci = idx / na;
            const long a = idx % na;
            cost_table_[static_cast<std::size_t>(idx)] = evaluate_cell(prof, ci, a);
        });
    }

    std::optional<double> cost(int /*t*/, long s, long a) const {
        const auto& soc_idx = states_soc_[static_cast<std::size_t>(s)];
        const auto& ca = actions_[static_cast<std::size_t>(a)];
        for (int b = 0; b < static_cast<int>(soc_idx.size()); ++b)
            if (sys_.soc_transition(b, soc_idx[static_cast<std::size_t>(b)],
                                    ca.act.bes_idx[static_cast<std::size_t>(b)]) < 0)
                return std::nullopt;
        double v = cost_table_[static_cast<std::size_t>(canon_index(states_pv_[static_cast<std::size_t>(s)]) *
                                                            static_cast<long>(actions_.size()) +
                                                        a)];
        if (std::isnan(v)) return std::nullopt;
        return v;
    }

    template <typename Cb>
    void successors(int t, long s, long a, Cb&& cb) const {
        succ_.enumerate(t, states_pv_[static_cast<std::size_t>(s)], states_soc_[static_cast<std::size_t>(s)],
                        actions_[static_cast<std::size_t>(a)].act, cb);
    }

    const Action& decoded_action(long a) const { return actions_[static_cast<std::size_t>(a)].act; }

private:
    long canon_index(const std::vector<int>& pv_idx) const {
        long ci = 0;
        for (int d = 0; d < static_cast<int>(pv_idx.size()); ++d) {
            int r = canon_radix_[static_cast<std::size_t>(d)];
            ci = ci * r + (r == 1 ? 0 : pv_idx[static_cast<std::size_t>(d)]);
        }
        return ci;
    }

    double evaluate_cell(const EpochProfile& prof, long ci, long a) const {
        const auto& ss = sys_.state_space();
        const auto& ca = actions_[static_cast<std::size_t>(a)];
        // Unpack the canonical tuple into bin indices (zero bin for
        // collapsed axes; the value is irrelevant since prediction is 0).
        std::vector<int> pv_idx(static_cast<std::size_t>(ss.num_ders()), 0);
        long rem = ci;
        for (int d = ss.num_ders() - 1; d >= 0; --d) {
            int r = canon_radix_[static_cast<std::size_t>(d)];
            pv_idx[static_cast<std::size_t>(d)] = r == 1 ? ss.zero_error_bin(d) : static_cast<int>(rem % r);
            rem /= r;
        }
        // Representative in-bounds SoC per battery; the dispatch result is
        // identical for every SoC from which the move stays within bounds.
        std::vector<double> soc_rep(static_cast<std::size_t>(sys_.num_bess()));
        for (int b = 0; b < sys_.num_bess(); ++b) {
            double delta = ca.bes_delta[static_cast<std::size_t>(b)];
            const BessUnit& bess = *sys_.ders()[static_cast<std::size_t>(sys_.bess_der(b))].bess;
            double e_min_pct = bess.capacity_mwh > 0 ? 100.0 * bess.e_min_mwh / bess.capacity_mwh : 0.0;
            soc_rep[static_cast<std::size_t>(b)] = std::max(e_min_pct, e_min_pct - std::min(delta, 0.0));
            if (soc_rep[static_cast<std::size_t>(b)] + std::max(delta, 0.0) > 100.0)
                soc_rep[static_cast<std::size_t>(b)] = 100.0 - std::max(delta, 0.0);
        }
        EpochEval ev = sys_.evaluate_binned(prof, pv_idx, soc_rep, ca.act);
        if (!ev.feasible()) return std::numeric_limits<double>::quiet_NaN();
        return ev.cost.total;
    }

    const SystemModel& sys_;
    const std::vector<EpochProfile>& profiles_;
    SuccessorGen succ_;
    std::vector<detail::CachedAction> actions_;
    std::vector<std::vector<int>> states_pv_, states_soc_;

    std::vector<int> canon_radix_;
    long n_canon_ = 0;
    std::vector<double> cost_table_;
};

/// Online view for one epoch: immediate costs recomputed from measured
/// data over the extended action set, future term via the offline kernels.
class OnlineDp {
public:
    OnlineDp(const SystemModel& sys, const std::vector<EpochProfile>& predicted, const EpochProfile& actual,
             std::span<const double> measured_pv, std::span<const double> soc_pct, int horizon)
        : sys_(sys),
          horizon_(horizon),
          actual_(actual),
          predicted_(&predicted),
          succ_(sys,
                [this](int t, int d) {
                    return t + 1 < static_cast<int>(predicted_->size())
                               ? (*predicted_)[static_cast<std::size_t>(t + 1)]
                                     .pv_pred_mw[static_cast<std::size_t>(d)]
                               : 0.0;
                }),
          actions_(detail::cache_actions(sys.action_space(), Phase::Online)),
          measured_pv_(measured_pv.begin(), measured_pv.end()),
          soc_(soc_pct.begin(), soc_pct.end()) {
        cost_table_.assign(actions_.size(), std::numeric_limits<double>::quiet_NaN());
        parallel_for(static_cast<long>(actions_.size()), sys_.options().workers, [&](long a) {
            EpochEval ev = sys_.evaluate_epoch(actual_, measured_pv_, soc_, actions_[static_cast<std::size_t>(a)].act);
            if (ev.feasible()) cost_table_[static_cast<std::size_t>(a)] = ev.cost.total;
        });
    }

    int horizon() const { return horizon_; }
    long num_states() const { return sys_.state_space().num_states(); }
    long num_actions(int) const { return static_cast<long>(actions_.size()); }

    std::optional<double> cost(int /*t*/, long /*s*/, long a) const {
        double v = cost_table_[static_cast<std::size_t>(a)];
        if (std::isnan(v)) return std::nullopt;
        return v;
    }

    template <typename Cb>
    void successors(int t, long s, long a, Cb&& cb) const {
        std::vector<int> pv, soc;
        sys_.state_space().decode(s, pv, soc);
        succ_.enumerate(t, pv, soc, actions_[static_cast<std::size_t>(a)].act, cb);
    }

    const Action& decoded_action(long a) const { return actions_[static_cast<std::size_t>(a)].act; }

private:
    const SystemModel& sys_;
    int horizon_;
    EpochProfile actual_;
    const std::vector<EpochProfile>* predicted_;
    SuccessorGen succ_;
    std::vector<detail::CachedAction> actions_;
    std::vector<double> measured_pv_, soc_;
    std::vector<double> cost_table_;
};

struct ControlDecision {
    Action action;
    bool fallback = false;
};

struct SimContext {
    int t = 0;
    std::vector<double> soc_pct;    // per battery
    std::vector<int> pv_state;      // binned realized error per DER
    std::vector<double> measured_pv; // realized generation per DER, MW
};

using Controller = std::function<ControlDecision(const SimContext&)>;

struct TrajectoryRow {
    int t = 0;
    std::vector<int> pv_state;
    std::vector<int> soc_state;
    Action action;
    CostBreakdown cost;
    double p_ts_mw = 0;
    double q_ts_mvar = 0;
    int violations = 0;
    bool fallback = false;
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;
    CostBreakdown totals;
    int fallback_epochs = 0;
    int violation_epochs = 0;
};

/// Bin index of the realized PV error for each DER at epoch t.
inline std::vector<int> bin_realized_state(const SystemModel& sys, const DayProfiles& day, int t) {
    const auto& ss = sys.state_space();
    std::vector<int> pv(static_cast<std::size_t>(ss.num_ders()));
    for (int d = 0; d < ss.num_ders(); ++d) {
        double pred = day.predicted[static_cast<std::size_t>(t)].pv_pred_mw[static_cast<std::size_t>(d)];
        double actual = day.realized_pv_mw[static_cast<std::size_t>(d)][static_cast<std::size_t>(t)];
        pv[static_cast<std::size_t>(d)] = nearest_bin(relative_error(actual, pred), ss.pv_axis(d));
    }
    return pv;
}

/// Steps the day epoch by epoch: the controller picks an action from the
/// measured state, the action is executed against realized data, costs and
/// any constraint violations are logged, and the battery state advances.
inline Trajectory simulate_day(const SystemModel& sys, const Controller& controller, const DayProfiles& day,
                               std::vector<double> initial_soc_pct) {
    Trajectory traj;
    const auto& ss = sys.state_space();
    std::vector<double> soc = std::move(initial_soc_pct);
    if (static_cast<int>(soc.size()) != ss.num_bess()) throw DataError("initial SoC size mismatch");

    for (int t = 0; t < day.horizon(); ++t) {
        SimContext ctx;
        ctx.t = t;
        ctx.soc_pct = soc;
        ctx.pv_state = bin_realized_state(sys, day, t);
        for (int d = 0; d < ss.num_ders(); ++d)
            ctx.measured_pv.push_back(day.realized_pv_mw[static_cast<std::size_t>(d)][static_cast<std::size_t>(t)]);

        ControlDecision dec = controller(ctx);
        EpochEval ev = sys.evaluate_epoch(day.actual[static_cast<std::size_t>(t)], ctx.measured_pv, soc, dec.action);
        if (!ev.dispatch_ok || !ev.pf_converged)
            throw DataError("controller returned a physically unexecutable action at epoch " + std::to_string(t));

        TrajectoryRow row;
        row.t = t;
        row.pv_state = ctx.pv_state;
        for (int b = 0; b < ss.num_bess(); ++b) {
            const auto& axis = ss.soc_axis(b);
            int idx = 0;
            for (std::size_t i = 0; i < axis.size(); ++i)
                if (std::fabs(axis[i] - soc[static_cast<std::size_t>(b)]) < 1e-6) idx = static_cast<int>(i);
            row.soc_state.push_back(idx);
        }
        row.action = dec.action;
        row.cost = ev.cost;
        row.p_ts_mw = ev.p_ts_mw;
        row.q_ts_mvar = ev.q_ts_mvar;
        row.violations = static_cast<int>(ev.violations());
        row.fallback = dec.fallback;
        traj.totals += ev.cost;
        if (dec.fallback) ++traj.fallback_epochs;
        if (row.violations > 0) ++traj.violation_epochs;
        traj.rows.push_back(std::move(row));

        for (int b = 0; b < ss.num_bess(); ++b) {
            int d = sys.bess_der(b);
            soc[static_cast<std::size_t>(b)] = ev.dispatches[static_cast<std::size_t>(d)].soc_next_pct;
        }
    }
    return traj;
}

/// The proposed controller: per-epoch re-selection over the extended
/// action set against the offline utility table.
class MdpOnlineController {
public:
    MdpOnlineController(const SystemModel& sys, const DayProfiles& day, UtilityTable table, DpOptions opts)
        : sys_(sys), day_(day), table_(std::move(table)), opts_(opts) {}

    ControlDecision operator()(const SimContext& ctx) const {
        OnlineDp model(sys_, day_.predicted, day_.actual[static_cast<std::size_t>(ctx.t)], ctx.measured_pv,
                       ctx.soc_pct, day_.horizon());
        std::vector<int> soc_idx = soc_indices(sys_, ctx.soc_pct);
        long s = sys_.state_space().index(ctx.pv_state, soc_idx);
        long fb = sys_.action_space().index(sys_.action_space().fallback_action(Phase::Online), Phase::Online);
        OnlineDecision od = online_select(model, ctx.t, s, table_, opts_, fb);
        ControlDecision dec;
        dec.action = model.decoded_action(od.action);
        dec.fallback = od.fallback;
        return dec;
    }

    static std::vector<int> soc_indices(const SystemModel& sys, const std::vector<double>& soc_pct) {
        const auto& ss = sys.state_space();
        std::vector<int> idx(static_cast<std::size_t>(ss.num_bess()), 0);
        for (int b = 0; b < ss.num_bess(); ++b) {
            const auto& axis = ss.soc_axis(b);
            int best = 0;
            double best_d = std::fabs(axis[0] - soc_pct[static_cast<std::size_t>(b)]);
            for (std::size_t i = 1; i < axis.size(); ++i) {
                double dd = std::fabs(axis[i] - soc_pct[static_cast<std::size_t>(b)]);
                if (dd < best_d) {
                    best = static_cast<int>(i);
                    best_d = dd;
                }
            }
            idx[static_cast<std::size_t>(b)] = best;
        }
        return idx;
    }

private:
    const SystemModel& sys_;
    const DayProfiles& day_;
    UtilityTable table_;
    DpOptions opts_;
};

}  // namespace gridmdp
