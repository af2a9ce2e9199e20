#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gridmdp/profiles.hpp"
#include "gridmdp/util.hpp"

namespace gridmdp {

/// Factored state grid: one PV error-bin axis per DER, one state-of-charge
/// axis per battery. Flat indices enumerate the cartesian product with the
/// last axis fastest.
class StateSpace {
public:
    StateSpace(std::vector<std::vector<double>> pv_bins, std::vector<std::vector<double>> soc_bins)
        : pv_bins_(std::move(pv_bins)), soc_bins_(std::move(soc_bins)) {
        for (const auto& axis : pv_bins_) {
            require_increasing(axis, "pv bins");
            bool has_zero = false;
            for (double b : axis) has_zero = has_zero || b == 0.0;
            if (!has_zero) throw DataError("pv error grid must contain the zero-error representative");
        }
        for (const auto& axis : soc_bins_) require_increasing(axis, "soc bins");
        n_states_ = 1;
        for (const auto& axis : pv_bins_) n_states_ *= static_cast<long>(axis.size());
        for (const auto& axis : soc_bins_) n_states_ *= static_cast<long>(axis.size());
    }

    int num_ders() const { return static_cast<int>(pv_bins_.size()); }
    int num_bess() const { return static_cast<int>(soc_bins_.size()); }
    long num_states() const { return n_states_; }
    const std::vector<double>& pv_axis(int d) const { return pv_bins_[static_cast<std::size_t>(d)]; }
    const std::vector<double>& soc_axis(int b) const { return soc_bins_[static_cast<std::size_t>(b)]; }

    int zero_error_bin(int d) const {
        const auto& axis = pv_axis(d);
        for (std::size_t i = 0; i < axis.size(); ++i)
            if (axis[i] == 0.0) return static_cast<int>(i);
        return 0;
    }

    long index(std::span<const int> pv_idx, std::span<const int> soc_idx) const {
        long s = 0;
        for (int d = 0; d < num_ders(); ++d)
            s = s * static_cast<long>(pv_axis(d).size()) + pv_idx[static_cast<std::size_t>(d)];
        for (int b = 0; b < num_bess(); ++b)
            s = s * static_cast<long>(soc_axis(b).size()) + soc_idx[static_cast<std::size_t>(b)];
        return s;
    }

    void decode(long s, std::vector<int>& pv_idx, std::vector<int>& soc_idx) const {
        pv_idx.resize(static_cast<std::size_t>(num_ders()));
        soc_idx.resize(static_cast<std::size_t>(num_bess()));
        for (int b = num_bess() - 1; b >= 0; --b) {
            long n = static_cast<long>(soc_axis(b).size());
            soc_idx[static_cast<std::size_t>(b)] = static_cast<int>(s % n);
            s /= n;
        }
        for (int d = num_ders() - 1; d >= 0; --d) {
            long n = static_cast<long>(pv_axis(d).size());
            pv_idx[static_cast<std::size_t>(d)] = static_cast<int>(s % n);
            s /= n;
        }
    }

private:
    static void require_increasing(const std::vector<double>& v, const char* what) {
        if (v.empty()) throw DataError(std::string(what) + ": empty axis");
        for (std::size_t i = 1; i < v.size(); ++i)
            if (v[i] <= v[i - 1]) throw DataError(std::string(what) + ": not strictly increasing");
    }

    std::vector<std::vector<double>> pv_bins_;
    std::vector<std::vector<double>> soc_bins_;
    long n_states_ = 0;
};

enum class Phase { Offline, Online };

struct Action {
    std::vector<int> pv_idx;  // curtailment level per DER
    std::vector<int> q_idx;   // reactive level per DER
    std::vector<int> bes_idx; // battery level per BESS
    int load_idx = 0;         // shedding group
    Phase q_phase = Phase::Offline; // which reactive grid q_idx refers to
};

/// Factored action grid. The online phase extends only the reactive-power
/// axis; everything else is shared, so utilities computed offline remain
/// valid for online re-selection.
class ActionSpace {
public:
    ActionSpace(int num_ders, int num_bess, std::vector<double> pv_levels, std::vector<double> q_levels_offline,
                std::vector<double> q_levels_online, std::vector<double> bes_levels,
                std::vector<std::vector<int>> load_groups)
        : d_(num_ders),
          b_(num_bess),
          pv_levels_(std::move(pv_levels)),
          q_off_(std::move(q_levels_offline)),
          q_on_(std::move(q_levels_online)),
          bes_levels_(std::move(bes_levels)),
          load_groups_(std::move(load_groups)) {
        if (pv_levels_.empty() || q_off_.empty() || q_on_.empty() || load_groups_.empty())
            throw DataError("action grid axis empty");
        if (b_ > 0 && bes_levels_.empty()) throw DataError("bes action axis empty");
        for (double v : pv_levels_)
            if (v < 0 || v > 1) throw DataError("curtailment level outside [0,1]");
        for (double v : q_off_)
            if (v < -1 || v > 1) throw DataError("reactive level outside [-1,1]");
        for (double v : q_on_)
            if (v < -1 || v > 1) throw DataError("reactive level outside [-1,1]");
    }

    int num_ders() const { return d_; }
    int num_bess() const { return b_; }
    const std::vector<double>& pv_levels() const { return pv_levels_; }
    const std::vector<double>& q_levels(Phase ph) const { return ph == Phase::Offline ? q_off_ : q_on_; }
    const std::vector<double>& bes_levels() const { return bes_levels_; }
    const std::vector<std::vector<int>>& load_groups() const { return load_groups_; }

    long num_actions(Phase ph) const {
        long n = 1;
        for (int d = 0; d < d_; ++d) n *= static_cast<long>(pv_levels_.size());
        for (int d = 0; d < d_; ++d) n *= static_cast<long>(q_levels(ph).size());
        for (int b = 0; b < b_; ++b) n *= static_cast<long>(bes_levels_.size());
        return n * static_cast<long>(load_groups_.size());
    }

    /// Digit order (most significant first): pv per DER, q per DER,
    /// bes per BESS, load group. Lexicographic tie-breaks follow this order.
    Action decode(long a, Phase ph) const {
        Action act;
        act.q_phase = ph;
        act.pv_idx.resize(static_cast<std::size_t>(d_));
        act.q_idx.resize(static_cast<std::size_t>(d_));
        act.bes_idx.resize(static_cast<std::size_t>(b_));
        long rem = a;
        act.load_idx = static_cast<int>(rem % static_cast<long>(load_groups_.size()));
        rem /= static_cast<long>(load_groups_.size());
        for (int b = b_ - 1; b >= 0; --b) {
            act.bes_idx[static_cast<std::size_t>(b)] = static_cast<int>(rem % static_cast<long>(bes_levels_.size()));
            rem /= static_cast<long>(bes_levels_.size());
        }
        const auto& q = q_levels(ph);
        for (int d = d_ - 1; d >= 0; --d) {
            act.q_idx[static_cast<std::size_t>(d)] = static_cast<int>(rem % static_cast<long>(q.size()));
            rem /= static_cast<long>(q.size());
        }
        for (int d = d_ - 1; d >= 0; --d) {
            act.pv_idx[static_cast<std::size_t>(d)] = static_cast<int>(rem % static_cast<long>(pv_levels_.size()));
            rem /= static_cast<long>(pv_levels_.size());
        }
        return act;
    }

    long index(const Action& act, Phase ph) const {
        long a = 0;
        for (int d = 0; d < d_; ++d) a = a * static_cast<long>(pv_levels_.size()) + act.pv_idx[static_cast<std::size_t>(d)];
        const auto& q = q_levels(ph);
        for (int d = 0; d < d_; ++d) a = a * static_cast<long>(q.size()) + act.q_idx[static_cast<std::size_t>(d)];
        for (int b = 0; b < b_; ++b) a = a * static_cast<long>(bes_levels_.size()) + act.bes_idx[static_cast<std::size_t>(b)];
        return a * static_cast<long>(load_groups_.size()) + act.load_idx;
    }

    /// The documented safe action: shed every sheddable bus, curtail all
    /// PV, zero reactive output, leave batteries idle.
    Action fallback_action(Phase ph) const {
        Action act;
        act.q_phase = ph;
        act.pv_idx.assign(static_cast<std::size_t>(d_), static_cast<int>(pv_levels_.size()) - 1);
        const auto& qlv = q_levels(ph);
        int q_zero = 0;
        for (std::size_t i = 0; i < qlv.size(); ++i)
            if (qlv[i] == 0.0) q_zero = static_cast<int>(i);
        act.q_idx.assign(static_cast<std::size_t>(d_), q_zero);
        int bes_zero = 0;
        for (std::size_t i = 0; i < bes_levels_.size(); ++i)
            if (bes_levels_[i] == 0.0) bes_zero = static_cast<int>(i);
        act.bes_idx.assign(static_cast<std::size_t>(b_), bes_zero);
        std::size_t biggest = 0;
        for (std::size_t g = 1; g < load_groups_.size(); ++g)
            if (load_groups_[g].size() > load_groups_[biggest].size()) biggest = g;
        act.load_idx = static_cast<int>(biggest);
        return act;
    }

private:
    int d_, b_;
    std::vector<double> pv_levels_, q_off_, q_on_, bes_levels_;
    std::vector<std::vector<int>> load_groups_;
};

/// The paper's sixteen shedding options for the 33-bus feeder: no shedding
/// first, then whole-feeder and progressively smaller contiguous bus ranges.
inline std::vector<std::vector<int>> default_load_groups_33() {
    auto range = [](int lo, int hi) {
        std::vector<int> v;
        for (int i = lo; i <= hi; ++i) v.push_back(i);
        return v;
    };
    return {
        {},             range(2, 33),  range(2, 28),  range(19, 33), range(2, 10),  range(11, 18),
        range(19, 25),  range(26, 33), range(2, 6),   range(7, 10),  range(11, 14), range(15, 18),
        range(19, 22),  range(23, 25), range(26, 29), range(30, 33),
    };
}

struct CostBreakdown {
    double c_grid = 0;
    double c_der = 0;
    double c_pv = 0;
    double c_load = 0;
    double c_tso = 0;
    double total = 0;

    static CostBreakdown make(double grid, double der, double pv, double load, double tso) {
        CostBreakdown c{grid, der, pv, load, tso, 0};
        c.total = grid + der + pv + load + tso;
        return c;
    }
    CostBreakdown& operator+=(const CostBreakdown& o) {
        c_grid += o.c_grid;
        c_der += o.c_der;
        c_pv += o.c_pv;
        c_load += o.c_load;
        c_tso += o.c_tso;
        total += o.total;
        return *this;
    }
};

/// Flexibility-service reward, always non-positive. Proportional mode pays
/// per MW of margin below the cap; flat mode pays the full cap-sized reward
/// whenever the transfer stays below it.
inline double tso_reward(double p_ts_mw, double /*q_ts_mvar*/, const std::optional<FlexWindow>& flex,
                         bool flat_mode = false) {
    if (!flex) return 0.0;
    if (p_ts_mw > flex->p_max_mw) return 0.0;
    if (flat_mode) return -flex->rate_per_mw * flex->p_max_mw;
    return -flex->rate_per_mw * (flex->p_max_mw - p_ts_mw);
}

/// Expected utility per epoch and state; layer `horizon` is the terminal
/// layer (zero unless a salvage term is configured).
struct UtilityTable {
    int horizon = 0;
    long num_states = 0;
    std::vector<double> u; // (horizon+1) * num_states

    double at(int t, long s) const { return u[static_cast<std::size_t>(t) * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(s)]; }
    double& at(int t, long s) { return u[static_cast<std::size_t>(t) * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(s)]; }
};

/// Greedy policy recorded during a sweep: best action per epoch and state,
/// -1 where every action was infeasible.
struct PolicyTable {
    int horizon = 0;
    long num_states = 0;
    std::vector<long> best;

    long at(int t, long s) const { return best[static_cast<std::size_t>(t) * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(s)]; }
    long& at(int t, long s) { return best[static_cast<std::size_t>(t) * static_cast<std::size_t>(num_states) + static_cast<std::size_t>(s)]; }
};

enum class DiscountMode {
    EpochPower, // gamma^t weighting on the expectation term, as printed
    PerStep,    // conventional single gamma per step
};

struct DpOptions {
    double gamma = 1.0;
    double big_m = 1e9;
    DiscountMode discounting = DiscountMode::EpochPower;
    bool store_policy = false;
    std::vector<double> terminal; // optional salvage layer, size num_states
};

inline double discount_weight(const DpOptions& opts, int t) {
    return opts.discounting == DiscountMode::EpochPower ? std::pow(opts.gamma, t) : opts.gamma;
}

/// Model concept for the finite-horizon solver. Costs are epoch dollar
/// amounts; an infeasible state-action pair reports std::nullopt and enters
/// the recursion as the big-M penalty with no future term. Successor
/// enumeration invokes the callback with (state, probability).
template <typename M>
concept DpModel = requires(const M& m, int t, long s, long a, const std::function<void(long, double)>& cb) {
    { m.horizon() } -> std::convertible_to<int>;
    { m.num_states() } -> std::convertible_to<long>;
    { m.num_actions(t) } -> std::convertible_to<long>;
    { m.cost(t, s, a) } -> std::convertible_to<std::optional<double>>;
    m.successors(t, s, a, cb);
};

template <typename M>
concept PreparesEpochs = requires(M& m, int t) { m.begin_epoch(t); };

struct DpResult {
    UtilityTable utility;
    PolicyTable policy;       // empty unless requested
    long infeasible_states = 0; // states with every action infeasible at some epoch
};

/// One state-action backup: big-M for infeasible pairs, otherwise the
/// immediate cost plus the discounted expected next-layer utility.
template <DpModel M>
double q_value(const M& model, const UtilityTable& u, const DpOptions& opts, int t, long s, long a) {
    auto c = model.cost(t, s, a);
    if (!c) return opts.big_m;
    double future = 0;
    bool any = false;
    model.successors(t, s, a, [&](long s2, double p) {
        any = true;
        future += p * u.at(t + 1, s2);
    });
    if (!any) return opts.big_m; // no lawful successor: treat as infeasible
    return *c + discount_weight(opts, t) * future;
}

/// Backward induction over the full horizon:
///   U_t(s) = min_a [ C_t(s,a) + gamma^t * sum_s' T_a(s'|s) U_{t+1}(s') ]
template <DpModel M>
DpResult backward_induction(M& model, const DpOptions& opts = {}) {
    const int horizon = model.horizon();
    const long ns = model.num_states();
    DpResult res;
    res.utility.horizon = horizon;
    res.utility.num_states = ns;
    res.utility.u.assign(static_cast<std::size_t>(horizon + 1) * static_cast<std::size_t>(ns), 0.0);
    if (!opts.terminal.empty()) {
        if (static_cast<long>(opts.terminal.size()) != ns) throw DataError("terminal layer size mismatch");
        for (long s = 0; s < ns; ++s) res.utility.at(horizon, s) = opts.terminal[static_cast<std::size_t>(s)];
    }
    if (opts.store_policy) {
        res.policy.horizon = horizon;
        res.policy.num_states = ns;
        res.policy.best.assign(static_cast<std::size_t>(horizon) * static_cast<std::size_t>(ns), -1);
    }

    for (int t = horizon - 1; t >= 0; --t) {
        if constexpr (PreparesEpochs<M>) model.begin_epoch(t);
        const long na = model.num_actions(t);
        for (long s = 0; s < ns; ++s) {
            double best = opts.big_m;
            long best_a = -1;
            for (long a = 0; a < na; ++a) {
                double q = q_value(model, res.utility, opts, t, s, a);
                if (q < best) {
                    best = q;
                    best_a = a;
                }
            }
            res.utility.at(t, s) = best;
            if (best_a < 0) ++res.infeasible_states;
            if (opts.store_policy) res.policy.at(t, s) = best_a;
        }
    }
    return res;
}

struct OnlineDecision {
    long action = -1;
    double q = 0;
    bool fallback = false;
};

/// Re-selects the action for the observed state using recalculated costs
/// and the offline utility for the future term. Ties resolve to the lowest
/// action index; if nothing is feasible the caller-supplied fallback is
/// returned with the fallback flag set.
template <DpModel M>
OnlineDecision online_select(M& model, int t, long s, const UtilityTable& u, const DpOptions& opts,
                             long fallback_action) {
    if constexpr (PreparesEpochs<M>) model.begin_epoch(t);
    const long na = model.num_actions(t);
    OnlineDecision dec;
    double best = opts.big_m;
    for (long a = 0; a < na; ++a) {
        double q = q_value(model, u, opts, t, s, a);
        if (q < best) {
            best = q;
            dec.action = a;
        }
    }
    dec.q = best;
    if (dec.action < 0) {
        dec.action = fallback_action;
        dec.fallback = true;
    }
    return dec;
}

}  // namespace gridmdp
