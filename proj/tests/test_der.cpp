#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gridmdp/der.hpp"
#include "gridmdp/profiles.hpp"
#include "gridmdp/util.hpp"

using namespace gridmdp;

namespace {

BessUnit paper_bess() { return {2.85, 0.0, 3.0, 0.95}; }

DerUnit der_with_battery() {
    DerUnit d;
    d.bus = 3;
    d.pv_rating_mw = 3.0;
    d.inverter_s_max_mva = 3.0;
    d.inverter_efficiency = 0.9;
    d.bess = paper_bess();
    return d;
}

DerUnit der_pv_only() {
    DerUnit d;
    d.bus = 30;
    d.pv_rating_mw = 1.5;
    d.inverter_s_max_mva = 1.5;
    d.inverter_efficiency = 0.9;
    return d;
}

}  // namespace

TEST_CASE("PV power reconstruction from error bins", "[der]") {
    REQUIRE_THAT(pv_power_from_error(1.0, -0.5, 3.0), Catch::Matchers::WithinAbs(0.5, 1e-15));
    REQUIRE_THAT(pv_power_from_error(1.0, 0.0, 3.0), Catch::Matchers::WithinAbs(1.0, 1e-15));
    // forward check: (1.0 - 0.5)/max{1.0, 0.5} = 0.5
    double p = pv_power_from_error(0.5, 0.5, 3.0);
    REQUIRE_THAT(p, Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE_THAT(relative_error(p, 0.5), Catch::Matchers::WithinAbs(0.5, 1e-12));
    REQUIRE(pv_power_from_error(0.0, 0.5, 3.0) == 0.0); // night
    REQUIRE(pv_power_from_error(0.0, -1.0, 3.0) == 0.0);
}

TEST_CASE("error round trip is exact for every non-saturating bin", "[der]") {
    auto bins = linspace(-1.0, 1.0, 11);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> pred_dist(1e-6, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
        double pred = pred_dist(rng);
        for (double err : bins) {
            double actual = pv_power_from_error(pred, err, 3.0);
            if (err < 1.0 && actual < 3.0) {
                REQUIRE_THAT(relative_error(actual, pred), Catch::Matchers::WithinAbs(err, 1e-12));
            } else {
                // the +100% bin has no finite preimage: output saturates
                REQUIRE(actual == 3.0);
                REQUIRE(relative_error(actual, pred) <= 1.0);
            }
        }
    }
}

TEST_CASE("battery transitions", "[der]") {
    BessUnit bess = paper_bess();
    SECTION("paper-parameter charge step") {
        auto f = battery_transition(50.0, 25.0, bess, 0.25);
        REQUIRE(f.feasible);
        REQUIRE_THAT(f.soc_next_pct, Catch::Matchers::WithinAbs(75.0, 1e-12));
        REQUIRE_THAT(f.p_dc_mw, Catch::Matchers::WithinAbs(3.0, 1e-9));
        REQUIRE_THAT(f.loss_mw, Catch::Matchers::WithinAbs(0.15, 1e-9));
    }
    SECTION("idle battery") {
        auto f = battery_transition(50.0, 0.0, bess, 0.25);
        REQUIRE(f.feasible);
        REQUIRE(f.p_dc_mw == 0.0);
        REQUIRE(f.loss_mw == 0.0);
        REQUIRE(f.soc_next_pct == 50.0);
    }
    SECTION("overcharge is infeasible") {
        REQUIRE_FALSE(battery_transition(93.75, 25.0, bess, 0.25).feasible);
        REQUIRE_FALSE(battery_transition(6.25, -25.0, bess, 0.25).feasible);
    }
    SECTION("converter power bound") {
        BessUnit weak = bess;
        weak.converter_p_max_mw = 2.0; // 25% in 15 min needs 3 MW
        REQUIRE_FALSE(battery_transition(50.0, 25.0, weak, 0.25).feasible);
        REQUIRE(battery_transition(50.0, 12.5, weak, 0.25).feasible);
    }
    SECTION("full charge takes exactly four maximal steps (one hour)") {
        double soc = 0.0;
        for (int k = 0; k < 4; ++k) {
            auto f = battery_transition(soc, 25.0, bess, 0.25);
            REQUIRE(f.feasible);
            REQUIRE_THAT(std::fabs(f.p_dc_mw), Catch::Matchers::WithinAbs(3.0, 1e-9));
            soc = f.soc_next_pct;
        }
        REQUIRE_THAT(soc, Catch::Matchers::WithinAbs(100.0, 1e-12));
        REQUIRE_FALSE(battery_transition(soc, 25.0, bess, 0.25).feasible);
    }
    SECTION("round-trip energy ratio is exactly eta squared") {
        auto charge = battery_transition(25.0, 25.0, bess, 0.25);
        auto discharge = battery_transition(50.0, -25.0, bess, 0.25);
        REQUIRE(charge.feasible);
        REQUIRE(discharge.feasible);
        double eta = bess.converter_efficiency;
        double ratio = std::fabs(discharge.p_dc_mw) / charge.p_dc_mw; // delivered / drawn
        REQUIRE_THAT(ratio, Catch::Matchers::WithinAbs(eta * eta, 1e-12));
    }
    SECTION("minimum energy bound is honoured") {
        BessUnit floor = bess;
        floor.e_min_mwh = 0.25 * bess.capacity_mwh; // 25%
        REQUIRE_FALSE(battery_transition(37.5, -25.0, floor, 0.25).feasible);
        REQUIRE(battery_transition(50.0, -25.0, floor, 0.25).feasible);
    }
}

TEST_CASE("dispatch arithmetic", "[der]") {
    DerUnit d1 = der_with_battery();
    SECTION("plain generation") {
        auto disp = dispatch_der(d1, 2.0, 0.0, 0.0, 50.0, 0.0, 0.25);
        REQUIRE(disp.feasible);
        REQUIRE_THAT(disp.p_injection_mw, Catch::Matchers::WithinAbs(1.8, 1e-12));
        REQUIRE(disp.q_injection_mvar == 0.0);
        REQUIRE_THAT(disp.der_loss_mw, Catch::Matchers::WithinAbs(0.2, 1e-12));
        REQUIRE(disp.pv_curtailed_mw == 0.0);
        REQUIRE_THAT(disp.der_loss_mw + disp.p_injection_mw, Catch::Matchers::WithinAbs(2.0, 1e-12));
    }
    SECTION("full curtailment blocks the inverter") {
        auto disp = dispatch_der(d1, 2.0, 1.0, 0.0, 50.0, 0.0, 0.25);
        REQUIRE(disp.feasible);
        REQUIRE(disp.p_injection_mw == 0.0);
        REQUIRE_THAT(disp.pv_curtailed_mw, Catch::Matchers::WithinAbs(2.0, 1e-12));
        REQUIRE(disp.der_loss_mw == 0.0);
    }
    SECTION("no reactive headroom at full active output") {
        DerUnit d = d1;
        d.inverter_efficiency = 1.0;
        auto up = dispatch_der(d, 3.0, 0.0, 1.0, 50.0, 0.0, 0.25);
        auto dn = dispatch_der(d, 3.0, 0.0, -1.0, 50.0, 0.0, 0.25);
        REQUIRE(up.feasible);
        REQUIRE_THAT(up.p_injection_mw, Catch::Matchers::WithinAbs(3.0, 1e-12));
        REQUIRE_THAT(up.q_injection_mvar, Catch::Matchers::WithinAbs(0.0, 1e-9));
        REQUIRE_THAT(dn.q_injection_mvar, Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
    SECTION("reactive output scales the remaining headroom") {
        auto disp = dispatch_der(d1, 2.0, 0.0, -0.5, 50.0, 0.0, 0.25);
        double expected = -0.5 * std::sqrt(3.0 * 3.0 - 1.8 * 1.8);
        REQUIRE_THAT(disp.q_injection_mvar, Catch::Matchers::WithinAbs(expected, 1e-12));
        REQUIRE(disp.p_injection_mw * disp.p_injection_mw + disp.q_injection_mvar * disp.q_injection_mvar <=
                9.0 + 1e-9);
    }
    SECTION("battery action on a unit without storage is infeasible") {
        auto disp = dispatch_der(der_pv_only(), 1.0, 0.0, 0.0, 0.0, 6.25, 0.25);
        REQUIRE_FALSE(disp.feasible);
    }
    SECTION("grid charging can be disallowed") {
        DispatchOptions no_grid{false};
        // charging 25% draws 3 MW from the link but only 1 MW of PV is there
        auto disp = dispatch_der(d1, 1.0, 0.0, 0.0, 50.0, 25.0, 0.25, no_grid);
        REQUIRE_FALSE(disp.feasible);
        auto ok = dispatch_der(d1, 1.0, 0.0, 0.0, 50.0, 25.0, 0.25);
        REQUIRE(ok.feasible);
        REQUIRE(ok.p_injection_mw < 0.0); // net draw through the inverter
    }
    SECTION("infeasible battery transition propagates") {
        auto disp = dispatch_der(d1, 2.0, 0.0, 0.0, 93.75, 25.0, 0.25);
        REQUIRE_FALSE(disp.feasible);
    }
}

TEST_CASE("dispatch conserves energy", "[der]") {
    DerUnit d1 = der_with_battery();
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> avail_dist(0.0, 3.0);
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::uniform_int_distribution<int> bes_step(-4, 4);

    int feasible_count = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        double avail = avail_dist(rng);
        double a_pv = frac(rng);
        double a_q = 2.0 * frac(rng) - 1.0;
        double soc = 6.25 * static_cast<double>(bes_step(rng) + 8);
        double delta = 6.25 * static_cast<double>(bes_step(rng));
        auto disp = dispatch_der(d1, avail, a_pv, a_q, soc, delta, 0.25);
        if (!disp.feasible) continue;
        ++feasible_count;

        double stored_rate = (delta / 100.0) * d1.bess->capacity_mwh / 0.25; // battery-side, signed
        double sources = avail + std::max(0.0, -stored_rate) + std::max(0.0, -disp.p_injection_mw);
        double sinks = std::max(0.0, disp.p_injection_mw) + disp.pv_curtailed_mw + disp.der_loss_mw +
                       std::max(0.0, stored_rate);
        REQUIRE_THAT(sources, Catch::Matchers::WithinRel(sinks, 1e-9));

        // inverter apparent-power limit holds by construction
        double s_sq = disp.p_injection_mw * disp.p_injection_mw + disp.q_injection_mvar * disp.q_injection_mvar;
        REQUIRE(s_sq <= d1.inverter_s_max_mva * d1.inverter_s_max_mva + 1e-9);
    }
    REQUIRE(feasible_count > 1000); // the sweep covers plenty of lawful dispatches
}

TEST_CASE("SoC grid closure under the action grid", "[der]") {
    BessUnit bess = paper_bess();
    auto soc_grid = linspace(0.0, 100.0, 17);
    auto act_grid = linspace(-25.0, 25.0, 9);
    for (double soc : soc_grid) {
        for (double delta : act_grid) {
            auto f = battery_transition(soc, delta, bess, 0.25);
            if (!f.feasible) continue;
            bool on_grid = false;
            for (double g : soc_grid) on_grid = on_grid || std::fabs(g - f.soc_next_pct) < 1e-9;
            REQUIRE(on_grid);
        }
    }
}
