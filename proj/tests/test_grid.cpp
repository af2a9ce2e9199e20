#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <fstream>

#include "gridmdp/grid.hpp"
#include "oracle_powerflow.hpp"

using namespace gridmdp;

namespace {

const std::string kFeeder33 = std::string(GRIDMDP_SOURCE_DIR) + "/data/ieee33.csv";

NetworkModel feeder33(double slack_pu = 1.05) {
    GridParams gp;
    gp.slack_voltage_pu = slack_pu;
    return load_network(kFeeder33, gp);
}

NetworkModel two_bus(double r_ohm = 0.16, double x_ohm = 0.08, double p_kw = 1000, double q_kvar = 500) {
    GridParams gp;
    gp.slack_voltage_pu = 1.0;
    std::vector<Bus> buses{{1, 0, 0, 0.9, 1.1}, {2, p_kw / 1000.0, q_kvar / 1000.0, 0.9, 1.1}};
    std::vector<Line> lines{{1, 1, 2, r_ohm, x_ohm, 500}};
    return NetworkModel(std::move(buses), std::move(lines), gp);
}

}  // namespace

TEST_CASE("feeder file loads with the published totals", "[grid]") {
    NetworkModel net = feeder33();
    REQUIRE(net.num_buses() == 33);
    REQUIRE(net.num_lines() == 32);
    REQUIRE_THAT(net.total_load_mw(), Catch::Matchers::WithinAbs(3.715, 1e-12));
    REQUIRE_THAT(net.total_load_mvar(), Catch::Matchers::WithinAbs(2.300, 1e-12));
    REQUIRE(net.sweep_order().size() == 32); // every line reachable from the slack
}

TEST_CASE("topology validation", "[grid]") {
    GridParams gp;
    SECTION("minimal two-bus tree is valid") {
        REQUIRE_NOTHROW(two_bus());
    }
    SECTION("a cycle is rejected") {
        std::vector<Bus> buses{{1, 0, 0, 0.9, 1.1}, {2, 0.1, 0.05, 0.9, 1.1}, {3, 0.1, 0.05, 0.9, 1.1}};
        std::vector<Line> lines{{1, 1, 2, 0.1, 0.1, 100}, {2, 2, 3, 0.1, 0.1, 100}, {3, 3, 1, 0.1, 0.1, 100}};
        REQUIRE_THROWS_WITH(NetworkModel(std::move(buses), std::move(lines), gp),
                            Catch::Matchers::ContainsSubstring("topology-not-radial"));
    }
    SECTION("duplicate bus ids are rejected") {
        std::vector<Bus> buses{{1, 0, 0, 0.9, 1.1}, {2, 0.1, 0.05, 0.9, 1.1}, {2, 0.1, 0.05, 0.9, 1.1}};
        std::vector<Line> lines{{1, 1, 2, 0.1, 0.1, 100}, {2, 2, 3, 0.1, 0.1, 100}};
        REQUIRE_THROWS_WITH(NetworkModel(std::move(buses), std::move(lines), gp),
                            Catch::Matchers::ContainsSubstring("duplicate bus id"));
    }
    SECTION("a network without bus 1 has no slack") {
        std::vector<Bus> buses{{2, 0.1, 0.05, 0.9, 1.1}, {3, 0.1, 0.05, 0.9, 1.1}};
        std::vector<Line> lines{{1, 2, 3, 0.1, 0.1, 100}};
        REQUIRE_THROWS_WITH(NetworkModel(std::move(buses), std::move(lines), gp),
                            Catch::Matchers::ContainsSubstring("missing slack"));
    }
    SECTION("disconnected networks are rejected") {
        std::vector<Bus> buses{{1, 0, 0, 0.9, 1.1}, {2, 0.1, 0.05, 0.9, 1.1}, {3, 0.1, 0.05, 0.9, 1.1},
                               {4, 0.1, 0.05, 0.9, 1.1}};
        std::vector<Line> lines{{1, 1, 2, 0.1, 0.1, 100}, {2, 3, 4, 0.1, 0.1, 100}, {3, 4, 3, 0.1, 0.1, 100}};
        REQUIRE_THROWS_AS(NetworkModel(std::move(buses), std::move(lines), gp), DataError);
    }
}

TEST_CASE("zero load gives a flat voltage profile and zero loss", "[grid]") {
    NetworkModel net = feeder33(1.0);
    auto sol = solve_power_flow(net, {}, 0.0);
    REQUIRE(sol.has_value());
    REQUIRE(sol->grid_loss_mw == 0.0);
    for (const auto& v : sol->bus_voltages) REQUIRE_THAT(std::abs(v), Catch::Matchers::WithinAbs(1.0, 1e-12));
    for (double i : sol->line_currents_a) REQUIRE(i == 0.0);
    REQUIRE_THAT(sol->slack_p_mw, Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("two-bus case matches the closed-form solution", "[grid]") {
    const double r_ohm = 0.16, x_ohm = 0.08, p_mw = 1.0, q_mvar = 0.5;
    NetworkModel net = two_bus(r_ohm, x_ohm, p_mw * 1000, q_mvar * 1000);
    auto sol = solve_power_flow(net, {}, 1.0, {1e-10, 500});
    REQUIRE(sol.has_value());

    // |V2|^2 solves x^2 + (2(PR+QX) - |V1|^2) x + (P^2+Q^2)|Z|^2 = 0 (pu).
    const double s_base = net.params().base_mva, z_base = net.z_base_ohm();
    const double p = p_mw / s_base, q = q_mvar / s_base;
    const double r = r_ohm / z_base, x = x_ohm / z_base;
    const double b = 2.0 * (p * r + q * x) - 1.0;
    const double c = (p * p + q * q) * (r * r + x * x);
    const double v2_sq = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
    const double v2 = std::sqrt(v2_sq);

    REQUIRE_THAT(std::abs(sol->bus_voltages[1]), Catch::Matchers::WithinAbs(v2, 1e-9));
    const double i_sq = (p * p + q * q) / v2_sq;
    REQUIRE_THAT(sol->grid_loss_mw, Catch::Matchers::WithinRel(i_sq * r * s_base, 1e-7));
    REQUIRE_THAT(sol->slack_p_mw, Catch::Matchers::WithinAbs(p_mw + sol->grid_loss_mw, 1e-6));
}

TEST_CASE("33-bus base case agrees with the admittance-matrix reference", "[grid]") {
    NetworkModel net = feeder33(1.0);
    auto sol = solve_power_flow(net, {}, 1.0);
    REQUIRE(sol.has_value());
    oracle::Solution ref = oracle::solve(net, {}, 1.0);

    // The standard published base-case loss for this feeder is about 202.7 kW.
    REQUIRE_THAT(ref.loss_mw, Catch::Matchers::WithinRel(0.2027, 0.005));
    REQUIRE_THAT(sol->grid_loss_mw, Catch::Matchers::WithinRel(ref.loss_mw, 0.005));

    for (int i = 0; i < net.num_buses(); ++i)
        REQUIRE_THAT(std::abs(sol->bus_voltages[static_cast<std::size_t>(i)]),
                     Catch::Matchers::WithinAbs(std::abs(ref.v_pu[static_cast<std::size_t>(i)]), 1e-4));
    for (int l = 0; l < net.num_lines(); ++l)
        REQUIRE_THAT(sol->line_currents_a[static_cast<std::size_t>(l)],
                     Catch::Matchers::WithinAbs(ref.line_currents_a[static_cast<std::size_t>(l)], 0.5));

    // Worst voltage sits at the far end of the main feeder (bus 18).
    double vmin = 2.0;
    int vmin_bus = 0;
    for (int i = 0; i < net.num_buses(); ++i) {
        double vm = std::abs(sol->bus_voltages[static_cast<std::size_t>(i)]);
        if (vm < vmin) {
            vmin = vm;
            vmin_bus = net.buses()[static_cast<std::size_t>(i)].id;
        }
    }
    REQUIRE(vmin_bus == 18);
    REQUIRE_THAT(vmin, Catch::Matchers::WithinAbs(0.9131, 5e-4));
}

TEST_CASE("loss equals the I^2 R sum recomputed from returned currents", "[grid]") {
    NetworkModel net = feeder33();
    auto sol = solve_power_flow(net, {}, 0.8);
    REQUIRE(sol.has_value());
    double loss = 0;
    for (int l = 0; l < net.num_lines(); ++l) {
        double i_pu = sol->line_currents_a[static_cast<std::size_t>(l)] / net.i_base_a();
        loss += i_pu * i_pu * net.lines()[static_cast<std::size_t>(l)].r_ohm / net.z_base_ohm();
    }
    loss *= net.params().base_mva;
    REQUIRE_THAT(sol->grid_loss_mw, Catch::Matchers::WithinRel(loss, 1e-9));
}

TEST_CASE("power balance at the slack bus", "[grid]") {
    NetworkModel net = feeder33();
    std::vector<PQ> inj(33);
    inj[2].p_mw = 1.5; // generation at bus 3
    inj[29].p_mw = 0.8;
    for (double scale : {0.3, 0.7, 1.0}) {
        auto sol = solve_power_flow(net, inj, scale);
        REQUIRE(sol.has_value());
        double expected = scale * net.total_load_mw() - 2.3 + sol->grid_loss_mw;
        REQUIRE_THAT(sol->slack_p_mw, Catch::Matchers::WithinAbs(expected, 1e-3)); // 10x sweep tolerance
    }
}

TEST_CASE("injections reduce the transmission import", "[grid]") {
    NetworkModel net = feeder33();
    auto base = solve_power_flow(net, {}, 1.0);
    std::vector<PQ> inj(33);
    inj[2].p_mw = 2.0;
    auto with_der = solve_power_flow(net, inj, 1.0);
    REQUIRE(base.has_value());
    REQUIRE(with_der.has_value());
    REQUIRE(with_der->slack_p_mw < base->slack_p_mw - 1.9);
    REQUIRE(with_der->grid_loss_mw < base->grid_loss_mw);
}

TEST_CASE("constraint report", "[grid]") {
    NetworkModel net = feeder33(1.05);
    auto sol = solve_power_flow(net, {}, 1.0);
    REQUIRE(sol.has_value());

    SECTION("identical solves produce identical reports") {
        auto sol2 = solve_power_flow(net, {}, 1.0);
        auto r1 = check_constraints(*sol, net);
        auto r2 = check_constraints(*sol2, net);
        REQUIRE(r1.count() == r2.count());
        for (std::size_t i = 0; i < r1.count(); ++i) {
            REQUIRE(r1.violations[i].kind == r2.violations[i].kind);
            REQUIRE(r1.violations[i].id == r2.violations[i].id);
            REQUIRE(r1.violations[i].value == r2.violations[i].value);
        }
    }
    SECTION("flat unloaded solution satisfies everything") {
        NetworkModel flat = feeder33(1.0);
        auto s0 = solve_power_flow(flat, {}, 0.0);
        REQUIRE(check_constraints(*s0, flat).ok());
    }
    SECTION("a forced line overload is reported exactly once") {
        PowerFlowSolution tweaked = *sol;
        const Line& line7 = net.lines()[6];
        tweaked.line_currents_a[6] = line7.i_max_a + 1.0;
        // keep every other current safely below its limit
        for (int l = 0; l < net.num_lines(); ++l)
            if (l != 6) tweaked.line_currents_a[static_cast<std::size_t>(l)] = 0.0;
        for (auto& v : tweaked.bus_voltages) v = std::complex<double>(1.0, 0.0);
        tweaked.slack_p_mw = 1.0;
        tweaked.slack_q_mvar = 0.0;
        auto rep = check_constraints(tweaked, net);
        REQUIRE(rep.count() == 1);
        REQUIRE(rep.violations[0].kind == ViolationKind::LineCurrent);
        REQUIRE(rep.violations[0].id == line7.id);
    }
    SECTION("TSO box limits are enforced when provided") {
        TsoLimits box{0.0, 1.0, -1.0, 1.0};
        auto rep = check_constraints(*sol, net, box);
        bool has_p = false, has_q = false;
        for (const auto& v : rep.violations) {
            has_p = has_p || v.kind == ViolationKind::TsoActive;
            has_q = has_q || v.kind == ViolationKind::TsoReactive;
        }
        REQUIRE(has_p); // nominal import is well above 1 MW
        REQUIRE(has_q);
    }
}

TEST_CASE("electrically impossible loading does not converge", "[grid]") {
    NetworkModel net = two_bus(5.0, 2.0, 2.0e5, 1.0e5);
    auto sol = solve_power_flow(net, {}, 1.0);
    REQUIRE_FALSE(sol.has_value());
}

TEST_CASE("base-case slack apparent power exceeds 4 MVA only at full nominal load", "[grid]") {
    NetworkModel net = feeder33(1.05);
    auto full = solve_power_flow(net, {}, 1.0);
    auto evening = solve_power_flow(net, {}, 0.8);
    REQUIRE(std::hypot(full->slack_p_mw, full->slack_q_mvar) > 4.0);
    REQUIRE(std::hypot(evening->slack_p_mw, evening->slack_q_mvar) < 4.0);
}
