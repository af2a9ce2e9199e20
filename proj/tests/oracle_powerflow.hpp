#pragma once

// Independent power-flow reference for tests: admittance-matrix fixed
// point with a dense LU solve per iteration. Shares nothing with the
// backward-forward sweep except the loaded network data.

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "gridmdp/grid.hpp"

namespace oracle {

struct Solution {
    std::vector<std::complex<double>> v_pu; // by bus position
    double loss_mw = 0;
    double slack_p_mw = 0;
    double slack_q_mvar = 0;
    std::vector<double> line_currents_a;
};

inline Solution solve(const gridmdp::NetworkModel& net, std::span<const gridmdp::PQ> injections,
                      double load_scale, double tol = 1e-12, int max_iter = 5000) {
    using cplx = std::complex<double>;
    const int n = net.num_buses();
    const double s_base = net.params().base_mva;
    const double z_base = net.z_base_ohm();
    const int slack = net.bus_pos(1);

    Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& l : net.lines()) {
        int a = net.bus_pos(l.from_bus);
        int b = net.bus_pos(l.to_bus);
        cplx y = 1.0 / cplx(l.r_ohm / z_base, l.x_ohm / z_base);
        ybus(a, a) += y;
        ybus(b, b) += y;
        ybus(a, b) -= y;
        ybus(b, a) -= y;
    }

    std::vector<int> others;
    for (int i = 0; i < n; ++i)
        if (i != slack) others.push_back(i);
    const int m = static_cast<int>(others.size());

    Eigen::MatrixXcd y_rr(m, m);
    Eigen::VectorXcd y_rs(m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) y_rr(i, j) = ybus(others[static_cast<std::size_t>(i)], others[static_cast<std::size_t>(j)]);
        y_rs(i) = ybus(others[static_cast<std::size_t>(i)], slack);
    }
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y_rr);

    const cplx v_slack(net.params().slack_voltage_pu, 0.0);
    Eigen::VectorXcd v = Eigen::VectorXcd::Constant(m, v_slack);

    std::vector<cplx> s_inj(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& bus = net.buses()[static_cast<std::size_t>(i)];
        double p = -bus.p_load_mw * load_scale;
        double q = -bus.q_load_mvar * load_scale;
        if (!injections.empty()) {
            p += injections[static_cast<std::size_t>(i)].p_mw;
            q += injections[static_cast<std::size_t>(i)].q_mvar;
        }
        s_inj[static_cast<std::size_t>(i)] = cplx(p / s_base, q / s_base);
    }

    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXcd rhs(m);
        for (int i = 0; i < m; ++i) {
            cplx s = s_inj[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])];
            rhs(i) = std::conj(s / v(i)) - y_rs(i) * v_slack;
        }
        Eigen::VectorXcd v_new = lu.solve(rhs);
        double dv = (v_new - v).cwiseAbs().maxCoeff();
        v = v_new;
        if (dv < tol) break;
    }

    Solution sol;
    sol.v_pu.assign(static_cast<std::size_t>(n), v_slack);
    for (int i = 0; i < m; ++i) sol.v_pu[static_cast<std::size_t>(others[static_cast<std::size_t>(i)])] = v(i);

    Eigen::VectorXcd v_full(n);
    for (int i = 0; i < n; ++i) v_full(i) = sol.v_pu[static_cast<std::size_t>(i)];
    Eigen::VectorXcd i_net = ybus * v_full;
    cplx total(0, 0);
    for (int i = 0; i < n; ++i) total += v_full(i) * std::conj(i_net(i));
    sol.loss_mw = total.real() * s_base;
    cplx s_sl = v_full(slack) * std::conj(i_net(slack));
    sol.slack_p_mw = s_sl.real() * s_base;
    sol.slack_q_mvar = s_sl.imag() * s_base;

    for (const auto& l : net.lines()) {
        int a = net.bus_pos(l.from_bus);
        int b = net.bus_pos(l.to_bus);
        cplx z(l.r_ohm / z_base, l.x_ohm / z_base);
        sol.line_currents_a.push_back(std::abs((v_full(a) - v_full(b)) / z) * net.i_base_a());
    }
    return sol;
}

}  // namespace oracle
