// Copyright 2026 the coalmpc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coalmpc/grid.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace coalmpc;

namespace {

std::vector<Vec> forecast_for(const BenchmarkSystem&, const LoadProfile& loads,
                              const Coalition& members, int k, int Np)
{
    std::vector<Vec> f;
    for (int t = 0; t < Np; ++t) f.push_back(loads.demand_vector(members, k + t));
    return f;
}

} // namespace

TEST_CASE("area model matrix layout")
{
    AreaParams p;
    p.sync_coeffs.clear();
    auto area = build_area_model(1, p);
    CHECK(area.A_self(1, 0) == doctest::Approx(0.0));
    CHECK(area.couplings.empty());

    p.sync_coeffs[2] = 2.0;
    area = build_area_model(1, p);
    CHECK(area.A_self(1, 0) == doctest::Approx(-0.2)); // -P0 / (2H) with H = 5
    REQUIRE(area.couplings.count(2) == 1);
    CHECK(area.couplings.at(2).A(1, 0) == doctest::Approx(0.2));

    // zeros exactly where the continuous layout has them
    const Mat& A = area.A_self;
    CHECK(A(0, 0) == 0.0);
    CHECK(A(0, 1) == 1.0);
    CHECK(A(0, 2) == 0.0);
    CHECK(A(0, 3) == 0.0);
    CHECK(A(1, 3) == 0.0);
    CHECK(A(2, 0) == 0.0);
    CHECK(A(2, 1) == 0.0);
    CHECK(A(3, 0) == 0.0);
    CHECK(A(3, 2) == 0.0);
    CHECK(area.B_self(3, 0) == doctest::Approx(1.0 / p.tau_g));
    CHECK(area.B_self.topRows(3).isZero(0.0));
    CHECK(area.D_load(1, 0) == doctest::Approx(-0.1));
    // coupling enters through the neighbor angle only
    Mat cross = area.couplings.at(2).A;
    cross(1, 0) = 0.0;
    CHECK(cross.isZero(0.0));
}

TEST_CASE("tie line flow")
{
    CHECK(tie_line_flow(0.3, 0.3, 2.0) == doctest::Approx(0.0));
    CHECK(tie_line_flow(0.1, -0.1, 2.0) == doctest::Approx(0.4));
    CHECK(tie_line_flow(0.2, 0.7, 2.0) == doctest::Approx(-tie_line_flow(0.7, 0.2, 2.0)));
}

TEST_CASE("scenario defaults carry the published generation bounds")
{
    const auto s1 = scenario_generation_bounds(Scenario::S1);
    CHECK(s1 == std::vector<double>{0.2310, 0.1680, 0.1050, 0.0840, 0.1050});
    const auto s2 = scenario_generation_bounds(Scenario::S2);
    CHECK(s2 == std::vector<double>{0.3465, 0.1512, 0.0945, 0.1260, 0.0945});

    const auto spec = ScenarioSpec::defaults(Scenario::S1);
    CHECK(spec.topology.size() == 5);
    CHECK(spec.Ts == doctest::Approx(1.0));
}

TEST_CASE("load profile holds piecewise-constant levels")
{
    LoadProfile loads;
    loads.steps = {{1, 10, 0.1}, {1, 30, -0.05}, {2, 5, 0.2}};
    CHECK(loads.demand(1, 9) == doctest::Approx(0.0));
    CHECK(loads.demand(1, 10) == doctest::Approx(0.1));
    CHECK(loads.demand(1, 29) == doctest::Approx(0.1));
    CHECK(loads.demand(1, 30) == doctest::Approx(-0.05));
    CHECK(loads.demand(2, 100) == doctest::Approx(0.2));
    CHECK(loads.demand(3, 100) == doctest::Approx(0.0));
}

TEST_CASE("benchmark neighbors follow the default topology")
{
    const auto sys = build_benchmark(ScenarioSpec::defaults(Scenario::S1));
    CHECK(sys.areas() == Coalition{1, 2, 3, 4, 5});
    CHECK(neighbors(sys.models, 3) == Coalition{2, 4});
    CHECK(neighbors(sys.models, 2) == Coalition{1, 3, 5});
}

TEST_CASE("coupling weights match the published values")
{
    const auto sys = build_benchmark(ScenarioSpec::defaults(Scenario::S1));

    GridWeightParams noncoop;
    noncoop.q_cross = 0.0;
    const auto w0 = coupling_weights(sys, noncoop, {1, 2, 3, 4, 5});
    const Mat& Q11 = w0.Q_blocks.at({1, 1});
    CHECK(Q11(0, 0) == doctest::Approx(500.0));
    CHECK(Q11(1, 1) == doctest::Approx(0.01));
    CHECK(Q11(2, 2) == doctest::Approx(0.01));
    CHECK(Q11(3, 3) == doctest::Approx(10.0));
    CHECK(w0.Q_blocks.count({1, 2}) == 0);
    CHECK(w0.R_blocks.at(1)(0, 0) == doctest::Approx(10.0));

    GridWeightParams coop; // q_cross defaults to 1000
    // area 1 has exactly one neighbor (area 2); both in the coalition
    const auto w1 = coupling_weights(sys, coop, {1, 2});
    CHECK(w1.Q_blocks.at({1, 1})(0, 0) == doctest::Approx(2500.0));
    CHECK(w1.Q_blocks.count({2, 3}) == 0);
    CHECK(w1.Q_blocks.at({1, 2})(0, 0) == doctest::Approx(-2000.0));
    // area 2 keeps the enhancement for every tie line; the cross entry
    // exists only toward the in-coalition neighbor
    CHECK(w1.Q_blocks.at({2, 2})(0, 0) == doctest::Approx(6500.0));

    // the assembled coalition stage matrix is PSD
    const auto cm = aggregate_coalition(sys.models, {1, 2, 3, 4, 5});
    const auto grand = coupling_weights(sys, coop, {1, 2, 3, 4, 5});
    const auto assembled = assemble_weights(grand, cm);
    Eigen::SelfAdjointEigenSolver<Mat> es(assembled.Q, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("nominal setpoint is an equilibrium of the discretized plant")
{
    const auto [x0, u0] = nominal_setpoint(0.0);
    CHECK(x0.norm() == doctest::Approx(0.0));
    CHECK(u0 == doctest::Approx(0.0));

    const auto [xs, us] = nominal_setpoint(0.1);
    CHECK(xs[2] == doctest::Approx(0.1));
    CHECK(xs[3] == doctest::Approx(0.1));
    CHECK(us == doctest::Approx(0.1));

    const auto sys = build_benchmark(ScenarioSpec::defaults(Scenario::S1));
    Vec x(20), u(5), d(5);
    d << 0.10, -0.08, 0.08, 0.05, -0.08;
    for (int i = 0; i < 5; ++i) {
        const auto [xi, ui] = nominal_setpoint(d[i]);
        x.segment(4 * i, 4) = xi;
        u[i] = ui;
    }
    const Vec next = sys.step(x, u, d);
    CHECK((next - x).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("setpoint optimization bypasses singletons and keeps nominal under no deficit")
{
    const auto spec = ScenarioSpec::defaults(Scenario::S2);
    const auto sys = build_benchmark(spec);
    const int Np = 5;

    LoadProfile mild;
    mild.steps = {{2, 0, 0.05}, {3, 0, 0.04}};

    // singleton: the nominal setpoint verbatim
    const auto single = rto_setpoints(sys, {3}, forecast_for(sys, mild, {3}, 0, Np), Np);
    CHECK(single.feasible);
    CHECK(single.refs.inputs[0][0] == doctest::Approx(0.04));
    CHECK(single.refs.states[1][2] == doctest::Approx(0.04));

    // no member over capacity: zero transfer is optimal
    const Coalition members = {2, 3, 4};
    const auto res = rto_setpoints(sys, members, forecast_for(sys, mild, members, 0, Np), Np);
    REQUIRE(res.feasible);
    const auto nominal = nominal_reference(sys, members, forecast_for(sys, mild, members, 0, Np), Np);
    for (int t = 0; t < Np; ++t)
        CHECK((res.refs.inputs[t] - nominal.inputs[t]).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("setpoint optimization covers an area-3 deficit with inbound transfers")
{
    const auto spec = ScenarioSpec::defaults(Scenario::S2);
    const auto sys = build_benchmark(spec);
    const int Np = 5;
    const double cap3 = 0.0945;

    LoadProfile heavy;
    heavy.steps = {{3, 0, 0.105}}; // 10% over the area-3 cap

    const Coalition members = {2, 3, 4};
    const auto f = forecast_for(sys, heavy, members, 0, Np);
    const auto res = rto_setpoints(sys, members, f, Np);
    REQUIRE(res.feasible);
    for (int t = 0; t < Np; ++t) {
        // aggregate balance and the capacity-pinned deficit member
        CHECK(res.refs.inputs[t].sum() == doctest::Approx(f[t].sum()).epsilon(1e-6));
        CHECK(res.refs.inputs[t][1] == doctest::Approx(cap3).epsilon(1e-6));
        // inbound flow into area 3 equals the shortfall
        const double th2 = res.refs.states[t + 1][0];
        const double th3 = res.refs.states[t + 1][4];
        const double th4 = res.refs.states[t + 1][8];
        const double inflow = tie_line_flow(th2, th3, 2.0) + tie_line_flow(th4, th3, 2.0);
        CHECK(inflow == doctest::Approx(0.105 - cap3).epsilon(1e-6));
    }

    // demand beyond the whole coalition's capacity cannot be balanced
    LoadProfile impossible;
    impossible.steps = {{2, 0, 0.2}, {3, 0, 0.2}, {4, 0, 0.2}};
    const auto bad = rto_setpoints(sys, members, forecast_for(sys, impossible, members, 0, Np), Np);
    CHECK_FALSE(bad.feasible);
    // fallback saturates at the caps
    CHECK(bad.refs.inputs[0][1] == doctest::Approx(cap3));
}

TEST_CASE("performance indices")
{
    CHECK(eta_index({}) == doctest::Approx(0.0));
    std::vector<Vec> zeros(10, Vec::Zero(3));
    CHECK(eta_index(zeros) == doctest::Approx(0.0));

    std::vector<Vec> ones(10, Vec::Constant(1, 1.0));
    CHECK(eta_index(ones) == doctest::Approx(1.0));

    std::vector<Vec> twos(10, Vec::Constant(1, 2.0));
    CHECK(eta_index(twos) == doctest::Approx(4.0)); // quadratic in the deviation

    // two-area system with a constant transfer of 0.5 counted in both
    // directions over four steps
    ScenarioSpec spec = ScenarioSpec::defaults(Scenario::S1);
    spec.topology = {{1, 2}};
    spec.u_max = {0.5, 0.5};
    const auto sys = build_benchmark(spec);
    Vec theta(2);
    theta << 0.25, 0.0; // flow = 2 * 0.25 = 0.5
    std::vector<Vec> theta_steps(4, theta);
    CHECK(psi_index(theta_steps, sys, 1.0) == doctest::Approx(2.0));
    CHECK(psi_index(theta_steps, sys, 2.0) == doctest::Approx(8.0));
    std::vector<Vec> sync_steps(4, Vec::Constant(2, 0.7));
    CHECK(psi_index(sync_steps, sys, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("centralized MPC regulates a step load on the benchmark")
{
    ScenarioSpec spec = ScenarioSpec::defaults(Scenario::S1);
    spec.loads.steps = {{1, 5, 0.1}};
    const auto sys = build_benchmark(spec);
    const Coalition all = sys.areas();
    const auto cm = aggregate_coalition(sys.models, all);
    GridWeightParams wp;
    const auto weights = assemble_weights(coupling_weights(sys, wp, all), cm);

    const int Np = 5;
    const int T = 70;
    Vec x = Vec::Zero(sys.models.total_state_dim());
    MpcOptions opt;
    opt.qp.eps_abs = 1e-9;
    opt.qp.eps_rel = 1e-9;

    double worst_late_omega = 0.0;
    for (int k = 0; k < T; ++k) {
        std::vector<Vec> forecast = forecast_for(sys, spec.loads, all, k, Np);
        const auto refs = nominal_reference(sys, all, forecast, Np);
        const auto affine = sys.load_affine(all, forecast);
        const auto sol = mpc_control(cm, x, refs, weights, Np, affine, opt);
        REQUIRE(sol.status == MpcStatus::solved);
        Vec u(5);
        u = sol.inputs[0];
        x = sys.step(x, u, spec.loads.demand_vector(all, k));
        if (k >= 5 + 60 - 1) {
            worst_late_omega =
                std::max(worst_late_omega, sys.extract_omega(x).lpNorm<Eigen::Infinity>());
        }
    }
    CHECK(worst_late_omega < 1e-3);
}

TEST_CASE("closed-loop predicted cost decreases in a disturbance-free interval")
{
    // exact prediction model (grand coalition, loads previewed): after the
    // step lands, successive receding-horizon solves shed cost monotonically
    ScenarioSpec spec = ScenarioSpec::defaults(Scenario::S1);
    spec.loads.steps = {{1, 3, 0.1}};
    const auto sys = build_benchmark(spec);
    const Coalition all = sys.areas();
    const auto cm = aggregate_coalition(sys.models, all);
    GridWeightParams wp;
    const auto w = assemble_weights(coupling_weights(sys, wp, all), cm);
    const int Np = 5;

    Vec x = Vec::Zero(sys.models.total_state_dim());
    std::vector<double> costs;
    for (int k = 0; k < 30; ++k) {
        std::vector<Vec> forecast;
        for (int t = 0; t < Np; ++t) forecast.push_back(spec.loads.demand_vector(all, k + t));
        const auto refs = nominal_reference(sys, all, forecast, Np);
        const auto sol = mpc_control(cm, x, refs, w, Np, sys.load_affine(all, forecast));
        REQUIRE(sol.status == MpcStatus::solved);
        costs.push_back(sol.predicted_cost);
        x = sys.step(x, sol.inputs[0], spec.loads.demand_vector(all, k));
    }
    for (int k = 3; k + 1 < 30; ++k) CHECK(costs[k + 1] < costs[k]);
}
