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

#include "coalmpc/mpc.hpp"
#include "coalmpc/rng.hpp"
#include "oracles.hpp"

using namespace coalmpc;

namespace {

SubsystemModel make_subsystem(AgentId id, const Mat& A, const Mat& B, double u_bound = 0.0)
{
    SubsystemModel s;
    s.id = id;
    s.A_self = A;
    s.B_self = B;
    s.state_box = Box::unbounded(static_cast<int>(A.rows()));
    s.input_box = Box::unbounded(static_cast<int>(B.cols()));
    if (u_bound > 0.0) {
        s.input_box.lower.setConstant(-u_bound);
        s.input_box.upper.setConstant(u_bound);
    }
    return s;
}

MpcWeights weights_for(const std::vector<AgentId>& ids, const Mat& Q, const Mat& R,
                       double qf_scale = 20.0)
{
    MpcWeights w;
    for (AgentId id : ids) {
        w.Q_blocks[{id, id}] = Q;
        w.R_blocks[id] = R;
    }
    w.Qf_scale = qf_scale;
    return w;
}

} // namespace

TEST_CASE("one-step scalar problem has expected shape")
{
    ModelSet ms({make_subsystem(1, Mat::Constant(1, 1, 0.8), Mat::Constant(1, 1, 1.0))});
    const auto cm = aggregate_coalition(ms, {1});
    const auto w = assemble_weights(weights_for({1}, Mat::Identity(1, 1), Mat::Identity(1, 1)), cm);
    const auto refs = ReferenceTrajectory::zero(1, 1, 1);
    const auto qp = build_tracking_qp(cm, Vec::Constant(1, 1.0), refs, w, 1);
    CHECK(qp.num_vars == 2);
    CHECK(qp.A_eq.rows() == 1);
    CHECK(qp.A_ineq.rows() == 0);
}

TEST_CASE("equilibrium at the reference gives zero cost and reference inputs")
{
    Mat A(2, 2), B(2, 1);
    A << 0.9, 0.1, 0.0, 0.8;
    B << 0.0, 1.0;
    ModelSet ms({make_subsystem(1, A, B)});
    const auto cm = aggregate_coalition(ms, {1});
    const auto w =
        assemble_weights(weights_for({1}, Mat::Identity(2, 2), Mat::Identity(1, 1)), cm);

    const int Np = 4;
    auto refs = ReferenceTrajectory::zero(Np, 2, 1);
    const auto sol = mpc_control(cm, Vec::Zero(2), refs, w, Np);
    REQUIRE(sol.status == MpcStatus::solved);
    CHECK(sol.predicted_cost == doctest::Approx(0.0).epsilon(1e-10));
    for (const auto& u : sol.inputs) CHECK(u.norm() < 1e-9);
}

TEST_CASE("unconstrained tracking MPC matches the Riccati recursion")
{
    Rng rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(3));
        const int q = 1 + static_cast<int>(rng.below(2));
        const Mat A = oracles::random_stable(rng, n, 0.9);
        const Mat B = oracles::random_matrix(rng, n, q);
        ModelSet ms({make_subsystem(1, A, B)});
        const auto cm = aggregate_coalition(ms, {1});

        Mat Q = oracles::random_spd(rng, n, 0.05);
        Mat R = oracles::random_spd(rng, q, 0.1);
        const double qf_scale = 5.0;
        MpcWeights mw = weights_for({1}, Q, R, qf_scale);
        const auto w = assemble_weights(mw, cm);

        const int Np = 6;
        ReferenceTrajectory refs;
        for (int t = 0; t <= Np; ++t) refs.states.push_back(oracles::random_matrix(rng, n, 1));
        for (int t = 0; t < Np; ++t) refs.inputs.push_back(oracles::random_matrix(rng, q, 1));
        const Vec x0 = oracles::random_matrix(rng, n, 1);

        const auto sol = mpc_control(cm, x0, refs, w, Np);
        REQUIRE(sol.status == MpcStatus::solved);
        const auto ric = oracles::riccati_tracking(A, B, Q, R, qf_scale * Q, x0, refs.states,
                                                   refs.inputs);
        for (int t = 0; t < Np; ++t)
            CHECK((sol.inputs[t] - ric.inputs[t]).lpNorm<Eigen::Infinity>() < 1e-8);
        CHECK(sol.dynamics_residual < 1e-8 * (1.0 + x0.lpNorm<Eigen::Infinity>()));
    }
}

TEST_CASE("sparse build equals dense condensed oracle with an active input bound")
{
    Mat A(2, 2), B(2, 1);
    A << 1.0, 0.2, 0.0, 0.9;
    B << 0.0, 0.5;
    const double u_bound = 0.15;
    ModelSet ms({make_subsystem(1, A, B, u_bound)});
    const auto cm = aggregate_coalition(ms, {1});
    Mat Q = Mat::Identity(2, 2) * 3.0;
    Mat R = Mat::Identity(1, 1) * 0.1;
    const auto w = assemble_weights(weights_for({1}, Q, R, 1.0), cm);

    const int Np = 2;
    auto refs = ReferenceTrajectory::zero(Np, 2, 1);
    Vec x0(2);
    x0 << 1.5, -0.5;

    const auto sol = mpc_control(cm, x0, refs, w, Np);
    REQUIRE(sol.status == MpcStatus::solved);
    // the bound must actually be active for the case to be interesting
    CHECK(std::abs(sol.inputs[0][0]) == doctest::Approx(u_bound).epsilon(1e-6));

    const auto dense = oracles::condense_tracking(A, B, Q, R, 1.0 * Q, x0, refs.states, refs.inputs,
                                                  Vec::Constant(1, -u_bound),
                                                  Vec::Constant(1, u_bound), Np);
    const auto oracle = oracles::enumerate_qp(dense);
    REQUIRE(oracle.feasible);
    CHECK(std::abs(sol.objective - oracle.objective) < 1e-8 * (1.0 + std::abs(oracle.objective)));
}

TEST_CASE("block-diagonal coalition cost decomposes into singleton costs")
{
    Rng rng(47);
    Mat A1 = oracles::random_stable(rng, 2, 0.8);
    Mat A2 = oracles::random_stable(rng, 2, 0.85);
    Mat B = Mat::Identity(2, 2).col(1);
    ModelSet ms({make_subsystem(1, A1, B), make_subsystem(2, A2, B)});

    MpcWeights mw = weights_for({1, 2}, 2.0 * Mat::Identity(2, 2), Mat::Identity(1, 1), 10.0);
    const int Np = 5;

    const auto coal = aggregate_coalition(ms, {1, 2});
    const auto w_coal = assemble_weights(mw, coal);
    Vec x0(4);
    x0 << 1.0, -0.4, 0.3, 0.8;
    const auto joint = mpc_control(coal, x0, ReferenceTrajectory::zero(Np, 4, 2), w_coal, Np);
    REQUIRE(joint.status == MpcStatus::solved);

    double sum = 0.0;
    for (AgentId id : {1, 2}) {
        const auto single = aggregate_coalition(ms, {id});
        const auto w1 = assemble_weights(mw, single);
        const Vec xi = x0.segment((id - 1) * 2, 2);
        const auto sol = mpc_control(single, xi, ReferenceTrajectory::zero(Np, 2, 1), w1, Np);
        REQUIRE(sol.status == MpcStatus::solved);
        sum += sol.predicted_cost;
    }
    CHECK(std::abs(joint.predicted_cost - sum) < 1e-8 * (1.0 + sum));
}

TEST_CASE("with no terminal weight and a long horizon the first input approaches infinite-horizon LQ")
{
    Mat A(2, 2), B(2, 1);
    A << 0.7, 0.2, -0.1, 0.6;
    B << 1.0, 0.5;
    ModelSet ms({make_subsystem(1, A, B)});
    const auto cm = aggregate_coalition(ms, {1});
    Mat Q = Mat::Identity(2, 2);
    Mat R = Mat::Identity(1, 1);
    const auto w = assemble_weights(weights_for({1}, Q, R, 0.0), cm);

    // infinite-horizon gain by iterating the Riccati map to a fixed point
    Mat P = Q;
    for (int i = 0; i < 3000; ++i) {
        const Mat K = (R + B.transpose() * P * B).inverse() * (B.transpose() * P * A);
        P = Q + A.transpose() * P * (A - B * K);
    }
    const Mat K_inf = (R + B.transpose() * P * B).inverse() * (B.transpose() * P * A);

    Vec x0(2);
    x0 << 1.0, -1.0;
    const int Np = 60;
    const auto sol = mpc_control(cm, x0, ReferenceTrajectory::zero(Np, 2, 1), w, Np);
    REQUIRE(sol.status == MpcStatus::solved);
    const Vec u_inf = -K_inf * x0;
    CHECK((sol.inputs[0] - u_inf).lpNorm<Eigen::Infinity>() < 1e-3);
}

TEST_CASE("unilateral best response degenerates to plain MPC")
{
    Mat A(1, 1), B(1, 1);
    A << 0.9;
    B << 1.0;
    auto s1 = make_subsystem(1, A, B);
    auto s2 = make_subsystem(2, A, B);
    // couple the two players
    CouplingBlock blk;
    blk.A = Mat::Constant(1, 1, 0.1);
    blk.B = Mat::Zero(1, 1);
    s1.couplings[2] = blk;
    s2.couplings[1] = blk;
    ModelSet ms({s1, s2});

    const auto p1 = aggregate_coalition(ms, {1});
    const auto p2 = aggregate_coalition(ms, {2});
    MpcWeights mw = weights_for({1, 2}, Mat::Identity(1, 1), Mat::Identity(1, 1), 5.0);
    const auto w1 = assemble_weights(mw, p1);
    const int Np = 4;
    const Vec x0 = Vec::Constant(1, 2.0);
    const auto refs = ReferenceTrajectory::zero(Np, 1, 1);

    const auto links = cross_links(ms, p1, p2);
    REQUIRE(links.size() == 1);

    // opponent trajectory identically zero -> the affine term vanishes
    const auto plain = mpc_control(p1, x0, refs, w1, Np);
    const auto uni = unilateral_best_response(p1, p2, links, Trajectory::zero(Np, 1, 1), x0, refs,
                                              w1, Np);
    REQUIRE(plain.status == MpcStatus::solved);
    REQUIRE(uni.status == MpcStatus::solved);
    for (int t = 0; t < Np; ++t)
        CHECK((plain.inputs[t] - uni.inputs[t]).lpNorm<Eigen::Infinity>() < 1e-10);

    // zero cross blocks behave the same way
    ModelSet decoupled({make_subsystem(1, A, B), make_subsystem(2, A, B)});
    const auto d1 = aggregate_coalition(decoupled, {1});
    const auto d2 = aggregate_coalition(decoupled, {2});
    const auto dlinks = cross_links(decoupled, d1, d2);
    CHECK(dlinks.empty());
    Trajectory opp = Trajectory::zero(Np, 1, 1);
    for (auto& x : opp.states) x.setConstant(3.0);
    const auto uni2 = unilateral_best_response(d1, d2, dlinks, opp, x0, refs,
                                               assemble_weights(mw, d1), Np);
    const auto plain2 = mpc_control(d1, x0, refs, assemble_weights(mw, d1), Np);
    CHECK((uni2.inputs[0] - plain2.inputs[0]).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("unilateral iterates match a hand-rolled affine-term oracle")
{
    // two coupled scalar players; each fixed-point iterate must equal the
    // dense condensed solve of the affine-shifted problem
    const double a = 0.8, b = 1.0, c = 0.15;
    auto s1 = make_subsystem(1, Mat::Constant(1, 1, a), Mat::Constant(1, 1, b));
    auto s2 = make_subsystem(2, Mat::Constant(1, 1, a), Mat::Constant(1, 1, b));
    CouplingBlock blk;
    blk.A = Mat::Constant(1, 1, c);
    blk.B = Mat::Zero(1, 1);
    s1.couplings[2] = blk;
    s2.couplings[1] = blk;
    ModelSet ms({s1, s2});
    const auto p1 = aggregate_coalition(ms, {1});
    const auto p2 = aggregate_coalition(ms, {2});
    MpcWeights mw = weights_for({1, 2}, Mat::Identity(1, 1), 0.5 * Mat::Identity(1, 1), 2.0);
    const auto w1 = assemble_weights(mw, p1);
    const auto w2 = assemble_weights(mw, p2);
    const int Np = 3;
    const Vec x01 = Vec::Constant(1, 1.0);
    const Vec x02 = Vec::Constant(1, -2.0);
    const auto refs = ReferenceTrajectory::zero(Np, 1, 1);

    Trajectory t1 = Trajectory::zero(Np, 1, 1);
    Trajectory t2 = Trajectory::zero(Np, 1, 1);
    const auto links12 = cross_links(ms, p1, p2);
    const auto links21 = cross_links(ms, p2, p1);

    for (int iter = 0; iter < 2; ++iter) {
        const auto s1_sol = unilateral_best_response(p1, p2, links12, t2, x01, refs, w1, Np);
        const auto s2_sol = unilateral_best_response(p2, p1, links21, t1, x02, refs, w2, Np);
        REQUIRE(s1_sol.status == MpcStatus::solved);

        // oracle for player 1: simulate x+ = a x + b u + c * x2_fixed(t) by
        // absorbing the affine term into an extended Riccati-free dense QP
        // solved by enumeration (unconstrained -> empty constraint set)
        {
            // substitute states: x(t+1) = a x(t) + b u(t) + d(t)
            const int nU = Np;
            Mat H = Mat::Zero(nU, nU);
            Vec g = Vec::Zero(nU);
            double c0 = x01[0] * x01[0]; // t=0 state cost, Q=1, ref 0
            // x(t) as linear function of inputs: x(t) = a^t x0 + sum a^(t-1-s) (b u(s) + d(s))
            std::vector<Vec> lin(Np + 1, Vec::Zero(nU));
            std::vector<double> conz(Np + 1, 0.0);
            conz[0] = x01[0];
            for (int t = 1; t <= Np; ++t) {
                conz[t] = a * conz[t - 1] + c * t2.states[t - 1][0];
                lin[t] = a * lin[t - 1];
                lin[t][t - 1] += b;
            }
            for (int t = 1; t <= Np; ++t) {
                const double wq = (t == Np) ? 2.0 : 1.0; // Qf = 2 Q at terminal, plus stage Q
                const double weight = (t == Np) ? (0.0 + wq) : 1.0;
                H += 2.0 * weight * lin[t] * lin[t].transpose();
                g += 2.0 * weight * conz[t] * lin[t];
                c0 += weight * conz[t] * conz[t];
            }
            for (int t = 0; t < Np; ++t) H(t, t) += 2.0 * 0.5;
            oracles::DenseQp d;
            d.H = H;
            d.g = g;
            d.c0 = c0;
            d.A = Mat::Zero(0, nU);
            d.b = Vec::Zero(0);
            const auto oracle = oracles::enumerate_qp(d);
            REQUIRE(oracle.feasible);
            for (int t = 0; t < Np; ++t)
                CHECK(s1_sol.inputs[t][0] == doctest::Approx(oracle.z[t]).epsilon(1e-8));
        }

        t1 = s1_sol.trajectory(x01);
        t2 = s2_sol.trajectory(x02);
    }
}

TEST_CASE("best response iteration contracts for weak coupling")
{
    const double a = 0.85, b = 1.0, c = 0.01;
    auto s1 = make_subsystem(1, Mat::Constant(1, 1, a), Mat::Constant(1, 1, b));
    auto s2 = make_subsystem(2, Mat::Constant(1, 1, a), Mat::Constant(1, 1, b));
    CouplingBlock blk;
    blk.A = Mat::Constant(1, 1, c);
    blk.B = Mat::Zero(1, 1);
    s1.couplings[2] = blk;
    s2.couplings[1] = blk;
    ModelSet ms({s1, s2});
    const auto p1 = aggregate_coalition(ms, {1});
    const auto p2 = aggregate_coalition(ms, {2});
    MpcWeights mw = weights_for({1, 2}, Mat::Identity(1, 1), Mat::Identity(1, 1), 2.0);
    const int Np = 5;
    const auto refs = ReferenceTrajectory::zero(Np, 1, 1);

    const auto res = best_response_iteration(
        ms, p1, p2, Vec::Constant(1, 1.0), Vec::Constant(1, -1.0), refs, refs,
        assemble_weights(mw, p1), assemble_weights(mw, p2), Np, Trajectory::zero(Np, 1, 1),
        Trajectory::zero(Np, 1, 1), 4);
    REQUIRE(res.feasible);
    REQUIRE(res.iteration_costs.size() == 4);
    const double delta =
        std::abs(res.iteration_costs[3].first - res.iteration_costs[2].first) +
        std::abs(res.iteration_costs[3].second - res.iteration_costs[2].second);
    CHECK(delta < 1e-6);

    // max_iter = 0 evaluates against the initial trajectories only
    const auto res0 = best_response_iteration(
        ms, p1, p2, Vec::Constant(1, 1.0), Vec::Constant(1, -1.0), refs, refs,
        assemble_weights(mw, p1), assemble_weights(mw, p2), Np, Trajectory::zero(Np, 1, 1),
        Trajectory::zero(Np, 1, 1), 0);
    REQUIRE(res0.feasible);
    CHECK(res0.iteration_costs.size() == 1);

    // decoupled players converge immediately
    ModelSet dec({make_subsystem(1, Mat::Constant(1, 1, a), Mat::Constant(1, 1, b)),
                  make_subsystem(2, Mat::Constant(1, 1, a), Mat::Constant(1, 1, b))});
    const auto d1 = aggregate_coalition(dec, {1});
    const auto d2 = aggregate_coalition(dec, {2});
    const auto res1 = best_response_iteration(
        dec, d1, d2, Vec::Constant(1, 1.0), Vec::Constant(1, -1.0), refs, refs,
        assemble_weights(mw, d1), assemble_weights(mw, d2), Np, Trajectory::zero(Np, 1, 1),
        Trajectory::zero(Np, 1, 1), 2);
    REQUIRE(res1.feasible);
    CHECK(std::abs(res1.iteration_costs[0].first - res1.iteration_costs[1].first) < 1e-12);
}

TEST_CASE("soft state constraints keep a tightly bounded problem solvable")
{
    Mat A(1, 1), B(1, 1);
    A << 1.0;
    B << 1.0;
    auto s = make_subsystem(1, A, B, 0.05);
    s.state_box.lower.setConstant(-0.5);
    s.state_box.upper.setConstant(0.5);
    ModelSet ms({s});
    const auto cm = aggregate_coalition(ms, {1});
    const auto w = assemble_weights(weights_for({1}, Mat::Identity(1, 1), Mat::Identity(1, 1)), cm);

    // x0 outside the box: hard constraints cannot pull it back within one step
    const Vec x0 = Vec::Constant(1, 1.0);
    const int Np = 3;
    const auto soft = mpc_control(cm, x0, ReferenceTrajectory::zero(Np, 1, 1), w, Np);
    CHECK(soft.status == MpcStatus::solved);

    MpcOptions hard;
    hard.hard_state_constraints = true;
    const auto hard_sol = mpc_control(cm, x0, ReferenceTrajectory::zero(Np, 1, 1), w, Np, {}, hard);
    CHECK(hard_sol.status == MpcStatus::infeasible);
}

TEST_CASE("attributed stage cost sums to the full stage cost")
{
    Rng rng(53);
    auto s1 = make_subsystem(1, oracles::random_stable(rng, 2), oracles::random_matrix(rng, 2, 1));
    auto s2 = make_subsystem(2, oracles::random_stable(rng, 2), oracles::random_matrix(rng, 2, 1));
    ModelSet ms({s1, s2});
    const auto cm = aggregate_coalition(ms, {1, 2});

    MpcWeights mw;
    mw.Q_blocks[{1, 1}] = oracles::random_spd(rng, 2);
    mw.Q_blocks[{2, 2}] = oracles::random_spd(rng, 2);
    Mat cross = oracles::random_matrix(rng, 2, 2, 0.1);
    mw.Q_blocks[{1, 2}] = cross;
    mw.Q_blocks[{2, 1}] = cross.transpose();
    mw.R_blocks[1] = Mat::Identity(1, 1);
    mw.R_blocks[2] = Mat::Identity(1, 1);
    // make the assembled Q comfortably PSD
    mw.Q_blocks[{1, 1}] += Mat::Identity(2, 2);
    mw.Q_blocks[{2, 2}] += Mat::Identity(2, 2);
    const auto w = assemble_weights(mw, cm);

    const Vec x = oracles::random_matrix(rng, 4, 1);
    const Vec u = oracles::random_matrix(rng, 2, 1);
    const Vec xr = oracles::random_matrix(rng, 4, 1);
    const Vec ur = oracles::random_matrix(rng, 2, 1);
    const double full = stage_cost(w, x, u, xr, ur);
    const double part =
        attributed_stage_cost(cm, w, {0}, x, u, xr, ur) + attributed_stage_cost(cm, w, {1}, x, u, xr, ur);
    CHECK(full == doctest::Approx(part).epsilon(1e-12));
}
