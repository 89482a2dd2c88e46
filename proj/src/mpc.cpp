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

#include "coalmpc/mpc.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace coalmpc {

AssembledWeights assemble_weights(const MpcWeights& weights, const CoalitionModel& coalition)
{
    const int n = coalition.state_dim();
    const int q = coalition.input_dim();
    AssembledWeights out;
    out.Q = Mat::Zero(n, n);
    out.R = Mat::Zero(q, q);

    for (std::size_t a = 0; a < coalition.members.size(); ++a) {
        const AgentId i = coalition.members[a];
        const auto qit = weights.Q_blocks.find({i, i});
        if (qit == weights.Q_blocks.end())
            throw std::invalid_argument("missing diagonal state weight for agent " + std::to_string(i));
        const auto rit = weights.R_blocks.find(i);
        if (rit == weights.R_blocks.end())
            throw std::invalid_argument("missing input weight for agent " + std::to_string(i));
        out.Q.block(coalition.member_state_offsets[a], coalition.member_state_offsets[a],
                    qit->second.rows(), qit->second.cols()) = qit->second;
        out.R.block(coalition.member_input_offsets[a], coalition.member_input_offsets[a],
                    rit->second.rows(), rit->second.cols()) = rit->second;

        for (std::size_t b = 0; b < coalition.members.size(); ++b) {
            if (a == b) continue;
            const auto cit = weights.Q_blocks.find({i, coalition.members[b]});
            if (cit == weights.Q_blocks.end()) continue;
            out.Q.block(coalition.member_state_offsets[a], coalition.member_state_offsets[b],
                        cit->second.rows(), cit->second.cols()) = cit->second;
        }
    }

    Eigen::SelfAdjointEigenSolver<Mat> qe(out.Q, Eigen::EigenvaluesOnly);
    if (qe.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, qe.eigenvalues().cwiseAbs().maxCoeff()))
        throw std::invalid_argument("assembled stage weight is not positive semidefinite");
    Eigen::LLT<Mat> rchol(out.R);
    if (rchol.info() != Eigen::Success)
        throw std::invalid_argument("input weight must be positive definite");

    out.Qf = weights.Qf_scale * out.Q;
    return out;
}

ReferenceTrajectory ReferenceTrajectory::zero(int Np, int state_dim, int input_dim)
{
    ReferenceTrajectory r;
    r.states.assign(Np + 1, Vec::Zero(state_dim));
    r.inputs.assign(Np, Vec::Zero(input_dim));
    return r;
}

void ReferenceTrajectory::validate(int Np, int state_dim, int input_dim) const
{
    if (static_cast<int>(states.size()) != Np + 1 || static_cast<int>(inputs.size()) != Np)
        throw std::invalid_argument("reference lengths must be Np+1 states and Np inputs");
    for (const auto& x : states)
        if (x.size() != state_dim) throw std::invalid_argument("reference state dimension mismatch");
    for (const auto& u : inputs)
        if (u.size() != input_dim) throw std::invalid_argument("reference input dimension mismatch");
}

Trajectory Trajectory::zero(int Np, int state_dim, int input_dim)
{
    Trajectory t;
    t.states.assign(Np + 1, Vec::Zero(state_dim));
    t.inputs.assign(Np, Vec::Zero(input_dim));
    return t;
}

Trajectory shift_trajectory(const Trajectory& t)
{
    Trajectory out;
    if (t.states.size() > 1) {
        out.states.assign(t.states.begin() + 1, t.states.end());
        out.states.push_back(t.states.back());
    } else {
        out.states = t.states;
    }
    if (t.inputs.size() > 1) {
        out.inputs.assign(t.inputs.begin() + 1, t.inputs.end());
        out.inputs.push_back(t.inputs.back());
    } else {
        out.inputs = t.inputs;
    }
    return out;
}

Trajectory MpcSolution::trajectory(const Vec& x0) const
{
    Trajectory t;
    t.states.push_back(x0);
    t.states.insert(t.states.end(), states.begin(), states.end());
    t.inputs = inputs;
    return t;
}

namespace {

struct Layout {
    int Np = 0;
    int n = 0;
    int q = 0;
    int num_slacks = 0;
    std::vector<int> slack_index; // per (t-1)*n + coord; -1 when absent

    int u_off(int t) const { return t * q; }
    int x_off(int t) const { return Np * q + (t - 1) * n; } // t in 1..Np
    int s_off() const { return Np * (q + n); }
};

QuadraticProgram build_with_layout(const CoalitionModel& cm, const Vec& x0,
                                   const ReferenceTrajectory& refs, const AssembledWeights& w,
                                   int Np, const std::vector<Vec>& affine, const MpcOptions& opt,
                                   Layout& layout)
{
    const int n = cm.state_dim();
    const int q = cm.input_dim();
    if (x0.size() != n) throw std::invalid_argument("initial state dimension mismatch");
    refs.validate(Np, n, q);
    if (!affine.empty() && static_cast<int>(affine.size()) != Np)
        throw std::invalid_argument("affine term count must equal the horizon");

    layout.Np = Np;
    layout.n = n;
    layout.q = q;

    const Box& sbox = cm.state_box;
    const bool soft = !opt.hard_state_constraints;
    layout.slack_index.assign(static_cast<std::size_t>(Np) * n, -1);
    if (soft) {
        for (int t = 1; t <= Np; ++t)
            for (int i = 0; i < n; ++i)
                if (std::isfinite(sbox.lower[i]) || std::isfinite(sbox.upper[i]))
                    layout.slack_index[(t - 1) * n + i] = layout.num_slacks++;
    }

    QpBuilder b(Np * (q + n) + layout.num_slacks);

    // stage costs; the t = 0 state term is a constant
    b.add_constant((x0 - refs.states[0]).dot(w.Q * (x0 - refs.states[0])));
    for (int t = 0; t < Np; ++t) b.add_quadratic_form(layout.u_off(t), w.R, refs.inputs[t]);
    for (int t = 1; t < Np; ++t) b.add_quadratic_form(layout.x_off(t), w.Q, refs.states[t]);
    b.add_quadratic_form(layout.x_off(Np), w.Qf, refs.states[Np]);
    for (int s = 0; s < layout.num_slacks; ++s)
        b.add_quadratic(layout.s_off() + s, layout.s_off() + s, opt.soft_state_penalty);

    // dynamics x(t+1) = A x(t) + B u(t) + d(t)
    for (int t = 0; t < Np; ++t) {
        const Vec d = affine.empty() ? Vec::Zero(n) : affine[t];
        for (int r = 0; r < n; ++r) {
            const int row = b.begin_eq_row();
            b.eq_coeff(row, layout.x_off(t + 1) + r, 1.0);
            for (int c = 0; c < q; ++c) {
                const double v = cm.B_coal(r, c);
                if (v != 0.0) b.eq_coeff(row, layout.u_off(t) + c, -v);
            }
            if (t == 0) {
                b.set_eq_rhs(row, (cm.A_coal.row(r) * x0).value() + d[r]);
            } else {
                for (int c = 0; c < n; ++c) {
                    const double v = cm.A_coal(r, c);
                    if (v != 0.0) b.eq_coeff(row, layout.x_off(t) + c, -v);
                }
                b.set_eq_rhs(row, d[r]);
            }
        }
    }

    // input box
    for (int t = 0; t < Np; ++t)
        for (int i = 0; i < q; ++i) {
            if (std::isfinite(cm.input_box.upper[i])) {
                const int row = b.begin_ineq_row();
                b.ineq_coeff(row, layout.u_off(t) + i, 1.0);
                b.set_ineq_rhs(row, cm.input_box.upper[i]);
            }
            if (std::isfinite(cm.input_box.lower[i])) {
                const int row = b.begin_ineq_row();
                b.ineq_coeff(row, layout.u_off(t) + i, -1.0);
                b.set_ineq_rhs(row, -cm.input_box.lower[i]);
            }
        }

    // state box (t = 1..Np); the terminal box, when given, replaces it at Np
    for (int t = 1; t <= Np; ++t) {
        const Box& box = (t == Np && opt.terminal_box) ? *opt.terminal_box : sbox;
        const bool hard_here = opt.hard_state_constraints || (t == Np && opt.terminal_box);
        for (int i = 0; i < n; ++i) {
            const int s = hard_here ? -1 : layout.slack_index[(t - 1) * n + i];
            if (std::isfinite(box.upper[i])) {
                const int row = b.begin_ineq_row();
                b.ineq_coeff(row, layout.x_off(t) + i, 1.0);
                if (s >= 0) b.ineq_coeff(row, layout.s_off() + s, -1.0);
                b.set_ineq_rhs(row, box.upper[i]);
            }
            if (std::isfinite(box.lower[i])) {
                const int row = b.begin_ineq_row();
                b.ineq_coeff(row, layout.x_off(t) + i, -1.0);
                if (s >= 0) b.ineq_coeff(row, layout.s_off() + s, -1.0);
                b.set_ineq_rhs(row, -box.lower[i]);
            }
        }
    }
    for (int s = 0; s < layout.num_slacks; ++s) {
        const int row = b.begin_ineq_row();
        b.ineq_coeff(row, layout.s_off() + s, -1.0);
        b.set_ineq_rhs(row, 0.0);
    }

    return b.build();
}

} // namespace

QuadraticProgram build_tracking_qp(const CoalitionModel& coalition, const Vec& x0,
                                   const ReferenceTrajectory& refs, const AssembledWeights& weights,
                                   int Np, const std::vector<Vec>& affine, const MpcOptions& options)
{
    Layout layout;
    return build_with_layout(coalition, x0, refs, weights, Np, affine, options, layout);
}

MpcSolution mpc_control(const CoalitionModel& coalition, const Vec& x0,
                        const ReferenceTrajectory& refs, const AssembledWeights& weights, int Np,
                        const std::vector<Vec>& affine, const MpcOptions& options,
                        const Trajectory* warm_start)
{
    Layout layout;
    const QuadraticProgram qp =
        build_with_layout(coalition, x0, refs, weights, Np, affine, options, layout);

    Vec warm;
    const Vec* warm_ptr = nullptr;
    if (warm_start != nullptr && static_cast<int>(warm_start->inputs.size()) == Np &&
        static_cast<int>(warm_start->states.size()) == Np + 1) {
        warm = Vec::Zero(qp.num_vars);
        for (int t = 0; t < Np; ++t) warm.segment(layout.u_off(t), layout.q) = warm_start->inputs[t];
        for (int t = 1; t <= Np; ++t)
            warm.segment(layout.x_off(t), layout.n) = warm_start->states[t];
        warm_ptr = &warm;
    }

    const QpSolution qsol = solve_qp(qp, options.qp, warm_ptr);

    MpcSolution out;
    switch (qsol.status) {
    case QpStatus::solved: out.status = MpcStatus::solved; break;
    case QpStatus::infeasible: out.status = MpcStatus::infeasible; break;
    case QpStatus::max_iterations: out.status = MpcStatus::max_iterations; break;
    }
    if (out.status == MpcStatus::infeasible) return out;

    out.objective = qsol.objective;
    for (int t = 0; t < Np; ++t) out.inputs.push_back(qsol.z.segment(layout.u_off(t), layout.q));
    for (int t = 1; t <= Np; ++t) out.states.push_back(qsol.z.segment(layout.x_off(t), layout.n));

    out.predicted_cost = 0.0;
    Vec x = x0;
    for (int t = 0; t < Np; ++t) {
        out.predicted_cost += stage_cost(weights, x, out.inputs[t], refs.states[t], refs.inputs[t]);
        x = out.states[t];
    }

    double resid = 0.0;
    Vec prev = x0;
    for (int t = 0; t < Np; ++t) {
        const Vec d = affine.empty() ? Vec::Zero(layout.n) : affine[t];
        const Vec rhs = coalition.A_coal * prev + coalition.B_coal * out.inputs[t] + d;
        resid = std::max(resid, (out.states[t] - rhs).lpNorm<Eigen::Infinity>());
        prev = out.states[t];
    }
    out.dynamics_residual = resid;
    return out;
}

std::vector<CrossLink> cross_links(const ModelSet& models, const CoalitionModel& player,
                                   const CoalitionModel& opponent)
{
    std::vector<CrossLink> links;
    for (std::size_t a = 0; a < player.members.size(); ++a) {
        const auto& sub = models.subsystem(player.members[a]);
        for (const auto& [j, blk] : sub.couplings) {
            const auto it = std::lower_bound(opponent.members.begin(), opponent.members.end(), j);
            if (it == opponent.members.end() || *it != j) continue;
            CrossLink l;
            l.member_index = static_cast<int>(a);
            l.opp_member_index = static_cast<int>(it - opponent.members.begin());
            l.A = blk.A;
            l.B = blk.B;
            links.push_back(std::move(l));
        }
    }
    return links;
}

std::vector<Vec> opponent_affine(const CoalitionModel& player, const CoalitionModel& opponent,
                                 const std::vector<CrossLink>& links, const Trajectory& opp, int Np)
{
    if (static_cast<int>(opp.states.size()) < Np || static_cast<int>(opp.inputs.size()) < Np)
        throw std::invalid_argument("opponent trajectory shorter than the horizon");
    std::vector<Vec> affine(Np, Vec::Zero(player.state_dim()));
    for (int t = 0; t < Np; ++t) {
        for (const auto& l : links) {
            const int ro = player.member_state_offsets[l.member_index];
            const int so = opponent.member_state_offsets[l.opp_member_index];
            const int io = opponent.member_input_offsets[l.opp_member_index];
            affine[t].segment(ro, l.A.rows()) +=
                l.A * opp.states[t].segment(so, l.A.cols()) +
                l.B * opp.inputs[t].segment(io, l.B.cols());
        }
    }
    return affine;
}

MpcSolution unilateral_best_response(const CoalitionModel& player, const CoalitionModel& opponent,
                                     const std::vector<CrossLink>& links,
                                     const Trajectory& opponent_traj, const Vec& x0,
                                     const ReferenceTrajectory& refs,
                                     const AssembledWeights& weights, int Np,
                                     const std::vector<Vec>& base_affine, const MpcOptions& options)
{
    std::vector<Vec> affine = opponent_affine(player, opponent, links, opponent_traj, Np);
    if (!base_affine.empty()) {
        for (int t = 0; t < Np; ++t) affine[t] += base_affine[t];
    }
    return mpc_control(player, x0, refs, weights, Np, affine, options);
}

BestResponseResult best_response_iteration(const ModelSet& models, const CoalitionModel& p1,
                                           const CoalitionModel& p2, const Vec& x01, const Vec& x02,
                                           const ReferenceTrajectory& refs1,
                                           const ReferenceTrajectory& refs2,
                                           const AssembledWeights& w1, const AssembledWeights& w2,
                                           int Np, const Trajectory& init1, const Trajectory& init2,
                                           int max_iter, const std::vector<Vec>& base_affine1,
                                           const std::vector<Vec>& base_affine2,
                                           const MpcOptions& options)
{
    const auto links12 = cross_links(models, p1, p2);
    const auto links21 = cross_links(models, p2, p1);

    BestResponseResult out;
    Trajectory traj1 = init1;
    Trajectory traj2 = init2;

    const int rounds = std::max(1, max_iter);
    for (int it = 0; it < rounds; ++it) {
        // both players respond to the previous iterate, then swap
        MpcSolution s1 = unilateral_best_response(p1, p2, links12, traj2, x01, refs1, w1, Np,
                                                  base_affine1, options);
        MpcSolution s2 = unilateral_best_response(p2, p1, links21, traj1, x02, refs2, w2, Np,
                                                  base_affine2, options);
        if (s1.status != MpcStatus::solved || s2.status != MpcStatus::solved) {
            return out; // keep the last feasible pair, flagged by `feasible`
        }
        out.iteration_costs.emplace_back(s1.predicted_cost, s2.predicted_cost);
        out.first = std::move(s1);
        out.second = std::move(s2);
        out.feasible = true;
        if (max_iter > 0) {
            traj1 = out.first.trajectory(x01);
            traj2 = out.second.trajectory(x02);
        }
    }
    return out;
}

double stage_cost(const AssembledWeights& w, const Vec& x, const Vec& u, const Vec& x_ref,
                  const Vec& u_ref)
{
    const Vec dx = x - x_ref;
    const Vec du = u - u_ref;
    return dx.dot(w.Q * dx) + du.dot(w.R * du);
}

double attributed_stage_cost(const CoalitionModel& coalition, const AssembledWeights& w,
                             const std::vector<int>& member_indices, const Vec& x, const Vec& u,
                             const Vec& x_ref, const Vec& u_ref)
{
    const Vec dx = x - x_ref;
    const Vec du = u - u_ref;
    double cost = 0.0;
    for (const int k : member_indices) {
        const int ro = coalition.member_state_offsets[k];
        const int nr = coalition.member_state_dim(static_cast<std::size_t>(k));
        cost += dx.segment(ro, nr).dot(w.Q.middleRows(ro, nr) * dx);
        const int io = coalition.member_input_offsets[k];
        const int ni = coalition.member_input_dim(static_cast<std::size_t>(k));
        cost += du.segment(io, ni).dot(w.R.middleRows(io, ni) * du);
    }
    return cost;
}

} // namespace coalmpc
