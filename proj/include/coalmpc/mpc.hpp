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

#ifndef COALMPC_MPC_HPP
#define COALMPC_MPC_HPP

#include "coalmpc/lti.hpp"
#include "coalmpc/qp.hpp"
#include "coalmpc/types.hpp"

#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace coalmpc {

/// Stage-cost weights given per agent pair. Cross blocks apply only when both
/// agents sit in the same coalition; the terminal weight is Qf_scale times
/// the assembled stage weight.
struct MpcWeights {
    std::map<std::pair<AgentId, AgentId>, Mat> Q_blocks;
    std::map<AgentId, Mat> R_blocks;
    double Qf_scale = 20.0;
};

/// Weights stacked for one concrete coalition.
struct AssembledWeights {
    Mat Q;
    Mat R;
    Mat Qf;
};

/// Stack the weight blocks in coalition member order. Throws when a diagonal
/// block is missing, R is not positive definite, or Q is not PSD.
AssembledWeights assemble_weights(const MpcWeights& weights, const CoalitionModel& coalition);

/// Targets over the horizon: states indexed 0..Np (terminal included),
/// inputs 0..Np-1.
struct ReferenceTrajectory {
    std::vector<Vec> states;
    std::vector<Vec> inputs;

    static ReferenceTrajectory zero(int Np, int state_dim, int input_dim);
    void validate(int Np, int state_dim, int input_dim) const;
};

/// A state/input rollout; states indexed 0..Np, inputs 0..Np-1. Used for
/// opponent trajectories and warm starts.
struct Trajectory {
    std::vector<Vec> states;
    std::vector<Vec> inputs;

    static Trajectory zero(int Np, int state_dim, int input_dim);
};

/// Drop the first step and repeat the last entries (receding-horizon tail).
Trajectory shift_trajectory(const Trajectory& t);

enum class MpcStatus { solved, infeasible, max_iterations };

struct MpcSolution {
    std::vector<Vec> inputs;      // u*(0..Np-1)
    std::vector<Vec> states;      // x*(1..Np)
    double predicted_cost = 0.0;  // stage-cost sum over t = 0..Np-1, terminal excluded
    double objective = 0.0;       // full QP objective including terminal and penalties
    MpcStatus status = MpcStatus::infeasible;
    double dynamics_residual = 0.0;

    Trajectory trajectory(const Vec& x0) const;
};

struct MpcOptions {
    QpSettings qp;
    double soft_state_penalty = 1e6;
    bool hard_state_constraints = false;
    std::optional<Box> terminal_box; // defaults to the state box (inactive)
};

/// Sparse multiple-shooting tracking QP: decision variables are the stacked
/// inputs and states (plus slacks when soft state bounds are active); the
/// prediction model ignores out-of-coalition coupling but accepts known
/// per-step affine terms (local loads, fixed opponent trajectories).
QuadraticProgram build_tracking_qp(const CoalitionModel& coalition, const Vec& x0,
                                   const ReferenceTrajectory& refs, const AssembledWeights& weights,
                                   int Np, const std::vector<Vec>& affine = {},
                                   const MpcOptions& options = {});

/// Solve the tracking problem; the first input is the one designated for
/// application. predicted_cost excludes the cooperation cost (the game layer
/// adds it).
MpcSolution mpc_control(const CoalitionModel& coalition, const Vec& x0,
                        const ReferenceTrajectory& refs, const AssembledWeights& weights, int Np,
                        const std::vector<Vec>& affine = {}, const MpcOptions& options = {},
                        const Trajectory* warm_start = nullptr);

/// Coupling blocks from one coalition's members onto another's, resolved to
/// positions inside the two coalition vectors.
struct CrossLink {
    int member_index;     // inside the player coalition
    int opp_member_index; // inside the opponent coalition
    Mat A;
    Mat B;
};

std::vector<CrossLink> cross_links(const ModelSet& models, const CoalitionModel& player,
                                   const CoalitionModel& opponent);

/// Per-step affine contribution of a fixed opponent trajectory.
std::vector<Vec> opponent_affine(const CoalitionModel& player, const CoalitionModel& opponent,
                                 const std::vector<CrossLink>& links, const Trajectory& opp, int Np);

/// Best response of one player against a fixed opponent trajectory: the
/// coalition problem with the mutual-coupling terms entering as known
/// affine terms.
MpcSolution unilateral_best_response(const CoalitionModel& player, const CoalitionModel& opponent,
                                     const std::vector<CrossLink>& links,
                                     const Trajectory& opponent_traj, const Vec& x0,
                                     const ReferenceTrajectory& refs,
                                     const AssembledWeights& weights, int Np,
                                     const std::vector<Vec>& base_affine = {},
                                     const MpcOptions& options = {});

struct BestResponseResult {
    MpcSolution first;
    MpcSolution second;
    std::vector<std::pair<double, double>> iteration_costs;
    bool feasible = false;
};

/// Runs the fixed-trajectory exchange max_iter times (both players re-solve
/// against the previous iterate, then swap); max_iter = 0 evaluates both
/// against the initial trajectories. Returns the last feasible pair.
BestResponseResult best_response_iteration(const ModelSet& models, const CoalitionModel& p1,
                                           const CoalitionModel& p2, const Vec& x01, const Vec& x02,
                                           const ReferenceTrajectory& refs1,
                                           const ReferenceTrajectory& refs2,
                                           const AssembledWeights& w1, const AssembledWeights& w2,
                                           int Np, const Trajectory& init1, const Trajectory& init2,
                                           int max_iter,
                                           const std::vector<Vec>& base_affine1 = {},
                                           const std::vector<Vec>& base_affine2 = {},
                                           const MpcOptions& options = {});

/// Stage cost (x-xr)'Q(x-xr) + (u-ur)'R(u-ur).
double stage_cost(const AssembledWeights& w, const Vec& x, const Vec& u, const Vec& x_ref,
                  const Vec& u_ref);

/// The rows of the stage cost owned by a subset of members (their state rows
/// of Q against the full deviation, plus their own input terms). Summing over
/// a partition of the members recovers the full stage cost.
double attributed_stage_cost(const CoalitionModel& coalition, const AssembledWeights& w,
                             const std::vector<int>& member_indices, const Vec& x, const Vec& u,
                             const Vec& x_ref, const Vec& u_ref);

} // namespace coalmpc

#endif // COALMPC_MPC_HPP
