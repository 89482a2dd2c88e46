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

#ifndef COALMPC_BARGAIN_HPP
#define COALMPC_BARGAIN_HPP

#include "coalmpc/game.hpp"
#include "coalmpc/lti.hpp"
#include "coalmpc/mpc.hpp"
#include "coalmpc/rng.hpp"
#include "coalmpc/types.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace coalmpc {

struct BargainingConfig {
    int dwell_time = 5; // steps between bargaining rounds
    int max_iter = 3;   // fixed-trajectory exchange iterations per evaluation
    int max_loops = 10; // subset checks per coalition per round
    enum class PairSelection { all_coupled, random_k };
    PairSelection pair_selection = PairSelection::all_coupled;
    int random_pairs = 3; // attempts per round in random_k mode
    std::uint64_t rng_seed = 1;
    bool allow_splits = true;  // disabled when agents are pinned to a structure
    bool allow_mergers = true; // idem; values and transfers still refresh
    bool evaluate_singletons = false; // price every member's standalone value

    void validate() const;
};

/// Everything a bargaining round needs to price coalitions at the current
/// step: plant models, the measured global state, per-coalition providers
/// for weights, references, known load terms, and warm starts.
struct EvalContext {
    const ModelSet* models = nullptr;
    Vec global_state;
    int Np = 5;
    CooperationCostFn coop;
    int max_iter = 3;
    MpcOptions mpc_options;

    std::function<MpcWeights(const Coalition&)> weights_for;
    /// Metric the game prices trajectories with; defaults to the controller
    /// weights. The benchmark pins it to the structure-independent selfish
    /// weighting so values of different structures stay comparable.
    std::function<MpcWeights(const Coalition&)> value_weights_for;                 // optional
    std::function<ReferenceTrajectory(const Coalition&)> refs_for;
    std::function<std::vector<Vec>(const Coalition&)> load_affine_for;            // optional
    std::function<std::optional<Trajectory>(const Coalition&)> warm_start_for;    // optional

    Vec coalition_state(const CoalitionModel& cm) const;
    std::vector<Vec> load_affine(const Coalition& members) const;
    Trajectory initial_trajectory(const Coalition& members, const CoalitionModel& cm) const;
    MpcWeights value_weights(const Coalition& members) const;
};

/// Stage-cost sum of a solution's trajectory under the given metric,
/// t = 0..Np-1 (terminal excluded).
double trajectory_stage_cost(const AssembledWeights& metric, const Vec& x0,
                             const ReferenceTrajectory& refs, const MpcSolution& solution);

/// Prices subsets by MPC: a proper subset and its complement are evaluated
/// against each other through the fixed-trajectory exchange; the whole set
/// is priced by the joint problem. NaN marks a failed evaluation.
class MpcPairEvaluator : public PairEvaluator {
public:
    explicit MpcPairEvaluator(const EvalContext* ctx) : ctx_(ctx) {}

    std::pair<double, double> evaluate_pair(const Coalition& subset,
                                            const Coalition& complement) override;
    double evaluate_whole(const Coalition& players) override;

    /// Joint solve used both for whole-set pricing and by callers that need
    /// the trajectory itself.
    MpcSolution solve_joint(const Coalition& members) const;

private:
    const EvalContext* ctx_;
};

struct BargainEvent {
    enum class Kind { merge, split, transfer, reject };
    int step = 0;
    Kind kind = Kind::reject;
    Coalition first;
    Coalition second;
    double v1 = 0.0;
    double v2 = 0.0;
    double v12 = 0.0;          // merge/reject: merger value; split: allocation sum
    double transfer_excess = 0.0;
    bool evaluation_failed = false;
    std::map<AgentId, double> allocations_after;
};

std::string to_json_line(const BargainEvent& e);
std::string to_string(BargainEvent::Kind k);

/// The bargaining-layer state of one live coalition: the value its current
/// allocation was built on, and that allocation.
struct CoalitionRecord {
    Coalition members;
    double value = 0.0;
    AllocationVector allocation;
    std::map<AgentId, double> singleton_values; // filled on request
};

struct BargainingOutcome {
    CoalitionStructure structure;
    std::vector<CoalitionRecord> records; // aligned with structure.coalitions
    std::vector<BargainEvent> events;

    AllocationVector all_allocations() const;
    const CoalitionRecord& record_for(AgentId id) const;
};

/// One bargaining round at a dwell-time instant: every coalition's value is
/// refreshed (allocations rescaled onto it), dynamically coupled pairs
/// bargain over mergers, and every touched coalition runs the utility
/// transfer / splitting loop. Deterministic given the rng state.
BargainingOutcome run_bargaining_round(const CoalitionStructure& structure,
                                       const std::vector<CoalitionRecord>& previous_records,
                                       const EvalContext& ctx, const BargainingConfig& config,
                                       Rng& rng, int step);

/// Proportional per-step reallocation: each agent keeps its share of the
/// round value, applied to the realized stage cost plus cooperation cost.
/// A zero round value degrades to an equal split of the bracket.
AllocationVector update_allocations(const AllocationVector& allocation_at_round,
                                    double value_at_round, double realized_stage_cost,
                                    double coop_cost);

/// Predicted-vs-realized cost bookkeeping for one receding-horizon window.
struct DeviationRecord {
    Coalition coalition;
    int start_step = 0;
    double predicted_cost = 0.0;
    double realized_cost = 0.0;
    bool partial = false; // the structure switched (or the run ended) mid-window

    double deviation() const { return realized_cost - predicted_cost; }
};

DeviationRecord prediction_deviation(const Coalition& coalition, int start_step,
                                     const std::vector<double>& realized_stage_costs,
                                     double predicted_cost, bool partial);

struct SwitchBoundCheck {
    bool conclusive = false;
    bool satisfied = false;
    double slack = 0.0;
};

/// Diagnostic for the switching-cost bound: the other coalitions' deviation
/// sum after a merger may not exceed the sum before, minus twice the merged
/// players' absolute deviations, plus the cooperation-cost difference.
SwitchBoundCheck switch_cost_bound_check(std::optional<double> others_deviation_before,
                                         std::optional<double> others_deviation_after,
                                         std::optional<double> deviation_p1,
                                         std::optional<double> deviation_p2, double chi_merged,
                                         double chi_p1, double chi_p2);

/// Pairs of coalitions with at least one dynamic coupling between them.
bool dynamically_coupled(const ModelSet& models, const Coalition& a, const Coalition& b);

} // namespace coalmpc

#endif // COALMPC_BARGAIN_HPP
