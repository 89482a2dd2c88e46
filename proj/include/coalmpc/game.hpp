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

#ifndef COALMPC_GAME_HPP
#define COALMPC_GAME_HPP

#include "coalmpc/mpc.hpp"
#include "coalmpc/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

namespace coalmpc {

// Cost convention used throughout: v is a cost (lower is better), the excess
// of S is what S pays beyond its standalone value, a positive excess means S
// is dissatisfied, and the core requires every subcoalition to pay at most
// its standalone value.

/// chi = c_coal * size^exponent once the coalition reaches the threshold
/// size; singletons coordinate nothing and pay nothing.
struct CooperationCostFn {
    double c_coal = 0.0;
    double exponent = 2.0;
    int threshold = 2;
};

double cooperation_cost(const CooperationCostFn& fn, int coalition_size);

/// Coalition value: predicted control cost over the horizon plus the
/// cooperation cost.
double coalition_value(double predicted_control_cost, double coop_cost);

/// Merger condition: accept when the joint value does not exceed the sum of
/// the unilateral values (ties accept).
bool merger_test(double v1, double v2, double v12);

/// Equal split of the merger surplus across the two players; the aggregates
/// sum to v12.
std::pair<double, double> egalitarian_split(double v1, double v2, double v12);

/// Per-agent cost allocations; bound to a coalition by efficiency
/// (entries sum to the coalition value).
struct AllocationVector {
    std::map<AgentId, double> entries;

    double sum() const;
    double sum_over(const Coalition& subset) const;
    Coalition agents() const;
    double at(AgentId id) const;

    static AllocationVector equal_split(const Coalition& members, double total);
};

/// Supplies characteristic values. Proper subsets are priced by evaluating S
/// against its complement (both at once, since the evaluation is mutual);
/// the full player set is priced on its own.
class PairEvaluator {
public:
    virtual ~PairEvaluator() = default;
    virtual std::pair<double, double> evaluate_pair(const Coalition& subset,
                                                    const Coalition& complement) = 0;
    virtual double evaluate_whole(const Coalition& players) = 0;
};

/// A coalition's cost game with a lazily populated value cache. Values are
/// computed on demand and kept for the lifetime of the game instance (one
/// bargaining round); concurrent readers share a lock, computation is
/// serialized per instance.
class CostGame {
public:
    CostGame(Coalition players, std::shared_ptr<PairEvaluator> evaluator);

    const Coalition& players() const { return players_; }
    int num_players() const { return static_cast<int>(players_.size()); }

    /// v(S); v of the empty set is 0. NaN marks an evaluation failure
    /// (callers treat the draw as unusable).
    double value(const Coalition& subset) const;
    bool has_cached(const Coalition& subset) const;
    void seed_value(const Coalition& subset, double v);

    std::uint32_t mask_of(const Coalition& subset) const;
    Coalition subset_of(std::uint32_t mask) const;

    /// Subset-value table of everything evaluated so far.
    void write_table(std::ostream& os) const;

private:
    Coalition players_;
    std::shared_ptr<PairEvaluator> evaluator_;
    mutable std::map<std::uint32_t, double> cache_;
    mutable std::mutex mutex_;
};

/// Game backed by an explicit value function (tests, oracles, generated
/// games).
CostGame make_table_game(const Coalition& players,
                         std::function<double(const Coalition&)> value_fn);

/// Stage-cost share of one player inside a jointly optimized solution: its
/// own state rows (cross-weight terms included) plus its own input terms,
/// plus a slice of the cooperation cost (equal per agent unless overridden).
/// Shares over a partition of the members sum to the merged coalition's
/// value when the overrides do.
double player_cost_share(const CoalitionModel& merged, const AssembledWeights& weights,
                         const Vec& x0, const ReferenceTrajectory& refs, const MpcSolution& joint,
                         const Coalition& player_members, double coop_cost_total,
                         std::optional<double> coop_share_override = {});

/// e(S, p) = allocated minus standalone; positive when S overpays.
double excess(const CostGame& game, const Coalition& subset, const AllocationVector& allocation);

/// Egalitarian redistribution zeroing the excess of S: members of S change
/// by -e/|S| each, the complement by +e/|complement| each. Efficiency is
/// preserved exactly.
AllocationVector satisfy_demand(const AllocationVector& allocation, const Coalition& subset,
                                double excess_value);

/// Exhaustive core test (player count capped at 16): efficient and no
/// subcoalition overpays.
bool core_membership(const CostGame& game, const AllocationVector& allocation, double tol = 1e-9);

struct CoreDistanceResult {
    double distance = 0.0;
    bool least_core_fallback = false; // measured against the least-core polytope
};

/// Euclidean distance to the core polytope (projection QP with one
/// inequality per proper subset plus the efficiency equality). When the core
/// is empty the distance is taken to the least-core polytope and flagged.
CoreDistanceResult core_distance(const CostGame& game, const AllocationVector& allocation);

struct LeastCoreResult {
    double epsilon = 0.0; // smallest uniform slack >= 0 making the core nonempty
    AllocationVector witness;
    double lp_epsilon = 0.0; // unclamped LP optimum (negative inside a strict core)
};

LeastCoreResult least_core_epsilon(const CostGame& game);

/// Exhaustive marginal-contribution average (player count capped at 12);
/// efficient by construction.
AllocationVector shapley_value(const CostGame& game);

/// Checks the finite-size conditions on the scaling sequence alpha(1..n):
/// non-increasing, bounded by one, and alpha(m) <= 2 alpha(m-1) - alpha(1)
/// for every m > 2.
bool alpha_condition_check(const std::vector<double>& alpha_values);

/// Increasing marginal costs: v(S u {j}) - v(S) >= v(T u {j}) - v(T) for all
/// T inside S. Checked through the equivalent pairwise form.
bool supermodularity_check(const CostGame& game);

/// Decreasing marginal costs (the reversed inequality); the direction under
/// which a cost game's core is classically nonempty.
bool submodularity_check(const CostGame& game);

} // namespace coalmpc

#endif // COALMPC_GAME_HPP
