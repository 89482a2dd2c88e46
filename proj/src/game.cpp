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

#include "coalmpc/game.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace coalmpc {

namespace {

constexpr int kExhaustiveLimit = 16;
constexpr int kShapleyLimit = 12;

QpSettings game_qp_settings()
{
    QpSettings st;
    st.eps_abs = 1e-10;
    st.eps_rel = 1e-10;
    st.max_iterations = 50000;
    return st;
}

} // namespace

double cooperation_cost(const CooperationCostFn& fn, int coalition_size)
{
    if (coalition_size < 1) throw std::invalid_argument("coalition size must be at least 1");
    if (fn.c_coal < 0.0 || fn.exponent < 0.0)
        throw std::invalid_argument("cooperation cost must be nonnegative and nondecreasing");
    if (coalition_size < fn.threshold) return 0.0;
    return fn.c_coal * std::pow(static_cast<double>(coalition_size), fn.exponent);
}

double coalition_value(double predicted_control_cost, double coop_cost)
{
    return predicted_control_cost + coop_cost;
}

bool merger_test(double v1, double v2, double v12)
{
    return v12 <= v1 + v2;
}

std::pair<double, double> egalitarian_split(double v1, double v2, double v12)
{
    const double half_surplus = 0.5 * (v1 + v2 - v12);
    return {v1 - half_surplus, v2 - half_surplus};
}

double AllocationVector::sum() const
{
    double s = 0.0;
    for (const auto& [id, p] : entries) s += p;
    return s;
}

double AllocationVector::sum_over(const Coalition& subset) const
{
    double s = 0.0;
    for (AgentId id : subset) s += at(id);
    return s;
}

Coalition AllocationVector::agents() const
{
    Coalition out;
    out.reserve(entries.size());
    for (const auto& [id, p] : entries) out.push_back(id);
    return out;
}

double AllocationVector::at(AgentId id) const
{
    const auto it = entries.find(id);
    if (it == entries.end())
        throw std::invalid_argument("no allocation entry for agent " + std::to_string(id));
    return it->second;
}

AllocationVector AllocationVector::equal_split(const Coalition& members, double total)
{
    AllocationVector out;
    const double share = total / static_cast<double>(members.size());
    for (AgentId id : members) out.entries[id] = share;
    return out;
}

CostGame::CostGame(Coalition players, std::shared_ptr<PairEvaluator> evaluator)
    : players_(sorted_coalition(std::move(players))), evaluator_(std::move(evaluator))
{
    if (players_.empty()) throw std::invalid_argument("game needs at least one player");
    if (players_.size() > 31) throw std::invalid_argument("player set too large for subset masks");
}

std::uint32_t CostGame::mask_of(const Coalition& subset) const
{
    std::uint32_t mask = 0;
    for (AgentId id : subset) {
        const auto it = std::lower_bound(players_.begin(), players_.end(), id);
        if (it == players_.end() || *it != id)
            throw std::invalid_argument("subset member outside the player set");
        mask |= 1u << (it - players_.begin());
    }
    return mask;
}

Coalition CostGame::subset_of(std::uint32_t mask) const
{
    Coalition out;
    for (std::size_t i = 0; i < players_.size(); ++i)
        if (mask & (1u << i)) out.push_back(players_[i]);
    return out;
}

double CostGame::value(const Coalition& subset) const
{
    const std::uint32_t mask = mask_of(subset);
    if (mask == 0) return 0.0;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto it = cache_.find(mask);
        if (it != cache_.end()) return it->second;
    }
    const std::uint32_t full = (players_.size() == 31)
                                   ? 0x7fffffffu
                                   : ((1u << players_.size()) - 1);
    double v = 0.0;
    if (mask == full) {
        v = evaluator_->evaluate_whole(players_);
        std::lock_guard<std::mutex> lock(mutex_);
        cache_[mask] = v;
    } else {
        const Coalition comp = subset_of(full & ~mask);
        const Coalition sub = subset_of(mask);
        const auto [vs, vc] = evaluator_->evaluate_pair(sub, comp);
        std::lock_guard<std::mutex> lock(mutex_);
        cache_[mask] = vs;
        cache_[full & ~mask] = vc;
        v = vs;
    }
    return v;
}

bool CostGame::has_cached(const Coalition& subset) const
{
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.count(mask_of(subset)) > 0;
}

void CostGame::seed_value(const Coalition& subset, double v)
{
    std::lock_guard<std::mutex> lock(mutex_);
    cache_[mask_of(subset)] = v;
}

void CostGame::write_table(std::ostream& os) const
{
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& [mask, v] : cache_)
        os << coalition_to_string(subset_of(mask)) << " " << v << "\n";
}

namespace {

class TableEvaluator : public PairEvaluator {
public:
    explicit TableEvaluator(std::function<double(const Coalition&)> fn) : fn_(std::move(fn)) {}

    std::pair<double, double> evaluate_pair(const Coalition& s, const Coalition& c) override
    {
        return {fn_(s), fn_(c)};
    }
    double evaluate_whole(const Coalition& players) override { return fn_(players); }

private:
    std::function<double(const Coalition&)> fn_;
};

} // namespace

CostGame make_table_game(const Coalition& players, std::function<double(const Coalition&)> value_fn)
{
    return CostGame(players, std::make_shared<TableEvaluator>(std::move(value_fn)));
}

double player_cost_share(const CoalitionModel& merged, const AssembledWeights& weights,
                         const Vec& x0, const ReferenceTrajectory& refs, const MpcSolution& joint,
                         const Coalition& player_members, double coop_cost_total,
                         std::optional<double> coop_share_override)
{
    std::vector<int> indices;
    for (AgentId id : player_members) {
        const auto it = std::lower_bound(merged.members.begin(), merged.members.end(), id);
        if (it == merged.members.end() || *it != id)
            throw std::invalid_argument("player member not part of the merged coalition");
        indices.push_back(static_cast<int>(it - merged.members.begin()));
    }
    const int Np = static_cast<int>(joint.inputs.size());
    double share = 0.0;
    Vec x = x0;
    for (int t = 0; t < Np; ++t) {
        share += attributed_stage_cost(merged, weights, indices, x, joint.inputs[t],
                                       refs.states[t], refs.inputs[t]);
        x = joint.states[t];
    }
    if (coop_share_override) share += *coop_share_override;
    else
        share += coop_cost_total * static_cast<double>(player_members.size()) /
                 static_cast<double>(merged.members.size());
    return share;
}

double excess(const CostGame& game, const Coalition& subset, const AllocationVector& allocation)
{
    if (subset.empty()) return 0.0;
    return allocation.sum_over(subset) - game.value(subset);
}

AllocationVector satisfy_demand(const AllocationVector& allocation, const Coalition& subset,
                                double excess_value)
{
    const Coalition all = allocation.agents();
    const Coalition complement = coalition_difference(all, subset);
    if (subset.empty() || complement.empty())
        throw std::invalid_argument("demand subset must be a proper nonempty subcoalition");

    AllocationVector out = allocation;
    for (AgentId id : subset) out.entries[id] -= excess_value / static_cast<double>(subset.size());
    for (AgentId id : complement)
        out.entries[id] += excess_value / static_cast<double>(complement.size());
    return out;
}

bool core_membership(const CostGame& game, const AllocationVector& allocation, double tol)
{
    const int n = game.num_players();
    if (n > kExhaustiveLimit) throw std::invalid_argument("player count exceeds exhaustive limit");
    if (std::abs(allocation.sum() - game.value(game.players())) > tol) return false;
    const std::uint32_t full = (1u << n) - 1;
    for (std::uint32_t mask = 1; mask < full; ++mask) {
        if (excess(game, game.subset_of(mask), allocation) > tol) return false;
    }
    return true;
}

namespace {

/// Projection onto { z : sum_S z <= v(S) + slack for proper S, sum z = v(C) }.
QpSolution project_onto_core_polytope(const CostGame& game, const AllocationVector& p, double slack)
{
    const int n = game.num_players();
    QpBuilder b(n);
    const Coalition players = game.players();
    for (int i = 0; i < n; ++i) {
        b.add_quadratic(i, i, 1.0);
        b.add_linear(i, -2.0 * p.at(players[i]));
        b.add_constant(p.at(players[i]) * p.at(players[i]));
    }
    const std::uint32_t full = (1u << n) - 1;
    for (std::uint32_t mask = 1; mask < full; ++mask) {
        const int row = b.begin_ineq_row();
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) b.ineq_coeff(row, i, 1.0);
        b.set_ineq_rhs(row, game.value(game.subset_of(mask)) + slack);
    }
    const int eq = b.begin_eq_row();
    for (int i = 0; i < n; ++i) b.eq_coeff(eq, i, 1.0);
    b.set_eq_rhs(eq, game.value(players));
    return solve_qp(b.build(), game_qp_settings());
}

} // namespace

CoreDistanceResult core_distance(const CostGame& game, const AllocationVector& allocation)
{
    const int n = game.num_players();
    if (n > kExhaustiveLimit) throw std::invalid_argument("player count exceeds exhaustive limit");

    CoreDistanceResult out;
    QpSolution sol = project_onto_core_polytope(game, allocation, 0.0);
    if (sol.status == QpStatus::infeasible) {
        const LeastCoreResult lc = least_core_epsilon(game);
        sol = project_onto_core_polytope(game, allocation, lc.epsilon);
        out.least_core_fallback = true;
    }
    if (sol.status == QpStatus::infeasible)
        throw std::runtime_error("core projection infeasible even with least-core slack");
    out.distance = std::sqrt(std::max(0.0, sol.objective));
    return out;
}

LeastCoreResult least_core_epsilon(const CostGame& game)
{
    const int n = game.num_players();
    if (n > kExhaustiveLimit) throw std::invalid_argument("player count exceeds exhaustive limit");

    // linear program over (p, eps): minimize eps subject to
    // sum_S p - eps <= v(S) for proper nonempty S and sum p = v(C)
    QpBuilder b(n + 1);
    b.add_linear(n, 1.0);
    const std::uint32_t full = (1u << n) - 1;
    for (std::uint32_t mask = 1; mask < full; ++mask) {
        const int row = b.begin_ineq_row();
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) b.ineq_coeff(row, i, 1.0);
        b.ineq_coeff(row, n, -1.0);
        b.set_ineq_rhs(row, game.value(game.subset_of(mask)));
    }
    const int eq = b.begin_eq_row();
    for (int i = 0; i < n; ++i) b.eq_coeff(eq, i, 1.0);
    b.set_eq_rhs(eq, game.value(game.players()));

    const QpSolution sol = solve_qp(b.build(), game_qp_settings());
    if (sol.status == QpStatus::infeasible)
        throw std::runtime_error("least-core program reported infeasible");

    LeastCoreResult out;
    out.lp_epsilon = sol.z[n];
    out.epsilon = std::max(0.0, sol.z[n]);
    const Coalition players = game.players();
    for (int i = 0; i < n; ++i) out.witness.entries[players[i]] = sol.z[i];
    return out;
}

AllocationVector shapley_value(const CostGame& game)
{
    const int n = game.num_players();
    if (n > kShapleyLimit) throw std::invalid_argument("player count exceeds Shapley limit");

    std::vector<double> fact(n + 1, 1.0);
    for (int i = 1; i <= n; ++i) fact[i] = fact[i - 1] * i;

    const Coalition players = game.players();
    AllocationVector out;
    for (int j = 0; j < n; ++j) out.entries[players[j]] = 0.0;

    const std::uint32_t full = (1u << n) - 1;
    // cache all values once, then sweep marginal contributions
    std::vector<double> values(full + 1, 0.0);
    for (std::uint32_t mask = 1; mask <= full; ++mask)
        values[mask] = game.value(game.subset_of(mask));

    for (int j = 0; j < n; ++j) {
        const std::uint32_t bit = 1u << j;
        double phi = 0.0;
        for (std::uint32_t mask = 0; mask <= full; ++mask) {
            if (mask & bit) continue;
            const int s = __builtin_popcount(mask);
            const double weight = fact[s] * fact[n - s - 1] / fact[n];
            phi += weight * (values[mask | bit] - values[mask]);
        }
        out.entries[players[j]] = phi;
    }
    return out;
}

bool alpha_condition_check(const std::vector<double>& alpha_values)
{
    const int n = static_cast<int>(alpha_values.size());
    if (n == 0) throw std::invalid_argument("alpha sequence must start at size one");
    constexpr double tol = 1e-12; // admit exact-boundary sequences despite rounding
    for (int m = 1; m <= n; ++m) {
        const double a = alpha_values[m - 1];
        if (a > 1.0 + tol) return false;
        if (m >= 2 && a > alpha_values[m - 2] + tol) return false;
        if (m > 2 && a > 2.0 * alpha_values[m - 2] - alpha_values[0] + tol) return false;
    }
    return true;
}

namespace {

bool marginal_check(const CostGame& game, bool increasing)
{
    const int n = game.num_players();
    if (n > kExhaustiveLimit) throw std::invalid_argument("player count exceeds exhaustive limit");
    const std::uint32_t full = (1u << n) - 1;
    std::vector<double> values(full + 1, 0.0);
    for (std::uint32_t mask = 1; mask <= full; ++mask)
        values[mask] = game.value(game.subset_of(mask));

    // pairwise form: for all i != j and S avoiding both,
    // v(S+i+j) - v(S+j) compared against v(S+i) - v(S)
    constexpr double tol = 1e-12;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const std::uint32_t bi = 1u << i, bj = 1u << j;
            for (std::uint32_t mask = 0; mask <= full; ++mask) {
                if ((mask & bi) || (mask & bj)) continue;
                const double lhs = values[mask | bi | bj] - values[mask | bj];
                const double rhs = values[mask | bi] - values[mask];
                if (increasing ? (lhs < rhs - tol) : (lhs > rhs + tol)) return false;
            }
        }
    return true;
}

} // namespace

bool supermodularity_check(const CostGame& game)
{
    return marginal_check(game, true);
}

bool submodularity_check(const CostGame& game)
{
    return marginal_check(game, false);
}

} // namespace coalmpc
