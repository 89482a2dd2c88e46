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

#include "coalmpc/bargain.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace coalmpc {

void BargainingConfig::validate() const
{
    if (dwell_time < 1) throw std::invalid_argument("dwell_time must be at least 1");
    if (max_iter < 0) throw std::invalid_argument("max_iter must be nonnegative");
    if (max_loops < 1) throw std::invalid_argument("max_loops must be at least 1");
    if (pair_selection == PairSelection::random_k && random_pairs < 1)
        throw std::invalid_argument("random_pairs must be at least 1");
}

Vec EvalContext::coalition_state(const CoalitionModel& cm) const
{
    Vec x(cm.state_dim());
    for (std::size_t k = 0; k < cm.members.size(); ++k) {
        const auto& sub = models->subsystem(cm.members[k]);
        x.segment(cm.member_state_offsets[k], sub.state_dim()) =
            global_state.segment(models->state_offset(sub.id), sub.state_dim());
    }
    return x;
}

std::vector<Vec> EvalContext::load_affine(const Coalition& members) const
{
    if (!load_affine_for) return {};
    return load_affine_for(members);
}

Trajectory EvalContext::initial_trajectory(const Coalition& members, const CoalitionModel& cm) const
{
    if (warm_start_for) {
        if (auto warm = warm_start_for(members)) return *warm;
    }
    return Trajectory::zero(Np, cm.state_dim(), cm.input_dim());
}

MpcWeights EvalContext::value_weights(const Coalition& members) const
{
    if (value_weights_for) return value_weights_for(members);
    return weights_for(members);
}

double trajectory_stage_cost(const AssembledWeights& metric, const Vec& x0,
                             const ReferenceTrajectory& refs, const MpcSolution& solution)
{
    double total = 0.0;
    Vec x = x0;
    for (std::size_t t = 0; t < solution.inputs.size(); ++t) {
        total += stage_cost(metric, x, solution.inputs[t], refs.states[t], refs.inputs[t]);
        x = solution.states[t];
    }
    return total;
}

std::pair<double, double> MpcPairEvaluator::evaluate_pair(const Coalition& subset,
                                                          const Coalition& complement)
{
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto p1 = aggregate_coalition(*ctx_->models, subset);
    const auto p2 = aggregate_coalition(*ctx_->models, complement);
    const auto w1 = assemble_weights(ctx_->weights_for(subset), p1);
    const auto w2 = assemble_weights(ctx_->weights_for(complement), p2);
    const Vec x01 = ctx_->coalition_state(p1);
    const Vec x02 = ctx_->coalition_state(p2);
    const auto refs1 = ctx_->refs_for(subset);
    const auto refs2 = ctx_->refs_for(complement);

    const auto res = best_response_iteration(
        *ctx_->models, p1, p2, x01, x02, refs1, refs2, w1, w2, ctx_->Np,
        ctx_->initial_trajectory(subset, p1), ctx_->initial_trajectory(complement, p2),
        ctx_->max_iter, ctx_->load_affine(subset), ctx_->load_affine(complement),
        ctx_->mpc_options);
    if (!res.feasible) return {nan, nan};

    const auto m1 = assemble_weights(ctx_->value_weights(subset), p1);
    const auto m2 = assemble_weights(ctx_->value_weights(complement), p2);
    return {coalition_value(trajectory_stage_cost(m1, x01, refs1, res.first),
                            cooperation_cost(ctx_->coop, static_cast<int>(subset.size()))),
            coalition_value(trajectory_stage_cost(m2, x02, refs2, res.second),
                            cooperation_cost(ctx_->coop, static_cast<int>(complement.size())))};
}

MpcSolution MpcPairEvaluator::solve_joint(const Coalition& members) const
{
    const auto cm = aggregate_coalition(*ctx_->models, members);
    const auto w = assemble_weights(ctx_->weights_for(members), cm);
    const Trajectory init = ctx_->initial_trajectory(members, cm);
    return mpc_control(cm, ctx_->coalition_state(cm), ctx_->refs_for(members), w, ctx_->Np,
                       ctx_->load_affine(members), ctx_->mpc_options, &init);
}

double MpcPairEvaluator::evaluate_whole(const Coalition& players)
{
    const MpcSolution sol = solve_joint(players);
    if (sol.status != MpcStatus::solved) return std::numeric_limits<double>::quiet_NaN();
    const auto cm = aggregate_coalition(*ctx_->models, players);
    const auto metric = assemble_weights(ctx_->value_weights(players), cm);
    const double control_cost =
        trajectory_stage_cost(metric, ctx_->coalition_state(cm), ctx_->refs_for(players), sol);
    return coalition_value(control_cost,
                           cooperation_cost(ctx_->coop, static_cast<int>(players.size())));
}

std::string to_string(BargainEvent::Kind k)
{
    switch (k) {
    case BargainEvent::Kind::merge: return "merge";
    case BargainEvent::Kind::split: return "split";
    case BargainEvent::Kind::transfer: return "transfer";
    case BargainEvent::Kind::reject: return "reject";
    }
    return "unknown";
}

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string coalition_json(const Coalition& c)
{
    std::string s = "[";
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i > 0) s += ",";
        s += std::to_string(c[i]);
    }
    return s + "]";
}

} // namespace

std::string to_json_line(const BargainEvent& e)
{
    std::ostringstream os;
    os << "{\"step\":" << e.step << ",\"event\":\"" << to_string(e.kind) << "\"";
    os << ",\"first\":" << coalition_json(e.first);
    if (!e.second.empty()) os << ",\"second\":" << coalition_json(e.second);
    os << ",\"v1\":" << fmt(e.v1) << ",\"v2\":" << fmt(e.v2) << ",\"v12\":" << fmt(e.v12);
    if (e.kind == BargainEvent::Kind::transfer) os << ",\"excess\":" << fmt(e.transfer_excess);
    if (e.evaluation_failed) os << ",\"evaluation_failed\":true";
    os << ",\"allocations\":{";
    bool first = true;
    for (const auto& [id, p] : e.allocations_after) {
        if (!first) os << ",";
        first = false;
        os << "\"" << id << "\":" << fmt(p);
    }
    os << "}}";
    return os.str();
}

AllocationVector BargainingOutcome::all_allocations() const
{
    AllocationVector out;
    for (const auto& rec : records)
        for (const auto& [id, p] : rec.allocation.entries) out.entries[id] = p;
    return out;
}

const CoalitionRecord& BargainingOutcome::record_for(AgentId id) const
{
    for (const auto& rec : records)
        if (contains(rec.members, id)) return rec;
    throw std::invalid_argument("agent has no coalition record");
}

bool dynamically_coupled(const ModelSet& models, const Coalition& a, const Coalition& b)
{
    for (AgentId i : a) {
        const auto& sub = models.subsystem(i);
        for (const auto& [j, blk] : sub.couplings)
            if (!blk.is_zero() && contains(b, j)) return true;
    }
    for (AgentId i : b) {
        const auto& sub = models.subsystem(i);
        for (const auto& [j, blk] : sub.couplings)
            if (!blk.is_zero() && contains(a, j)) return true;
    }
    return false;
}

namespace {

/// Working state of one round.
struct RoundState {
    const EvalContext* ctx;
    const BargainingConfig* cfg;
    Rng* rng;
    int step;
    std::vector<CoalitionRecord> live; // current coalitions with values/allocations
    std::vector<BargainEvent> events;
    std::map<Coalition, std::shared_ptr<CostGame>> games; // scoped per player set

    CostGame& game_for(const Coalition& scope)
    {
        auto it = games.find(scope);
        if (it == games.end()) {
            auto game = std::make_shared<CostGame>(
                scope, std::make_shared<MpcPairEvaluator>(ctx));
            it = games.emplace(scope, std::move(game)).first;
        }
        return *it->second;
    }

    CoalitionRecord& record_of(const Coalition& members)
    {
        for (auto& rec : live)
            if (rec.members == members) return rec;
        throw std::logic_error("no live record for coalition " + coalition_to_string(members));
    }

    void erase_record(const Coalition& members)
    {
        for (auto it = live.begin(); it != live.end(); ++it)
            if (it->members == members) {
                live.erase(it);
                return;
            }
        throw std::logic_error("erasing unknown coalition");
    }

    BargainEvent& push_event(BargainEvent::Kind kind, const Coalition& first,
                             const Coalition& second = {})
    {
        BargainEvent e;
        e.step = step;
        e.kind = kind;
        e.first = first;
        e.second = second;
        events.push_back(std::move(e));
        return events.back();
    }
};

/// Rescale an allocation onto a new total, preserving proportions; falls
/// back to an equal split when the previous total is (near) zero or signs
/// would flip the shares.
AllocationVector rescale_allocation(const AllocationVector& prev, const Coalition& members,
                                    double new_total)
{
    const double old_total = prev.sum();
    bool usable = std::isfinite(old_total) && std::abs(old_total) > 1e-12 &&
                  prev.entries.size() == members.size();
    for (AgentId id : members)
        if (usable && prev.entries.count(id) == 0) usable = false;
    if (!usable) return AllocationVector::equal_split(members, new_total);

    AllocationVector out;
    for (AgentId id : members) out.entries[id] = prev.at(id) / old_total * new_total;
    return out;
}

/// Uniform draw of an unordered proper split {S, P\S}: the smallest member
/// is pinned to the complement side, the rest choose sides by mask.
std::pair<Coalition, Coalition> draw_split(const Coalition& members, Rng& rng)
{
    const int n = static_cast<int>(members.size());
    const std::uint32_t mask = 1u + static_cast<std::uint32_t>(rng.below((1u << (n - 1)) - 1));
    Coalition s1, s2;
    s2.push_back(members[0]);
    for (int i = 1; i < n; ++i) {
        if (mask & (1u << (i - 1))) s1.push_back(members[i]);
        else s2.push_back(members[i]);
    }
    return {s1, s2};
}

void transfer_or_split(RoundState& rs, const Coalition& members);

/// Handles one side of a committed split: install the record, log nothing
/// extra (the split event covers it), then re-examine the part.
void install_split_part(RoundState& rs, const Coalition& part, double value)
{
    CoalitionRecord rec;
    rec.members = part;
    rec.value = value;
    rec.allocation = AllocationVector::equal_split(part, value);
    rs.live.push_back(std::move(rec));
    rs.game_for(part).seed_value(part, value);
    transfer_or_split(rs, part);
}

void transfer_or_split(RoundState& rs, const Coalition& members)
{
    if (members.size() <= 1) return;

    CostGame& game = rs.game_for(members);
    game.seed_value(members, rs.record_of(members).value);

    for (int loop = 0; loop < rs.cfg->max_loops; ++loop) {
        const auto [s1, s2] = draw_split(members, *rs.rng);
        const double v1 = game.value(s1);
        const double v2 = game.value(s2);
        if (!std::isfinite(v1) || !std::isfinite(v2)) continue; // unusable draw

        CoalitionRecord& rec = rs.record_of(members);
        const double aggregate = rec.allocation.sum();

        if (rs.cfg->allow_splits && aggregate > v1 + v2) {
            {
                BargainEvent e;
                e.step = rs.step;
                e.kind = BargainEvent::Kind::split;
                e.first = s1;
                e.second = s2;
                e.v1 = v1;
                e.v2 = v2;
                e.v12 = aggregate;
                // the parts start from equal splits; later transfers appear
                // as their own events
                for (AgentId id : s1) e.allocations_after[id] = v1 / static_cast<double>(s1.size());
                for (AgentId id : s2) e.allocations_after[id] = v2 / static_cast<double>(s2.size());
                rs.events.push_back(std::move(e));
            }
            rs.erase_record(members);
            install_split_part(rs, s1, v1);
            install_split_part(rs, s2, v2);
            return;
        }

        const double e1 = rec.allocation.sum_over(s1) - v1;
        const double e2 = rec.allocation.sum_over(s2) - v2;
        if (e1 > 1e-12 || e2 > 1e-12) {
            const Coalition& dissatisfied = (e1 > e2) ? s1 : s2;
            const double excess_value = std::max(e1, e2);
            rec.allocation = satisfy_demand(rec.allocation, dissatisfied, excess_value);
            auto& e = rs.push_event(BargainEvent::Kind::transfer, dissatisfied,
                                    coalition_difference(members, dissatisfied));
            e.v1 = v1;
            e.v2 = v2;
            e.v12 = rec.value;
            e.transfer_excess = excess_value;
            for (const auto& [id, p] : rec.allocation.entries) e.allocations_after[id] = p;
        }
    }
}

void attempt_merger(RoundState& rs, const Coalition& p1, const Coalition& p2)
{
    const Coalition merged = coalition_union(p1, p2);
    CostGame& game = rs.game_for(merged);
    const double v12 = game.value(merged);
    const double v1 = game.value(p1);
    const double v2 = game.value(p2);

    if (!std::isfinite(v12) || !std::isfinite(v1) || !std::isfinite(v2)) {
        auto& e = rs.push_event(BargainEvent::Kind::reject, p1, p2);
        e.v1 = v1;
        e.v2 = v2;
        e.v12 = v12;
        e.evaluation_failed = true;
        transfer_or_split(rs, p1);
        transfer_or_split(rs, p2);
        return;
    }

    if (merger_test(v1, v2, v12)) {
        rs.erase_record(p1);
        rs.erase_record(p2);
        CoalitionRecord rec;
        rec.members = merged;
        rec.value = v12;
        rec.allocation = AllocationVector::equal_split(merged, v12);
        rs.live.push_back(std::move(rec));

        auto& e = rs.push_event(BargainEvent::Kind::merge, p1, p2);
        e.v1 = v1;
        e.v2 = v2;
        e.v12 = v12;
        for (const auto& [id, p] : rs.record_of(merged).allocation.entries)
            e.allocations_after[id] = p;

        transfer_or_split(rs, merged);
    } else {
        auto& e = rs.push_event(BargainEvent::Kind::reject, p1, p2);
        e.v1 = v1;
        e.v2 = v2;
        e.v12 = v12;
        transfer_or_split(rs, p1);
        transfer_or_split(rs, p2);
    }
}

} // namespace

BargainingOutcome run_bargaining_round(const CoalitionStructure& structure,
                                       const std::vector<CoalitionRecord>& previous_records,
                                       const EvalContext& ctx, const BargainingConfig& config,
                                       Rng& rng, int step)
{
    config.validate();
    if (ctx.models == nullptr) throw std::invalid_argument("evaluation context has no models");

    RoundState rs{&ctx, &config, &rng, step, {}, {}, {}};

    // refresh every coalition's value at the current state and rescale the
    // carried allocation onto it
    for (const auto& members : structure.coalitions) {
        CoalitionRecord rec;
        rec.members = members;
        rec.value = rs.game_for(members).value(members);
        if (!std::isfinite(rec.value)) rec.value = 0.0;
        AllocationVector prev;
        for (const auto& old : previous_records)
            if (old.members == members) prev = old.allocation;
        rec.allocation = rescale_allocation(prev, members, rec.value);
        rs.live.push_back(std::move(rec));
    }

    if (structure.coalitions.size() <= 1 || !config.allow_mergers) {
        for (const auto& members : structure.coalitions) transfer_or_split(rs, members);
    } else {
        std::set<std::pair<Coalition, Coalition>> attempted;
        int attempts = 0;
        for (;;) {
            // eligible pairs of the current structure, deterministic order
            std::vector<std::pair<Coalition, Coalition>> eligible;
            for (std::size_t a = 0; a < rs.live.size(); ++a)
                for (std::size_t b = a + 1; b < rs.live.size(); ++b) {
                    Coalition p1 = rs.live[a].members;
                    Coalition p2 = rs.live[b].members;
                    if (p1.front() > p2.front()) std::swap(p1, p2);
                    if (attempted.count({p1, p2}) > 0) continue;
                    if (!dynamically_coupled(*ctx.models, p1, p2)) continue;
                    eligible.emplace_back(std::move(p1), std::move(p2));
                }
            if (eligible.empty()) break;
            std::sort(eligible.begin(), eligible.end(),
                      [](const auto& x, const auto& y) {
                          return std::make_pair(x.first.front(), x.second.front()) <
                                 std::make_pair(y.first.front(), y.second.front());
                      });

            std::pair<Coalition, Coalition> pick;
            if (config.pair_selection == BargainingConfig::PairSelection::random_k) {
                if (attempts >= config.random_pairs) break;
                pick = eligible[rng.below(eligible.size())];
            } else {
                pick = eligible.front();
            }
            attempted.insert(pick);
            ++attempts;
            attempt_merger(rs, pick.first, pick.second);
        }
    }

    if (config.evaluate_singletons) {
        for (auto& rec : rs.live) {
            if (rec.members.size() < 2) continue;
            CostGame& game = rs.game_for(rec.members);
            for (AgentId id : rec.members) rec.singleton_values[id] = game.value({id});
        }
    }

    BargainingOutcome out;
    std::sort(rs.live.begin(), rs.live.end(), [](const CoalitionRecord& a, const CoalitionRecord& b) {
        return a.members.front() < b.members.front();
    });
    for (auto& rec : rs.live) {
        out.structure.coalitions.push_back(rec.members);
        out.records.push_back(std::move(rec));
    }
    out.events = std::move(rs.events);
    out.structure.validate(ctx.models->agent_ids());
    return out;
}

AllocationVector update_allocations(const AllocationVector& allocation_at_round,
                                    double value_at_round, double realized_stage_cost,
                                    double coop_cost)
{
    const double bracket = realized_stage_cost + coop_cost;
    AllocationVector out;
    if (std::abs(value_at_round) < 1e-15) {
        return AllocationVector::equal_split(allocation_at_round.agents(), bracket);
    }
    for (const auto& [id, p] : allocation_at_round.entries)
        out.entries[id] = p / value_at_round * bracket;
    return out;
}

DeviationRecord prediction_deviation(const Coalition& coalition, int start_step,
                                     const std::vector<double>& realized_stage_costs,
                                     double predicted_cost, bool partial)
{
    DeviationRecord rec;
    rec.coalition = coalition;
    rec.start_step = start_step;
    rec.predicted_cost = predicted_cost;
    rec.realized_cost = 0.0;
    for (double c : realized_stage_costs) rec.realized_cost += c;
    rec.partial = partial;
    return rec;
}

SwitchBoundCheck switch_cost_bound_check(std::optional<double> others_deviation_before,
                                         std::optional<double> others_deviation_after,
                                         std::optional<double> deviation_p1,
                                         std::optional<double> deviation_p2, double chi_merged,
                                         double chi_p1, double chi_p2)
{
    SwitchBoundCheck out;
    if (!others_deviation_before || !others_deviation_after || !deviation_p1 || !deviation_p2)
        return out;
    out.conclusive = true;
    const double rhs = *others_deviation_before -
                       2.0 * (std::abs(*deviation_p1) + std::abs(*deviation_p2)) + chi_merged -
                       chi_p1 - chi_p2;
    out.slack = rhs - *others_deviation_after;
    out.satisfied = out.slack >= 0.0;
    return out;
}

} // namespace coalmpc
