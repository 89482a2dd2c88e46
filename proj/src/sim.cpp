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

#include "coalmpc/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace coalmpc {

namespace {

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

LoadProfile randomize_loads(const LoadProfile& base, const SimulationConfig& config, Rng& rng)
{
    // keep each configured step's area and sign, rescale the magnitude and
    // redraw the time inside the configured window
    LoadProfile out;
    for (const auto& s : base.steps) {
        LoadStep r = s;
        r.delta = s.delta * rng.uniform(config.load_scale_range[0], config.load_scale_range[1]);
        r.time = static_cast<int>(
            rng.uniform_int(config.load_time_range[0], config.load_time_range[1]));
        out.steps.push_back(r);
    }
    return out;
}

struct Window {
    Coalition members;
    int start = 0;
    double predicted = 0.0;
    std::vector<double> realized;
    bool partial = false;
};

struct MergeMonitor {
    int step = 0;
    Coalition p1, p2, merged;
    std::optional<double> dev1, dev2, before_sum;
    std::vector<Coalition> others;                  // coalitions whose post-merge window we await
    std::map<Coalition, double> after;              // collected deviations
    bool others_broken = false;                     // an awaited coalition changed
    std::optional<double> merged_after;             // first complete merged window
    double chi12 = 0.0, chi1 = 0.0, chi2 = 0.0;
    bool assumption4_done = false;
    bool theorem1_done = false;
};

double quantile(std::vector<double> v, double p)
{
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double idx = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(idx));
    const double w = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - w) + v[hi] * w;
}

} // namespace

SimulationReport run_simulation(const SimulationConfig& config_in)
{
    config_in.validate();
    SimulationConfig config = config_in;

    Rng master(config.rng_seed);
    Rng rng_loads = master.fork(1);
    Rng rng_bargain = master.fork(2);

    BenchmarkSystem sys;
    ModelSet generic_models;
    const ModelSet* models = nullptr;
    if (config.use_benchmark) {
        if (config.randomize_loads)
            config.scenario.loads = randomize_loads(config.scenario.loads, config, rng_loads);
        sys = build_benchmark(config.scenario);
        models = &sys.models;
    } else {
        generic_models = load_model_set(config.model_file);
        models = &generic_models;
    }

    const Coalition all = models->agent_ids();
    const int Np = config.horizon;

    SimulationReport report;
    if (config.write_csv) {
        report.states_csv = config.use_benchmark ? "step,area,theta,omega,p_m,p_v,u,d,coalition\n"
                                                 : "step,agent,kind,index,value\n";
        if (config.use_benchmark) report.flows_csv = "step,i,j,flow\n";
    }

    // providers -------------------------------------------------------------
    const auto weights_for = [&](const Coalition& members) -> MpcWeights {
        if (config.use_benchmark) {
            GridWeightParams wp = config.grid_weights;
            // the noncooperative baseline drops the angle enhancements
            if (config.mode == ControllerMode::decentralized) {
                wp.q_cross = 0.0;
                wp.q_cross_overrides.clear();
            }
            return coupling_weights(sys, wp, members);
        }
        MpcWeights w;
        for (AgentId id : members) {
            const auto& sub = models->subsystem(id);
            w.Q_blocks[{id, id}] = config.generic_q * Mat::Identity(sub.state_dim(), sub.state_dim());
            w.R_blocks[id] = config.generic_r * Mat::Identity(sub.input_dim(), sub.input_dim());
        }
        w.Qf_scale = config.grid_weights.qf_scale;
        return w;
    };

    // the common currency all values, transfers and reported costs are
    // measured in: the plain selfish weighting, independent of the structure
    const auto value_weights_for = [&](const Coalition& members) -> MpcWeights {
        if (config.use_benchmark) {
            GridWeightParams wp = config.grid_weights;
            wp.q_cross = 0.0;
            wp.q_cross_overrides.clear();
            return coupling_weights(sys, wp, members);
        }
        return weights_for(members);
    };

    std::map<Coalition, CoalitionModel> cm_cache;
    const auto coalition_model = [&](const Coalition& members) -> const CoalitionModel& {
        auto it = cm_cache.find(members);
        if (it == cm_cache.end())
            it = cm_cache.emplace(members, aggregate_coalition(*models, members)).first;
        return it->second;
    };

    std::map<Coalition, AssembledWeights> w_cache;
    const auto weights_assembled = [&](const Coalition& members) -> const AssembledWeights& {
        auto it = w_cache.find(members);
        if (it == w_cache.end())
            it = w_cache.emplace(members, assemble_weights(weights_for(members),
                                                           coalition_model(members)))
                     .first;
        return it->second;
    };

    std::map<Coalition, AssembledWeights> vw_cache;
    const auto value_weights_assembled = [&](const Coalition& members) -> const AssembledWeights& {
        auto it = vw_cache.find(members);
        if (it == vw_cache.end())
            it = vw_cache.emplace(members, assemble_weights(value_weights_for(members),
                                                            coalition_model(members)))
                     .first;
        return it->second;
    };

    std::map<Coalition, ReferenceTrajectory> refs_cache; // cleared per step
    int current_step = 0;
    const auto forecast_for = [&](const Coalition& members, int k) {
        std::vector<Vec> f;
        for (int t = 0; t < Np; ++t)
            f.push_back(config.scenario.loads.demand_vector(members, k + t));
        return f;
    };
    const auto refs_for = [&](const Coalition& members) -> ReferenceTrajectory {
        auto it = refs_cache.find(members);
        if (it != refs_cache.end()) return it->second;
        ReferenceTrajectory r;
        if (!config.use_benchmark) {
            const auto& cm = coalition_model(members);
            r = ReferenceTrajectory::zero(Np, cm.state_dim(), cm.input_dim());
        } else {
            const auto f = forecast_for(members, current_step);
            if (config.scenario.scenario == Scenario::S2) {
                auto res = rto_setpoints(sys, members, f, Np);
                if (!res.feasible) ++report.rto_fallbacks;
                r = std::move(res.refs);
            } else {
                r = nominal_reference(sys, members, f, Np);
            }
        }
        refs_cache[members] = r;
        return r;
    };
    const auto load_affine_for = [&](const Coalition& members) -> std::vector<Vec> {
        if (!config.use_benchmark) return {};
        return sys.load_affine(members, forecast_for(members, current_step));
    };

    std::map<Coalition, Trajectory> warm_starts;
    const auto warm_start_for = [&](const Coalition& members) -> std::optional<Trajectory> {
        const auto it = warm_starts.find(members);
        if (it == warm_starts.end()) return std::nullopt;
        return it->second;
    };

    // structure and bargaining state -----------------------------------------
    CoalitionStructure structure;
    if (config.mode == ControllerMode::centralized) {
        structure.coalitions = {all};
    } else if (config.mode == ControllerMode::decentralized) {
        for (AgentId id : all) structure.coalitions.push_back({id});
    } else if (!config.initial_structure.empty()) {
        structure.coalitions = config.initial_structure;
        structure.validate(all);
    } else {
        for (AgentId id : all) structure.coalitions.push_back({id});
    }

    std::vector<CoalitionRecord> records;
    std::map<Coalition, int> births;
    for (const auto& c : structure.coalitions) births[c] = 0;
    std::vector<double> lifetimes;

    std::vector<Window> open_windows;
    std::map<Coalition, DeviationRecord> last_complete;
    std::vector<MergeMonitor> monitors;

    Vec x = Vec::Zero(models->total_state_dim());
    double conservation_error = 0.0;
    bool dumped_qp = false;

    const auto close_windows_of = [&](const Coalition& members) {
        for (auto& w : open_windows)
            if (w.members == members) w.partial = true;
    };

    for (int k = 0; k < config.T_sim; ++k) {
        current_step = k;
        refs_cache.clear();

        // (a) bargaining round on the dwell-time grid
        if (config.mode == ControllerMode::coalitional && k % config.bargaining.dwell_time == 0) {
            EvalContext ctx;
            ctx.models = models;
            ctx.global_state = x;
            ctx.Np = Np;
            ctx.coop = config.coop;
            ctx.max_iter = config.bargaining.max_iter;
            ctx.mpc_options = config.mpc_options;
            ctx.weights_for = weights_for;
            ctx.value_weights_for = value_weights_for;
            ctx.refs_for = refs_for;
            ctx.load_affine_for = load_affine_for;
            ctx.warm_start_for = warm_start_for;

            if (config.allocation_rule == AllocationRule::shapley) {
                records.clear();
                for (const auto& members : structure.coalitions) {
                    CostGame game(members, std::make_shared<MpcPairEvaluator>(&ctx));
                    CoalitionRecord rec;
                    rec.members = members;
                    rec.value = game.value(members);
                    if (!std::isfinite(rec.value)) rec.value = 0.0;
                    rec.allocation = members.size() <= 12
                                         ? shapley_value(game)
                                         : AllocationVector::equal_split(members, rec.value);
                    if (config.track_individual_rationality && members.size() >= 2)
                        for (AgentId id : members) rec.singleton_values[id] = game.value({id});
                    records.push_back(std::move(rec));
                }
            } else {
                BargainingConfig bcfg = config.bargaining;
                // pinned structures only refresh values and run transfers
                bcfg.allow_splits = !config.fix_structure;
                bcfg.allow_mergers = !config.fix_structure;
                bcfg.evaluate_singletons = config.track_individual_rationality;
                const auto outcome =
                    run_bargaining_round(structure, records, ctx, bcfg, rng_bargain, k);

                const CoalitionStructure before = structure;
                structure = outcome.structure;
                records = outcome.records;

                for (const auto& e : outcome.events) {
                    report.event_log.push_back(to_json_line(e));
                    switch (e.kind) {
                    case BargainEvent::Kind::merge: {
                        ++report.merge_events;
                        MergeMonitor m;
                        m.step = k;
                        m.p1 = e.first;
                        m.p2 = e.second;
                        m.merged = coalition_union(e.first, e.second);
                        m.chi1 = cooperation_cost(config.coop, static_cast<int>(e.first.size()));
                        m.chi2 = cooperation_cost(config.coop, static_cast<int>(e.second.size()));
                        m.chi12 = cooperation_cost(config.coop, static_cast<int>(m.merged.size()));
                        const auto d1 = last_complete.find(e.first);
                        const auto d2 = last_complete.find(e.second);
                        if (d1 != last_complete.end() && !d1->second.partial)
                            m.dev1 = d1->second.deviation();
                        if (d2 != last_complete.end() && !d2->second.partial)
                            m.dev2 = d2->second.deviation();
                        double before_sum = 0.0;
                        bool before_ok = true;
                        for (const auto& c : before.coalitions) {
                            if (c == e.first || c == e.second) continue;
                            m.others.push_back(c);
                            const auto it = last_complete.find(c);
                            if (it == last_complete.end() || it->second.partial) before_ok = false;
                            else before_sum += it->second.deviation();
                        }
                        if (before_ok) m.before_sum = before_sum;
                        monitors.push_back(std::move(m));
                        break;
                    }
                    case BargainEvent::Kind::split: ++report.split_events; break;
                    case BargainEvent::Kind::transfer: ++report.transfer_events; break;
                    case BargainEvent::Kind::reject: ++report.reject_events; break;
                    }
                }

                // lifetimes and window bookkeeping for vanished coalitions
                for (const auto& c : before.coalitions) {
                    bool alive = false;
                    for (const auto& nc : structure.coalitions) alive = alive || nc == c;
                    if (!alive) {
                        close_windows_of(c);
                        lifetimes.push_back(static_cast<double>(k - births[c]));
                        births.erase(c);
                        last_complete.erase(c);
                    }
                }
                for (const auto& nc : structure.coalitions)
                    if (births.count(nc) == 0) births[nc] = k;
                // an awaited "other" coalition that changed breaks the monitor
                for (auto& m : monitors) {
                    for (const auto& c : m.others) {
                        bool alive = false;
                        for (const auto& nc : structure.coalitions) alive = alive || nc == c;
                        if (!alive) m.others_broken = true;
                    }
                }
                // drop receding-horizon tails of coalitions that no longer
                // exist; a later reincarnation starts from scratch
                for (auto it = warm_starts.begin(); it != warm_starts.end();) {
                    bool alive = false;
                    for (const auto& nc : structure.coalitions) alive = alive || nc == it->first;
                    it = alive ? std::next(it) : warm_starts.erase(it);
                }
            }
        }

        if (config.track_individual_rationality) {
            for (const auto& rec : records) {
                for (const auto& [id, vj] : rec.singleton_values) {
                    if (!std::isfinite(vj)) continue;
                    ++report.ir_checks;
                    const double tol = 1e-9 + 1e-6 * std::abs(rec.value);
                    if (rec.allocation.at(id) > vj + tol) {
                        ++report.ir_violations;
                        report.ir_failures.push_back({k, id, rec.allocation.at(id), vj, rec.value});
                    }
                }
            }
        }

        // (b) per-coalition control
        Vec u = Vec::Zero(models->total_input_dim());
        const Vec demand = config.use_benchmark
                               ? config.scenario.loads.demand_vector(all, k)
                               : Vec::Zero(static_cast<Eigen::Index>(all.size()));
        struct StepEval {
            Coalition members;
            double stage = 0.0;
            double chi = 0.0;
        };
        std::vector<StepEval> step_evals;

        for (const auto& members : structure.coalitions) {
            const auto& cm = coalition_model(members);
            const auto& w = weights_assembled(members);
            const auto refs = refs_for(members);
            const auto affine = load_affine_for(members);
            Vec xc(cm.state_dim());
            for (std::size_t i = 0; i < members.size(); ++i)
                xc.segment(cm.member_state_offsets[i], models->subsystem(members[i]).state_dim()) =
                    x.segment(models->state_offset(members[i]),
                              models->subsystem(members[i]).state_dim());

            if (!dumped_qp && !config.dump_qp_path.empty()) {
                write_qp_file(build_tracking_qp(cm, xc, refs, w, Np, affine, config.mpc_options),
                              config.dump_qp_path);
                dumped_qp = true;
            }

            Trajectory init;
            const Trajectory* init_ptr = nullptr;
            if (auto ws = warm_start_for(members)) {
                init = *ws;
                init_ptr = &init;
            }
            const auto sol = mpc_control(cm, xc, refs, w, Np, affine, config.mpc_options, init_ptr);
            if (sol.status == MpcStatus::infeasible)
                throw SolverFailure("controller problem infeasible for coalition " +
                                    coalition_to_string(members) + " at step " + std::to_string(k));
            if (sol.status == MpcStatus::max_iterations) ++report.solver_near_misses;
            report.max_dynamics_residual =
                std::max(report.max_dynamics_residual,
                         sol.dynamics_residual / (1.0 + xc.lpNorm<Eigen::Infinity>()));

            Vec uc = sol.inputs[0];
            for (std::size_t i = 0; i < members.size(); ++i)
                u.segment(models->input_offset(members[i]),
                          models->subsystem(members[i]).input_dim()) =
                    uc.segment(cm.member_input_offsets[i],
                               models->subsystem(members[i]).input_dim());

            warm_starts[members] = shift_trajectory(sol.trajectory(xc));

            // stage cost realized at k in the common value currency,
            // attributed per member
            const auto& vw = value_weights_assembled(members);
            const double chi = cooperation_cost(config.coop, static_cast<int>(members.size()));
            const double stage = stage_cost(vw, xc, uc, refs.states[0], refs.inputs[0]);
            step_evals.push_back({members, stage, chi});
            for (std::size_t i = 0; i < members.size(); ++i) {
                const double own = attributed_stage_cost(cm, vw, {static_cast<int>(i)}, xc, uc,
                                                         refs.states[0], refs.inputs[0]) +
                                   chi / static_cast<double>(members.size());
                report.accumulated_local_cost[members[i]] += own;
            }

            // open a prediction window priced in the value currency; append
            // the realized cost to every open window of this coalition
            open_windows.push_back(
                {members, k, trajectory_stage_cost(vw, xc, refs, sol), {}, false});
            for (auto& win : open_windows)
                if (win.members == members && !win.partial)
                    win.realized.push_back(stage);
        }

        // (d) allocation stream
        if (config.mode == ControllerMode::coalitional && !records.empty()) {
            for (const auto& se : step_evals) {
                const CoalitionRecord* rec = nullptr;
                for (const auto& r : records)
                    if (r.members == se.members) rec = &r;
                if (rec == nullptr) continue;
                const auto p_step =
                    update_allocations(rec->allocation, rec->value, se.stage, se.chi);
                for (const auto& [id, p] : p_step.entries)
                    report.accumulated_reallocated_cost[id] += p;
                conservation_error =
                    std::max(conservation_error, std::abs(p_step.sum() - (se.stage + se.chi)));
            }
        }

        // close completed windows
        for (auto it = open_windows.begin(); it != open_windows.end();) {
            if (it->partial || static_cast<int>(it->realized.size()) >= Np) {
                const auto rec = prediction_deviation(it->members, it->start, it->realized,
                                                      it->predicted, it->partial);
                if (!rec.partial) {
                    last_complete[it->members] = rec;
                    for (auto& m : monitors) {
                        if (rec.start_step < m.step) continue;
                        if (!m.merged_after && it->members == m.merged)
                            m.merged_after = rec.deviation();
                        for (const auto& c : m.others)
                            if (it->members == c && m.after.count(c) == 0)
                                m.after[c] = rec.deviation();
                    }
                }
                it = open_windows.erase(it);
            } else {
                ++it;
            }
        }

        // evaluate matured monitors
        for (auto& m : monitors) {
            if (!m.assumption4_done && m.merged_after) {
                m.assumption4_done = true;
                if (m.dev1 && m.dev2) {
                    ++report.assumption4_checks;
                    if (std::abs(*m.merged_after) > std::abs(*m.dev1) + std::abs(*m.dev2) + 1e-12)
                        ++report.assumption4_violations;
                }
            }
            if (!m.theorem1_done) {
                if (m.others.empty() || m.after.size() == m.others.size() || m.others_broken) {
                    m.theorem1_done = true;
                    std::optional<double> after_sum;
                    if (!m.others_broken && m.after.size() == m.others.size()) {
                        double s = 0.0;
                        for (const auto& [c, d] : m.after) s += d;
                        after_sum = s;
                    }
                    const auto check = switch_cost_bound_check(m.before_sum, after_sum, m.dev1,
                                                               m.dev2, m.chi12, m.chi1, m.chi2);
                    ++report.theorem1_checks;
                    if (!check.conclusive) ++report.theorem1_inconclusive;
                    else if (check.satisfied) ++report.theorem1_satisfied;
                }
            }
        }

        // CSV rows for the pre-step state
        if (config.write_csv) {
            if (config.use_benchmark) {
                for (std::size_t i = 0; i < all.size(); ++i) {
                    const int off = models->state_offset(all[i]);
                    std::size_t coal_idx = structure.coalition_of(all[i]);
                    report.states_csv += std::to_string(k) + "," + std::to_string(all[i]) + "," +
                                  fmt(x[off]) + "," + fmt(x[off + 1]) + "," + fmt(x[off + 2]) +
                                  "," + fmt(x[off + 3]) + "," +
                                  fmt(u[models->input_offset(all[i])]) + "," +
                                  fmt(demand[static_cast<Eigen::Index>(i)]) + "," +
                                  std::to_string(coal_idx) + "\n";
                }
            } else {
                for (AgentId id : all) {
                    const auto& sub = models->subsystem(id);
                    for (int c = 0; c < sub.state_dim(); ++c)
                        report.states_csv += std::to_string(k) + "," + std::to_string(id) + ",x," +
                                      std::to_string(c) + "," +
                                      fmt(x[models->state_offset(id) + c]) + "\n";
                    for (int c = 0; c < sub.input_dim(); ++c)
                        report.states_csv += std::to_string(k) + "," + std::to_string(id) + ",u," +
                                      std::to_string(c) + "," +
                                      fmt(u[models->input_offset(id) + c]) + "\n";
                }
            }
        }

        // coalition-size bookkeeping on the structure used at this step
        report.coalition_size_series.push_back(static_cast<double>(all.size()) /
                                               static_cast<double>(structure.coalitions.size()));

        // (c) plant step
        report.input_steps.push_back(u);
        report.demand_steps.push_back(demand);
        x = config.use_benchmark ? sys.step(x, u, demand) : step_global(*models, x, u);
        if (config.use_benchmark) {
            report.omega_steps.push_back(sys.extract_omega(x));
            report.theta_steps.push_back(sys.extract_theta(x));
            if (config.write_csv) {
                const Vec& theta = report.theta_steps.back();
                const Coalition& ids = all;
                for (const auto& [pair, p0] : sys.sync) {
                    const auto ii = std::lower_bound(ids.begin(), ids.end(), pair.first) - ids.begin();
                    const auto jj = std::lower_bound(ids.begin(), ids.end(), pair.second) - ids.begin();
                    report.flows_csv += std::to_string(k + 1) + "," + std::to_string(pair.first) + "," +
                                 std::to_string(pair.second) + "," +
                                 fmt(tie_line_flow(theta[ii], theta[jj], p0)) + "\n";
                }
            }
        }
    }

    // wrap-up
    for (auto& w : open_windows) {
        w.partial = true; // the run ended inside the window
    }
    for (const auto& [c, birth] : births)
        lifetimes.push_back(static_cast<double>(config.T_sim - birth));
    if (!lifetimes.empty()) {
        double s = 0.0;
        for (double l : lifetimes) s += l;
        report.mean_coalition_lifetime = s / static_cast<double>(lifetimes.size());
    }
    if (!report.coalition_size_series.empty()) {
        double s = 0.0;
        for (double v : report.coalition_size_series) s += v;
        report.mean_coalition_size = s / static_cast<double>(report.coalition_size_series.size());
    }
    if (config.mode != ControllerMode::coalitional)
        report.accumulated_reallocated_cost = report.accumulated_local_cost;
    report.max_allocation_conservation_error = conservation_error;
    report.eta = eta_index(report.omega_steps);
    report.psi = config.use_benchmark ? psi_index(report.theta_steps, sys, config.scenario.Ts) : 0.0;

    return report;
}

namespace {

nlohmann::json report_summary_json(const SimulationReport& report, const SimulationConfig& config)
{
    nlohmann::json j;
    j["eta"] = report.eta;
    j["psi"] = report.psi;
    j["mode"] = to_string(config.mode);
    j["seed"] = config.rng_seed;
    j["T_sim"] = config.T_sim;
    j["mean_coalition_size"] = report.mean_coalition_size;
    j["mean_coalition_lifetime"] = report.mean_coalition_lifetime;
    j["events"] = {{"merge", report.merge_events},
                   {"split", report.split_events},
                   {"transfer", report.transfer_events},
                   {"reject", report.reject_events}};
    j["assumption4"] = {{"checks", report.assumption4_checks},
                        {"violations", report.assumption4_violations}};
    j["theorem1"] = {{"checks", report.theorem1_checks},
                     {"satisfied", report.theorem1_satisfied},
                     {"inconclusive", report.theorem1_inconclusive}};
    j["rto_fallbacks"] = report.rto_fallbacks;
    j["solver_near_misses"] = report.solver_near_misses;
    if (report.ir_checks > 0)
        j["individual_rationality"] = {{"checks", report.ir_checks},
                                       {"violations", report.ir_violations}};
    j["coalition_size_series"] = report.coalition_size_series;
    j["max_allocation_conservation_error"] = report.max_allocation_conservation_error;
    j["max_dynamics_residual"] = report.max_dynamics_residual;
    nlohmann::json local, realloc;
    for (const auto& [id, v] : report.accumulated_local_cost) local[std::to_string(id)] = v;
    for (const auto& [id, v] : report.accumulated_reallocated_cost)
        realloc[std::to_string(id)] = v;
    j["accumulated_local_cost"] = std::move(local);
    j["accumulated_reallocated_cost"] = std::move(realloc);
    return j;
}

} // namespace

void write_outputs(const SimulationReport& report, const SimulationConfig& config)
{
    if (config.output_dir.empty()) return;
    std::filesystem::create_directories(config.output_dir);
    const auto dir = std::filesystem::path(config.output_dir);
    if (!report.states_csv.empty()) std::ofstream(dir / "states.csv") << report.states_csv;
    if (!report.flows_csv.empty()) std::ofstream(dir / "flows.csv") << report.flows_csv;
    std::ofstream events(dir / "events.jsonl");
    for (const auto& line : report.event_log) events << line << "\n";
    std::ofstream(dir / "summary.json") << report_summary_json(report, config).dump(2) << "\n";
}

McAggregate monte_carlo(const SimulationConfig& base, int n_runs, std::uint64_t seed_base,
                        int threads)
{
    if (n_runs < 1) throw ConfigError("monte carlo needs at least one run");
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n_runs));

    McAggregate agg;
    agg.n_runs = n_runs;
    agg.runs.resize(static_cast<std::size_t>(n_runs));

    std::atomic<int> next{0};
    const auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n_runs) return;
            SimulationConfig cfg = base;
            cfg.rng_seed = seed_base + static_cast<std::uint64_t>(i);
            cfg.write_csv = false;
            cfg.output_dir.clear();
            RunStat stat;
            stat.seed = cfg.rng_seed;
            try {
                const auto rep = run_simulation(cfg);
                stat.ok = true;
                stat.eta = rep.eta;
                stat.psi = rep.psi;
                stat.mean_coalition_size = rep.mean_coalition_size;
                stat.mean_coalition_lifetime = rep.mean_coalition_lifetime;
            } catch (const std::exception& e) {
                stat.ok = false;
                stat.error = e.what();
            }
            agg.runs[static_cast<std::size_t>(i)] = std::move(stat);
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<double> etas, psis;
    double size_sum = 0.0, life_sum = 0.0;
    int ok = 0;
    for (const auto& r : agg.runs) {
        if (!r.ok) {
            ++agg.failures;
            continue;
        }
        ++ok;
        etas.push_back(r.eta);
        psis.push_back(r.psi);
        size_sum += r.mean_coalition_size;
        life_sum += r.mean_coalition_lifetime;
    }
    if (ok > 0) {
        agg.eta_quartiles = {quantile(etas, 0.25), quantile(etas, 0.5), quantile(etas, 0.75)};
        agg.psi_quartiles = {quantile(psis, 0.25), quantile(psis, 0.5), quantile(psis, 0.75)};
        double es = 0.0, ps = 0.0;
        for (double v : etas) es += v;
        for (double v : psis) ps += v;
        agg.mean_eta = es / ok;
        agg.mean_psi = ps / ok;
        agg.mean_coalition_size = size_sum / ok;
        agg.mean_coalition_lifetime = life_sum / ok;
    }
    return agg;
}

std::string mc_to_json_text(const McAggregate& agg)
{
    nlohmann::json j;
    j["n_runs"] = agg.n_runs;
    j["failures"] = agg.failures;
    j["eta"] = {{"q25", agg.eta_quartiles[0]},
                {"median", agg.eta_quartiles[1]},
                {"q75", agg.eta_quartiles[2]},
                {"mean", agg.mean_eta}};
    j["psi"] = {{"q25", agg.psi_quartiles[0]},
                {"median", agg.psi_quartiles[1]},
                {"q75", agg.psi_quartiles[2]},
                {"mean", agg.mean_psi}};
    j["mean_coalition_size"] = agg.mean_coalition_size;
    j["mean_coalition_lifetime"] = agg.mean_coalition_lifetime;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : agg.runs) {
        nlohmann::json jr;
        jr["seed"] = r.seed;
        jr["ok"] = r.ok;
        if (!r.ok) jr["error"] = r.error;
        else {
            jr["eta"] = r.eta;
            jr["psi"] = r.psi;
            jr["mean_coalition_size"] = r.mean_coalition_size;
            jr["mean_coalition_lifetime"] = r.mean_coalition_lifetime;
        }
        runs.push_back(std::move(jr));
    }
    j["runs"] = std::move(runs);
    return j.dump(2) + "\n";
}

} // namespace coalmpc
