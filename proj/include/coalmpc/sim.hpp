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

#ifndef COALMPC_SIM_HPP
#define COALMPC_SIM_HPP

#include "coalmpc/bargain.hpp"
#include "coalmpc/grid.hpp"
#include "coalmpc/types.hpp"

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace coalmpc {

enum class ControllerMode { centralized, decentralized, coalitional };

ControllerMode mode_from_string(const std::string& s);
std::string to_string(ControllerMode m);

enum class AllocationRule { transfers, shapley };

/// Raised on configuration problems (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised on unrecoverable solver failures in the closed loop (exit code 3).
struct SolverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimulationConfig {
    // model source: the grid benchmark or a generic model file
    bool use_benchmark = true;
    ScenarioSpec scenario = ScenarioSpec::defaults(Scenario::S1);
    std::string model_file;

    // controller
    ControllerMode mode = ControllerMode::coalitional;
    int horizon = 5;
    GridWeightParams grid_weights;
    double generic_q = 1.0; // diagonal state weight for generic models
    double generic_r = 1.0;
    MpcOptions mpc_options;

    // bargaining
    BargainingConfig bargaining;
    CooperationCostFn coop;
    bool fix_structure = false;
    AllocationRule allocation_rule = AllocationRule::transfers;
    bool track_individual_rationality = false;
    std::vector<Coalition> initial_structure; // empty = singletons

    // simulation
    int T_sim = 100;
    std::uint64_t rng_seed = 1;
    std::string output_dir;
    bool write_csv = true;
    bool randomize_loads = false;
    std::array<double, 2> load_scale_range{0.5, 1.0};
    std::array<int, 2> load_time_range{5, 30};
    std::string dump_qp_path;

    void validate() const;
};

SimulationConfig load_config(const std::string& path);
SimulationConfig parse_config(const std::string& json_text);
std::string config_to_json_text(const SimulationConfig& config);
void save_config(const SimulationConfig& config, const std::string& path);

/// Generic model-set (de)serialization; boxes accept numbers or the strings
/// "inf"/"-inf".
ModelSet load_model_set(const std::string& path);
void save_model_set(const ModelSet& models, const std::string& path);

struct SimulationReport {
    double eta = 0.0;
    double psi = 0.0;
    std::map<AgentId, double> accumulated_local_cost;
    std::map<AgentId, double> accumulated_reallocated_cost;
    std::vector<double> coalition_size_series; // per-step mean coalition size
    double mean_coalition_size = 1.0;
    double mean_coalition_lifetime = 0.0;
    int merge_events = 0;
    int split_events = 0;
    int transfer_events = 0;
    int reject_events = 0;
    int assumption4_checks = 0;
    int assumption4_violations = 0;
    int theorem1_checks = 0;
    int theorem1_satisfied = 0;
    int theorem1_inconclusive = 0;
    int rto_fallbacks = 0;
    int ir_checks = 0;      // member-level standalone-value comparisons
    int ir_violations = 0;
    struct IrFailure {
        int step = 0;
        AgentId agent = 0;
        double allocated = 0.0;
        double standalone = 0.0;
        double coalition_value = 0.0;
    };
    std::vector<IrFailure> ir_failures;
    int solver_near_misses = 0; // iteration-capped solves that kept their best iterate
    double max_allocation_conservation_error = 0.0;
    double max_dynamics_residual = 0.0; // scaled by 1 + the state magnitude
    std::vector<std::string> event_log; // JSON lines

    // pre-rendered CSV bodies (empty unless the config asked for them)
    std::string states_csv;
    std::string flows_csv;

    // trajectories kept for index computation and assertions
    std::vector<Vec> omega_steps; // stacked per area, steps 1..T_sim
    std::vector<Vec> theta_steps;
    std::vector<Vec> input_steps;  // applied inputs, steps 0..T_sim-1
    std::vector<Vec> demand_steps; // demand levels, steps 0..T_sim-1
};

SimulationReport run_simulation(const SimulationConfig& config);

/// Writes states.csv, flows.csv (benchmark only), events.jsonl, summary.json
/// into config.output_dir using locale-independent fixed formatting, so
/// identical runs produce byte-identical files.
void write_outputs(const SimulationReport& report, const SimulationConfig& config);

struct RunStat {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    double eta = 0.0;
    double psi = 0.0;
    double mean_coalition_size = 1.0;
    double mean_coalition_lifetime = 0.0;
};

struct McAggregate {
    int n_runs = 0;
    int failures = 0;
    std::array<double, 3> eta_quartiles{};
    std::array<double, 3> psi_quartiles{};
    double mean_eta = 0.0;
    double mean_psi = 0.0;
    double mean_coalition_size = 1.0;
    double mean_coalition_lifetime = 0.0;
    std::vector<RunStat> runs;
};

/// Seeds seed_base .. seed_base+n_runs-1, runs in parallel, aggregates in
/// seed order; failed runs are excluded from the aggregates and counted.
McAggregate monte_carlo(const SimulationConfig& base, int n_runs, std::uint64_t seed_base,
                        int threads = 0);

std::string mc_to_json_text(const McAggregate& agg);

} // namespace coalmpc

#endif // COALMPC_SIM_HPP
