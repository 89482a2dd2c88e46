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

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace coalmpc;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

SimulationConfig base_config(const std::string& config_path)
{
    if (config_path.empty()) return parse_config(R"({"model":{"benchmark":{"scenario":"S1"}}})");
    return load_config(config_path);
}

void apply_overrides(SimulationConfig& config, const std::string& mode,
                     const std::string& scenario, double c_coal, int horizon, int t_sim,
                     std::uint64_t seed, bool seed_set, const std::string& out,
                     const std::string& dump_qp)
{
    if (!mode.empty()) config.mode = mode_from_string(mode);
    if (!scenario.empty()) {
        // re-derive scenario defaults, keeping an explicitly configured profile
        const LoadProfile keep = config.scenario.loads;
        const bool had_custom = config_to_json_text(config).find("load_profile") != std::string::npos;
        config.scenario = ScenarioSpec::defaults(scenario_from_string(scenario));
        if (had_custom && !keep.steps.empty()) config.scenario.loads = keep;
        config.scenario.T_sim = config.T_sim;
        config.scenario.c_coal = config.coop.c_coal;
    }
    if (c_coal >= 0.0) {
        config.coop.c_coal = c_coal;
        config.scenario.c_coal = c_coal;
    }
    if (horizon > 0) config.horizon = horizon;
    if (t_sim > 0) {
        config.T_sim = t_sim;
        config.scenario.T_sim = t_sim;
    }
    if (seed_set) {
        config.rng_seed = seed;
        config.bargaining.rng_seed = seed;
    }
    if (!out.empty()) config.output_dir = out;
    if (!dump_qp.empty()) config.dump_qp_path = dump_qp;
    config.validate();
}

int cmd_run(const SimulationConfig& config)
{
    const auto report = run_simulation(config);
    write_outputs(report, config);
    std::printf("mode=%s seed=%llu T_sim=%d\n", to_string(config.mode).c_str(),
                static_cast<unsigned long long>(config.rng_seed), config.T_sim);
    std::printf("eta=%.9g psi=%.9g mean_coalition_size=%.4f mean_lifetime=%.2f\n", report.eta,
                report.psi, report.mean_coalition_size, report.mean_coalition_lifetime);
    std::printf("events: merge=%d split=%d transfer=%d reject=%d\n", report.merge_events,
                report.split_events, report.transfer_events, report.reject_events);
    if (!config.output_dir.empty())
        std::printf("outputs written to %s\n", config.output_dir.c_str());
    return kExitOk;
}

int cmd_mc(const SimulationConfig& config, int runs, std::uint64_t seed_base, int threads,
           const std::string& out)
{
    const auto agg = monte_carlo(config, runs, seed_base, threads);
    const std::string text = mc_to_json_text(agg);
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream(std::filesystem::path(out) / "mc.json") << text;
        std::printf("aggregate written to %s/mc.json\n", out.c_str());
    }
    std::printf("runs=%d failures=%d mean_eta=%.9g mean_psi=%.9g mean_size=%.4f\n", agg.n_runs,
                agg.failures, agg.mean_eta, agg.mean_psi, agg.mean_coalition_size);
    return kExitOk;
}

int cmd_sweep(const SimulationConfig& base, const std::vector<double>& c_values, int runs,
              std::uint64_t seed_base, int threads, const std::string& out)
{
    std::ostringstream csv;
    csv << "label,c_coal,mean_eta,eta_q25,eta_q50,eta_q75,mean_psi,psi_q25,psi_q50,psi_q75,"
           "mean_size,mean_lifetime,failures,sandwich_low_violations,sandwich_high_violations\n";
    const auto emit = [&](const std::string& label, double c, const McAggregate& agg, int lo,
                          int hi) {
        csv << label << "," << c << "," << agg.mean_eta << "," << agg.eta_quartiles[0] << ","
            << agg.eta_quartiles[1] << "," << agg.eta_quartiles[2] << "," << agg.mean_psi << ","
            << agg.psi_quartiles[0] << "," << agg.psi_quartiles[1] << "," << agg.psi_quartiles[2]
            << "," << agg.mean_coalition_size << "," << agg.mean_coalition_lifetime << ","
            << agg.failures << "," << lo << "," << hi << "\n";
        std::printf("%s c_coal=%g mean_eta=%.9g mean_size=%.4f\n", label.c_str(), c, agg.mean_eta,
                    agg.mean_coalition_size);
    };

    SimulationConfig centr = base;
    centr.mode = ControllerMode::centralized;
    const auto centr_agg = monte_carlo(centr, runs, seed_base, threads);
    SimulationConfig dec = base;
    dec.mode = ControllerMode::decentralized;
    const auto dec_agg = monte_carlo(dec, runs, seed_base, threads);
    emit("centralized", 0.0, centr_agg, 0, 0);
    emit("decentralized", 0.0, dec_agg, 0, 0);

    for (double c : c_values) {
        SimulationConfig cfg = base;
        cfg.mode = ControllerMode::coalitional;
        cfg.coop.c_coal = c;
        cfg.scenario.c_coal = c;
        const auto agg = monte_carlo(cfg, runs, seed_base, threads);
        // per-seed sandwich check eta(centralized) <= eta(coalitional) <=
        // eta(decentralized); counted, not asserted
        int lo = 0, hi = 0;
        for (int i = 0; i < runs; ++i) {
            if (!agg.runs[i].ok || !centr_agg.runs[i].ok || !dec_agg.runs[i].ok) continue;
            if (agg.runs[i].eta < centr_agg.runs[i].eta) ++lo;
            if (agg.runs[i].eta > dec_agg.runs[i].eta) ++hi;
        }
        emit("coalitional", c, agg, lo, hi);
    }

    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream(std::filesystem::path(out) / "sweep.csv") << csv.str();
        std::printf("sweep table written to %s/sweep.csv\n", out.c_str());
    } else {
        std::printf("%s", csv.str().c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"coalitional MPC simulation driver"};
    app.require_subcommand(1);

    std::string config_path, mode, scenario, out, dump_qp;
    double c_coal = -1.0;
    int horizon = 0, t_sim = 0, runs = 50, threads = 0;
    std::uint64_t seed = 1, seed_base = 1;
    bool seed_set = false;
    int randomize_loads = -1; // -1 keeps the config value (batches default on)
    std::vector<double> c_values{1e-5, 1e-4, 5e-4, 1e-3};

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "configuration file (JSON)");
        cmd->add_option("--mode", mode, "centralized | decentralized | coalitional");
        cmd->add_option("--scenario", scenario, "S1 | S2");
        cmd->add_option("--c-coal", c_coal, "cooperation cost coefficient");
        cmd->add_option("--horizon", horizon, "prediction horizon");
        cmd->add_option("--t-sim", t_sim, "simulation length in steps");
        cmd->add_option("--out", out, "output directory");
    };

    auto* run_cmd = app.add_subcommand("run", "single closed-loop simulation");
    add_common(run_cmd);
    run_cmd->add_option("--seed", seed, "rng seed")->each([&](const std::string&) { seed_set = true; });
    run_cmd->add_option("--dump-qp", dump_qp, "dump the first controller QP to this file");

    auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo batch over consecutive seeds");
    add_common(mc_cmd);
    mc_cmd->add_option("--runs", runs, "number of runs");
    mc_cmd->add_option("--seed-base", seed_base, "first seed");
    mc_cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
    mc_cmd->add_option("--randomize-loads", randomize_loads,
                       "override load randomization (batches default to on)");

    auto* sweep_cmd = app.add_subcommand("sweep", "cooperation-cost sweep plus mode baselines");
    add_common(sweep_cmd);
    sweep_cmd->add_option("--runs", runs, "runs per point");
    sweep_cmd->add_option("--seed-base", seed_base, "first seed");
    sweep_cmd->add_option("--threads", threads, "worker threads (0 = all cores)");
    sweep_cmd->add_option("--c-coal-list", c_values, "cooperation cost values");
    sweep_cmd->add_option("--randomize-loads", randomize_loads,
                          "override load randomization (batches default to on)");

    CLI11_PARSE(app, argc, argv);

    try {
        SimulationConfig config = base_config(config_path);
        apply_overrides(config, mode, scenario, c_coal, horizon, t_sim, seed, seed_set, out,
                        dump_qp);
        if (run_cmd->parsed()) return cmd_run(config);
        if (mc_cmd->parsed() || sweep_cmd->parsed()) {
            config.randomize_loads = randomize_loads >= 0 ? randomize_loads != 0 : true;
            if (mc_cmd->parsed()) return cmd_mc(config, runs, seed_base, threads, out);
            return cmd_sweep(config, c_values, runs, seed_base, threads, out);
        }
    } catch (const coalmpc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const coalmpc::SolverFailure& e) {
        std::cerr << "solver failure: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
