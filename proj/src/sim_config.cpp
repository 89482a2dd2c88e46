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

#include <fstream>
#include <set>

namespace coalmpc {

using nlohmann::json;

ControllerMode mode_from_string(const std::string& s)
{
    if (s == "centralized") return ControllerMode::centralized;
    if (s == "decentralized") return ControllerMode::decentralized;
    if (s == "coalitional") return ControllerMode::coalitional;
    throw ConfigError("unknown controller mode '" + s + "'");
}

std::string to_string(ControllerMode m)
{
    switch (m) {
    case ControllerMode::centralized: return "centralized";
    case ControllerMode::decentralized: return "decentralized";
    case ControllerMode::coalitional: return "coalitional";
    }
    return "unknown";
}

namespace {

void require_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where)
{
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (allowed.count(key) == 0)
            throw ConfigError(where + ": unknown field '" + key + "'");
    }
}

template <typename T>
T get_or(const json& obj, const std::string& key, const T& fallback)
{
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("field '" + key + "': " + e.what());
    }
}

Mat mat_from_json(const json& j, const std::string& where)
{
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty 2-d array");
    const std::size_t rows = j.size();
    const std::size_t cols = j.at(0).size();
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (j.at(r).size() != cols) throw ConfigError(where + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j.at(r).at(c).get<double>();
    }
    return m;
}

json mat_to_json(const Mat& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

double bound_from_json(const json& j, const std::string& where)
{
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return infinity();
        if (s == "-inf") return -infinity();
    }
    throw ConfigError(where + ": expected a number or \"inf\"/\"-inf\"");
}

json bound_to_json(double v)
{
    if (v == infinity()) return "inf";
    if (v == -infinity()) return "-inf";
    return v;
}

Vec bounds_from_json(const json& j, const std::string& where)
{
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = bound_from_json(j.at(i), where);
    return v;
}

ScenarioSpec scenario_from_json(const json& jb, const SimulationConfig& config)
{
    require_keys(jb, {"scenario", "u_max", "topology", "sync_coeff", "Ts", "load_profile", "areas",
                      "T_sim"},
                 "model.benchmark");
    Scenario sc = Scenario::S1;
    try {
        sc = scenario_from_string(get_or<std::string>(jb, "scenario", "S1"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("model.benchmark.scenario: ") + e.what());
    }
    ScenarioSpec spec = ScenarioSpec::defaults(sc);
    spec.c_coal = config.coop.c_coal;
    if (jb.contains("u_max")) spec.u_max = jb.at("u_max").get<std::vector<double>>();
    if (jb.contains("topology")) {
        spec.topology.clear();
        for (const auto& e : jb.at("topology")) {
            if (!e.is_array() || e.size() != 2)
                throw ConfigError("model.benchmark.topology: expected [i, j] pairs");
            spec.topology.emplace_back(e.at(0).get<AgentId>(), e.at(1).get<AgentId>());
        }
    }
    spec.sync_coeff = get_or<double>(jb, "sync_coeff", spec.sync_coeff);
    spec.Ts = get_or<double>(jb, "Ts", spec.Ts);
    if (jb.contains("load_profile")) {
        spec.loads.steps.clear();
        for (const auto& s : jb.at("load_profile")) {
            require_keys(s, {"area", "time", "delta"}, "model.benchmark.load_profile[]");
            spec.loads.steps.push_back({s.at("area").get<AgentId>(), s.at("time").get<int>(),
                                        s.at("delta").get<double>()});
        }
    }
    if (jb.contains("areas")) {
        for (const auto& [key, ja] : jb.at("areas").items()) {
            require_keys(ja, {"H", "r_v", "rho_f", "tau_t", "tau_g"},
                         "model.benchmark.areas." + key);
            AreaParams p;
            p.H = get_or<double>(ja, "H", p.H);
            p.r_v = get_or<double>(ja, "r_v", p.r_v);
            p.rho_f = get_or<double>(ja, "rho_f", p.rho_f);
            p.tau_t = get_or<double>(ja, "tau_t", p.tau_t);
            p.tau_g = get_or<double>(ja, "tau_g", p.tau_g);
            spec.area_overrides[std::stoi(key)] = p;
        }
    }
    return spec;
}

json scenario_to_json(const ScenarioSpec& spec)
{
    json jb;
    jb["scenario"] = to_string(spec.scenario);
    jb["u_max"] = spec.u_max;
    json topo = json::array();
    for (const auto& [a, b] : spec.topology) topo.push_back(json::array({a, b}));
    jb["topology"] = std::move(topo);
    jb["sync_coeff"] = spec.sync_coeff;
    jb["Ts"] = spec.Ts;
    json loads = json::array();
    for (const auto& s : spec.loads.steps)
        loads.push_back({{"area", s.area}, {"time", s.time}, {"delta", s.delta}});
    jb["load_profile"] = std::move(loads);
    if (!spec.area_overrides.empty()) {
        json areas;
        for (const auto& [id, p] : spec.area_overrides)
            areas[std::to_string(id)] = {{"H", p.H},       {"r_v", p.r_v},   {"rho_f", p.rho_f},
                                         {"tau_t", p.tau_t}, {"tau_g", p.tau_g}};
        jb["areas"] = std::move(areas);
    }
    return jb;
}

} // namespace

void SimulationConfig::validate() const
{
    if (T_sim < 1) throw ConfigError("sim.T_sim must be at least 1");
    if (horizon < 1) throw ConfigError("controller.horizon must be at least 1");
    bargaining.validate();
    if (allocation_rule == AllocationRule::shapley && !fix_structure)
        throw ConfigError("bargaining.allocation_rule 'shapley' requires fix_structure");
    if (!use_benchmark && model_file.empty())
        throw ConfigError("model: either 'benchmark' or 'file' must be given");
    if (load_scale_range[0] > load_scale_range[1])
        throw ConfigError("sim.load_scale_range must be ordered");
    if (load_time_range[0] > load_time_range[1])
        throw ConfigError("sim.load_time_range must be ordered");
}

SimulationConfig parse_config(const std::string& json_text)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    require_keys(root, {"model", "controller", "bargaining", "sim"}, "config");

    SimulationConfig config;

    // bargaining first: the cooperation cost feeds the scenario spec
    if (root.contains("bargaining")) {
        const json& jb = root.at("bargaining");
        require_keys(jb,
                     {"c_coal", "coop_exponent", "coop_threshold", "dwell_time", "max_iter",
                      "max_loops", "pair_selection", "random_pairs", "rng_seed", "fix_structure",
                      "allocation_rule", "initial_structure", "track_individual_rationality"},
                     "bargaining");
        config.coop.c_coal = get_or<double>(jb, "c_coal", config.coop.c_coal);
        config.coop.exponent = get_or<double>(jb, "coop_exponent", config.coop.exponent);
        config.coop.threshold = get_or<int>(jb, "coop_threshold", config.coop.threshold);
        config.bargaining.dwell_time = get_or<int>(jb, "dwell_time", config.bargaining.dwell_time);
        config.bargaining.max_iter = get_or<int>(jb, "max_iter", config.bargaining.max_iter);
        config.bargaining.max_loops = get_or<int>(jb, "max_loops", config.bargaining.max_loops);
        const std::string ps = get_or<std::string>(jb, "pair_selection", "all_coupled");
        if (ps == "all_coupled")
            config.bargaining.pair_selection = BargainingConfig::PairSelection::all_coupled;
        else if (ps == "random_k")
            config.bargaining.pair_selection = BargainingConfig::PairSelection::random_k;
        else
            throw ConfigError("bargaining.pair_selection: unknown value '" + ps + "'");
        config.bargaining.random_pairs =
            get_or<int>(jb, "random_pairs", config.bargaining.random_pairs);
        config.fix_structure = get_or<bool>(jb, "fix_structure", false);
        const std::string rule = get_or<std::string>(jb, "allocation_rule", "transfers");
        if (rule == "transfers") config.allocation_rule = AllocationRule::transfers;
        else if (rule == "shapley") config.allocation_rule = AllocationRule::shapley;
        else throw ConfigError("bargaining.allocation_rule: unknown value '" + rule + "'");
        config.track_individual_rationality =
            get_or<bool>(jb, "track_individual_rationality", false);
        if (jb.contains("initial_structure")) {
            for (const auto& c : jb.at("initial_structure"))
                config.initial_structure.push_back(sorted_coalition(c.get<Coalition>()));
        }
    }

    if (!root.contains("model")) throw ConfigError("config: missing 'model'");
    {
        const json& jm = root.at("model");
        require_keys(jm, {"benchmark", "file"}, "model");
        if (jm.contains("benchmark") && jm.contains("file"))
            throw ConfigError("model: give either 'benchmark' or 'file', not both");
        if (jm.contains("benchmark")) {
            config.use_benchmark = true;
            config.scenario = scenario_from_json(jm.at("benchmark"), config);
        } else if (jm.contains("file")) {
            config.use_benchmark = false;
            config.model_file = jm.at("file").get<std::string>();
        } else {
            throw ConfigError("model: either 'benchmark' or 'file' must be given");
        }
    }

    if (root.contains("controller")) {
        const json& jc = root.at("controller");
        require_keys(jc,
                     {"mode", "horizon", "qf_scale", "q_cross", "q_base", "r_input",
                      "soft_state_penalty", "hard_state_constraints", "qp_eps", "qp_max_iterations",
                      "generic_q", "generic_r"},
                     "controller");
        config.mode = mode_from_string(get_or<std::string>(jc, "mode", "coalitional"));
        config.horizon = get_or<int>(jc, "horizon", config.horizon);
        config.grid_weights.qf_scale = get_or<double>(jc, "qf_scale", config.grid_weights.qf_scale);
        config.grid_weights.q_cross = get_or<double>(jc, "q_cross", config.grid_weights.q_cross);
        if (jc.contains("q_base")) {
            const auto diag = jc.at("q_base").get<std::vector<double>>();
            config.grid_weights.base_diag =
                Eigen::Map<const Vec>(diag.data(), static_cast<Eigen::Index>(diag.size()));
        }
        config.grid_weights.r_input = get_or<double>(jc, "r_input", config.grid_weights.r_input);
        config.mpc_options.soft_state_penalty =
            get_or<double>(jc, "soft_state_penalty", config.mpc_options.soft_state_penalty);
        config.mpc_options.hard_state_constraints =
            get_or<bool>(jc, "hard_state_constraints", false);
        const double eps = get_or<double>(jc, "qp_eps", config.mpc_options.qp.eps_abs);
        config.mpc_options.qp.eps_abs = eps;
        config.mpc_options.qp.eps_rel = eps;
        config.mpc_options.qp.max_iterations =
            get_or<int>(jc, "qp_max_iterations", config.mpc_options.qp.max_iterations);
        config.generic_q = get_or<double>(jc, "generic_q", config.generic_q);
        config.generic_r = get_or<double>(jc, "generic_r", config.generic_r);
    }

    if (root.contains("sim")) {
        const json& js = root.at("sim");
        require_keys(js,
                     {"T_sim", "rng_seed", "output_dir", "write_csv", "randomize_loads",
                      "load_scale_range", "load_time_range", "dump_qp"},
                     "sim");
        config.T_sim = get_or<int>(js, "T_sim", config.T_sim);
        config.rng_seed = get_or<std::uint64_t>(js, "rng_seed", config.rng_seed);
        config.output_dir = get_or<std::string>(js, "output_dir", "");
        config.write_csv = get_or<bool>(js, "write_csv", true);
        config.randomize_loads = get_or<bool>(js, "randomize_loads", false);
        if (js.contains("load_scale_range")) {
            const auto r = js.at("load_scale_range").get<std::vector<double>>();
            if (r.size() != 2) throw ConfigError("sim.load_scale_range: expected [lo, hi]");
            config.load_scale_range = {r[0], r[1]};
        }
        if (js.contains("load_time_range")) {
            const auto r = js.at("load_time_range").get<std::vector<int>>();
            if (r.size() != 2) throw ConfigError("sim.load_time_range: expected [lo, hi]");
            config.load_time_range = {r[0], r[1]};
        }
        config.dump_qp_path = get_or<std::string>(js, "dump_qp", "");
    }

    // the scenario carries T_sim only for convenience; the sim section wins
    if (root.contains("model") && root.at("model").contains("benchmark") &&
        root.at("model").at("benchmark").contains("T_sim"))
        config.T_sim = root.at("model").at("benchmark").at("T_sim").get<int>();

    config.scenario.T_sim = config.T_sim;
    config.scenario.c_coal = config.coop.c_coal;
    config.bargaining.rng_seed = config.rng_seed;
    config.bargaining.allow_splits = !config.fix_structure;
    config.validate();
    return config;
}

SimulationConfig load_config(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_to_json_text(const SimulationConfig& config)
{
    json root;
    if (config.use_benchmark) root["model"]["benchmark"] = scenario_to_json(config.scenario);
    else root["model"]["file"] = config.model_file;

    json& jc = root["controller"];
    jc["mode"] = to_string(config.mode);
    jc["horizon"] = config.horizon;
    jc["qf_scale"] = config.grid_weights.qf_scale;
    jc["q_cross"] = config.grid_weights.q_cross;
    jc["q_base"] = std::vector<double>(config.grid_weights.base_diag.data(),
                                       config.grid_weights.base_diag.data() +
                                           config.grid_weights.base_diag.size());
    jc["r_input"] = config.grid_weights.r_input;
    jc["soft_state_penalty"] = config.mpc_options.soft_state_penalty;
    jc["hard_state_constraints"] = config.mpc_options.hard_state_constraints;
    jc["qp_eps"] = config.mpc_options.qp.eps_abs;
    jc["qp_max_iterations"] = config.mpc_options.qp.max_iterations;
    jc["generic_q"] = config.generic_q;
    jc["generic_r"] = config.generic_r;

    json& jb = root["bargaining"];
    jb["c_coal"] = config.coop.c_coal;
    jb["coop_exponent"] = config.coop.exponent;
    jb["coop_threshold"] = config.coop.threshold;
    jb["dwell_time"] = config.bargaining.dwell_time;
    jb["max_iter"] = config.bargaining.max_iter;
    jb["max_loops"] = config.bargaining.max_loops;
    jb["pair_selection"] =
        config.bargaining.pair_selection == BargainingConfig::PairSelection::all_coupled
            ? "all_coupled"
            : "random_k";
    jb["random_pairs"] = config.bargaining.random_pairs;
    jb["fix_structure"] = config.fix_structure;
    jb["allocation_rule"] =
        config.allocation_rule == AllocationRule::transfers ? "transfers" : "shapley";
    jb["track_individual_rationality"] = config.track_individual_rationality;
    if (!config.initial_structure.empty()) {
        json is = json::array();
        for (const auto& c : config.initial_structure) is.push_back(c);
        jb["initial_structure"] = std::move(is);
    }

    json& js = root["sim"];
    js["T_sim"] = config.T_sim;
    js["rng_seed"] = config.rng_seed;
    js["output_dir"] = config.output_dir;
    js["write_csv"] = config.write_csv;
    js["randomize_loads"] = config.randomize_loads;
    js["load_scale_range"] = {config.load_scale_range[0], config.load_scale_range[1]};
    js["load_time_range"] = {config.load_time_range[0], config.load_time_range[1]};
    js["dump_qp"] = config.dump_qp_path;

    return root.dump(2) + "\n";
}

void save_config(const SimulationConfig& config, const std::string& path)
{
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config file '" + path + "'");
    os << config_to_json_text(config);
}

ModelSet load_model_set(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open model file '" + path + "'");
    json root;
    try {
        root = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model parse error: ") + e.what());
    }
    require_keys(root, {"agents"}, "model file");

    std::vector<SubsystemModel> subs;
    for (const auto& ja : root.at("agents")) {
        require_keys(ja,
                     {"id", "A", "B", "state_lower", "state_upper", "input_lower", "input_upper",
                      "couplings"},
                     "model agent");
        SubsystemModel s;
        s.id = ja.at("id").get<AgentId>();
        s.A_self = mat_from_json(ja.at("A"), "agent A");
        s.B_self = mat_from_json(ja.at("B"), "agent B");
        const int n = s.state_dim();
        const int q = s.input_dim();
        s.state_box = Box::unbounded(n);
        s.input_box = Box::unbounded(q);
        if (ja.contains("state_lower")) s.state_box.lower = bounds_from_json(ja.at("state_lower"), "state_lower");
        if (ja.contains("state_upper")) s.state_box.upper = bounds_from_json(ja.at("state_upper"), "state_upper");
        if (ja.contains("input_lower")) s.input_box.lower = bounds_from_json(ja.at("input_lower"), "input_lower");
        if (ja.contains("input_upper")) s.input_box.upper = bounds_from_json(ja.at("input_upper"), "input_upper");
        if (ja.contains("couplings")) {
            for (const auto& jcpl : ja.at("couplings")) {
                require_keys(jcpl, {"to", "A", "B"}, "coupling");
                CouplingBlock blk;
                blk.A = mat_from_json(jcpl.at("A"), "coupling A");
                if (jcpl.contains("B")) blk.B = mat_from_json(jcpl.at("B"), "coupling B");
                else blk.B = Mat::Zero(n, 1);
                s.couplings[jcpl.at("to").get<AgentId>()] = std::move(blk);
            }
        }
        subs.push_back(std::move(s));
    }
    try {
        return ModelSet(std::move(subs));
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid model set: ") + e.what());
    }
}

void save_model_set(const ModelSet& models, const std::string& path)
{
    json root;
    json agents = json::array();
    for (const auto& s : models.subsystems()) {
        json ja;
        ja["id"] = s.id;
        ja["A"] = mat_to_json(s.A_self);
        ja["B"] = mat_to_json(s.B_self);
        json sl = json::array(), su = json::array(), il = json::array(), iu = json::array();
        for (int i = 0; i < s.state_dim(); ++i) {
            sl.push_back(bound_to_json(s.state_box.lower[i]));
            su.push_back(bound_to_json(s.state_box.upper[i]));
        }
        for (int i = 0; i < s.input_dim(); ++i) {
            il.push_back(bound_to_json(s.input_box.lower[i]));
            iu.push_back(bound_to_json(s.input_box.upper[i]));
        }
        ja["state_lower"] = std::move(sl);
        ja["state_upper"] = std::move(su);
        ja["input_lower"] = std::move(il);
        ja["input_upper"] = std::move(iu);
        json couplings = json::array();
        for (const auto& [j, blk] : s.couplings) {
            json jc;
            jc["to"] = j;
            jc["A"] = mat_to_json(blk.A);
            jc["B"] = mat_to_json(blk.B);
            couplings.push_back(std::move(jc));
        }
        ja["couplings"] = std::move(couplings);
        agents.push_back(std::move(ja));
    }
    root["agents"] = std::move(agents);
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write model file '" + path + "'");
    os << root.dump(2) << "\n";
}

} // namespace coalmpc
