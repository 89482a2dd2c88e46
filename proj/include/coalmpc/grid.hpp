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

#ifndef COALMPC_GRID_HPP
#define COALMPC_GRID_HPP

#include "coalmpc/lti.hpp"
#include "coalmpc/mpc.hpp"
#include "coalmpc/types.hpp"

#include <map>
#include <utility>
#include <vector>

namespace coalmpc {

// Load-frequency-control benchmark: areas with single-stage turbines coupled
// through tie lines. Area state is (rotor angle, frequency deviation,
// mechanical power, valve position); the input is the power setpoint and the
// load deviation enters as a disturbance.

struct AreaParams {
    double H = 5.0;      // machine inertia [s]
    double r_v = 0.05;   // rotor velocity regulation [rad/s]
    double rho_f = 0.8;  // load/frequency coefficient
    double tau_t = 0.5;  // prime mover constant [s]
    double tau_g = 0.2;  // governor constant [s]
    std::map<AgentId, double> sync_coeffs; // neighbor -> synchronizing coefficient [1/rad]
    double u_max = 0.5;  // |generation setpoint| bound [p.u.]

    void validate() const;
};

/// Continuous-time area dynamics; the tie-line stiffness shows up in the
/// frequency row, toward the own angle and each neighbor's angle.
ContinuousAreaModel build_area_model(AgentId id, const AreaParams& params);

/// Linearized inter-area transfer; positive means power flowing i -> j.
double tie_line_flow(double theta_i, double theta_j, double sync_coeff);

/// Piecewise-constant per-area demand deviation; each entry sets the area's
/// level from `time` onward.
struct LoadStep {
    AgentId area = 0;
    int time = 0;
    double delta = 0.0;
};

struct LoadProfile {
    std::vector<LoadStep> steps;

    double demand(AgentId area, int k) const;
    Vec demand_vector(const Coalition& areas, int k) const;
};

enum class Scenario { S1, S2 };

Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

/// Per-area generation bounds of the two scenarios (the second impairs areas
/// 2, 3 and 5 and enlarges 1 and 4).
std::vector<double> scenario_generation_bounds(Scenario s);

struct ScenarioSpec {
    Scenario scenario = Scenario::S1;
    std::vector<double> u_max;                          // per area 1..N
    double c_coal = 1e-3;
    int T_sim = 100;
    std::vector<std::pair<AgentId, AgentId>> topology;  // tie lines
    double sync_coeff = 2.0;
    double Ts = 1.0;
    LoadProfile loads;
    std::map<AgentId, AreaParams> area_overrides;

    static ScenarioSpec defaults(Scenario s);
};

/// The discretized benchmark plant: subsystem models, load-input columns,
/// and the symmetric synchronizing coefficients.
struct BenchmarkSystem {
    ModelSet models;
    std::map<AgentId, Mat> load_columns;               // n x 1 per area
    std::map<std::pair<AgentId, AgentId>, double> sync; // both directions stored
    double Ts = 1.0;

    Coalition areas() const { return models.agent_ids(); }
    int states_per_area(AgentId id) const { return models.subsystem(id).state_dim(); }

    /// x+ = A x + B u + D d with d stacked per area.
    Vec step(const Vec& x, const Vec& u, const Vec& d) const;

    Vec extract_theta(const Vec& x_global) const;
    Vec extract_omega(const Vec& x_global) const;

    /// Per-step affine load term for a coalition's prediction model.
    std::vector<Vec> load_affine(const Coalition& members, const std::vector<Vec>& demand_forecast) const;
};

BenchmarkSystem build_benchmark(const ScenarioSpec& spec);

/// Angle-difference weighting: each area's top-left weight absorbs the
/// in-coalition neighbor penalties and the cross blocks carry the matching
/// negative entries; with zero cross penalty this is the noncooperative
/// weighting.
struct GridWeightParams {
    Vec base_diag = (Vec(4) << 500.0, 0.01, 0.01, 10.0).finished();
    double q_cross = 1000.0;
    double r_input = 10.0;
    double qf_scale = 20.0;
    std::map<std::pair<AgentId, AgentId>, double> q_cross_overrides; // per directed pair
};

MpcWeights coupling_weights(const BenchmarkSystem& sys, const GridWeightParams& params,
                            const Coalition& members);

/// AGC setpoint balancing the local load: x = (0, 0, d, d), u = d.
std::pair<Vec, double> nominal_setpoint(double delta_d);

/// Stacked nominal references for a coalition over the horizon; the state at
/// index t+1 and the input at index t follow the forecast at t.
ReferenceTrajectory nominal_reference(const BenchmarkSystem& sys, const Coalition& members,
                                      const std::vector<Vec>& demand_forecast, int Np);

struct RtoResult {
    ReferenceTrajectory refs;
    bool feasible = true;
};

/// Setpoint optimization arranging in-coalition transfers: tracks the
/// nominal setpoints subject to coalition steady state, aggregate
/// demand-supply balance, generation bounds, and deficit-covering tie-line
/// flows into capacity-limited members. Singletons take the nominal
/// setpoint; an infeasible program falls back to capacity-saturated
/// nominals, flagged.
RtoResult rto_setpoints(const BenchmarkSystem& sys, const Coalition& members,
                        const std::vector<Vec>& demand_forecast, int Np);

/// Average overall squared frequency deviation; omega_steps[t] stacks all
/// areas at step t+1.
double eta_index(const std::vector<Vec>& omega_steps);

/// Accumulated squared tie-line energy transfers, both directions counted.
double psi_index(const std::vector<Vec>& theta_steps, const BenchmarkSystem& sys, double Ts);

} // namespace coalmpc

#endif // COALMPC_GRID_HPP
