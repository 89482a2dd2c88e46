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

#include "coalmpc/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace coalmpc {

void AreaParams::validate() const
{
    if (H <= 0.0 || tau_t <= 0.0 || tau_g <= 0.0 || r_v <= 0.0)
        throw std::invalid_argument("area time constants and inertia must be positive");
    for (const auto& [j, p0] : sync_coeffs)
        if (p0 < 0.0) throw std::invalid_argument("synchronizing coefficients must be nonnegative");
}

ContinuousAreaModel build_area_model(AgentId id, const AreaParams& p)
{
    p.validate();
    ContinuousAreaModel area;
    area.id = id;

    double sync_sum = 0.0;
    for (const auto& [j, p0] : p.sync_coeffs) sync_sum += p0;

    Mat A = Mat::Zero(4, 4);
    A(0, 1) = 1.0;
    A(1, 0) = -sync_sum / (2.0 * p.H);
    A(1, 1) = -p.rho_f / (2.0 * p.H);
    A(1, 2) = 1.0 / (2.0 * p.H);
    A(2, 2) = -1.0 / p.tau_t;
    A(2, 3) = 1.0 / p.tau_t;
    A(3, 1) = -1.0 / (p.r_v * p.tau_g);
    A(3, 3) = -1.0 / p.tau_g;
    area.A_self = A;

    area.B_self = Mat::Zero(4, 1);
    area.B_self(3, 0) = 1.0 / p.tau_g;

    area.D_load = Mat::Zero(4, 1);
    area.D_load(1, 0) = -1.0 / (2.0 * p.H);

    for (const auto& [j, p0] : p.sync_coeffs) {
        if (p0 == 0.0) continue;
        CouplingBlock blk;
        blk.A = Mat::Zero(4, 4);
        blk.A(1, 0) = p0 / (2.0 * p.H);
        blk.B = Mat::Zero(4, 1);
        area.couplings[j] = blk;
    }

    area.state_box = Box::unbounded(4);
    area.input_box.lower = Vec::Constant(1, -p.u_max);
    area.input_box.upper = Vec::Constant(1, p.u_max);
    return area;
}

double tie_line_flow(double theta_i, double theta_j, double sync_coeff)
{
    return sync_coeff * (theta_i - theta_j);
}

double LoadProfile::demand(AgentId area, int k) const
{
    double level = 0.0;
    int level_time = -1;
    for (const auto& s : steps) {
        if (s.area != area || s.time > k) continue;
        if (s.time >= level_time) {
            level_time = s.time;
            level = s.delta;
        }
    }
    return level;
}

Vec LoadProfile::demand_vector(const Coalition& areas, int k) const
{
    Vec d(static_cast<Eigen::Index>(areas.size()));
    for (std::size_t i = 0; i < areas.size(); ++i) d[static_cast<Eigen::Index>(i)] = demand(areas[i], k);
    return d;
}

Scenario scenario_from_string(const std::string& s)
{
    if (s == "S1") return Scenario::S1;
    if (s == "S2") return Scenario::S2;
    throw std::invalid_argument("unknown scenario '" + s + "' (expected S1 or S2)");
}

std::string to_string(Scenario s)
{
    return s == Scenario::S1 ? "S1" : "S2";
}

std::vector<double> scenario_generation_bounds(Scenario s)
{
    if (s == Scenario::S1) return {0.2310, 0.1680, 0.1050, 0.0840, 0.1050};
    return {0.3465, 0.1512, 0.0945, 0.1260, 0.0945};
}

ScenarioSpec ScenarioSpec::defaults(Scenario s)
{
    ScenarioSpec spec;
    spec.scenario = s;
    spec.u_max = scenario_generation_bounds(s);
    spec.topology = {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {2, 5}};
    spec.c_coal = 1e-3;
    spec.T_sim = 100;
    if (s == Scenario::S1) {
        // staggered demand-growth events; capacity suffices everywhere
        spec.loads.steps = {{1, 10, 0.10}, {2, 18, 0.08}, {3, 26, 0.08},
                            {4, 34, 0.05}, {5, 42, 0.08}};
    } else {
        // area 3 runs a 10% capacity deficit, area 5 a matching surplus
        spec.loads.steps = {{1, 10, 0.10}, {2, 25, -0.08}, {3, 20, 0.105},
                            {4, 55, 0.05}, {5, 50, -0.105}};
    }
    return spec;
}

Vec BenchmarkSystem::step(const Vec& x, const Vec& u, const Vec& d) const
{
    Vec next = step_global(models, x, u);
    const Coalition ids = areas();
    if (d.size() != static_cast<Eigen::Index>(ids.size()))
        throw std::invalid_argument("demand vector must carry one entry per area");
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& col = load_columns.at(ids[i]);
        next.segment(models.state_offset(ids[i]), col.rows()) += col * d[static_cast<Eigen::Index>(i)];
    }
    return next;
}

Vec BenchmarkSystem::extract_theta(const Vec& x_global) const
{
    const Coalition ids = areas();
    Vec theta(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i)
        theta[static_cast<Eigen::Index>(i)] = x_global[models.state_offset(ids[i]) + 0];
    return theta;
}

Vec BenchmarkSystem::extract_omega(const Vec& x_global) const
{
    const Coalition ids = areas();
    Vec omega(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i)
        omega[static_cast<Eigen::Index>(i)] = x_global[models.state_offset(ids[i]) + 1];
    return omega;
}

std::vector<Vec> BenchmarkSystem::load_affine(const Coalition& members,
                                              const std::vector<Vec>& demand_forecast) const
{
    std::vector<Vec> affine;
    affine.reserve(demand_forecast.size());
    int n = 0;
    for (AgentId id : members) n += states_per_area(id);
    for (const auto& d : demand_forecast) {
        if (d.size() != static_cast<Eigen::Index>(members.size()))
            throw std::invalid_argument("forecast entry dimension mismatch");
        Vec v = Vec::Zero(n);
        int off = 0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto& col = load_columns.at(members[i]);
            v.segment(off, col.rows()) = col * d[static_cast<Eigen::Index>(i)];
            off += static_cast<int>(col.rows());
        }
        affine.push_back(std::move(v));
    }
    return affine;
}

BenchmarkSystem build_benchmark(const ScenarioSpec& spec)
{
    // figure out the area set from the topology plus the bound list
    std::set<AgentId> area_set;
    for (const auto& [a, b] : spec.topology) {
        area_set.insert(a);
        area_set.insert(b);
    }
    for (std::size_t i = 0; i < spec.u_max.size(); ++i) area_set.insert(static_cast<AgentId>(i + 1));
    if (area_set.empty()) throw std::invalid_argument("scenario defines no areas");

    BenchmarkSystem sys;
    sys.Ts = spec.Ts;

    std::vector<SubsystemModel> subs;
    for (AgentId id : area_set) {
        AreaParams p;
        const auto it = spec.area_overrides.find(id);
        if (it != spec.area_overrides.end()) p = it->second;
        if (static_cast<std::size_t>(id) <= spec.u_max.size() && id >= 1)
            p.u_max = spec.u_max[static_cast<std::size_t>(id - 1)];
        p.sync_coeffs.clear();
        for (const auto& [a, b] : spec.topology) {
            if (a == id) p.sync_coeffs[b] = spec.sync_coeff;
            if (b == id) p.sync_coeffs[a] = spec.sync_coeff;
        }
        const auto cont = build_area_model(id, p);
        auto disc = discretize_area(cont, spec.Ts);
        subs.push_back(std::move(disc.model));
        sys.load_columns[id] = disc.D_load;
        for (const auto& [j, p0] : p.sync_coeffs) sys.sync[{id, j}] = p0;
    }
    sys.models = ModelSet(std::move(subs));
    return sys;
}

MpcWeights coupling_weights(const BenchmarkSystem& sys, const GridWeightParams& params,
                            const Coalition& members)
{
    const auto pair_weight = [&](AgentId i, AgentId j) {
        double q_ij = params.q_cross, q_ji = params.q_cross;
        const auto it = params.q_cross_overrides.find({i, j});
        if (it != params.q_cross_overrides.end()) q_ij = it->second;
        const auto jt = params.q_cross_overrides.find({j, i});
        if (jt != params.q_cross_overrides.end()) q_ji = jt->second;
        return q_ij + q_ji;
    };

    MpcWeights w;
    w.Qf_scale = params.qf_scale;
    for (AgentId id : members) {
        const int n = sys.states_per_area(id);
        Mat Q = Mat::Zero(n, n);
        for (int k = 0; k < n && k < params.base_diag.size(); ++k) Q(k, k) = params.base_diag[k];
        for (const auto& [pair, p0] : sys.sync) {
            if (pair.first != id) continue;
            const AgentId j = pair.second;
            const double pw = pair_weight(id, j);
            if (pw == 0.0) continue;
            // every tie line inflates the own-angle weight (implicit transfer
            // penalty); the matching negative cross entry exists only toward
            // fellow coalition members, where the angle difference is
            // measurable, giving a Laplacian-plus-diagonal theta block
            Q(0, 0) += pw;
            if (contains(members, j)) {
                Mat cross = Mat::Zero(n, sys.states_per_area(j));
                cross(0, 0) = -pw;
                w.Q_blocks[{id, j}] = cross;
            }
        }
        w.Q_blocks[{id, id}] = Q;
        w.R_blocks[id] = Mat::Constant(1, 1, params.r_input);
    }
    return w;
}

std::pair<Vec, double> nominal_setpoint(double delta_d)
{
    Vec x(4);
    x << 0.0, 0.0, delta_d, delta_d;
    return {x, delta_d};
}

ReferenceTrajectory nominal_reference(const BenchmarkSystem& sys, const Coalition& members,
                                      const std::vector<Vec>& demand_forecast, int Np)
{
    if (static_cast<int>(demand_forecast.size()) != Np)
        throw std::invalid_argument("demand forecast must cover the horizon");
    int n = 0;
    for (AgentId id : members) n += sys.states_per_area(id);
    const int q = static_cast<int>(members.size());

    ReferenceTrajectory refs;
    refs.states.assign(Np + 1, Vec::Zero(n));
    refs.inputs.assign(Np, Vec::Zero(q));
    for (int t = 0; t < Np; ++t) {
        int off = 0;
        for (std::size_t i = 0; i < members.size(); ++i) {
            const auto [xs, us] = nominal_setpoint(demand_forecast[t][static_cast<Eigen::Index>(i)]);
            refs.states[t + 1].segment(off, 4) = xs;
            refs.inputs[t][static_cast<Eigen::Index>(i)] = us;
            off += sys.states_per_area(members[i]);
        }
    }
    refs.states[0] = refs.states[1];
    return refs;
}

namespace {

RtoResult saturated_nominal(const BenchmarkSystem& sys, const Coalition& members,
                            const std::vector<Vec>& demand_forecast, int Np)
{
    RtoResult out;
    out.feasible = false;
    std::vector<Vec> clipped = demand_forecast;
    for (auto& d : clipped)
        for (std::size_t i = 0; i < members.size(); ++i) {
            const double cap = sys.models.subsystem(members[i]).input_box.upper[0];
            d[static_cast<Eigen::Index>(i)] = std::min(std::max(d[static_cast<Eigen::Index>(i)], -cap), cap);
        }
    out.refs = nominal_reference(sys, members, clipped, Np);
    return out;
}

} // namespace

RtoResult rto_setpoints(const BenchmarkSystem& sys, const Coalition& members,
                        const std::vector<Vec>& demand_forecast, int Np)
{
    if (static_cast<int>(demand_forecast.size()) != Np)
        throw std::invalid_argument("demand forecast must cover the horizon");
    if (members.size() == 1) {
        // no transfers can be arranged for a lone area
        RtoResult out;
        out.refs = nominal_reference(sys, members, demand_forecast, Np);
        return out;
    }

    const auto cm = aggregate_coalition(sys.models, members);
    const int n = cm.state_dim();
    const int q = cm.input_dim();
    const int nm = static_cast<int>(members.size());

    // tracking weights of the setpoint program
    Vec q_diag(4);
    q_diag << 10.0, 0.0, 100.0, 100.0;
    const double r_w = 100.0;

    // variables: inputs u(0..Np-1) then states x(1..Np)
    QpBuilder b(Np * (q + n));
    const auto u_off = [&](int t) { return t * q; };
    const auto x_off = [&](int t) { return Np * q + (t - 1) * n; };

    const ReferenceTrajectory nominal = nominal_reference(sys, members, demand_forecast, Np);
    for (int t = 0; t < Np; ++t) {
        Mat Rw = r_w * Mat::Identity(q, q);
        b.add_quadratic_form(u_off(t), Rw, nominal.inputs[t]);
        Mat Qw = Mat::Zero(n, n);
        for (int m = 0; m < nm; ++m)
            for (int k = 0; k < 4; ++k)
                Qw(cm.member_state_offsets[m] + k, cm.member_state_offsets[m] + k) = q_diag[k];
        b.add_quadratic_form(x_off(t + 1), Qw, nominal.states[t + 1]);
    }

    // per-step constraints
    for (int t = 0; t < Np; ++t) {
        const Vec& delta = demand_forecast[t];

        // steady state: (I - A) x(t+1) - B u(t) = D delta(t)
        Mat IA = Mat::Identity(n, n) - cm.A_coal;
        Vec rhs = Vec::Zero(n);
        for (int m = 0; m < nm; ++m) {
            const auto& col = sys.load_columns.at(members[m]);
            rhs.segment(cm.member_state_offsets[m], col.rows()) = col * delta[m];
        }
        for (int r = 0; r < n; ++r) {
            const int row = b.begin_eq_row();
            for (int c = 0; c < n; ++c)
                if (IA(r, c) != 0.0) b.eq_coeff(row, x_off(t + 1) + c, IA(r, c));
            for (int c = 0; c < q; ++c)
                if (cm.B_coal(r, c) != 0.0) b.eq_coeff(row, u_off(t) + c, -cm.B_coal(r, c));
            b.set_eq_rhs(row, rhs[r]);
        }

        // aggregate demand-supply balance
        {
            const int row = b.begin_eq_row();
            for (int c = 0; c < q; ++c) b.eq_coeff(row, u_off(t) + c, 1.0);
            b.set_eq_rhs(row, delta.sum());
        }

        // generation bounds
        for (int m = 0; m < nm; ++m) {
            const double cap = sys.models.subsystem(members[m]).input_box.upper[0];
            int row = b.begin_ineq_row();
            b.ineq_coeff(row, u_off(t) + cm.member_input_offsets[m], 1.0);
            b.set_ineq_rhs(row, cap);
            row = b.begin_ineq_row();
            b.ineq_coeff(row, u_off(t) + cm.member_input_offsets[m], -1.0);
            b.set_ineq_rhs(row, -sys.models.subsystem(members[m]).input_box.lower[0]);
        }

        // deficit covering: inbound tie-line flow into a capacity-limited
        // member equals its shortfall (rows only where a shortfall exists;
        // forcing zero net inflow on every member would contradict the
        // aggregate balance whenever any deficit exists)
        for (int m = 0; m < nm; ++m) {
            const double cap = sys.models.subsystem(members[m]).input_box.upper[0];
            const double deficit = std::max(0.0, delta[m] - cap);
            if (deficit <= 0.0) continue;
            const int row = b.begin_eq_row();
            bool has_neighbor = false;
            for (int r = 0; r < nm; ++r) {
                const auto it = sys.sync.find({members[r], members[m]});
                if (it == sys.sync.end() || it->second == 0.0) continue;
                has_neighbor = true;
                b.eq_coeff(row, x_off(t + 1) + cm.member_state_offsets[r], it->second);
                b.eq_coeff(row, x_off(t + 1) + cm.member_state_offsets[m], -it->second);
            }
            b.set_eq_rhs(row, deficit);
            if (!has_neighbor) return saturated_nominal(sys, members, demand_forecast, Np);
        }
    }

    QpSettings st;
    st.eps_abs = 1e-9;
    st.eps_rel = 1e-9;
    const QpSolution sol = solve_qp(b.build(), st);
    if (sol.status != QpStatus::solved) return saturated_nominal(sys, members, demand_forecast, Np);

    RtoResult out;
    out.refs.states.assign(Np + 1, Vec::Zero(n));
    out.refs.inputs.assign(Np, Vec::Zero(q));
    for (int t = 0; t < Np; ++t) out.refs.inputs[t] = sol.z.segment(u_off(t), q);
    for (int t = 1; t <= Np; ++t) out.refs.states[t] = sol.z.segment(x_off(t), n);
    out.refs.states[0] = out.refs.states[1];
    return out;
}

double eta_index(const std::vector<Vec>& omega_steps)
{
    if (omega_steps.empty()) return 0.0;
    double total = 0.0;
    for (const auto& w : omega_steps) total += w.squaredNorm();
    return total / static_cast<double>(omega_steps.size());
}

double psi_index(const std::vector<Vec>& theta_steps, const BenchmarkSystem& sys, double Ts)
{
    const Coalition ids = sys.areas();
    double total = 0.0;
    for (const auto& theta : theta_steps) {
        for (const auto& [pair, p0] : sys.sync) {
            const auto i_it = std::lower_bound(ids.begin(), ids.end(), pair.first);
            const auto j_it = std::lower_bound(ids.begin(), ids.end(), pair.second);
            const double flow = tie_line_flow(theta[i_it - ids.begin()], theta[j_it - ids.begin()], p0);
            total += (flow * Ts) * (flow * Ts);
        }
    }
    return total;
}

} // namespace coalmpc
