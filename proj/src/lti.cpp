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

#include "coalmpc/lti.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

namespace coalmpc {

Box Box::unbounded(int dim)
{
    Box b;
    b.lower = Vec::Constant(dim, -infinity());
    b.upper = Vec::Constant(dim, infinity());
    return b;
}

bool Box::contains(const Vec& x, double tol) const
{
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
    }
    return true;
}

void SubsystemModel::validate() const
{
    const int n = state_dim();
    const int q = input_dim();
    if (A_self.rows() != A_self.cols()) throw std::invalid_argument("A_self must be square");
    if (B_self.rows() != n) throw std::invalid_argument("B_self row count mismatch");
    if (state_box.lower.size() != n || state_box.upper.size() != n)
        throw std::invalid_argument("state box dimension mismatch");
    if (input_box.lower.size() != q || input_box.upper.size() != q)
        throw std::invalid_argument("input box dimension mismatch");
    if ((state_box.lower.array() > state_box.upper.array()).any())
        throw std::invalid_argument("empty state box");
    if ((input_box.lower.array() > input_box.upper.array()).any())
        throw std::invalid_argument("empty input box");
    for (const auto& [j, blk] : couplings) {
        if (j == id) throw std::invalid_argument("self-coupling entry");
        if (blk.A.rows() != n || blk.B.rows() != n)
            throw std::invalid_argument("coupling block row count mismatch");
        if (blk.is_zero()) throw std::invalid_argument("all-zero coupling entry");
    }
}

ModelSet::ModelSet(std::vector<SubsystemModel> subsystems)
    : subsystems_(std::move(subsystems))
{
    std::sort(subsystems_.begin(), subsystems_.end(),
              [](const SubsystemModel& a, const SubsystemModel& b) { return a.id < b.id; });
    for (std::size_t k = 0; k < subsystems_.size(); ++k) {
        const auto& s = subsystems_[k];
        s.validate();
        if (!index_.emplace(s.id, k).second)
            throw std::invalid_argument("duplicate agent id " + std::to_string(s.id));
        state_offsets_.push_back(total_state_dim_);
        input_offsets_.push_back(total_input_dim_);
        total_state_dim_ += s.state_dim();
        total_input_dim_ += s.input_dim();
    }
    // coupling targets must exist and have matching column counts
    for (const auto& s : subsystems_) {
        for (const auto& [j, blk] : s.couplings) {
            const auto it = index_.find(j);
            if (it == index_.end())
                throw std::invalid_argument("coupling to unknown agent " + std::to_string(j));
            const auto& nb = subsystems_[it->second];
            if (blk.A.cols() != nb.state_dim() || blk.B.cols() != nb.input_dim())
                throw std::invalid_argument("coupling block column count mismatch");
        }
    }
}

const SubsystemModel& ModelSet::subsystem(AgentId id) const
{
    const auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown agent id " + std::to_string(id));
    return subsystems_[it->second];
}

Coalition ModelSet::agent_ids() const
{
    Coalition ids;
    ids.reserve(subsystems_.size());
    for (const auto& s : subsystems_) ids.push_back(s.id);
    return ids;
}

int ModelSet::state_offset(AgentId id) const
{
    const auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown agent id " + std::to_string(id));
    return state_offsets_[it->second];
}

int ModelSet::input_offset(AgentId id) const
{
    const auto it = index_.find(id);
    if (it == index_.end()) throw std::invalid_argument("unknown agent id " + std::to_string(id));
    return input_offsets_[it->second];
}

void CommGraph::add_edge(AgentId a, AgentId b)
{
    if (a == b) throw std::invalid_argument("graph edges must be irreflexive");
    edges.insert({std::min(a, b), std::max(a, b)});
}

bool CommGraph::has_edge(AgentId a, AgentId b) const
{
    return edges.count({std::min(a, b), std::max(a, b)}) > 0;
}

void CommGraph::validate() const
{
    for (const auto& [a, b] : edges) {
        if (a == b) throw std::invalid_argument("graph edges must be irreflexive");
        if (agents.count(a) == 0 || agents.count(b) == 0)
            throw std::invalid_argument("edge endpoint outside agent set");
    }
}

void CoalitionStructure::validate(const Coalition& all_agents) const
{
    std::set<AgentId> seen;
    for (const auto& c : coalitions) {
        if (c.empty()) throw std::invalid_argument("empty coalition in structure");
        for (AgentId id : c) {
            if (!seen.insert(id).second)
                throw std::invalid_argument("agent appears in two coalitions");
        }
    }
    if (seen != std::set<AgentId>(all_agents.begin(), all_agents.end()))
        throw std::invalid_argument("coalition structure does not cover the agent set");
}

std::size_t CoalitionStructure::coalition_of(AgentId id) const
{
    for (std::size_t k = 0; k < coalitions.size(); ++k) {
        if (contains(coalitions[k], id)) return k;
    }
    throw std::invalid_argument("agent not in any coalition");
}

int CoalitionModel::member_state_dim(std::size_t k) const
{
    const int end = (k + 1 < members.size()) ? member_state_offsets[k + 1] : state_dim();
    return end - member_state_offsets[k];
}

int CoalitionModel::member_input_dim(std::size_t k) const
{
    const int end = (k + 1 < members.size()) ? member_input_offsets[k + 1] : input_dim();
    return end - member_input_offsets[k];
}

Coalition neighbors(const ModelSet& models, AgentId i)
{
    const auto& s = models.subsystem(i);
    Coalition out;
    for (const auto& [j, blk] : s.couplings) {
        if (!blk.is_zero()) out.push_back(j);
    }
    return sorted_coalition(std::move(out));
}

CoalitionStructure connected_components(const CommGraph& graph)
{
    graph.validate();
    std::map<AgentId, AgentId> parent;
    for (AgentId a : graph.agents) parent[a] = a;
    const auto find = [&](AgentId a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (const auto& [a, b] : graph.edges) parent[find(a)] = find(b);

    std::map<AgentId, Coalition> groups;
    for (AgentId a : graph.agents) groups[find(a)].push_back(a);

    CoalitionStructure out;
    for (auto& [root, members] : groups) out.coalitions.push_back(sorted_coalition(members));
    std::sort(out.coalitions.begin(), out.coalitions.end(),
              [](const Coalition& a, const Coalition& b) { return a.front() < b.front(); });
    return out;
}

CoalitionModel aggregate_coalition(const ModelSet& models, const Coalition& members_in)
{
    if (members_in.empty()) throw std::invalid_argument("coalition must be nonempty");
    const Coalition members = sorted_coalition(members_in);

    CoalitionModel cm;
    cm.members = members;
    int n = 0, q = 0;
    for (AgentId id : members) {
        const auto& s = models.subsystem(id);
        cm.member_state_offsets.push_back(n);
        cm.member_input_offsets.push_back(q);
        n += s.state_dim();
        q += s.input_dim();
    }
    cm.A_coal = Mat::Zero(n, n);
    cm.B_coal = Mat::Zero(n, q);
    cm.state_box.lower = Vec::Zero(n);
    cm.state_box.upper = Vec::Zero(n);
    cm.input_box.lower = Vec::Zero(q);
    cm.input_box.upper = Vec::Zero(q);

    std::set<AgentId> member_set(members.begin(), members.end());
    std::set<AgentId> externals;
    for (std::size_t a = 0; a < members.size(); ++a) {
        const auto& s = models.subsystem(members[a]);
        const int ro = cm.member_state_offsets[a];
        const int co = cm.member_input_offsets[a];
        cm.A_coal.block(ro, ro, s.state_dim(), s.state_dim()) = s.A_self;
        cm.B_coal.block(ro, co, s.state_dim(), s.input_dim()) = s.B_self;
        cm.state_box.lower.segment(ro, s.state_dim()) = s.state_box.lower;
        cm.state_box.upper.segment(ro, s.state_dim()) = s.state_box.upper;
        cm.input_box.lower.segment(co, s.input_dim()) = s.input_box.lower;
        cm.input_box.upper.segment(co, s.input_dim()) = s.input_box.upper;

        for (const auto& [j, blk] : s.couplings) {
            if (blk.is_zero()) continue;
            if (member_set.count(j) > 0) {
                const std::size_t b = static_cast<std::size_t>(
                    std::lower_bound(members.begin(), members.end(), j) - members.begin());
                cm.A_coal.block(ro, cm.member_state_offsets[b], blk.A.rows(), blk.A.cols()) = blk.A;
                cm.B_coal.block(ro, cm.member_input_offsets[b], blk.B.rows(), blk.B.cols()) = blk.B;
            } else {
                externals.insert(j);
                cm.external_links.push_back({static_cast<int>(a), j, blk.A, blk.B});
            }
        }
    }
    cm.external_neighbors.assign(externals.begin(), externals.end());
    return cm;
}

Vec external_coupling(const CoalitionModel& coalition, const ModelSet& models,
                      const Vec& global_state, const Vec& global_input)
{
    if (global_state.size() != models.total_state_dim() ||
        global_input.size() != models.total_input_dim())
        throw std::invalid_argument("global state/input dimension mismatch");

    Vec w = Vec::Zero(coalition.state_dim());
    for (const auto& link : coalition.external_links) {
        const auto& nb = models.subsystem(link.neighbor);
        const int ro = coalition.member_state_offsets[link.member_index];
        w.segment(ro, link.A.rows()) +=
            link.A * global_state.segment(models.state_offset(link.neighbor), nb.state_dim()) +
            link.B * global_input.segment(models.input_offset(link.neighbor), nb.input_dim());
    }
    return w;
}

Mat global_A(const ModelSet& models)
{
    const int n = models.total_state_dim();
    Mat A = Mat::Zero(n, n);
    for (const auto& s : models.subsystems()) {
        const int ro = models.state_offset(s.id);
        A.block(ro, ro, s.state_dim(), s.state_dim()) = s.A_self;
        for (const auto& [j, blk] : s.couplings)
            A.block(ro, models.state_offset(j), blk.A.rows(), blk.A.cols()) = blk.A;
    }
    return A;
}

Mat global_B(const ModelSet& models)
{
    Mat B = Mat::Zero(models.total_state_dim(), models.total_input_dim());
    for (const auto& s : models.subsystems()) {
        const int ro = models.state_offset(s.id);
        B.block(ro, models.input_offset(s.id), s.state_dim(), s.input_dim()) = s.B_self;
        for (const auto& [j, blk] : s.couplings)
            B.block(ro, models.input_offset(j), blk.B.rows(), blk.B.cols()) = blk.B;
    }
    return B;
}

Vec step_global(const ModelSet& models, const Vec& x, const Vec& u)
{
    if (x.size() != models.total_state_dim() || u.size() != models.total_input_dim())
        throw std::invalid_argument("global state/input dimension mismatch");
    Vec next = Vec::Zero(x.size());
    for (const auto& s : models.subsystems()) {
        const int ro = models.state_offset(s.id);
        auto seg = next.segment(ro, s.state_dim());
        seg = s.A_self * x.segment(ro, s.state_dim()) +
              s.B_self * u.segment(models.input_offset(s.id), s.input_dim());
        for (const auto& [j, blk] : s.couplings) {
            const auto& nb = models.subsystem(j);
            seg += blk.A * x.segment(models.state_offset(j), nb.state_dim()) +
                   blk.B * u.segment(models.input_offset(j), nb.input_dim());
        }
    }
    return next;
}

Mat matrix_exponential(const Mat& A, double t)
{
    return Mat((A * t).exp());
}

Mat matrix_exponential_integral(const Mat& A, double Ts)
{
    // exp([[A, I], [0, 0]] Ts) = [[exp(A Ts), int_0^Ts exp(A s) ds], [0, I]]
    const int n = static_cast<int>(A.rows());
    Mat aug = Mat::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = A;
    aug.topRightCorner(n, n) = Mat::Identity(n, n);
    const Mat e = matrix_exponential(aug, Ts);
    return e.topRightCorner(n, n);
}

DiscretizedArea discretize_area(const ContinuousAreaModel& area, double Ts)
{
    if (Ts <= 0.0) throw std::invalid_argument("sampling time must be positive");

    const Mat Ad = matrix_exponential(area.A_self, Ts);
    const Mat integral = matrix_exponential_integral(area.A_self, Ts);
    if (!Ad.allFinite() || !integral.allFinite())
        throw std::invalid_argument("non-finite matrix entries after discretization");

    DiscretizedArea out;
    out.model.id = area.id;
    out.model.A_self = Ad;
    out.model.B_self = integral * area.B_self;
    out.model.state_box = area.state_box;
    out.model.input_box = area.input_box;
    for (const auto& [j, blk] : area.couplings) {
        CouplingBlock d;
        d.A = integral * blk.A;
        d.B = integral * blk.B;
        if (!d.is_zero()) out.model.couplings.emplace(j, std::move(d));
    }
    out.D_load = area.D_load.size() > 0 ? Mat(integral * area.D_load) : area.D_load;
    return out;
}

} // namespace coalmpc
