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

#ifndef COALMPC_LTI_HPP
#define COALMPC_LTI_HPP

#include "coalmpc/types.hpp"

#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace coalmpc {

/// Cross-coupling blocks from one subsystem onto another:
/// the neighbor's state enters through A, its input through B.
struct CouplingBlock {
    Mat A; // n_i x n_j
    Mat B; // n_i x q_j

    bool is_zero() const { return A.isZero(0.0) && B.isZero(0.0); }
};

/// Per-coordinate box; +-inf entries mean unconstrained.
struct Box {
    Vec lower;
    Vec upper;

    static Box unbounded(int dim);
    bool contains(const Vec& x, double tol = 0.0) const;
};

/// One agent's discrete-time dynamics: local blocks plus the coupling blocks
/// toward each neighbor, and the local state/input boxes.
struct SubsystemModel {
    AgentId id = 0;
    Mat A_self; // n x n
    Mat B_self; // n x q
    std::map<AgentId, CouplingBlock> couplings;
    Box state_box;
    Box input_box;

    int state_dim() const { return static_cast<int>(A_self.rows()); }
    int input_dim() const { return static_cast<int>(B_self.cols()); }

    /// Throws std::invalid_argument on dimension mismatches, self-coupling,
    /// all-zero coupling entries, or empty boxes.
    void validate() const;
};

/// An indexed collection of subsystems; the block order of all global
/// quantities is ascending agent id.
class ModelSet {
public:
    ModelSet() = default;
    explicit ModelSet(std::vector<SubsystemModel> subsystems);

    const std::vector<SubsystemModel>& subsystems() const { return subsystems_; }
    const SubsystemModel& subsystem(AgentId id) const;
    bool has_agent(AgentId id) const { return index_.count(id) > 0; }
    Coalition agent_ids() const;

    int total_state_dim() const { return total_state_dim_; }
    int total_input_dim() const { return total_input_dim_; }

    /// Offset of agent id's state (input) block inside the stacked global
    /// state (input) vector.
    int state_offset(AgentId id) const;
    int input_offset(AgentId id) const;

private:
    std::vector<SubsystemModel> subsystems_; // sorted by id
    std::map<AgentId, std::size_t> index_;
    std::vector<int> state_offsets_;
    std::vector<int> input_offsets_;
    int total_state_dim_ = 0;
    int total_input_dim_ = 0;
};

/// Undirected communication graph over the agent set.
struct CommGraph {
    std::set<AgentId> agents;
    std::set<std::pair<AgentId, AgentId>> edges; // stored with first < second

    void add_edge(AgentId a, AgentId b);
    bool has_edge(AgentId a, AgentId b) const;
    void validate() const;
};

/// A partition of the agent set into disjoint coalitions.
struct CoalitionStructure {
    std::vector<Coalition> coalitions; // each sorted; list sorted by smallest member

    void validate(const Coalition& all_agents) const;
    std::size_t coalition_of(AgentId id) const; // index into coalitions
    bool operator==(const CoalitionStructure& other) const { return coalitions == other.coalitions; }
};

/// Cross blocks that reach a coalition member from an agent outside the
/// coalition; used to evaluate the external coupling disturbance.
struct ExternalLink {
    int member_index;   // position of the affected member in `members`
    AgentId neighbor;   // the external agent
    Mat A;              // n_member x n_neighbor
    Mat B;              // n_member x q_neighbor
};

/// The aggregated dynamics of one coalition: block matrices in member order,
/// stacked boxes, and the links to external neighbors.
struct CoalitionModel {
    Coalition members;
    Mat A_coal;
    Mat B_coal;
    Box state_box;
    Box input_box;
    Coalition external_neighbors;
    std::vector<ExternalLink> external_links;
    std::vector<int> member_state_offsets; // offsets inside the coalition vectors
    std::vector<int> member_input_offsets;

    int state_dim() const { return static_cast<int>(A_coal.rows()); }
    int input_dim() const { return static_cast<int>(B_coal.cols()); }
    int member_state_dim(std::size_t k) const;
    int member_input_dim(std::size_t k) const;
};

/// Continuous-time area dynamics used only as discretization input. The load
/// enters through a dedicated disturbance column.
struct ContinuousAreaModel {
    AgentId id = 0;
    Mat A_self;
    Mat B_self;
    Mat D_load; // n x n_d (one column for the benchmark)
    std::map<AgentId, CouplingBlock> couplings;
    Box state_box;
    Box input_box;
};

/// Discretization result: the subsystem model plus the discretized load
/// channel, which the plant (not the subsystem contract) owns.
struct DiscretizedArea {
    SubsystemModel model;
    Mat D_load;
};

// ---- operations ------------------------------------------------------------

/// Ids j with a nonzero coupling block toward agent i. Throws on unknown id.
Coalition neighbors(const ModelSet& models, AgentId i);

/// Maximal connected components, listed in ascending order of their smallest
/// member.
CoalitionStructure connected_components(const CommGraph& graph);

/// Assemble the block matrices of a coalition in ascending member order.
/// Throws on unknown member ids.
CoalitionModel aggregate_coalition(const ModelSet& models, const Coalition& members);

/// Disturbance each member receives from outside the coalition, evaluated at
/// the given global state and input (Jacobian blocks times neighbor values).
Vec external_coupling(const CoalitionModel& coalition, const ModelSet& models,
                      const Vec& global_state, const Vec& global_input);

/// Stacked global transition matrices.
Mat global_A(const ModelSet& models);
Mat global_B(const ModelSet& models);

/// One step of the full plant, x+ = A x + B u.
Vec step_global(const ModelSet& models, const Vec& x, const Vec& u);

/// exp(A * t) via scaling-and-squaring with Pade approximants.
Mat matrix_exponential(const Mat& A, double t);

/// Integral of exp(A s) over [0, Ts], via the augmented-matrix exponential.
Mat matrix_exponential_integral(const Mat& A, double Ts);

/// Exact ZOH on the local dynamics, with every exogenous channel (local
/// input, load, neighbor states/inputs) mapped through the same integral so
/// that the coupling sparsity pattern survives discretization.
DiscretizedArea discretize_area(const ContinuousAreaModel& area, double Ts);

} // namespace coalmpc

#endif // COALMPC_LTI_HPP
