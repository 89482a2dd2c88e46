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

#ifndef COALMPC_TYPES_HPP
#define COALMPC_TYPES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <string>
#include <vector>

namespace coalmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using AgentId = int;

/// A coalition is a sorted list of agent ids (ascending everywhere, so block
/// layouts are reproducible).
using Coalition = std::vector<AgentId>;

inline Coalition sorted_coalition(Coalition c)
{
    std::sort(c.begin(), c.end());
    return c;
}

inline bool contains(const Coalition& c, AgentId id)
{
    return std::binary_search(c.begin(), c.end(), id);
}

/// Set difference of two sorted coalitions.
inline Coalition coalition_difference(const Coalition& a, const Coalition& b)
{
    Coalition out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

/// Union of two sorted coalitions.
inline Coalition coalition_union(const Coalition& a, const Coalition& b)
{
    Coalition out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline std::string coalition_to_string(const Coalition& c)
{
    std::string s = "{";
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i > 0) s += ",";
        s += std::to_string(c[i]);
    }
    return s + "}";
}

inline double infinity()
{
    return std::numeric_limits<double>::infinity();
}

} // namespace coalmpc

#endif // COALMPC_TYPES_HPP
