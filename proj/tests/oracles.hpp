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

// Test-only oracles, kept independent of the library's solve paths: dense
// active-set enumeration for QPs, an affine Riccati recursion for tracking
// LQ problems, dense condensing for MPC builds, and an eigendecomposition
// route for the matrix exponential.

#ifndef COALMPC_TESTS_ORACLES_HPP
#define COALMPC_TESTS_ORACLES_HPP

#include "coalmpc/rng.hpp"
#include "coalmpc/types.hpp"

#include <optional>
#include <vector>

namespace coalmpc::oracles {

/// Dense inequality-only QP: minimize 0.5 z'Hz + g'z + c0 s.t. A z <= b.
struct DenseQp {
    Mat H;
    Vec g;
    double c0 = 0.0;
    Mat A;
    Vec b;
};

struct EnumResult {
    bool feasible = false;
    double objective = 0.0;
    Vec z;
};

/// Global optimum by enumerating every candidate active set (requires H
/// positive definite and at most ~20 rows).
EnumResult enumerate_qp(const DenseQp& qp);

/// Finite-horizon tracking LQ solution by backward affine Riccati recursion
/// and a forward rollout. Stage cost (x-xr)'Q(x-xr) + (u-ur)'R(u-ur) for
/// t = 0..N-1 plus terminal (x_N - xr_N)' Qf (x_N - xr_N).
struct RiccatiResult {
    std::vector<Vec> inputs; // u_0..u_{N-1}
    std::vector<Vec> states; // x_1..x_N
    double cost = 0.0;       // includes the constant t=0 state term and the terminal term
};

RiccatiResult riccati_tracking(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                               const Mat& Qf, const Vec& x0, const std::vector<Vec>& x_refs,
                               const std::vector<Vec>& u_refs);

/// Dense condensed tracking QP over the stacked inputs; states eliminated by
/// substitution. Returns the condensed problem with input-box rows.
DenseQp condense_tracking(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& Qf,
                          const Vec& x0, const std::vector<Vec>& x_refs,
                          const std::vector<Vec>& u_refs, const Vec& u_lower, const Vec& u_upper,
                          int Np);

/// exp(A t) through the eigendecomposition (valid for diagonalizable A).
Mat expm_eig(const Mat& A, double t);

// random problem generators (deterministic given the rng)
Mat random_matrix(Rng& rng, int rows, int cols, double scale = 1.0);
Mat random_spd(Rng& rng, int n, double min_eig = 0.1);
Mat random_stable(Rng& rng, int n, double spectral_radius = 0.9);

} // namespace coalmpc::oracles

#endif // COALMPC_TESTS_ORACLES_HPP
