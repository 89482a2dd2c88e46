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

#ifndef COALMPC_QP_HPP
#define COALMPC_QP_HPP

#include "coalmpc/types.hpp"

#include <Eigen/Sparse>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace coalmpc {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Convex quadratic program
///   minimize    0.5 z' H z + g' z + c0
///   subject to  A_ineq z <= b_ineq,  A_eq z = b_eq
/// with H symmetric positive semidefinite.
struct QuadraticProgram {
    int num_vars = 0;
    SpMat H;
    Vec g;
    double c0 = 0.0;
    SpMat A_ineq;
    Vec b_ineq;
    SpMat A_eq;
    Vec b_eq;

    double objective(const Vec& z) const;
    void validate() const;
};

/// Incremental triplet-based builder; keeps QP assembly code readable.
class QpBuilder {
public:
    explicit QpBuilder(int num_vars) : n_(num_vars), g_(Vec::Zero(num_vars)) {}

    void add_quadratic(int i, int j, double v); // contributes v * z_i * z_j to the cost
    void add_linear(int i, double v) { g_[i] += v; }
    void add_constant(double v) { c0_ += v; }

    /// Adds 0.5 * (z_seg - ref)' W (z_seg - ref) for the variable block
    /// starting at `offset`; skips zero entries of W.
    void add_quadratic_form(int offset, const Mat& W, const Vec& ref);

    int begin_ineq_row(); // returns row index
    int begin_eq_row();
    void ineq_coeff(int row, int col, double v) { ineq_trip_.emplace_back(row, col, v); }
    void eq_coeff(int row, int col, double v) { eq_trip_.emplace_back(row, col, v); }
    void set_ineq_rhs(int row, double v) { b_ineq_[row] = v; }
    void set_eq_rhs(int row, double v) { b_eq_[row] = v; }

    QuadraticProgram build() const;

private:
    int n_;
    std::vector<Triplet> h_trip_;
    Vec g_;
    double c0_ = 0.0;
    std::vector<Triplet> ineq_trip_;
    std::vector<Triplet> eq_trip_;
    std::vector<double> b_ineq_;
    std::vector<double> b_eq_;
};

enum class QpStatus { solved, infeasible, max_iterations };

std::string to_string(QpStatus s);

struct QpSolution {
    Vec z;
    Vec dual_ineq; // >= 0 at a solution
    Vec dual_eq;
    double objective = 0.0;
    QpStatus status = QpStatus::max_iterations;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    bool polished = false;
};

struct QpSettings {
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    double eps_infeasible = 1e-8;
    int max_iterations = 20000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6; // over-relaxation
    int check_interval = 25;
    bool adaptive_rho = true;
    bool scaling = true;
    int scaling_iterations = 10;
    bool polish = true;
    double polish_delta = 1e-8;
    int polish_refine_iterations = 10;
};

/// Operator-splitting (ADMM) solve with a final equality-constrained polish on
/// the detected active set. Returns the best iterate with status
/// `max_iterations` when the tolerance is not reached.
QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& settings = {},
                    const Vec* warm_primal = nullptr);

/// Plain-text dump (matrix-market-style coordinate triplets) for external
/// verification of any QP.
void write_qp(const QuadraticProgram& qp, std::ostream& os);
void write_qp_file(const QuadraticProgram& qp, const std::string& path);

} // namespace coalmpc

#endif // COALMPC_QP_HPP
