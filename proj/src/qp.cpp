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

#include "coalmpc/qp.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace coalmpc {

double QuadraticProgram::objective(const Vec& z) const
{
    return 0.5 * z.dot(H * z) + g.dot(z) + c0;
}

void QuadraticProgram::validate() const
{
    if (H.rows() != num_vars || H.cols() != num_vars)
        throw std::invalid_argument("H dimension mismatch");
    if (g.size() != num_vars) throw std::invalid_argument("g dimension mismatch");
    if (A_ineq.rows() != b_ineq.size() || (A_ineq.rows() > 0 && A_ineq.cols() != num_vars))
        throw std::invalid_argument("inequality block dimension mismatch");
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != num_vars))
        throw std::invalid_argument("equality block dimension mismatch");
}

void QpBuilder::add_quadratic(int i, int j, double v)
{
    // adds v * z_i * z_j to the objective (H holds twice the quadratic form)
    if (v == 0.0) return;
    if (i == j) {
        h_trip_.emplace_back(i, i, 2.0 * v);
    } else {
        h_trip_.emplace_back(i, j, v);
        h_trip_.emplace_back(j, i, v);
    }
}

void QpBuilder::add_quadratic_form(int offset, const Mat& W, const Vec& ref)
{
    // adds (z_seg - ref)' W (z_seg - ref) to the objective
    for (int r = 0; r < W.rows(); ++r) {
        for (int c = 0; c < W.cols(); ++c) {
            const double w = W(r, c);
            if (w == 0.0) continue;
            h_trip_.emplace_back(offset + r, offset + c, 2.0 * w);
            g_[offset + r] += -2.0 * w * ref[c];
        }
    }
    c0_ += ref.dot(W * ref);
}

int QpBuilder::begin_ineq_row()
{
    b_ineq_.push_back(0.0);
    return static_cast<int>(b_ineq_.size()) - 1;
}

int QpBuilder::begin_eq_row()
{
    b_eq_.push_back(0.0);
    return static_cast<int>(b_eq_.size()) - 1;
}

QuadraticProgram QpBuilder::build() const
{
    QuadraticProgram qp;
    qp.num_vars = n_;
    qp.H.resize(n_, n_);
    qp.H.setFromTriplets(h_trip_.begin(), h_trip_.end());
    qp.g = g_;
    qp.c0 = c0_;
    qp.A_ineq.resize(static_cast<int>(b_ineq_.size()), n_);
    qp.A_ineq.setFromTriplets(ineq_trip_.begin(), ineq_trip_.end());
    qp.b_ineq = Eigen::Map<const Vec>(b_ineq_.data(), static_cast<Eigen::Index>(b_ineq_.size()));
    qp.A_eq.resize(static_cast<int>(b_eq_.size()), n_);
    qp.A_eq.setFromTriplets(eq_trip_.begin(), eq_trip_.end());
    qp.b_eq = Eigen::Map<const Vec>(b_eq_.data(), static_cast<Eigen::Index>(b_eq_.size()));
    qp.validate();
    return qp;
}

std::string to_string(QpStatus s)
{
    switch (s) {
    case QpStatus::solved: return "solved";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max_iterations";
    }
    return "unknown";
}

namespace {

constexpr double kMinScale = 1e-4;
constexpr double kMaxScale = 1e4;

double safe_inv_sqrt(double v)
{
    if (v < 1e-10) return 1.0;
    return 1.0 / std::sqrt(std::min(std::max(v, kMinScale), kMaxScale));
}

struct Workspace {
    int n = 0;
    int m = 0;       // m_eq + m_ineq, equalities first
    int m_eq = 0;
    SpMat H;         // scaled
    Vec g;           // scaled
    SpMat A;         // scaled, stacked
    SpMat At;
    Vec lower;       // scaled bounds: equalities have lower == upper
    Vec upper;
    Vec d_scale;     // variable scaling D (diagonal)
    Vec e_scale;     // constraint scaling E
    double c_scale = 1.0;
    Vec rho;         // per-row penalty
    double rho_bar = 0.1;

    Eigen::SimplicialLDLT<SpMat> kkt;
    bool pattern_analyzed = false;

    void factorize(double sigma)
    {
        std::vector<Triplet> trips;
        trips.reserve(H.nonZeros() + 2 * A.nonZeros() + n + m);
        for (int k = 0; k < H.outerSize(); ++k)
            for (SpMat::InnerIterator it(H, k); it; ++it)
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int i = 0; i < n; ++i) trips.emplace_back(i, i, sigma);
        for (int k = 0; k < A.outerSize(); ++k)
            for (SpMat::InnerIterator it(A, k); it; ++it) {
                trips.emplace_back(n + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
                trips.emplace_back(static_cast<int>(it.col()), n + static_cast<int>(it.row()), it.value());
            }
        for (int i = 0; i < m; ++i) trips.emplace_back(n + i, n + i, -1.0 / rho[i]);

        SpMat kkt_mat(n + m, n + m);
        kkt_mat.setFromTriplets(trips.begin(), trips.end());
        if (!pattern_analyzed) {
            kkt.analyzePattern(kkt_mat);
            pattern_analyzed = true;
        }
        kkt.factorize(kkt_mat);
        if (kkt.info() != Eigen::Success)
            throw std::runtime_error("KKT factorization failed");
    }
};

void build_workspace(const QuadraticProgram& qp, const QpSettings& st, Workspace& w)
{
    w.n = qp.num_vars;
    w.m_eq = static_cast<int>(qp.A_eq.rows());
    const int m_ineq = static_cast<int>(qp.A_ineq.rows());
    w.m = w.m_eq + m_ineq;

    w.H = qp.H;
    w.g = qp.g;
    w.lower.resize(w.m);
    w.upper.resize(w.m);
    std::vector<Triplet> atrips;
    atrips.reserve(qp.A_eq.nonZeros() + qp.A_ineq.nonZeros());
    for (int k = 0; k < qp.A_eq.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.A_eq, k); it; ++it)
            atrips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < qp.A_ineq.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.A_ineq, k); it; ++it)
            atrips.emplace_back(w.m_eq + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    w.A.resize(w.m, w.n);
    w.A.setFromTriplets(atrips.begin(), atrips.end());
    w.lower.head(w.m_eq) = qp.b_eq;
    w.upper.head(w.m_eq) = qp.b_eq;
    w.lower.tail(m_ineq).setConstant(-infinity());
    w.upper.tail(m_ineq) = qp.b_ineq;

    w.d_scale = Vec::Ones(w.n);
    w.e_scale = Vec::Ones(w.m);
    w.c_scale = 1.0;

    if (st.scaling && (w.n > 0)) {
        // modified Ruiz equilibration on [H A'; A 0], then cost normalization
        for (int iter = 0; iter < st.scaling_iterations; ++iter) {
            Vec col_norm = Vec::Zero(w.n);
            for (int k = 0; k < w.H.outerSize(); ++k)
                for (SpMat::InnerIterator it(w.H, k); it; ++it)
                    col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
            Vec row_norm = Vec::Zero(w.m);
            for (int k = 0; k < w.A.outerSize(); ++k)
                for (SpMat::InnerIterator it(w.A, k); it; ++it) {
                    col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
                    row_norm[it.row()] = std::max(row_norm[it.row()], std::abs(it.value()));
                }
            Vec dd(w.n), de(w.m);
            for (int i = 0; i < w.n; ++i) dd[i] = safe_inv_sqrt(col_norm[i]);
            for (int i = 0; i < w.m; ++i) de[i] = safe_inv_sqrt(row_norm[i]);

            w.H = dd.asDiagonal() * w.H * dd.asDiagonal();
            w.g = dd.asDiagonal() * w.g;
            w.A = de.asDiagonal() * w.A * dd.asDiagonal();
            w.d_scale = w.d_scale.cwiseProduct(dd);
            w.e_scale = w.e_scale.cwiseProduct(de);

            // cost scaling
            Vec h_col = Vec::Zero(w.n);
            for (int k = 0; k < w.H.outerSize(); ++k)
                for (SpMat::InnerIterator it(w.H, k); it; ++it)
                    h_col[it.col()] = std::max(h_col[it.col()], std::abs(it.value()));
            const double mean_h = w.n > 0 ? h_col.mean() : 0.0;
            const double g_norm = w.g.size() > 0 ? w.g.lpNorm<Eigen::Infinity>() : 0.0;
            double gamma = std::max(mean_h, g_norm);
            gamma = (gamma < 1e-10) ? 1.0 : 1.0 / std::min(std::max(gamma, kMinScale), kMaxScale);
            w.H *= gamma;
            w.g *= gamma;
            w.c_scale *= gamma;
        }
        for (int i = 0; i < w.m; ++i) {
            if (std::isfinite(w.lower[i])) w.lower[i] *= w.e_scale[i];
            if (std::isfinite(w.upper[i])) w.upper[i] *= w.e_scale[i];
        }
    }

    w.rho_bar = st.rho;
    w.rho.resize(w.m);
    for (int i = 0; i < w.m; ++i) w.rho[i] = (i < w.m_eq) ? w.rho_bar * 1e3 : w.rho_bar;
}

struct Residuals {
    double prim = 0.0;
    double dual = 0.0;
    double prim_rel_den = 0.0;
    double dual_rel_den = 0.0;
};

Residuals unscaled_residuals(const Workspace& w, const Vec& x, const Vec& z, const Vec& y)
{
    Residuals r;
    const Vec ax = w.A * x;
    const Vec einv_ax = ax.cwiseQuotient(w.e_scale);
    const Vec einv_z = z.cwiseQuotient(w.e_scale);
    if (w.m > 0) {
        r.prim = (einv_ax - einv_z).lpNorm<Eigen::Infinity>();
        r.prim_rel_den = std::max(einv_ax.lpNorm<Eigen::Infinity>(), einv_z.lpNorm<Eigen::Infinity>());
    }
    const Vec hx = w.H * x;
    const Vec aty = w.At * y;
    const Vec dinv = w.d_scale.cwiseInverse();
    const double cinv = 1.0 / w.c_scale;
    r.dual = cinv * (dinv.cwiseProduct(hx + w.g + aty)).lpNorm<Eigen::Infinity>();
    r.dual_rel_den = cinv * std::max({(dinv.cwiseProduct(hx)).lpNorm<Eigen::Infinity>(),
                                      (dinv.cwiseProduct(w.g)).lpNorm<Eigen::Infinity>(),
                                      (dinv.cwiseProduct(aty)).lpNorm<Eigen::Infinity>()});
    return r;
}

bool primal_infeasibility_certificate(const Workspace& w, const Vec& dy, double eps)
{
    // dy is the unscaled dual delta; a valid certificate has A' dy ~ 0 and a
    // strictly negative support function value at the bounds.
    const double dy_norm = dy.lpNorm<Eigen::Infinity>();
    if (dy_norm < 1e-14) return false;
    // A_unscaled' dy = D^-1 A_scaled' E^-1 dy
    const Vec at_dy =
        w.d_scale.cwiseInverse().asDiagonal() * (w.At * dy.cwiseQuotient(w.e_scale));
    if (at_dy.lpNorm<Eigen::Infinity>() > eps * dy_norm) return false;

    double support = 0.0;
    for (int i = 0; i < w.m; ++i) {
        const double lo = std::isfinite(w.lower[i]) ? w.lower[i] / w.e_scale[i] : -infinity();
        const double hi = std::isfinite(w.upper[i]) ? w.upper[i] / w.e_scale[i] : infinity();
        const double pos = std::max(dy[i], 0.0);
        const double neg = std::min(dy[i], 0.0);
        if (pos > eps * dy_norm && !std::isfinite(hi)) return false;
        if (neg < -eps * dy_norm && !std::isfinite(lo)) return false;
        if (std::isfinite(hi)) support += hi * pos;
        if (std::isfinite(lo)) support += lo * neg;
    }
    return support < -eps * dy_norm;
}

// Equality-constrained re-solve on the detected active set, in the original
// (unscaled) data. Returns true when the refit improves the KKT residuals.
bool polish(const QuadraticProgram& qp, const QpSettings& st, const Vec& lower_un,
            const Vec& upper_un, int m_eq, QpSolution& sol)
{
    const int n = qp.num_vars;
    const int m_ineq = static_cast<int>(qp.A_ineq.rows());

    SpMat A_full(m_eq + m_ineq, n);
    {
        std::vector<Triplet> t;
        for (int k = 0; k < qp.A_eq.outerSize(); ++k)
            for (SpMat::InnerIterator it(qp.A_eq, k); it; ++it)
                t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int k = 0; k < qp.A_ineq.outerSize(); ++k)
            for (SpMat::InnerIterator it(qp.A_ineq, k); it; ++it)
                t.emplace_back(m_eq + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        A_full.setFromTriplets(t.begin(), t.end());
    }

    Vec y_full(m_eq + m_ineq);
    y_full.head(m_eq) = sol.dual_eq;
    y_full.tail(m_ineq) = sol.dual_ineq;

    const Vec ax = A_full * sol.z;
    std::vector<int> active;
    active.reserve(m_eq + m_ineq);
    for (int i = 0; i < m_eq; ++i) active.push_back(i);
    const double act_tol = 1e-7;
    for (int i = 0; i < m_ineq; ++i) {
        const int row = m_eq + i;
        const double slack = upper_un[row] - ax[row];
        if (sol.dual_ineq[i] > 100 * std::numeric_limits<double>::epsilon() ||
            slack < act_tol * (1.0 + std::abs(upper_un[row])))
            active.push_back(row);
    }
    const int ma = static_cast<int>(active.size());

    // KKT of the active-set equality problem, regularized to stay quasi-definite
    std::vector<Triplet> trips;
    for (int k = 0; k < qp.H.outerSize(); ++k)
        for (SpMat::InnerIterator it(qp.H, k); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, st.polish_delta);
    // A_full is column-major; gather active rows via one pass over the nonzeros
    for (int k = 0; k < A_full.outerSize(); ++k)
        for (SpMat::InnerIterator it(A_full, k); it; ++it) {
            const auto pos = std::lower_bound(active.begin(), active.end(), static_cast<int>(it.row()));
            if (pos != active.end() && *pos == static_cast<int>(it.row())) {
                const int a = static_cast<int>(pos - active.begin());
                trips.emplace_back(n + a, static_cast<int>(it.col()), it.value());
                trips.emplace_back(static_cast<int>(it.col()), n + a, it.value());
            }
        }
    for (int a = 0; a < ma; ++a) trips.emplace_back(n + a, n + a, -st.polish_delta);

    SpMat kkt(n + ma, n + ma);
    kkt.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<SpMat> ldlt(kkt);
    if (ldlt.info() != Eigen::Success) return false;

    Vec rhs(n + ma);
    rhs.head(n) = -qp.g;
    for (int a = 0; a < ma; ++a) rhs[n + a] = upper_un[active[a]];

    // iterative refinement against the unregularized KKT operator
    const auto apply_unreg = [&](const Vec& t) {
        Vec out(n + ma);
        Vec xz = t.head(n);
        Vec nu = t.tail(ma);
        Vec hax = qp.H * xz;
        Vec at_nu = Vec::Zero(n);
        Vec a_x = Vec::Zero(ma);
        for (int k = 0; k < A_full.outerSize(); ++k)
            for (SpMat::InnerIterator it(A_full, k); it; ++it) {
                const auto pos = std::lower_bound(active.begin(), active.end(), static_cast<int>(it.row()));
                if (pos != active.end() && *pos == static_cast<int>(it.row())) {
                    const int a = static_cast<int>(pos - active.begin());
                    at_nu[it.col()] += it.value() * nu[a];
                    a_x[a] += it.value() * xz[it.col()];
                }
            }
        out.head(n) = hax + at_nu;
        out.tail(ma) = a_x;
        return out;
    };

    Vec t = Vec::Zero(n + ma);
    for (int i = 0; i < st.polish_refine_iterations; ++i) {
        const Vec resid = rhs - apply_unreg(t);
        t += ldlt.solve(resid);
    }

    Vec z_new = t.head(n);
    Vec y_active = t.tail(ma);

    // validate: inactive rows feasible, KKT residuals no worse
    Vec y_new_ineq = Vec::Zero(m_ineq);
    Vec y_new_eq(m_eq);
    for (int a = 0; a < ma; ++a) {
        const int row = active[a];
        if (row < m_eq) y_new_eq[row] = y_active[a];
        else y_new_ineq[row - m_eq] = y_active[a];
    }
    const Vec ax_new = A_full * z_new;
    double prim = 0.0;
    for (int i = 0; i < m_eq + m_ineq; ++i) {
        const double over = ax_new[i] - upper_un[i];
        const double under = std::isfinite(lower_un[i]) ? lower_un[i] - ax_new[i] : -infinity();
        prim = std::max({prim, over, under});
    }
    for (int i = 0; i < m_ineq; ++i)
        if (y_new_ineq[i] < -1e-9) return false; // wrong-sign multiplier: bad active set

    Vec dual_vec = qp.H * z_new + qp.g;
    if (m_eq > 0) dual_vec += qp.A_eq.transpose() * y_new_eq;
    if (m_ineq > 0) dual_vec += qp.A_ineq.transpose() * y_new_ineq;
    const double dual = dual_vec.lpNorm<Eigen::Infinity>();

    const double before = std::max(sol.primal_residual, sol.dual_residual);
    if (std::max(prim, dual) <= std::max(before, 1e-12)) {
        sol.z = z_new;
        sol.dual_eq = y_new_eq;
        sol.dual_ineq = y_new_ineq.cwiseMax(0.0);
        sol.primal_residual = std::max(prim, 0.0);
        sol.dual_residual = dual;
        sol.polished = true;
        return true;
    }
    return false;
}

} // namespace

QpSolution solve_qp(const QuadraticProgram& qp, const QpSettings& st, const Vec* warm_primal)
{
    qp.validate();
    const int n = qp.num_vars;
    const int m_eq = static_cast<int>(qp.A_eq.rows());
    const int m_ineq = static_cast<int>(qp.A_ineq.rows());

    Workspace w;
    build_workspace(qp, st, w);
    w.At = SpMat(w.A.transpose());
    w.factorize(st.sigma);

    Vec x = Vec::Zero(n);
    if (warm_primal != nullptr && warm_primal->size() == n)
        x = w.d_scale.cwiseInverse().cwiseProduct(*warm_primal);
    Vec z = w.A * x;
    for (int i = 0; i < w.m; ++i) z[i] = std::min(std::max(z[i], w.lower[i]), w.upper[i]);
    Vec y = Vec::Zero(w.m);

    QpSolution sol;
    sol.status = QpStatus::max_iterations;

    Vec rhs(n + w.m), xz_tilde(n + w.m);
    Vec y_prev_unscaled = Vec::Zero(w.m);
    int iter = 0;
    int last_refactor = 0;

    const auto unscale_y = [&](const Vec& ys) { return Vec(w.e_scale.cwiseProduct(ys) / w.c_scale); };

    for (iter = 1; iter <= st.max_iterations; ++iter) {
        rhs.head(n) = st.sigma * x - w.g;
        rhs.tail(w.m) = z - y.cwiseQuotient(w.rho);
        xz_tilde = w.kkt.solve(rhs);

        const Vec x_tilde = xz_tilde.head(n);
        Vec z_tilde = z + (xz_tilde.tail(w.m) - y).cwiseQuotient(w.rho);

        x = st.alpha * x_tilde + (1.0 - st.alpha) * x;
        const Vec z_relax = st.alpha * z_tilde + (1.0 - st.alpha) * z;
        Vec z_next = z_relax + y.cwiseQuotient(w.rho);
        for (int i = 0; i < w.m; ++i)
            z_next[i] = std::min(std::max(z_next[i], w.lower[i]), w.upper[i]);
        y += w.rho.cwiseProduct(z_relax - z_next);
        z = z_next;

        if (iter % st.check_interval == 0 || iter == st.max_iterations) {
            const Residuals r = unscaled_residuals(w, x, z, y);
            const double eps_prim = st.eps_abs + st.eps_rel * r.prim_rel_den;
            const double eps_dual = st.eps_abs + st.eps_rel * r.dual_rel_den;
            sol.primal_residual = r.prim;
            sol.dual_residual = r.dual;
            if ((w.m == 0 || r.prim <= eps_prim) && r.dual <= eps_dual) {
                sol.status = QpStatus::solved;
                break;
            }

            const Vec y_un = unscale_y(y);
            const Vec dy = y_un - y_prev_unscaled;
            if (w.m > 0 && primal_infeasibility_certificate(w, dy, st.eps_infeasible)) {
                sol.status = QpStatus::infeasible;
                break;
            }
            y_prev_unscaled = y_un;

            if (st.adaptive_rho && w.m > 0 && iter - last_refactor >= 100) {
                const double num = r.prim / std::max(r.prim_rel_den, 1e-10);
                const double den = r.dual / std::max(r.dual_rel_den, 1e-10);
                const double ratio = std::sqrt(num / std::max(den, 1e-16));
                if (ratio > 5.0 || ratio < 0.2) {
                    w.rho_bar = std::min(std::max(w.rho_bar * ratio, 1e-6), 1e6);
                    for (int i = 0; i < w.m; ++i)
                        w.rho[i] = (i < w.m_eq) ? w.rho_bar * 1e3 : w.rho_bar;
                    w.factorize(st.sigma);
                    last_refactor = iter;
                }
            }
        }
    }
    sol.iterations = std::min(iter, st.max_iterations);

    // recover unscaled solution
    sol.z = w.d_scale.cwiseProduct(x);
    const Vec y_un = unscale_y(y);
    sol.dual_eq = y_un.head(m_eq);
    sol.dual_ineq = y_un.tail(m_ineq).cwiseMax(0.0);

    if (sol.status != QpStatus::infeasible && st.polish) {
        Vec lower_un(w.m), upper_un(w.m);
        lower_un.head(m_eq) = qp.b_eq;
        upper_un.head(m_eq) = qp.b_eq;
        lower_un.tail(m_ineq).setConstant(-infinity());
        upper_un.tail(m_ineq) = qp.b_ineq;
        polish(qp, st, lower_un, upper_un, m_eq, sol);
        if (sol.status == QpStatus::max_iterations) {
            // polishing may still have produced a tight solution
            if (sol.primal_residual <= st.eps_abs * 10 && sol.dual_residual <= st.eps_abs * 10)
                sol.status = QpStatus::solved;
        }
    }
    sol.objective = qp.objective(sol.z);
    return sol;
}

void write_qp(const QuadraticProgram& qp, std::ostream& os)
{
    char buf[64];
    const auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf;
    };
    const auto emit_matrix = [&](const char* name, const SpMat& M) {
        os << name << " " << M.rows() << " " << M.cols() << " " << M.nonZeros() << "\n";
        for (int k = 0; k < M.outerSize(); ++k)
            for (SpMat::InnerIterator it(M, k); it; ++it) {
                os << it.row() + 1 << " " << it.col() + 1 << " ";
                emit(it.value());
                os << "\n";
            }
    };
    const auto emit_vector = [&](const char* name, const Vec& v) {
        os << name << " " << v.size() << "\n";
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            emit(v[i]);
            os << "\n";
        }
    };
    os << "%%qp objective 0.5 z'Hz + g'z + c0; A_ineq z <= b_ineq; A_eq z = b_eq\n";
    os << "vars " << qp.num_vars << "\n";
    os << "c0 ";
    emit(qp.c0);
    os << "\n";
    emit_matrix("H", qp.H);
    emit_vector("g", qp.g);
    emit_matrix("A_ineq", qp.A_ineq);
    emit_vector("b_ineq", qp.b_ineq);
    emit_matrix("A_eq", qp.A_eq);
    emit_vector("b_eq", qp.b_eq);
}

void write_qp_file(const QuadraticProgram& qp, const std::string& path)
{
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_qp(qp, os);
}

} // namespace coalmpc
