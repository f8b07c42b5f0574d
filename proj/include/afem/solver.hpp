#ifndef AFEM_SOLVER_HPP
#define AFEM_SOLVER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include "afem/sparse.hpp"

namespace afem {

enum class SolveStatus { Solved, Singular };

struct SolveOutcome {
    SolveStatus status = SolveStatus::Singular;
    std::vector<double> solution;      // valid when Solved
    double pivot_floor = 0.0;          // smallest |pivot| / max |A_ij|
    double relative_residual = 0.0;    // ||Ax-b|| / ||b||, when Solved
    bool solved() const { return status == SolveStatus::Solved; }
};

/// Sparse LU with partial pivoting (left-looking, Gilbert-Peierls) on a
/// fill-reducing AMD column ordering. Factorisation keeps every pivot
/// visible: a pivot below rel_tol times the largest input entry makes the
/// matrix numerically singular. Deterministic for identical input bits.
class SparseLU {
public:
    static constexpr double kPivotRelTol = 1e-12;

    bool factor(const SparseMatrix& A, double rel_tol = kPivotRelTol) {
        n_ = A.n;
        singular_ = false;
        pivot_floor_ = 0.0;
        if (n_ == 0) return true;

        const double max_abs = A.max_abs();
        if (max_abs == 0.0) {
            singular_ = true;
            return false;
        }
        const double floor = rel_tol * max_abs;

        // CSC copy of A
        std::vector<int> cptr(n_ + 1, 0), crow(A.nnz());
        std::vector<double> cval(A.nnz());
        for (int k = 0; k < A.nnz(); ++k) ++cptr[A.col[k] + 1];
        for (int c = 0; c < n_; ++c) cptr[c + 1] += cptr[c];
        {
            std::vector<int> next(cptr.begin(), cptr.end() - 1);
            for (int r = 0; r < n_; ++r)
                for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) {
                    const int p = next[A.col[k]]++;
                    crow[p] = r;
                    cval[p] = A.val[k];
                }
        }

        order_ = amd_order(A);

        Lcol_.assign(n_, {});
        Ucol_.assign(n_, {});
        udiag_.assign(n_, 0.0);
        pinv_.assign(n_, -1);

        std::vector<double> x(n_, 0.0);
        std::vector<int> stamp(n_, -1), reach, dfs_stack, dfs_edge;
        reach.reserve(n_);
        pivot_floor_ = std::numeric_limits<double>::infinity();

        for (int j = 0; j < n_; ++j) {
            const int c = order_[j];
            // symbolic: rows reachable from the pattern of A(:,c) through L
            reach.clear();
            for (int p = cptr[c]; p < cptr[c + 1]; ++p) {
                int r = crow[p];
                if (stamp[r] == j) continue;
                dfs_stack.clear();
                dfs_edge.clear();
                dfs_stack.push_back(r);
                dfs_edge.push_back(0);
                stamp[r] = j;
                while (!dfs_stack.empty()) {
                    const int node = dfs_stack.back();
                    const int k = pinv_[node];
                    bool descended = false;
                    if (k >= 0) {
                        auto& Lk = Lcol_[k];
                        for (int& e = dfs_edge.back(); e < static_cast<int>(Lk.size());) {
                            const int child = Lk[e++].first;
                            if (stamp[child] != j) {
                                stamp[child] = j;
                                dfs_stack.push_back(child);
                                dfs_edge.push_back(0);
                                descended = true;
                                break;
                            }
                        }
                    }
                    if (!descended) {
                        reach.push_back(node);
                        dfs_stack.pop_back();
                        dfs_edge.pop_back();
                    }
                }
            }
            // numeric sparse triangular solve in topological (reverse) order
            for (int r : reach) x[r] = 0.0;
            for (int p = cptr[c]; p < cptr[c + 1]; ++p) x[crow[p]] = cval[p];
            for (auto it = reach.rbegin(); it != reach.rend(); ++it) {
                const int r = *it;
                const int k = pinv_[r];
                if (k < 0) continue;
                const double xr = x[r];
                if (xr == 0.0) continue;
                for (const auto& [rr, lv] : Lcol_[k]) x[rr] -= lv * xr;
            }
            // partial pivoting over not-yet-pivotal rows
            int ipiv = -1;
            double pmax = -1.0;
            for (int r : reach) {
                if (pinv_[r] >= 0) continue;
                const double a = std::abs(x[r]);
                if (a > pmax || (a == pmax && (ipiv < 0 || r < ipiv))) {
                    pmax = a;
                    ipiv = r;
                }
            }
            if (ipiv < 0 || pmax < floor || pmax == 0.0) {
                pivot_floor_ = std::min(pivot_floor_, std::max(pmax, 0.0) / max_abs);
                singular_ = true;
                return false;
            }
            pivot_floor_ = std::min(pivot_floor_, pmax / max_abs);
            pinv_[ipiv] = j;
            udiag_[j] = x[ipiv];
            for (int r : reach) {
                if (r == ipiv) continue;
                if (pinv_[r] >= 0 && pinv_[r] < j) {
                    if (x[r] != 0.0) Ucol_[j].emplace_back(pinv_[r], x[r]);
                } else if (pinv_[r] < 0) {
                    if (x[r] != 0.0) Lcol_[j].emplace_back(r, x[r] / udiag_[j]);
                }
            }
        }
        return true;
    }

    bool is_singular() const { return singular_; }
    double pivot_floor() const { return pivot_floor_; }

    std::vector<double> solve(const std::vector<double>& b) const {
        if (singular_) throw std::runtime_error("SparseLU::solve on singular factorisation");
        std::vector<double> w(n_), xout(n_);
        for (int r = 0; r < n_; ++r) w[pinv_[r]] = b[r];
        for (int k = 0; k < n_; ++k) {
            const double zk = w[k];
            if (zk == 0.0) continue;
            for (const auto& [r, lv] : Lcol_[k]) w[pinv_[r]] -= lv * zk;
        }
        for (int k = n_ - 1; k >= 0; --k) {
            const double yk = w[k] / udiag_[k];
            w[k] = yk;
            if (yk != 0.0)
                for (const auto& [rowpos, uv] : Ucol_[k]) w[rowpos] -= uv * yk;
        }
        for (int k = 0; k < n_; ++k) xout[order_[k]] = w[k];
        return xout;
    }

    long factor_nnz() const {
        long s = 0;
        for (const auto& c : Lcol_) s += c.size();
        for (const auto& c : Ucol_) s += c.size();
        return s + n_;
    }

private:
    static std::vector<int> amd_order(const SparseMatrix& A) {
        Eigen::SparseMatrix<double, Eigen::ColMajor, int> M(A.n, A.n);
        {
            std::vector<Eigen::Triplet<double>> tri;
            tri.reserve(A.nnz());
            for (int r = 0; r < A.n; ++r)
                for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
                    tri.emplace_back(r, A.col[k], 1.0);
            M.setFromTriplets(tri.begin(), tri.end());
        }
        Eigen::AMDOrdering<int> amd;
        Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
        amd(M, perm);
        // order[j] = original index of the column eliminated j-th
        std::vector<int> order(A.n);
        for (int i = 0; i < A.n; ++i) order[i] = perm.indices()(i);
        return order;
    }

    int n_ = 0;
    bool singular_ = true;
    double pivot_floor_ = 0.0;
    std::vector<int> order_, pinv_;
    std::vector<std::vector<std::pair<int, double>>> Lcol_, Ucol_;
    std::vector<double> udiag_;
};

struct RefinedSolve {
    std::vector<double> x;
    double rel_residual = 0.0;
};

/// Triangular solves plus iterative refinement until the relative residual
/// stops above 1e-13 or two corrections were spent.
inline RefinedSolve lu_solve_refined(const SparseMatrix& A, const SparseLU& lu,
                                     const std::vector<double>& b) {
    RefinedSolve out;
    out.x = lu.solve(b);
    const double bnorm = norm2(b);
    std::vector<double> r(A.n);
    auto residual = [&]() {
        A.multiply(out.x, r);
        for (int i = 0; i < A.n; ++i) r[i] = b[i] - r[i];
        return (bnorm == 0.0) ? 0.0 : norm2(r) / bnorm;
    };
    out.rel_residual = residual();
    for (int it = 0; it < 2 && out.rel_residual > 1e-13; ++it) {
        std::vector<double> dx = lu.solve(r);
        for (int i = 0; i < A.n; ++i) out.x[i] += dx[i];
        out.rel_residual = residual();
    }
    return out;
}

/// Direct solve of the assembled system per the residual contract: Solved
/// outcomes satisfy ||Ax-b||/||b|| <= 1e-8, tightened by iterative
/// refinement; anything that cannot reach the contract is Singular.
inline SolveOutcome solve(const SparseSystem& system) {
    const SparseMatrix& A = system.matrix;
    if (static_cast<int>(system.rhs.size()) != A.n)
        throw std::invalid_argument("solve: rhs dimension mismatch");
    SolveOutcome out;
    if (A.n == 0) {
        out.status = SolveStatus::Solved;
        return out;
    }
    SparseLU lu;
    if (!lu.factor(A)) {
        out.pivot_floor = lu.pivot_floor();
        return out;
    }
    out.pivot_floor = lu.pivot_floor();
    RefinedSolve rs = lu_solve_refined(A, lu, system.rhs);
    if (rs.rel_residual > 1e-8) {
        out.status = SolveStatus::Singular;
        return out;
    }
    out.status = SolveStatus::Solved;
    out.solution = std::move(rs.x);
    out.relative_residual = rs.rel_residual;
    return out;
}

/// Discrete inf-sup constant of the system w.r.t. the H1 Gram matrix:
/// smallest singular value of M^{-1/2} B M^{-1/2}. Dense diagnostic,
/// capped at 2000 unknowns.
inline double inf_sup_diagnostic(const SparseSystem& system, const SparseSystem& h1_gram) {
    const int n = system.matrix.n;
    if (n > 2000) throw std::runtime_error("inf_sup_diagnostic: dimension above dense cap");
    if (h1_gram.matrix.n != n) throw std::invalid_argument("inf_sup_diagnostic: Gram size mismatch");
    if (n == 0) return 0.0;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n), M = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < n; ++r) {
        for (int k = system.matrix.row_ptr[r]; k < system.matrix.row_ptr[r + 1]; ++k)
            B(r, system.matrix.col[k]) = system.matrix.val[k];
        for (int k = h1_gram.matrix.row_ptr[r]; k < h1_gram.matrix.row_ptr[r + 1]; ++k)
            M(r, h1_gram.matrix.col[k]) = h1_gram.matrix.val[k];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("inf_sup_diagnostic: Gram matrix not positive definite");
    Eigen::MatrixXd L = llt.matrixL();
    Eigen::MatrixXd C = L.triangularView<Eigen::Lower>().solve(B);
    C = L.triangularView<Eigen::Lower>().solve(C.transpose().eval());
    Eigen::BDCSVD<Eigen::MatrixXd> svd(C);
    return svd.singularValues().tail(1)(0);
}

} // namespace afem

#endif
