#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"

namespace nlce {

// Thin SVD X = U diag(S) Vt with U: d x r, S: r, Vt: r x m, r = min(d, m)
// unless truncated. Columns of U carry a fixed sign convention: the
// largest-magnitude entry of each column is positive, so decompositions are
// reproducible across runs and implementations.
struct ThinSvd {
    Matrix U;
    Vec S;
    Matrix Vt;

    std::size_t rank() const { return S.size(); }
};

namespace detail {

// One-sided Jacobi: rotate column pairs of A (d x m, d >= m) until all pairs
// are orthogonal. Singular values are the resulting column norms; V
// accumulates the rotations.
inline void one_sided_jacobi(Matrix& A, Matrix& V) {
    const std::size_t d = A.rows();
    const std::size_t m = A.cols();
    const double eps = 1e-14;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < m; ++p) {
            for (std::size_t q = p + 1; q < m; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    const double x = A(i, p), y = A(i, q);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < d; ++i) {
                    const double x = A(i, p), y = A(i, q);
                    A(i, p) = c * x - s * y;
                    A(i, q) = s * x + c * y;
                }
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = V(i, p), y = V(i, q);
                    V(i, p) = c * x - s * y;
                    V(i, q) = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }
}

// Fill a zero-norm U column with a deterministic unit vector orthogonal to
// the columns already present.
inline void complete_column(Matrix& U, std::size_t col) {
    const std::size_t d = U.rows();
    for (std::size_t basis = 0; basis < d; ++basis) {
        Vec v(d, 0.0);
        v[basis] = 1.0;
        for (std::size_t j = 0; j < U.cols(); ++j) {
            if (j == col) continue;
            double proj = 0.0;
            for (std::size_t i = 0; i < d; ++i) proj += U(i, j) * v[i];
            for (std::size_t i = 0; i < d; ++i) v[i] -= proj * U(i, j);
        }
        const double n = norm2(v);
        if (n > 1e-8) {
            for (std::size_t i = 0; i < d; ++i) U(i, col) = v[i] / n;
            return;
        }
    }
    throw InternalError("svd: failed to complete orthonormal basis");
}

}  // namespace detail

inline ThinSvd thin_svd(const Matrix& X, std::optional<std::size_t> rank = std::nullopt) {
    if (!X.all_finite()) throw DataError("thin_svd: non-finite input");
    if (X.cols() == 0) throw DataError("thin_svd: empty input");

    const bool transposed = X.rows() < X.cols();
    Matrix A = transposed ? X.transposed() : X;  // d >= m
    const std::size_t d = A.rows();
    const std::size_t m = A.cols();

    Matrix V = Matrix::identity(m);
    detail::one_sided_jacobi(A, V);

    // Column norms are the singular values; sort non-increasing.
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    Vec norms(m);
    for (std::size_t j = 0; j < m; ++j) norms[j] = norm2(A.col_vec(j));
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    std::size_t r = m;
    if (rank) {
        if (*rank > m) throw ShapeError("thin_svd: requested rank exceeds min(d, m)");
        r = *rank;
    }

    Matrix U(d, r);
    Vec S(r);
    Matrix Vt(r, m);
    for (std::size_t jj = 0; jj < r; ++jj) {
        const std::size_t src = order[jj];
        S[jj] = norms[src];
        if (norms[src] > 1e-300) {
            for (std::size_t i = 0; i < d; ++i) U(i, jj) = A(i, src) / norms[src];
        }
        for (std::size_t i = 0; i < m; ++i) Vt(jj, i) = V(i, src);
    }
    for (std::size_t jj = 0; jj < r; ++jj) {
        if (S[jj] <= 1e-300) {
            S[jj] = 0.0;
            detail::complete_column(U, jj);
        }
    }

    // Sign convention: largest-magnitude entry of each U column positive.
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t imax = 0;
        double vmax = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (std::fabs(U(i, j)) > vmax) {
                vmax = std::fabs(U(i, j));
                imax = i;
            }
        }
        if (U(imax, j) < 0.0) {
            for (std::size_t i = 0; i < d; ++i) U(i, j) = -U(i, j);
            for (std::size_t i = 0; i < m; ++i) Vt(j, i) = -Vt(j, i);
        }
    }

    if (transposed) {
        // X = (A)^T = (U S Vt)^T => U_X = V, Vt_X = U^T.
        ThinSvd out;
        out.U = Vt.transposed();
        out.S = std::move(S);
        out.Vt = U.transposed();
        // Re-apply the sign convention in the output orientation.
        const std::size_t dd = out.U.rows();
        for (std::size_t j = 0; j < out.S.size(); ++j) {
            std::size_t imax = 0;
            double vmax = 0.0;
            for (std::size_t i = 0; i < dd; ++i) {
                if (std::fabs(out.U(i, j)) > vmax) {
                    vmax = std::fabs(out.U(i, j));
                    imax = i;
                }
            }
            if (out.U(imax, j) < 0.0) {
                for (std::size_t i = 0; i < dd; ++i) out.U(i, j) = -out.U(i, j);
                for (std::size_t i = 0; i < out.Vt.cols(); ++i) out.Vt(j, i) = -out.Vt(j, i);
            }
        }
        return out;
    }
    return ThinSvd{std::move(U), std::move(S), std::move(Vt)};
}

}  // namespace nlce
