#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nlce/rng.hpp"
#include "nlce/subspace.hpp"
#include "nlce/svd.hpp"
#include "oracles.hpp"

using namespace nlce;

namespace {

Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols, double scale = 2.0) {
    SplitMix64 gen(seed);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = gen.next_symmetric(scale);
    return m;
}

double reconstruction_error(const ThinSvd& svd, const Matrix& X) {
    Matrix R(X.rows(), X.cols());
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < svd.rank(); ++k)
                s += svd.U(i, k) * svd.S[k] * svd.Vt(k, j);
            R(i, j) = s;
        }
    return max_abs_diff(R, X);
}

double orthonormality_error(const Matrix& U) {
    double worst = 0.0;
    for (std::size_t a = 0; a < U.cols(); ++a)
        for (std::size_t b = 0; b < U.cols(); ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < U.rows(); ++i) s += U(i, a) * U(i, b);
            worst = std::max(worst, std::fabs(s - (a == b ? 1.0 : 0.0)));
        }
    return worst;
}

}  // namespace

TEST_CASE("thin_svd of the identity") {
    const ThinSvd svd = thin_svd(Matrix::identity(3));
    REQUIRE(svd.rank() == 3);
    for (double s : svd.S) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(orthonormality_error(svd.U) <= 1e-9);
    CHECK(reconstruction_error(svd, Matrix::identity(3)) <= 1e-8);
}

TEST_CASE("thin_svd of a rank-1 outer product") {
    // X = 5 u v^T for unit u, v.
    const Vec u = {0.6, 0.8, 0.0};
    const Vec v = {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
    Matrix X(3, 2);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) X(i, j) = 5.0 * u[i] * v[j];
    const ThinSvd svd = thin_svd(X, std::size_t{1});
    REQUIRE(svd.rank() == 1);
    CHECK(svd.S[0] == doctest::Approx(5.0).epsilon(1e-10));
    // Sign convention: largest-magnitude entry positive, so U = +u here.
    CHECK(svd.U(0, 0) == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(svd.U(1, 0) == doctest::Approx(0.8).epsilon(1e-10));
}

TEST_CASE("thin_svd sorts singular values of a diagonal matrix") {
    const Matrix X = Matrix::from_rows({{3, 0}, {0, 4}});
    const ThinSvd svd = thin_svd(X);
    REQUIRE(svd.rank() == 2);
    CHECK(svd.S[0] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(svd.S[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("thin_svd rejects non-finite input") {
    Matrix X(2, 2);
    X(0, 0) = std::nan("");
    CHECK_THROWS_AS(thin_svd(X), DataError);
}

TEST_CASE("thin_svd matches the Jacobi Gram-matrix oracle on random input") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Matrix X = random_matrix(seed, 6, 4);
        const ThinSvd svd = thin_svd(X);
        const auto expected = oracle::singular_values(X);
        REQUIRE(svd.rank() == 4);
        for (std::size_t i = 0; i < 4; ++i)
            CHECK(std::fabs(svd.S[i] - expected[i]) <= 1e-8);
        CHECK(orthonormality_error(svd.U) <= 1e-9);
        CHECK(reconstruction_error(svd, X) <= 1e-8 * std::max(1.0, X.max_abs()));
    }
}

TEST_CASE("thin_svd handles wide matrices (m > d)") {
    const Matrix X = random_matrix(99, 3, 7);
    const ThinSvd svd = thin_svd(X);
    REQUIRE(svd.rank() == 3);
    const auto expected = oracle::singular_values(X);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(svd.S[i] - expected[i]) <= 1e-8);
    CHECK(reconstruction_error(svd, X) <= 1e-8 * std::max(1.0, X.max_abs()));
}

TEST_CASE("thin_svd deterministic sign convention") {
    const Matrix X = random_matrix(5, 5, 3);
    const ThinSvd a = thin_svd(X);
    const ThinSvd b = thin_svd(X);
    CHECK(a.U == b.U);
    for (std::size_t j = 0; j < a.rank(); ++j) {
        double vmax = 0.0;
        std::size_t imax = 0;
        for (std::size_t i = 0; i < a.U.rows(); ++i)
            if (std::fabs(a.U(i, j)) > vmax) {
                vmax = std::fabs(a.U(i, j));
                imax = i;
            }
        CHECK(a.U(imax, j) > 0.0);
    }
}

TEST_CASE("spectral_weights basics") {
    // Rank 1: the single ratio is 1 so lambda = 1 for any alpha.
    for (double alpha : {0.5, 1.0, 2.0, 8.0}) {
        const SpectralWeights w = spectral_weights({5.0}, alpha);
        CHECK(w.ratios[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(w.lambdas[0] == doctest::Approx(1.0).epsilon(1e-15));
    }
    // alpha = 1 collapses to lambda = r.
    const SpectralWeights id = spectral_weights({3.0, 2.0, 1.0}, 1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(id.lambdas[i] == id.ratios[i]);
    // Hand evaluation: alpha = 2, equal spectrum.
    const SpectralWeights w2 = spectral_weights({1.0, 1.0}, 2.0);
    CHECK(w2.ratios[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w2.lambdas[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));

    CHECK_THROWS_AS(spectral_weights({0.0, 0.0}, 2.0), DegenerateInputError);
    double ratio_sum = 0.0;
    for (double r : spectral_weights({4.0, 2.0, 1.0, 0.0}, 3.0).ratios) ratio_sum += r;
    CHECK(std::fabs(ratio_sum - 1.0) <= 1e-12);
}

TEST_CASE("spectral lambda boundary and monotonicity") {
    for (double alpha : {0.5, 1.0, 2.0, 8.0}) {
        CHECK(spectral_lambda(0.0, alpha) == 0.0);
        CHECK(spectral_lambda(1.0, alpha) == 1.0);
        double prev = 0.0;
        for (int i = 1; i < 100; ++i) {
            const double r = i / 100.0;
            const double lam = spectral_lambda(r, alpha);
            CHECK(lam > prev);
            CHECK(lam >= 0.0);
            CHECK(lam <= 1.0);
            prev = lam;
        }
    }
}

TEST_CASE("weighted_projector coordinate cases") {
    // U = e1 in d = 2.
    ThinSvd svd;
    svd.U = Matrix::from_rows({{1}, {0}});
    svd.S = {1.0};
    svd.Vt = Matrix::from_rows({{1}});

    SpectralWeights w;
    w.lambdas = {1.0};
    w.alpha = 1.0;
    w.ratios = {1.0};
    const WeightedProjector full = weighted_projector(svd, w);
    CHECK(full.matrix == Matrix::from_rows({{1, 0}, {0, 0}}));

    w.lambdas = {0.5};
    const WeightedProjector half = weighted_projector(svd, w);
    const Vec out = half.matrix.apply({2, 3});
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(0.0));

    SpectralWeights bad = w;
    bad.lambdas = {0.5, 0.5};
    CHECK_THROWS_AS(weighted_projector(svd, bad), ShapeError);
}

TEST_CASE("unit-weight projector is idempotent") {
    ThinSvd svd;
    svd.U = oracle::random_orthonormal(11, 6, 3);
    svd.S = {3.0, 2.0, 1.0};
    svd.Vt = Matrix::identity(3);
    SpectralWeights w;
    w.lambdas = {1.0, 1.0, 1.0};
    w.ratios = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const WeightedProjector P = weighted_projector(svd, w);
    CHECK(max_abs_diff(P.matrix * P.matrix, P.matrix) <= 1e-10);
    CHECK(max_abs_diff(P.matrix, P.matrix.transposed()) <= 1e-10);
}

TEST_CASE("projector eigen-action on random bases") {
    SplitMix64 gen(42);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 4 + trial % 5;
        const std::size_t r = 1 + trial % 3;
        ThinSvd svd;
        svd.U = oracle::random_orthonormal(1000 + trial, d, r);
        svd.S.assign(r, 1.0);
        svd.Vt = Matrix::identity(r);
        SpectralWeights w;
        for (std::size_t i = 0; i < r; ++i) {
            w.lambdas.push_back(gen.next_unit());
            w.ratios.push_back(1.0 / r);
        }
        const WeightedProjector P = weighted_projector(svd, w);
        for (std::size_t i = 0; i < r; ++i) {
            Vec ui = svd.U.col_vec(i);
            Vec Pui = P.matrix.apply(ui);
            for (std::size_t k = 0; k < d; ++k) Pui[k] -= w.lambdas[i] * ui[k];
            CHECK(norm2(Pui) <= 1e-9);
        }
        // A vector orthogonal to span(U) maps to ~0.
        Vec v(d);
        for (double& x : v) x = gen.next_symmetric(1.0);
        for (std::size_t i = 0; i < r; ++i) {
            const Vec ui = svd.U.col_vec(i);
            const double proj = dot(ui, v);
            for (std::size_t k = 0; k < d; ++k) v[k] -= proj * ui[k];
        }
        CHECK(norm2(P.matrix.apply(v)) <= 1e-9);
    }
}
