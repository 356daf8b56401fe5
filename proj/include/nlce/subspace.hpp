#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"
#include "nlce/svd.hpp"

namespace nlce {

// Per-direction suppression weights derived from the singular spectrum.
// lambda_i = alpha * r_i / ((alpha - 1) * r_i + 1), r_i = s_i^2 / sum s_j^2.
struct SpectralWeights {
    Vec lambdas;  // each in [0, 1], aligned with S order
    double alpha = 1.0;
    Vec ratios;  // the r_i, summing to 1
};

inline double spectral_lambda(double ratio, double alpha) {
    return alpha * ratio / ((alpha - 1.0) * ratio + 1.0);
}

inline SpectralWeights spectral_weights(const Vec& S, double alpha) {
    if (alpha <= 0.0) throw DataError("spectral_weights: alpha must be positive");
    double total = 0.0;
    for (double s : S) {
        if (s < 0.0) throw DataError("spectral_weights: negative singular value");
        total += s * s;
    }
    if (total == 0.0) throw DegenerateInputError("spectral_weights: all-zero spectrum");
    SpectralWeights w;
    w.alpha = alpha;
    w.ratios.reserve(S.size());
    w.lambdas.reserve(S.size());
    for (double s : S) {
        const double r = s * s / total;
        w.ratios.push_back(r);
        w.lambdas.push_back(spectral_lambda(r, alpha));
    }
    return w;
}

// Symmetric operator P = U diag(lambda) U^T scaling each subspace direction
// by its spectral weight.
struct WeightedProjector {
    Matrix matrix;  // d x d
    std::size_t rank = 0;
    Matrix basis;  // U, d x r
    SpectralWeights weights;

    std::size_t dim() const { return matrix.rows(); }
};

inline WeightedProjector weighted_projector(const ThinSvd& svd, const SpectralWeights& weights) {
    if (weights.lambdas.size() != svd.rank())
        throw ShapeError("weighted_projector: weight count does not match rank");
    const std::size_t d = svd.U.rows();
    const std::size_t r = svd.rank();
    Matrix P(d, d);
    for (std::size_t k = 0; k < r; ++k) {
        const double lam = weights.lambdas[k];
        if (lam == 0.0) continue;
        for (std::size_t i = 0; i < d; ++i) {
            const double ui = lam * svd.U(i, k);
            if (ui == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) P(i, j) += ui * svd.U(j, k);
        }
    }
    return WeightedProjector{std::move(P), r, svd.U, weights};
}

// Convenience: projector of an embedding matrix X (columns = token vectors).
inline WeightedProjector concept_projector(const Matrix& X, double alpha,
                                           std::optional<std::size_t> rank = std::nullopt) {
    const ThinSvd svd = thin_svd(X, rank);
    return weighted_projector(svd, spectral_weights(svd.S, alpha));
}

}  // namespace nlce
