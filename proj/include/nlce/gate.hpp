#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"
#include "nlce/subspace.hpp"

namespace nlce {

// Stage 2: residual live-token detection and attention-guided spatial gating.

struct LiveTokenSet {
    std::string concept_name;
    std::vector<std::size_t> indices;  // prompt-token positions with s_j > delta_token
    Vec scores;                        // s_j = ||P_F x_j||_2, one per prompt token
    double delta_token = 0.0;
};

struct GateMap {
    Matrix values;  // [0, 1] after clamp
    std::size_t timestep = 0;
    std::string source_layer;
};

// prompt_embeds: m x d, tokens as rows. Strict inequality: boundary equality
// is not live.
inline LiveTokenSet live_tokens(const Matrix& prompt_embeds, const WeightedProjector& P_F,
                                double delta_token, std::string concept_name = "") {
    if (prompt_embeds.cols() != P_F.dim())
        throw ShapeError("live_tokens: embedding dimension mismatch");
    LiveTokenSet out;
    out.concept_name = std::move(concept_name);
    out.delta_token = delta_token;
    for (std::size_t j = 0; j < prompt_embeds.rows(); ++j) {
        const double s = norm2(P_F.matrix.apply(prompt_embeds.row_vec(j)));
        out.scores.push_back(s);
        if (s > delta_token) out.indices.push_back(j);
    }
    return out;
}

// G_t(x, y) = sum over live tokens j of A(x, y, j), clamped to [0, 1].
// attn is N x m with N = H * W (row-major pixels).
inline GateMap gate_map(const Matrix& attn, const LiveTokenSet& live, std::size_t H,
                        std::size_t W, std::size_t timestep = 0,
                        std::string source_layer = "") {
    if (attn.rows() != H * W) throw ShapeError("gate_map: attention rows != H*W");
    GateMap g;
    g.timestep = timestep;
    g.source_layer = std::move(source_layer);
    g.values = Matrix(H, W);
    for (std::size_t p = 0; p < H * W; ++p) {
        double sum = 0.0;
        for (std::size_t j : live.indices) {
            if (j >= attn.cols()) throw ShapeError("gate_map: live index out of range");
            sum += attn(p, j);
        }
        g.values.data()[p] = std::clamp(sum, 0.0, 1.0);
    }
    return g;
}

// Combine per-concept gates by elementwise max (conservative union).
inline GateMap combine_gates(const std::vector<GateMap>& gates) {
    if (gates.empty()) throw DataError("combine_gates: no gates");
    GateMap out = gates.front();
    for (std::size_t k = 1; k < gates.size(); ++k) {
        if (gates[k].values.rows() != out.values.rows() ||
            gates[k].values.cols() != out.values.cols())
            throw ShapeError("combine_gates: resolution mismatch");
        for (std::size_t i = 0; i < out.values.data().size(); ++i)
            out.values.data()[i] = std::max(out.values.data()[i], gates[k].values.data()[i]);
    }
    return out;
}

// A(x, y, j) <- (1 - G(x, y)) * A(x, y, j) for live columns j; other columns
// bit-identical. No renormalization of rows. gate_values must already be at
// this layer's resolution (H * W = attn rows).
inline Matrix suppress_attention(const Matrix& attn, const Matrix& gate_values,
                                 const std::set<std::size_t>& live_columns) {
    if (gate_values.rows() * gate_values.cols() != attn.rows())
        throw ShapeError("suppress_attention: gate resolution does not match attention rows");
    Matrix out = attn;
    for (std::size_t p = 0; p < attn.rows(); ++p) {
        const double scale = 1.0 - gate_values.data()[p];
        for (std::size_t j : live_columns) {
            if (j >= attn.cols()) throw ShapeError("suppress_attention: live column out of range");
            out(p, j) = scale * attn(p, j);
        }
    }
    return out;
}

}  // namespace nlce
