#pragma once

#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nlce/embedding.hpp"
#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"
#include "nlce/subspace.hpp"

namespace nlce {

// Stage-1 final operator P_c = (I - beta * P_F) + gamma * P_N * P_F,
// left-applied to cross-attention K/V projection weights.
struct ErasureOperator {
    Matrix matrix;  // d x d
    std::string concept_name;
    double beta = 0.0;
    double gamma = 0.0;
    WeightedProjector target_projector;
    WeightedProjector neighbor_projector;

    std::size_t dim() const { return matrix.rows(); }
};

struct OperatorBundle {
    // Declaration order matters for composition; keep a vector, not a map.
    std::vector<ErasureOperator> operators;
    double detection_threshold = 1.0;
    // Token names per concept, for lexical detection.
    std::vector<ConceptSpec> concepts;
};

// Accepts gamma in [0, 2]; values above 1 are outside the stated range but
// appear in the hyperparameter sweeps, so they warn rather than fail.
inline bool gamma_exceeds_nominal(double gamma) { return gamma > 1.0; }

inline ErasureOperator build_operator(const WeightedProjector& P_F, const WeightedProjector& P_N,
                                      double beta, double gamma,
                                      std::string concept_name = "") {
    if (P_F.dim() != P_N.dim()) throw ShapeError("build_operator: projector dimension mismatch");
    if (beta < 0.0 || beta > 1.0) throw DataError("build_operator: beta must lie in [0, 1]");
    if (gamma < 0.0 || gamma > 2.0) throw DataError("build_operator: gamma must lie in [0, 2]");
    const std::size_t d = P_F.dim();
    Matrix M = Matrix::identity(d) - P_F.matrix.scaled(beta);
    if (gamma != 0.0) M = M + (P_N.matrix * P_F.matrix).scaled(gamma);
    return ErasureOperator{std::move(M), std::move(concept_name), beta, gamma, P_F, P_N};
}

// W_K' = P_c W_K, W_V' = P_c W_V. Originals untouched.
inline std::pair<Matrix, Matrix> rewrite_kv(const Matrix& W_K, const Matrix& W_V,
                                            const ErasureOperator& op) {
    if (W_K.rows() != op.dim() || W_V.rows() != op.dim())
        throw ShapeError("rewrite_kv: weight shape does not match operator dimension");
    return {op.matrix * W_K, op.matrix * W_V};
}

// A concept is active iff one of its token names appears lexically in the
// prompt, or a prompt-token embedding reaches the cosine threshold against
// any concept-token embedding. Output follows bundle declaration order.
inline std::vector<std::string> detect_active_concepts(const TokenSequence& prompt,
                                                       const OperatorBundle& bundle,
                                                       const EmbeddingPool& pool) {
    std::vector<std::string> active;
    for (const auto& spec : bundle.concepts) {
        bool hit = false;
        for (const auto& cname : spec.token_names) {
            for (const auto& tok : prompt.tokens) {
                if (tok.surface == cname) {
                    hit = true;
                    break;
                }
            }
            if (hit) break;
        }
        if (!hit) {
            for (const auto& cname : spec.token_names) {
                const Vec& cvec = pool.vector(cname);
                for (const auto& tok : prompt.tokens) {
                    const Vec& tvec = pool.entry(tok.id).vector;
                    if (norm2(tvec) == 0.0 || norm2(cvec) == 0.0) continue;
                    if (cosine(tvec, cvec) >= bundle.detection_threshold) {
                        hit = true;
                        break;
                    }
                }
                if (hit) break;
            }
        }
        if (hit) active.push_back(spec.name);
    }
    return active;
}

// P_multi = P_{c1} * P_{c2} * ... in declaration order of the active set.
// Empty sequence composes to the identity.
inline Matrix compose(const std::vector<const ErasureOperator*>& ops, std::size_t dim) {
    Matrix P = Matrix::identity(dim);
    for (const ErasureOperator* op : ops) {
        if (op->dim() != dim) throw ShapeError("compose: operator dimension mismatch");
        P = P * op->matrix;
    }
    return P;
}

inline Matrix compose(const std::vector<ErasureOperator>& ops, std::size_t dim) {
    std::vector<const ErasureOperator*> ptrs;
    ptrs.reserve(ops.size());
    for (const auto& op : ops) ptrs.push_back(&op);
    return compose(ptrs, dim);
}

// ---- persistence -----------------------------------------------------------
// Matrices serialize as hex-float strings so round-trips are bit-exact.

inline std::string double_to_hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double hex_to_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw ParseError("bad hex-float value: " + s);
    return v;
}

inline nlohmann::ordered_json matrix_to_json(const Matrix& m) {
    auto arr = nlohmann::ordered_json::array();
    for (double v : m.data()) arr.push_back(double_to_hex(v));
    return arr;
}

inline Matrix matrix_from_json(const nlohmann::json& arr, std::size_t rows, std::size_t cols) {
    if (arr.size() != rows * cols) throw ParseError("matrix entry count mismatch");
    Matrix m(rows, cols);
    std::size_t i = 0;
    for (const auto& v : arr) m.data()[i++] = hex_to_double(v.get<std::string>());
    return m;
}

inline nlohmann::ordered_json operator_to_json(const ErasureOperator& op, double alpha_target) {
    nlohmann::ordered_json j;
    j["concept"] = op.concept_name;
    j["d"] = op.dim();
    j["beta"] = op.beta;
    j["gamma"] = op.gamma;
    j["alpha_target"] = alpha_target;
    j["matrix"] = matrix_to_json(op.matrix);
    j["target_projector"] = matrix_to_json(op.target_projector.matrix);
    j["neighbor_projector"] = matrix_to_json(op.neighbor_projector.matrix);
    return j;
}

inline ErasureOperator operator_from_json(const nlohmann::json& j) {
    ErasureOperator op;
    op.concept_name = j.at("concept").get<std::string>();
    const std::size_t d = j.at("d").get<std::size_t>();
    op.beta = j.at("beta").get<double>();
    op.gamma = j.at("gamma").get<double>();
    op.matrix = matrix_from_json(j.at("matrix"), d, d);
    op.target_projector.matrix = matrix_from_json(j.at("target_projector"), d, d);
    op.neighbor_projector.matrix = matrix_from_json(j.at("neighbor_projector"), d, d);
    return op;
}

}  // namespace nlce
