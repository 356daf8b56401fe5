#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nlce/embedding.hpp"
#include "nlce/errors.hpp"
#include "nlce/gate.hpp"
#include "nlce/matrix.hpp"
#include "nlce/rng.hpp"
#include "nlce/scrub.hpp"

namespace nlce {

// Miniature deterministic text-conditioned denoiser. Cross-attention at three
// resolutions; text conditioning enters only through the attention Values, so
// suppressing or zeroing attention provably removes the concept signal.

struct LayerSpec {
    std::string name;
    std::size_t H = 0;
    std::size_t W = 0;
    std::size_t heads = 0;
};

struct LayerWeights {
    Matrix W_Q, W_K, W_V, W_O;  // all d x d
};

struct CrossAttentionResult {
    Matrix A;    // N x m, head-averaged
    Matrix out;  // N x d
};

// Per-head softmax(Q K^T / sqrt(d_h)) V with Q = latent W_Q, K = text W_K,
// V = text W_V; heads split the feature columns; output mixed by W_O.
// Optionally the head-averaged attention is replaced by `override_attn`
// before forming the output (Stage-2 suppression path); in that case every
// head uses the overridden map.
inline CrossAttentionResult cross_attention(const Matrix& latent, const Matrix& text,
                                            const Matrix& W_Q, const Matrix& W_K,
                                            const Matrix& W_V, std::size_t heads,
                                            const Matrix* override_attn = nullptr) {
    const std::size_t N = latent.rows();
    const std::size_t d = latent.cols();
    const std::size_t m = text.rows();
    if (text.cols() != d || W_Q.rows() != d || W_K.rows() != d || W_V.rows() != d)
        throw ShapeError("cross_attention: inconsistent shapes");
    if (heads == 0 || d % heads != 0) throw ShapeError("cross_attention: heads must divide d");
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Matrix Q = latent * W_Q;
    const Matrix K = text * W_K;
    const Matrix V = text * W_V;

    Matrix A_mean(N, m);
    Matrix out(N, d);
    std::vector<Matrix> head_attn;
    head_attn.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        Matrix A(N, m);
        for (std::size_t p = 0; p < N; ++p) {
            double max_logit = -1e300;
            Vec logits(m);
            for (std::size_t j = 0; j < m; ++j) {
                double l = 0.0;
                for (std::size_t k = 0; k < dh; ++k) l += Q(p, off + k) * K(j, off + k);
                logits[j] = l * scale;
                max_logit = std::max(max_logit, logits[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                logits[j] = std::exp(logits[j] - max_logit);
                z += logits[j];
            }
            for (std::size_t j = 0; j < m; ++j) A(p, j) = logits[j] / z;
        }
        for (std::size_t i = 0; i < N * m; ++i) A_mean.data()[i] += A.data()[i] / heads;
        head_attn.push_back(std::move(A));
    }
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        const Matrix& A = override_attn ? *override_attn : head_attn[h];
        for (std::size_t p = 0; p < N; ++p) {
            for (std::size_t j = 0; j < m; ++j) {
                const double a = A(p, j);
                if (a == 0.0) continue;
                for (std::size_t k = 0; k < dh; ++k) out(p, off + k) += a * V(j, off + k);
            }
        }
    }
    if (override_attn) A_mean = *override_attn;
    return {std::move(A_mean), std::move(out)};
}

// Bilinear per-channel resample of a pixel field ((H*W) x d, row-major pixels).
inline Matrix resample_field(const Matrix& field, std::size_t Hs, std::size_t Ws,
                             std::size_t H, std::size_t W) {
    if (field.rows() != Hs * Ws) throw ShapeError("resample_field: shape mismatch");
    if (Hs == H && Ws == W) return field;
    const std::size_t d = field.cols();
    Matrix out(H * W, d);
    for (std::size_t c = 0; c < d; ++c) {
        Matrix chan(Hs, Ws);
        for (std::size_t p = 0; p < Hs * Ws; ++p) chan.data()[p] = field(p, c);
        const Matrix res = upsample_gate(chan, H, W);
        for (std::size_t p = 0; p < H * W; ++p) out(p, c) = res.data()[p];
    }
    return out;
}

struct LayerRecord {
    std::string name;
    std::size_t H = 0, W = 0;
    Matrix attention;  // (H*W) x m, committed (post-suppression when active)
    Matrix latent;     // (H*W) x d, committed output of the layer
};

struct TimestepRecord {
    std::vector<LayerRecord> layers;
    std::optional<GateMap> gate;         // 32 x 32 when Stage 2 ran
    std::vector<BinaryMask> masks;       // per scrub layer when Stage 3 ran
};

struct GenerationTrace {
    std::vector<TimestepRecord> steps;
    Matrix final_feature;  // (32*32) x d
    nlohmann::ordered_json metadata;
};

struct StageHooks {
    bool stage2 = false;
    bool stage3 = false;
    std::vector<LiveTokenSet> live_sets;   // per active concept, prompt-token indices
    double delta_scrub = 0.5;
    std::string gate_layer = "down32";
    std::vector<std::string> scrub_layers;  // empty = all layers
};

struct RecordFlags {
    bool latents = true;
    bool attention = true;
};

class ToyDenoiser {
 public:
    ToyDenoiser(std::uint64_t seed, std::size_t d, std::size_t T, std::size_t heads = 4)
        : seed_(seed), d_(d), T_(T) {
        if (d < 8) throw DataError("build_toy_model: d must be >= 8");
        if (T < 1) throw DataError("build_toy_model: T must be >= 1");
        if (heads == 0 || d % heads != 0) throw DataError("build_toy_model: heads must divide d");
        layers_ = {{"down32", 32, 32, heads},
                   {"down16", 16, 16, heads},
                   {"down8", 8, 8, heads},
                   {"up16", 16, 16, heads},
                   {"up32", 32, 32, heads}};
        // Dimension-ordered draws: layers in stack order, W_Q, W_K, W_V, W_O
        // per layer, row-major entries, uniform in [-1/sqrt(d), 1/sqrt(d)].
        SplitMix64 gen(derive_seed(seed, "model"));
        const double a = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            LayerWeights w{Matrix(d, d), Matrix(d, d), Matrix(d, d), Matrix(d, d)};
            for (Matrix* mp : {&w.W_Q, &w.W_K, &w.W_V, &w.W_O})
                for (double& v : mp->data()) v = gen.next_symmetric(a);
            weights_.push_back(std::move(w));
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::size_t dim() const { return d_; }
    std::size_t timesteps() const { return T_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const LayerWeights& layer_weights(std::size_t l) const { return weights_[l]; }

    // Copy of the model with P left-applied to every cross-attention K/V
    // weight (or only the allowlisted layers).
    ToyDenoiser with_operator(const Matrix& P,
                              const std::vector<std::string>& layer_allowlist = {}) const {
        if (P.rows() != d_ || P.cols() != d_)
            throw ShapeError("with_operator: operator dimension mismatch");
        ToyDenoiser edited = *this;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (!layer_allowlist.empty() &&
                std::find(layer_allowlist.begin(), layer_allowlist.end(), layers_[l].name) ==
                    layer_allowlist.end())
                continue;
            edited.weights_[l].W_K = P * weights_[l].W_K;
            edited.weights_[l].W_V = P * weights_[l].W_V;
        }
        return edited;
    }

    // Deterministic initial latent from (model seed, prompt).
    Matrix initial_latent(const std::string& prompt) const {
        SplitMix64 gen(derive_seed(seed_ ^ fnv1a64(prompt), "init-latent"));
        Matrix h(32 * 32, d_);
        for (double& v : h.data()) v = gen.next_symmetric(0.5);
        return h;
    }

    GenerationTrace denoise(const Matrix& text, const std::string& prompt,
                            const StageHooks& hooks = {}, RecordFlags record = {}) const {
        if (text.rows() == 0) throw DataError("denoise: empty text conditioning");
        if (text.cols() != d_) throw ShapeError("denoise: text dimension mismatch");
        GenerationTrace trace;
        Matrix latent = initial_latent(prompt);

        std::set<std::size_t> live_union;
        for (const auto& ls : hooks.live_sets)
            live_union.insert(ls.indices.begin(), ls.indices.end());

        for (std::size_t t = 0; t < T_; ++t) {
            TimestepRecord step;
            std::optional<GateMap> gate;
            if (hooks.stage2 && !live_union.empty()) {
                // Pass 1 (dry): extract gate-source attention, no commitment.
                const Matrix gate_attn = run_stack(latent, text, nullptr, false, 0.0, {},
                                                   nullptr, hooks.gate_layer);
                std::vector<GateMap> per_concept;
                for (const auto& ls : hooks.live_sets) {
                    if (ls.indices.empty()) continue;
                    per_concept.push_back(gate_map(gate_attn, ls, 32, 32, t, hooks.gate_layer));
                }
                if (!per_concept.empty()) gate = combine_gates(per_concept);
            }
            // Pass 2 (or the only pass): commit, with suppression and scrub.
            latent = run_stack(latent, text, gate ? &gate->values : nullptr, hooks.stage3,
                               hooks.delta_scrub, hooks.scrub_layers,
                               record.latents || record.attention ? &step : nullptr, "",
                               live_union, t);
            step.gate = gate;
            trace.steps.push_back(std::move(step));
        }
        trace.final_feature = latent;
        return trace;
    }

 private:
    // Runs the layer stack once from `input` (32x32 field). When
    // `gate_layer_only` is nonempty, returns that layer's head-averaged
    // attention instead of the final latent (dry pass). Otherwise returns the
    // final 32x32 latent, filling `step` when given.
    Matrix run_stack(const Matrix& input, const Matrix& text, const Matrix* gate32,
                     bool stage3, double delta_scrub,
                     const std::vector<std::string>& scrub_layers, TimestepRecord* step,
                     const std::string& gate_layer_only,
                     const std::set<std::size_t>& live_union = {}, std::size_t t = 0) const {
        const double stepsize = 1.0 / static_cast<double>(T_);
        Matrix h = input;
        std::size_t curH = 32, curW = 32;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const LayerSpec& spec = layers_[l];
            h = resample_field(h, curH, curW, spec.H, spec.W);
            curH = spec.H;
            curW = spec.W;
            const LayerWeights& w = weights_[l];
            CrossAttentionResult res =
                cross_attention(h, text, w.W_Q, w.W_K, w.W_V, spec.heads);
            if (!gate_layer_only.empty() && spec.name == gate_layer_only) return res.A;
            Matrix committed_attn = res.A;
            if (gate32 && !live_union.empty()) {
                const Matrix gate_here = upsample_gate(*gate32, spec.H, spec.W);
                committed_attn = suppress_attention(res.A, gate_here, live_union);
                res = cross_attention(h, text, w.W_Q, w.W_K, w.W_V, spec.heads,
                                      &committed_attn);
            }
            Matrix mixed = res.out * w.W_O;
            for (std::size_t i = 0; i < h.data().size(); ++i)
                h.data()[i] += stepsize * mixed.data()[i];
            if (stage3 && gate32 && !live_union.empty() && scrubbed(spec.name, scrub_layers)) {
                const BinaryMask mask =
                    binary_mask(upsample_gate(*gate32, spec.H, spec.W), delta_scrub, spec.name, t);
                h = scrub_latents(h, mask);
                if (step) step->masks.push_back(mask);
            }
            if (step) {
                LayerRecord rec;
                rec.name = spec.name;
                rec.H = spec.H;
                rec.W = spec.W;
                rec.attention = committed_attn;
                rec.latent = h;
                step->layers.push_back(std::move(rec));
            }
        }
        if (!gate_layer_only.empty())
            throw ConfigError("gate layer '" + gate_layer_only + "' not found in the stack");
        return resample_field(h, curH, curW, 32, 32);
    }

    static bool scrubbed(const std::string& name, const std::vector<std::string>& scrub_layers) {
        if (scrub_layers.empty()) return true;
        return std::find(scrub_layers.begin(), scrub_layers.end(), name) != scrub_layers.end();
    }

    std::uint64_t seed_;
    std::size_t d_;
    std::size_t T_;
    std::vector<LayerSpec> layers_;
    std::vector<LayerWeights> weights_;
};

inline ToyDenoiser build_toy_model(std::uint64_t seed, std::size_t d, std::size_t T,
                                   std::size_t heads = 4) {
    return ToyDenoiser(seed, d, T, heads);
}

// Nearest-centroid classifier over mean spatial features.
struct ToyClassifier {
    std::vector<std::pair<std::string, Vec>> centroids;  // declaration order
};

inline std::pair<std::string, double> classify(const Matrix& feature_image,
                                               const ToyClassifier& classifier) {
    if (classifier.centroids.empty()) throw DataError("classify: no centroids");
    const std::size_t d = feature_image.cols();
    Vec mean(d, 0.0);
    for (std::size_t p = 0; p < feature_image.rows(); ++p)
        for (std::size_t j = 0; j < d; ++j) mean[j] += feature_image(p, j);
    for (double& v : mean) v /= static_cast<double>(feature_image.rows());
    if (norm2(mean) == 0.0) throw DegenerateInputError("classify: zero mean feature");

    std::string best_label;
    double best_score = -2.0;
    for (const auto& [label, centroid] : classifier.centroids) {
        if (norm2(centroid) == 0.0) throw DegenerateInputError("classify: zero centroid");
        const double score = cosine(mean, centroid);
        if (score > best_score) {  // strict: first declared wins ties
            best_score = score;
            best_label = label;
        }
    }
    return {best_label, best_score};
}

}  // namespace nlce
