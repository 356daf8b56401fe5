#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nlce/config.hpp"
#include "nlce/embedding.hpp"
#include "nlce/erasure.hpp"
#include "nlce/gate.hpp"
#include "nlce/metrics.hpp"
#include "nlce/neighbor.hpp"
#include "nlce/subspace.hpp"
#include "nlce/toy_model.hpp"
#include "nlce/trace_io.hpp"

namespace nlce {

using WarnFn = std::function<void(const std::string&)>;

inline void default_warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

namespace detail {

inline ConceptSpec to_spec(const ConceptConfig& cc) {
    ConceptSpec spec;
    spec.name = cc.name;
    spec.token_names = cc.tokens;
    spec.prototype_name = cc.prototype;
    return spec;
}

inline std::filesystem::path neighbors_dir(const RunConfig& c) {
    return std::filesystem::path(c.out_dir) / "neighbors";
}
inline std::filesystem::path operators_dir(const RunConfig& c) {
    return std::filesystem::path(c.out_dir) / "operators";
}
inline std::filesystem::path runs_dir(const RunConfig& c) {
    return std::filesystem::path(c.out_dir) / "runs";
}

inline Matrix prompt_embeds_rows(const TokenSequence& seq, const EmbeddingPool& pool) {
    Matrix X(seq.tokens.size(), pool.dim());
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        const Vec& v = pool.entry(seq.tokens[i].id).vector;
        for (std::size_t j = 0; j < pool.dim(); ++j) X(i, j) = v[j];
    }
    return X;
}

inline Vec mean_feature(const Matrix& feature) {
    Vec mean(feature.cols(), 0.0);
    for (std::size_t p = 0; p < feature.rows(); ++p)
        for (std::size_t j = 0; j < feature.cols(); ++j) mean[j] += feature(p, j);
    for (double& v : mean) v /= static_cast<double>(feature.rows());
    return mean;
}

}  // namespace detail

// ---- mine ------------------------------------------------------------------

inline std::vector<std::filesystem::path> cmd_mine(const RunConfig& c,
                                                   WarnFn warn = default_warn) {
    require_keys(c, {"pool", "prototype_pool", "concreteness", "popularity", "k", "tau",
                     "p_thresh", "concepts"},
                 "mine");
    const EmbeddingPool pool = load_pool(c.pool);
    const EmbeddingPool prototypes = load_pool(c.prototype_pool);
    const auto concreteness = load_scores(c.concreteness);
    const auto popularity = load_scores(c.popularity);

    std::filesystem::create_directories(detail::neighbors_dir(c));
    std::vector<std::filesystem::path> written;
    for (const ConceptConfig& cc : c.concepts) {
        const ConceptSpec spec = detail::to_spec(cc);
        for (const auto& t : spec.token_names) pool.vector(t);  // resolve before any output

        CandidateSet top = topk_candidates(spec, pool, *c.k);
        if (!top.entries.empty() && top.entries.front().text_similarity < c.similarity_floor)
            warn("concept '" + cc.name + "': top text similarity " +
                 std::to_string(top.entries.front().text_similarity) +
                 " below similarity floor; neighbors may be unrelated");
        const CandidateSet filtered =
            filter_candidates(top, concreteness, *c.tau, popularity, *c.p_thresh);

        Vec target_proto;
        if (cc.prototype) {
            target_proto = prototypes.vector(*cc.prototype);
        } else {
            // Fall back to the mean of normalized token embeddings.
            std::vector<Vec> token_vecs;
            for (const auto& t : spec.token_names) token_vecs.push_back(pool.vector(t));
            target_proto = build_prototype(token_vecs);
        }
        NeighborSet ns = rerank_visual(filtered, prototypes, target_proto, c.n_keep);
        ns.concept_name = cc.name;
        ns.k = *c.k;
        ns.tau = *c.tau;
        ns.p_thresh = *c.p_thresh;

        nlohmann::ordered_json report = neighbor_report(ns);
        report["config_hash"] = c.config_hash;
        const auto path = detail::neighbors_dir(c) / (cc.name + ".json");
        write_json_file(path, report);
        written.push_back(path);
    }
    return written;
}

// ---- build -----------------------------------------------------------------

inline std::vector<std::string> neighbor_names_for(const RunConfig& c, const ConceptConfig& cc) {
    if (!cc.neighbors.empty()) return cc.neighbors;
    const auto path = detail::neighbors_dir(c) / (cc.name + ".json");
    if (!std::filesystem::exists(path))
        throw DataError("build: no inline neighbors and no mined report for '" + cc.name +
                        "' (" + path.string() + ")");
    const nlohmann::json report = read_json_file(path);
    std::vector<std::string> names;
    for (const auto& m : report.at("members")) names.push_back(m.at("name").get<std::string>());
    return names;
}

inline std::vector<std::filesystem::path> cmd_build(const RunConfig& c,
                                                    WarnFn warn = default_warn) {
    require_keys(c, {"pool", "concepts"}, "build");
    const EmbeddingPool pool = load_pool(c.pool);
    if (c.alpha_target_defaulted)
        warn("alpha_target not set; using identity weighting alpha = 1");
    if (gamma_exceeds_nominal(c.gamma)) warn("gamma exceeds Eq. 5 range");

    std::filesystem::create_directories(detail::operators_dir(c));
    std::vector<std::filesystem::path> written;
    for (const ConceptConfig& cc : c.concepts) {
        const Matrix X_F = gather(cc.tokens, pool);
        const std::vector<std::string> neighbors = neighbor_names_for(c, cc);
        if (neighbors.empty()) throw DataError("build: empty neighbor set for '" + cc.name + "'");
        const Matrix X_N = gather(neighbors, pool);

        const WeightedProjector P_F = concept_projector(X_F, c.alpha_target, c.rank);
        const WeightedProjector P_N = concept_projector(X_N, c.alpha_target, c.rank);
        const ErasureOperator op = build_operator(P_F, P_N, c.beta, c.gamma, cc.name);

        nlohmann::ordered_json j = operator_to_json(op, c.alpha_target);
        j["alpha_target_defaulted"] = c.alpha_target_defaulted;
        j["neighbors"] = neighbors;
        j["config_hash"] = c.config_hash;
        const auto path = detail::operators_dir(c) / (cc.name + ".json");
        write_json_file(path, j);

        // Bit-exact round-trip verification before exit.
        const ErasureOperator reloaded = operator_from_json(read_json_file(path));
        if (!(reloaded.matrix == op.matrix))
            throw InternalError("build: operator round-trip mismatch for '" + cc.name + "'");
        written.push_back(path);
    }
    return written;
}

// ---- run -------------------------------------------------------------------

struct PromptRunResult {
    std::string prompt;
    std::vector<std::string> active_concepts;
    std::filesystem::path base_dir;
    std::filesystem::path edited_dir;
};

inline std::vector<ErasureOperator> load_operators(const RunConfig& c) {
    std::vector<ErasureOperator> ops;
    for (const ConceptConfig& cc : c.concepts) {
        const auto path = detail::operators_dir(c) / (cc.name + ".json");
        if (!std::filesystem::exists(path))
            throw DataError("run: missing operator file " + path.string());
        const nlohmann::json j = read_json_file(path);
        if (j.value("config_hash", "") != c.config_hash)
            throw DataError("run: operator file " + path.string() +
                            " was built from a different config");
        ops.push_back(operator_from_json(j));
    }
    return ops;
}

inline std::vector<PromptRunResult> cmd_run(const RunConfig& c, std::size_t jobs = 1,
                                            WarnFn warn = default_warn) {
    require_keys(c, {"pool", "prompts"}, "run");
    if (c.stage1) require_keys(c, {"concepts", "detection_threshold"}, "run");
    if (c.stage2) require_keys(c, {"delta_token"}, "run");
    if (c.stage3) require_keys(c, {"delta_scrub"}, "run");

    const EmbeddingPool pool = load_pool(c.pool);
    const ToyDenoiser model(c.seed, pool.dim(), c.T, c.heads);

    OperatorBundle bundle;
    std::vector<ErasureOperator> ops;
    if (c.stage1) {
        ops = load_operators(c);
        bundle.detection_threshold = *c.detection_threshold;
        for (const ConceptConfig& cc : c.concepts) bundle.concepts.push_back(detail::to_spec(cc));
    }
    (void)warn;

    std::vector<PromptRunResult> results(c.prompts.size());
    auto run_one = [&](std::size_t idx) {
        const PromptSpec& p = c.prompts[idx];
        const TokenSequence seq = tokenize_multiword(p.text, pool);
        const Matrix text = detail::prompt_embeds_rows(seq, pool);
        if (seq.tokens.empty()) throw DataError("run: prompt '" + p.text + "' has no pool tokens");

        nlohmann::ordered_json meta;
        meta["config_hash"] = c.config_hash;
        meta["seed"] = c.seed;
        meta["prompt"] = p.text;
        meta["truth"] = p.truth;
        meta["role"] = p.role;
        meta["dropped_tokens"] = seq.dropped;
        meta["hyperparameters"] = {
            {"alpha_target", c.alpha_target}, {"alpha_target_defaulted", c.alpha_target_defaulted},
            {"beta", c.beta}, {"gamma", c.gamma},
            {"delta_token", c.delta_token ? nlohmann::json(*c.delta_token) : nlohmann::json()},
            {"delta_scrub", c.delta_scrub ? nlohmann::json(*c.delta_scrub) : nlohmann::json()},
            {"T", c.T}, {"heads", c.heads}, {"gate_layer", c.gate_layer}};
        meta["stages"] = {{"stage1", c.stage1}, {"stage2", c.stage2}, {"stage3", c.stage3}};

        // Base generation (no operators, no hooks) is always exported.
        GenerationTrace base = model.denoise(text, p.text);
        base.metadata = meta;
        base.metadata["variant"] = "base";
        base.metadata["operators"] = nlohmann::json::array();

        PromptRunResult res;
        res.prompt = p.text;
        const auto prompt_dir = detail::runs_dir(c) / ("prompt_" + std::to_string(idx));
        res.base_dir = prompt_dir / "base";
        res.edited_dir = prompt_dir / "edited";
        export_trace(res.base_dir, base);

        GenerationTrace edited;
        if (c.stage1) {
            const std::vector<std::string> active = detect_active_concepts(seq, bundle, pool);
            res.active_concepts = active;
            std::vector<const ErasureOperator*> active_ops;
            for (const auto& name : active)
                for (const auto& op : ops)
                    if (op.concept_name == name) active_ops.push_back(&op);
            const Matrix P_multi = compose(active_ops, pool.dim());
            const ToyDenoiser edited_model = model.with_operator(P_multi, c.layer_allowlist);

            StageHooks hooks;
            hooks.stage2 = c.stage2;
            hooks.stage3 = c.stage3;
            hooks.gate_layer = c.gate_layer;
            hooks.scrub_layers = c.scrub_layers;
            if (c.delta_scrub) hooks.delta_scrub = *c.delta_scrub;
            if (c.stage2) {
                for (const ErasureOperator* op : active_ops)
                    hooks.live_sets.push_back(
                        live_tokens(text, op->target_projector, *c.delta_token,
                                    op->concept_name));
            }
            edited = edited_model.denoise(text, p.text, hooks);
            edited.metadata = meta;
            edited.metadata["variant"] = "edited";
            edited.metadata["operators"] = active;
        } else {
            edited = base;
            edited.metadata["variant"] = "edited";
            edited.metadata["operators"] = nlohmann::json::array();
        }
        export_trace(res.edited_dir, edited);
        results[idx] = std::move(res);
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < c.prompts.size(); ++i) run_one(i);
    } else {
        std::vector<std::thread> workers;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < std::min(jobs, c.prompts.size()); ++w) {
            workers.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < c.prompts.size();
                     i = next.fetch_add(1))
                    run_one(i);
            });
        }
        for (auto& t : workers) t.join();
    }
    return results;
}

// ---- eval ------------------------------------------------------------------

inline EvaluationReport cmd_eval(const RunConfig& c, WarnFn warn = default_warn) {
    require_keys(c, {"pool", "classifier", "prompts"}, "eval");
    if (c.eval_target.empty()) throw ConfigError("eval: missing required config keys: eval_target");
    const EmbeddingPool pool = load_pool(c.pool);
    const EmbeddingPool centroids_pool = load_pool(c.classifier);
    ToyClassifier classifier;
    for (const auto& e : centroids_pool.entries()) classifier.centroids.push_back({e.name, e.vector});

    const auto runs = detail::runs_dir(c);
    std::vector<std::string> target_preds, target_truths;
    std::vector<std::string> retain_preds, retain_truths;
    std::vector<Vec> base_feats, edited_feats;
    std::vector<double> clip_scores;
    std::vector<double> masked_dists;

    for (std::size_t idx = 0; idx < c.prompts.size(); ++idx) {
        const PromptSpec& p = c.prompts[idx];
        const auto prompt_dir = runs / ("prompt_" + std::to_string(idx));
        for (const char* variant : {"base", "edited"}) {
            const auto manifest_path = prompt_dir / variant / "manifest.json";
            if (!std::filesystem::exists(manifest_path))
                throw DataError("eval: missing trace " + manifest_path.string());
            const nlohmann::json manifest = read_json_file(manifest_path);
            if (manifest.at("metadata").value("config_hash", "") != c.config_hash)
                throw DataError("eval: trace " + manifest_path.string() +
                                " carries a different config hash");
        }
        const nlohmann::json edited_manifest = read_json_file(prompt_dir / "edited/manifest.json");
        const auto shape = edited_manifest.at("final_feature_shape");
        const Matrix edited_feature = read_tensor(prompt_dir / "edited/final_feature.bin",
                                                  shape[0].get<std::size_t>(),
                                                  shape[1].get<std::size_t>());
        const Matrix base_feature = read_tensor(prompt_dir / "base/final_feature.bin",
                                                shape[0].get<std::size_t>(),
                                                shape[1].get<std::size_t>());
        const auto [label, score] = classify(edited_feature, classifier);
        (void)score;
        if (p.role == "target") {
            target_preds.push_back(label);
            target_truths.push_back(p.truth);
        } else {
            retain_preds.push_back(label);
            retain_truths.push_back(p.truth);
        }
        base_feats.push_back(detail::mean_feature(base_feature));
        edited_feats.push_back(detail::mean_feature(edited_feature));

        const TokenSequence seq = tokenize_multiword(p.text, pool);
        if (!seq.tokens.empty()) {
            Vec prompt_mean(pool.dim(), 0.0);
            for (const auto& tok : seq.tokens) {
                const Vec& v = pool.entry(tok.id).vector;
                for (std::size_t j = 0; j < pool.dim(); ++j) prompt_mean[j] += v[j];
            }
            for (double& v : prompt_mean) v /= static_cast<double>(seq.tokens.size());
            if (norm2(prompt_mean) > 0.0 && norm2(edited_feats.back()) > 0.0)
                clip_scores.push_back(clip_analog(prompt_mean, edited_feats.back()));
        }

        // Masked distance on the final step's 32x32 mask when present.
        const auto& steps = edited_manifest.at("steps");
        if (!steps.empty() && steps.back().contains("masks")) {
            for (const auto& mj : steps.back().at("masks")) {
                const auto mshape = mj.at("shape");
                if (mshape[0].get<std::size_t>() == 32 && mshape[1].get<std::size_t>() == 32) {
                    const Matrix mask =
                        read_tensor(prompt_dir / "edited" / mj.at("file").get<std::string>(), 32, 32);
                    bool all_excluded = true;
                    for (double v : mask.data())
                        if (v == 0.0) { all_excluded = false; break; }
                    if (!all_excluded)
                        masked_dists.push_back(masked_distance(base_feature, edited_feature, mask));
                    break;
                }
            }
        }
    }

    EvaluationReport report;
    if (!target_preds.empty())
        report.acc_t = accuracy(target_preds, target_truths, c.eval_target);
    if (!retain_preds.empty()) report.acc_r = accuracy(retain_preds, retain_truths);
    report.h_o = harmonic_overall(report.acc_t, report.acc_r);
    if (base_feats.size() >= 2 && edited_feats.size() >= 2)
        report.kid = kid(base_feats, edited_feats);
    if (!clip_scores.empty()) {
        double s = 0.0;
        for (double v : clip_scores) s += v;
        report.clip_analog = s / static_cast<double>(clip_scores.size());
    }
    if (!masked_dists.empty()) {
        double s = 0.0;
        for (double v : masked_dists) s += v;
        report.masked_distance = s / static_cast<double>(masked_dists.size());
    }
    report.metadata["config_hash"] = c.config_hash;
    report.metadata["seed"] = c.seed;
    report.metadata["target"] = c.eval_target;
    report.metadata["alpha_target_defaulted"] = c.alpha_target_defaulted;
    report.metadata["n_target_prompts"] = target_preds.size();
    report.metadata["n_retain_prompts"] = retain_preds.size();
    if (c.alpha_target_defaulted)
        warn("report produced with defaulted alpha_target = 1");
    return report;
}

}  // namespace nlce
