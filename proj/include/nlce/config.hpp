#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlce/errors.hpp"
#include "nlce/rng.hpp"

namespace nlce {

struct PromptSpec {
    std::string text;
    std::string truth;  // ground-truth concept label ("" when none)
    std::string role;   // "target" or "retain"
};

struct ConceptConfig {
    std::string name;
    std::vector<std::string> tokens;
    std::optional<std::string> prototype;
    std::vector<std::string> neighbors;  // inline neighbor list; overrides mined reports
};

// Single JSON document; unknown keys are a hard error so hyperparameter typos
// fail loudly instead of silently using a default.
struct RunConfig {
    // Paths.
    std::string pool;
    std::string prototype_pool;
    std::string concreteness;
    std::string popularity;
    std::string classifier;
    std::string out_dir = "out";

    // Hyperparameters.
    double alpha_target = 1.0;
    bool alpha_target_defaulted = true;
    std::optional<std::size_t> rank;
    double beta = 1.0;
    double gamma = 1.0;
    std::optional<double> delta_token;
    std::optional<double> delta_scrub;
    std::optional<std::size_t> k;
    std::optional<double> tau;
    std::optional<double> p_thresh;
    std::size_t n_keep = 10;
    std::optional<double> detection_threshold;
    std::size_t T = 4;
    std::uint64_t seed = 0;
    std::size_t heads = 4;
    std::string gate_layer = "down32";
    std::vector<std::string> scrub_layers;    // empty = all
    std::vector<std::string> layer_allowlist;  // empty = all cross-attention layers
    double similarity_floor = 0.0;

    // Stage toggles.
    bool stage1 = false;
    bool stage2 = false;
    bool stage3 = false;

    std::vector<ConceptConfig> concepts;
    std::vector<PromptSpec> prompts;

    // Eval inputs.
    std::string eval_base_dir;
    std::string eval_edited_dir;
    std::string eval_target;

    std::string config_hash;  // hex FNV-1a of the canonical document
};

namespace detail {

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "pool", "prototype_pool", "concreteness", "popularity", "classifier", "out_dir",
        "alpha_target", "rank", "beta", "gamma", "delta_token", "delta_scrub", "k", "tau",
        "p_thresh", "n_keep", "detection_threshold", "T", "seed", "heads", "gate_layer",
        "scrub_layers", "layer_allowlist", "similarity_floor", "stage1", "stage2", "stage3",
        "concepts", "prompts", "eval_base_dir", "eval_edited_dir", "eval_target"};
    return keys;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        const auto& known = detail::known_config_keys();
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("config: unknown key '" + key + "'");
    }
    RunConfig c;
    auto get = [&](const char* key, auto& out) {
        if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("pool", c.pool);
    get("prototype_pool", c.prototype_pool);
    get("concreteness", c.concreteness);
    get("popularity", c.popularity);
    get("classifier", c.classifier);
    get("out_dir", c.out_dir);
    if (j.contains("alpha_target")) {
        c.alpha_target = j.at("alpha_target").get<double>();
        c.alpha_target_defaulted = false;
    }
    if (j.contains("rank") && !j.at("rank").is_null())
        c.rank = j.at("rank").get<std::size_t>();
    get("beta", c.beta);
    get("gamma", c.gamma);
    if (j.contains("delta_token")) c.delta_token = j.at("delta_token").get<double>();
    if (j.contains("delta_scrub")) c.delta_scrub = j.at("delta_scrub").get<double>();
    if (j.contains("k")) c.k = j.at("k").get<std::size_t>();
    if (j.contains("tau")) c.tau = j.at("tau").get<double>();
    if (j.contains("p_thresh")) c.p_thresh = j.at("p_thresh").get<double>();
    get("n_keep", c.n_keep);
    if (j.contains("detection_threshold"))
        c.detection_threshold = j.at("detection_threshold").get<double>();
    get("T", c.T);
    get("seed", c.seed);
    get("heads", c.heads);
    get("gate_layer", c.gate_layer);
    get("scrub_layers", c.scrub_layers);
    get("layer_allowlist", c.layer_allowlist);
    get("similarity_floor", c.similarity_floor);
    get("stage1", c.stage1);
    get("stage2", c.stage2);
    get("stage3", c.stage3);
    get("eval_base_dir", c.eval_base_dir);
    get("eval_edited_dir", c.eval_edited_dir);
    get("eval_target", c.eval_target);

    if (j.contains("concepts")) {
        for (const auto& cj : j.at("concepts")) {
            ConceptConfig cc;
            cc.name = cj.at("name").get<std::string>();
            cc.tokens = cj.at("tokens").get<std::vector<std::string>>();
            if (cj.contains("prototype")) cc.prototype = cj.at("prototype").get<std::string>();
            if (cj.contains("neighbors"))
                cc.neighbors = cj.at("neighbors").get<std::vector<std::string>>();
            for (const auto& [key, value] : cj.items()) {
                (void)value;
                if (key != "name" && key != "tokens" && key != "prototype" && key != "neighbors")
                    throw ConfigError("config: unknown concept key '" + key + "'");
            }
            c.concepts.push_back(std::move(cc));
        }
    }
    if (j.contains("prompts")) {
        for (const auto& pj : j.at("prompts")) {
            PromptSpec p;
            p.text = pj.at("text").get<std::string>();
            if (pj.contains("truth")) p.truth = pj.at("truth").get<std::string>();
            if (pj.contains("role")) p.role = pj.at("role").get<std::string>();
            for (const auto& [key, value] : pj.items()) {
                (void)value;
                if (key != "text" && key != "truth" && key != "role")
                    throw ConfigError("config: unknown prompt key '" + key + "'");
            }
            c.prompts.push_back(std::move(p));
        }
    }

    // Stage dependencies are cumulative: 1, 1+2, 1+2+3.
    if (c.stage2 && !c.stage1) throw ConfigError("config: stage2 requires stage1");
    if (c.stage3 && !c.stage2) throw ConfigError("config: stage3 requires stage2");
    if (c.beta < 0.0 || c.beta > 1.0) throw ConfigError("config: beta must lie in [0, 1]");
    if (c.gamma < 0.0 || c.gamma > 2.0) throw ConfigError("config: gamma must lie in [0, 2]");
    if (c.alpha_target <= 0.0) throw ConfigError("config: alpha_target must be positive");

    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    c.config_hash = buf;
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

// Collect every missing required key for a command and report them at once.
inline void require_keys(const RunConfig& c, const std::vector<std::string>& needed,
                         const std::string& command) {
    std::vector<std::string> missing;
    for (const auto& key : needed) {
        const bool present =
            (key == "k" && c.k) || (key == "tau" && c.tau) || (key == "p_thresh" && c.p_thresh) ||
            (key == "detection_threshold" && c.detection_threshold) ||
            (key == "delta_token" && c.delta_token) || (key == "delta_scrub" && c.delta_scrub) ||
            (key == "pool" && !c.pool.empty()) ||
            (key == "prototype_pool" && !c.prototype_pool.empty()) ||
            (key == "concreteness" && !c.concreteness.empty()) ||
            (key == "popularity" && !c.popularity.empty()) ||
            (key == "classifier" && !c.classifier.empty()) ||
            (key == "concepts" && !c.concepts.empty()) ||
            (key == "prompts" && !c.prompts.empty());
        if (!present) missing.push_back(key);
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << command << ": missing required config keys:";
        for (const auto& k : missing) msg << " " << k;
        throw ConfigError(msg.str());
    }
}

}  // namespace nlce
