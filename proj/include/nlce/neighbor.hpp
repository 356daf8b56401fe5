#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "nlce/embedding.hpp"
#include "nlce/errors.hpp"
#include "nlce/matrix.hpp"

namespace nlce {

// Mining funnel: top-k cosine retrieval over the external pool, then
// concreteness/popularity filtering, then visual-prototype re-ranking.

struct Candidate {
    std::string name;
    std::size_t pool_pos = 0;
    double text_similarity = 0.0;
    std::optional<double> concreteness;
    std::optional<double> popularity;
    std::optional<double> visual_similarity;
};

struct CandidateSet {
    std::vector<Candidate> entries;
    std::string ordering;  // which field the current order reflects
    std::size_t dropped_missing_score = 0;
};

struct NeighborSet {
    std::string concept_name;
    std::vector<Candidate> members;  // ordered by final visual rank
    std::size_t dropped_missing_prototype = 0;
    // Parameters used, for the report.
    std::size_t k = 0;
    double tau = 0.0;
    double p_thresh = 0.0;
    std::size_t n_keep = 0;
};

enum class MissingPrototypePolicy { Drop, Error };

// Similarity of a pool entry to a multi-token target is the max cosine over
// the target tokens (most permissive retrieval). Target's own token names are
// excluded before ranking; ties resolve by pool position.
inline CandidateSet topk_candidates(const ConceptSpec& target, const EmbeddingPool& pool,
                                    std::size_t k) {
    if (pool.size() == 0) throw DataError("topk_candidates: empty pool");
    if (k == 0) throw DataError("topk_candidates: k must be >= 1");

    std::vector<Vec> target_vecs;
    target_vecs.reserve(target.token_names.size());
    for (const auto& name : target.token_names) target_vecs.push_back(pool.vector(name));

    std::unordered_set<std::string> excluded(target.token_names.begin(),
                                             target.token_names.end());
    CandidateSet out;
    out.ordering = "text_similarity";
    for (std::size_t pos = 0; pos < pool.size(); ++pos) {
        const auto& entry = pool.entry(pos);
        if (excluded.count(entry.name)) continue;
        double best = -1.0;
        for (const Vec& t : target_vecs) best = std::max(best, cosine(t, entry.vector));
        out.entries.push_back(Candidate{entry.name, pos, best, {}, {}, {}});
    }
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const Candidate& a, const Candidate& b) {
                         return a.text_similarity > b.text_similarity;
                     });
    if (out.entries.size() > k) out.entries.resize(k);
    return out;
}

// Keep entries with concreteness >= tau AND popularity >= p_thresh (both
// inclusive). Entries missing from either sidecar are dropped and counted.
inline CandidateSet filter_candidates(const CandidateSet& cands,
                                      const std::unordered_map<std::string, double>& concreteness,
                                      double tau,
                                      const std::unordered_map<std::string, double>& popularity,
                                      double p_thresh) {
    CandidateSet out;
    out.ordering = cands.ordering;
    for (Candidate c : cands.entries) {
        const auto con = concreteness.find(c.name);
        const auto pop = popularity.find(c.name);
        if (con == concreteness.end() || pop == popularity.end()) {
            ++out.dropped_missing_score;
            continue;
        }
        c.concreteness = con->second;
        c.popularity = pop->second;
        if (*c.concreteness >= tau && *c.popularity >= p_thresh) out.entries.push_back(std::move(c));
    }
    return out;
}

// L2-normalize each feature vector, then take the arithmetic mean. The mean
// is not re-normalized; the cosine in rerank handles scale.
inline Vec build_prototype(const std::vector<Vec>& feature_vectors) {
    if (feature_vectors.empty()) throw DataError("build_prototype: no feature vectors");
    const std::size_t p = feature_vectors.front().size();
    Vec proto(p, 0.0);
    for (const Vec& v : feature_vectors) {
        if (v.size() != p) throw ShapeError("build_prototype: ragged feature vectors");
        const double n = norm2(v);
        if (n == 0.0) throw DegenerateInputError("build_prototype: zero feature vector");
        for (std::size_t i = 0; i < p; ++i) proto[i] += v[i] / n;
    }
    for (double& x : proto) x /= static_cast<double>(feature_vectors.size());
    return proto;
}

inline NeighborSet rerank_visual(const CandidateSet& cands, const EmbeddingPool& prototypes,
                                 const Vec& target_prototype, std::size_t n_keep,
                                 MissingPrototypePolicy policy = MissingPrototypePolicy::Drop) {
    if (norm2(target_prototype) == 0.0)
        throw DegenerateInputError("rerank_visual: zero target prototype");
    NeighborSet out;
    out.n_keep = n_keep;
    for (Candidate c : cands.entries) {
        const auto pos = prototypes.find(c.name);
        if (!pos) {
            if (policy == MissingPrototypePolicy::Error)
                throw LookupError("rerank_visual: missing prototype for '" + c.name + "'");
            ++out.dropped_missing_prototype;
            continue;
        }
        c.visual_similarity = cosine(target_prototype, prototypes.entry(*pos).vector);
        out.members.push_back(std::move(c));
    }
    std::stable_sort(out.members.begin(), out.members.end(),
                     [](const Candidate& a, const Candidate& b) {
                         return *a.visual_similarity > *b.visual_similarity;
                     });
    if (out.members.size() > n_keep) out.members.resize(n_keep);
    return out;
}

inline nlohmann::ordered_json neighbor_report(const NeighborSet& ns) {
    nlohmann::ordered_json j;
    j["concept"] = ns.concept_name;
    j["parameters"] = {{"k", ns.k}, {"tau", ns.tau}, {"p_thresh", ns.p_thresh},
                       {"n_keep", ns.n_keep}};
    auto members = nlohmann::ordered_json::array();
    for (const auto& m : ns.members) {
        nlohmann::ordered_json e;
        e["name"] = m.name;
        e["text_sim"] = m.text_similarity;
        e["visual_sim"] = m.visual_similarity.value_or(0.0);
        members.push_back(e);
    }
    j["members"] = members;
    return j;
}

}  // namespace nlce
