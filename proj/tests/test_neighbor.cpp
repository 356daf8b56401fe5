#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nlce/neighbor.hpp"

using namespace nlce;

namespace {

EmbeddingPool small_pool() {
    EmbeddingPool pool(2);
    pool.add("t", {1, 0});
    pool.add("a", {1, 0});
    pool.add("b", {0, 1});
    return pool;
}

ConceptSpec target_t() {
    ConceptSpec spec;
    spec.name = "t";
    spec.token_names = {"t"};
    return spec;
}

}  // namespace

TEST_CASE("topk excludes the target's own tokens and ranks by cosine") {
    const EmbeddingPool pool = small_pool();
    const CandidateSet one = topk_candidates(target_t(), pool, 1);
    REQUIRE(one.entries.size() == 1);
    CHECK(one.entries[0].name == "a");
    CHECK(one.entries[0].text_similarity == doctest::Approx(1.0));

    const CandidateSet two = topk_candidates(target_t(), pool, 2);
    REQUIRE(two.entries.size() == 2);
    CHECK(two.entries[0].name == "a");
    CHECK(two.entries[1].name == "b");
    CHECK(two.entries[1].text_similarity == doctest::Approx(0.0));
}

TEST_CASE("topk breaks exact ties by pool order") {
    EmbeddingPool pool(2);
    pool.add("t", {1, 0});
    pool.add("later", {1, 0});
    pool.add("earlier-no", {0, 1});
    pool.add("also", {2, 0});  // same direction, same cosine
    const CandidateSet got = topk_candidates(target_t(), pool, 2);
    REQUIRE(got.entries.size() == 2);
    CHECK(got.entries[0].name == "later");
    CHECK(got.entries[1].name == "also");
}

TEST_CASE("topk against diagonal candidate") {
    EmbeddingPool pool(2);
    pool.add("t", {1, 0});
    pool.add("a", {1, 0});
    pool.add("b", {1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
    const CandidateSet got = topk_candidates(target_t(), pool, 1);
    REQUIRE(got.entries.size() == 1);
    CHECK(got.entries[0].name == "a");

    CHECK_THROWS_AS(topk_candidates(target_t(), EmbeddingPool(2), 1), DataError);
    CHECK_THROWS_AS(topk_candidates(target_t(), pool, 0), DataError);
}

TEST_CASE("filter keeps inclusive boundaries and drops missing scores") {
    CandidateSet cands;
    cands.entries = {{"a", 0, 0.9, {}, {}, {}},
                     {"b", 1, 0.8, {}, {}, {}},
                     {"c", 2, 0.7, {}, {}, {}}};
    const std::unordered_map<std::string, double> con = {{"a", 0.9}, {"b", 0.9}, {"c", 0.5}};
    const std::unordered_map<std::string, double> pop = {{"a", 100}, {"b", 5}, {"c", 10}};

    const CandidateSet kept = filter_candidates(cands, con, 0.5, pop, 10.0);
    REQUIRE(kept.entries.size() == 2);
    CHECK(kept.entries[0].name == "a");
    CHECK(kept.entries[1].name == "c");  // concreteness exactly tau is kept

    const std::unordered_map<std::string, double> missing = {{"a", 0.9}};
    const CandidateSet dropped = filter_candidates(cands, missing, 0.0, pop, 0.0);
    CHECK(dropped.entries.size() == 1);
    CHECK(dropped.dropped_missing_score == 2);
}

TEST_CASE("build_prototype normalizes then averages") {
    const Vec single = build_prototype({{3, 4}});
    CHECK(single[0] == doctest::Approx(0.6));
    CHECK(single[1] == doctest::Approx(0.8));

    const Vec mean = build_prototype({{1, 0}, {0, 1}});
    CHECK(mean[0] == doctest::Approx(0.5));
    CHECK(mean[1] == doctest::Approx(0.5));

    const Vec dup = build_prototype({{3, 4}, {3, 4}});
    CHECK(dup[0] == doctest::Approx(0.6));
    CHECK(dup[1] == doctest::Approx(0.8));

    CHECK_THROWS_AS(build_prototype({{0, 0}}), DegenerateInputError);
}

TEST_CASE("rerank orders by prototype cosine and truncates") {
    EmbeddingPool protos(2);
    protos.add("far", {0.98, 0.2});
    protos.add("near", {1, 0});
    CandidateSet cands;
    cands.entries = {{"far", 0, 0.9, {}, {}, {}}, {"near", 1, 0.5, {}, {}, {}}};

    const NeighborSet ns = rerank_visual(cands, protos, {1, 0}, 10);
    REQUIRE(ns.members.size() == 2);
    CHECK(ns.members[0].name == "near");
    CHECK(ns.members[1].name == "far");

    const NeighborSet empty = rerank_visual(cands, protos, {1, 0}, 0);
    CHECK(empty.members.empty());

    CandidateSet with_missing = cands;
    with_missing.entries.push_back({"ghost", 2, 0.1, {}, {}, {}});
    const NeighborSet dropped = rerank_visual(with_missing, protos, {1, 0}, 10);
    CHECK(dropped.members.size() == 2);
    CHECK(dropped.dropped_missing_prototype == 1);
    CHECK_THROWS_AS(
        rerank_visual(with_missing, protos, {1, 0}, 10, MissingPrototypePolicy::Error),
        LookupError);
}

TEST_CASE("funnel never grows and excludes the target") {
    EmbeddingPool pool(3);
    pool.add("t", {1, 0, 0});
    for (int i = 0; i < 12; ++i) {
        Vec v = {1.0, 0.01 * i, 0.02 * i};
        pool.add("n" + std::to_string(i), v);
    }
    EmbeddingPool protos(2);
    std::unordered_map<std::string, double> con, pop;
    for (int i = 0; i < 12; ++i) {
        con["n" + std::to_string(i)] = i % 2 ? 0.9 : 0.1;
        pop["n" + std::to_string(i)] = 100;
        protos.add("n" + std::to_string(i), {1.0, 0.1 * i});
    }
    const CandidateSet top = topk_candidates(target_t(), pool, 8);
    const CandidateSet filtered = filter_candidates(top, con, 0.5, pop, 1.0);
    const NeighborSet ns = rerank_visual(filtered, protos, {1, 0}, 3);
    CHECK(top.entries.size() <= 8);
    CHECK(filtered.entries.size() <= top.entries.size());
    CHECK(ns.members.size() <= filtered.entries.size());
    CHECK(ns.members.size() <= 3);
    for (const auto& m : ns.members) CHECK(m.name != "t");
}

TEST_CASE("pool permutation only affects exact-tie resolution") {
    EmbeddingPool fwd(2), rev(2);
    fwd.add("t", {1, 0});
    fwd.add("x", {0.9, 0.1});
    fwd.add("y", {0.5, 0.5});
    rev.add("y", {0.5, 0.5});
    rev.add("x", {0.9, 0.1});
    rev.add("t", {1, 0});
    const CandidateSet a = topk_candidates(target_t(), fwd, 2);
    const CandidateSet b = topk_candidates(target_t(), rev, 2);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        CHECK(a.entries[i].name == b.entries[i].name);
}
