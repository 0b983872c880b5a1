#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "oracles.hpp"
#include "viser/neighbor_search.hpp"
#include "viser/rng.hpp"

using namespace viser;

namespace {

bool tables_equal(const MatchTable& a, const MatchTable& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [key, matches] : a) {
        auto it = b.find(key);
        if (it == b.end() || !(it->second == matches)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("TopKAccumulator keeps a sorted bounded set with id tie-breaks") {
    TopKAccumulator top(3);
    top.insert(0.5, 10);
    top.insert(0.9, 4);
    top.insert(0.5, 2);
    CHECK(top.size() == 3);
    top.insert(0.1, 1);  // dominated, no-op
    CHECK(top.size() == 3);
    top.insert(0.5, 7);  // ties with (0.5, 10); smaller id wins
    auto sorted = top.take_sorted();
    REQUIRE(sorted.size() == 3);
    CHECK(sorted[0] == std::pair<double, std::uint64_t>{0.9, 4});
    CHECK(sorted[1] == std::pair<double, std::uint64_t>{0.5, 2});
    CHECK(sorted[2] == std::pair<double, std::uint64_t>{0.5, 7});
    CHECK_THROWS_AS(TopKAccumulator(0), ShapeError);
}

TEST_CASE("map_phase emits sorted truncated rows") {
    // candidate orthogonal to every labeled vector: all scores tie at 0
    std::vector<EmbeddingRecord> labeled{{0, {1, 0, 0}}, {1, {0, 1, 0}}, {2, {0, 1, 0}}};
    EmbeddingRecord candidate{99, {0, 0, 1}};
    auto matches = map_phase(candidate, labeled, 2);
    REQUIRE(matches.size() == 2);
    CHECK(matches[0] == NeighborMatch{0, 99, 0.0});
    CHECK(matches[1] == NeighborMatch{1, 99, 0.0});

    // exact duplicate of labeled #5 wins at k_m = 1
    std::vector<EmbeddingRecord> labeled2;
    Rng rng(5);
    for (std::uint64_t i = 0; i < 8; ++i) labeled2.push_back({i, normalize(rng.gaussian_vector(6))});
    EmbeddingRecord dup{50, labeled2[5].vector};
    auto best = map_phase(dup, labeled2, 1);
    REQUIRE(best.size() == 1);
    CHECK(best[0].labeled_id == 5);
    CHECK(best[0].score >= 1.0 - 1e-13);  // self-dot of a unit vector, up to rounding
    CHECK(best[0].score <= 1.0);
}

TEST_CASE("map_phase equals a brute-force row sort at full width") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 2 + rng.uniform_int(16);
        std::vector<EmbeddingRecord> labeled;
        for (std::uint64_t i = 0; i < 30; ++i) {
            labeled.push_back({i, normalize(rng.gaussian_vector(dim))});
        }
        EmbeddingRecord candidate{1000, normalize(rng.gaussian_vector(dim))};
        const auto matches = map_phase(candidate, labeled, labeled.size());
        const auto row = oracles::full_row_sorted(candidate, labeled);
        REQUIRE(matches.size() == row.size());
        for (std::size_t i = 0; i < row.size(); ++i) {
            CHECK(matches[i].labeled_id == row[i].second);
            CHECK(matches[i].score == row[i].first);  // bitwise
        }
    }
}

TEST_CASE("reduce_phase sorts, truncates and validates keys") {
    CHECK(reduce_phase(3, {}, 5).empty());

    std::vector<NeighborMatch> stream{{3, 7, 0.9}, {3, 2, 0.9}, {3, 9, 0.1}};
    auto out = reduce_phase(3, stream, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == NeighborMatch{3, 2, 0.9});
    CHECK(out[1] == NeighborMatch{3, 7, 0.9});

    stream.push_back({4, 1, 0.5});
    CHECK_THROWS_AS(reduce_phase(3, stream, 2), KeyViolationError);
}

TEST_CASE("reduce_phase equals a full sort regardless of arrival order") {
    Rng rng(21);
    std::vector<NeighborMatch> stream;
    for (int i = 0; i < 1000; ++i) {
        stream.push_back({7, static_cast<std::uint64_t>(i), rng.uniform(-1.0, 1.0)});
    }
    auto sorted = stream;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.score > b.score || (a.score == b.score && a.unlabeled_id < b.unlabeled_id);
    });
    sorted.resize(10);

    auto out = reduce_phase(7, stream, 10);
    CHECK(out == sorted);
    rng.shuffle(stream);
    CHECK(reduce_phase(7, stream, 10) == sorted);
}

TEST_CASE("search on an identity corpus finds each record's own copy") {
    // exactly-unit vectors: scaled one-hot directions, so self-similarity
    // is exactly 1.0
    Corpus labeled;
    for (std::uint64_t i = 0; i < 12; ++i) {
        FeatureVector v(12, 0.0);
        v[i] = i % 2 ? 2.5 : -0.75;
        labeled.records.push_back({i, normalize(v)});
    }
    Corpus unlabeled = labeled;
    SearchParams params{100, 1, 3};
    const auto result = search(labeled, unlabeled, params);
    REQUIRE(result.size() == 12);
    for (const auto& [labeled_id, matches] : result) {
        REQUIRE(matches.size() == 1);
        CHECK(matches[0].unlabeled_id == labeled_id);
        CHECK(matches[0].score == 1.0);
    }

    // random unit vectors: the own copy still ranks first, score 1 - O(eps)
    Rng rng(33);
    Corpus rl = oracles::random_unit_corpus(12, 8, rng);
    const auto rr = search(rl, rl, {100, 1, 3});
    for (const auto& [labeled_id, matches] : rr) {
        REQUIRE(matches.size() == 1);
        CHECK(matches[0].unlabeled_id == labeled_id);
        CHECK(matches[0].score >= 1.0 - 1e-13);
    }
}

TEST_CASE("search is invariant to shard count and parallelism") {
    Rng rng(37);
    Corpus labeled = oracles::random_unit_corpus(25, 12, rng);
    Corpus unlabeled = oracles::random_unit_corpus(400, 12, rng);
    const auto base = search(labeled, unlabeled, {10, 5, 1});
    for (std::size_t shards : {4u, 7u, 100u, 401u}) {
        CHECK(tables_equal(base, search(labeled, unlabeled, {10, 5, shards})));
    }
    CHECK(tables_equal(base, search(labeled, unlabeled, {10, 5, 7}, 4)));
}

TEST_CASE("search at full mapper width equals exact_search bitwise") {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t dim = 4 + rng.uniform_int(24);
        Corpus labeled = oracles::random_unit_corpus(20 + rng.uniform_int(50), dim, rng);
        Corpus unlabeled = oracles::random_unit_corpus(200 + rng.uniform_int(800), dim, rng);
        const auto approx = search(labeled, unlabeled, {labeled.size(), 10, 3});
        const auto oracle = exact_search(labeled, unlabeled, 10);
        CHECK(tables_equal(approx, oracle));
    }
}

TEST_CASE("truncated search stays inside the oracle ranking") {
    Rng rng(43);
    Corpus labeled = oracles::random_unit_corpus(40, 10, rng);
    Corpus unlabeled = oracles::random_unit_corpus(600, 10, rng);
    const auto full = exact_search(labeled, unlabeled, unlabeled.size());

    for (std::size_t k_m : {1u, 3u, 10u}) {
        const auto approx = search(labeled, unlabeled, {k_m, 5, 4});
        for (const auto& [labeled_id, matches] : approx) {
            const auto& oracle_row = full.at(labeled_id);
            for (const auto& m : matches) {
                // every returned match appears in the oracle ranking with an
                // identical score
                bool found = false;
                for (const auto& o : oracle_row) {
                    if (o.unlabeled_id == m.unlabeled_id) {
                        CHECK(o.score == m.score);
                        found = true;
                        break;
                    }
                }
                CHECK(found);
            }
        }
    }
}

TEST_CASE("recall never drops when k_m grows") {
    Rng rng(47);
    Corpus labeled = oracles::random_unit_corpus(30, 8, rng);
    Corpus unlabeled = oracles::random_unit_corpus(500, 8, rng);
    const auto oracle = exact_search(labeled, unlabeled, 5);
    double prev = -1.0;
    for (std::size_t k_m : {1u, 2u, 5u, 15u, 30u}) {
        const double recall = match_recall(search(labeled, unlabeled, {k_m, 5, 2}), oracle);
        CHECK(recall >= prev);
        prev = recall;
    }
    CHECK(prev == 1.0);  // k_m = |A| recovers everything
}

TEST_CASE("search validates inputs") {
    Rng rng(51);
    Corpus ok = oracles::random_unit_corpus(3, 4, rng);
    Corpus other_dim = oracles::random_unit_corpus(3, 5, rng);
    CHECK_THROWS_AS(search(Corpus{}, ok, {}), EmptyCorpusError);
    CHECK_THROWS_AS(search(ok, Corpus{}, {}), EmptyCorpusError);
    CHECK_THROWS_AS(search(ok, other_dim, {}), DimensionMismatchError);
    CHECK_THROWS_AS(exact_search(ok, other_dim, 3), DimensionMismatchError);
}

TEST_CASE("transfer_labels copies donor labels and dedups") {
    MatchTable matches;
    matches[0] = {{0, 42, 0.9}, {0, 43, 0.8}};
    matches[1] = {{1, 42, 0.7}};
    matches[2] = {};

    LabelTable labels;
    labels[0] = {0, 0, 0, 1, 0};
    labels[1] = {0, 0, 0, 1, 0};  // same labels as donor 0: candidate for dedup
    labels[2] = {1, 0, 0, 0, 0};

    auto out = transfer_labels(matches, labels, 1);
    REQUIRE(out.size() == 1);  // (42, 00010) emitted once, empty list skipped
    CHECK(out[0] == RegularizedSample{42, {0, 0, 0, 1, 0}});

    out = transfer_labels(matches, labels, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == RegularizedSample{42, {0, 0, 0, 1, 0}});
    CHECK(out[1] == RegularizedSample{43, {0, 0, 0, 1, 0}});

    matches[3] = {{3, 9, 0.5}};
    CHECK_THROWS_AS(transfer_labels(matches, labels, 1), MissingLabelsError);
}

TEST_CASE("transfer_labels on an identity corpus keeps labels unchanged") {
    Rng rng(53);
    Corpus corpus = oracles::random_unit_corpus(10, 6, rng);
    const auto result = search(corpus, corpus, {100, 1, 2});
    LabelTable labels;
    for (std::uint64_t i = 0; i < 10; ++i) {
        labels[i] = LabelVector{static_cast<std::uint8_t>(i % 2), 1};
    }
    const auto samples = transfer_labels(result, labels, 1);
    REQUIRE(samples.size() == 10);
    for (const auto& s : samples) {
        CHECK(s.labels == labels[s.features_source_id]);
    }
}

TEST_CASE("match writers emit sorted rows") {
    MatchTable matches;
    matches[1] = {{1, 5, 0.5}, {1, 6, 0.25}};
    matches[0] = {{0, 2, 1.0}};

    std::ostringstream jsonl;
    write_matches_jsonl(matches, jsonl);
    CHECK(jsonl.str() ==
          "{\"labeled_id\":0,\"unlabeled_id\":2,\"score\":1.0}\n"
          "{\"labeled_id\":1,\"unlabeled_id\":5,\"score\":0.5}\n"
          "{\"labeled_id\":1,\"unlabeled_id\":6,\"score\":0.25}\n");

    std::ostringstream csv;
    write_matches_csv(matches, csv);
    CHECK(csv.str() ==
          "labeled_id,unlabeled_id,score\n"
          "0,2,1\n"
          "1,5,0.5\n"
          "1,6,0.25\n");
}
