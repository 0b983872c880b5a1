#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "viser/errors.hpp"

namespace viser {

// Unit-less feature vector; the space where cosine similarity lives.
using FeatureVector = std::vector<double>;

// Binary presence vector over N classes, entries in {0, 1}.
using LabelVector = std::vector<std::uint8_t>;

// A feature vector paired with its label vector.
struct LabeledSample {
    FeatureVector x;
    LabelVector y;
};

struct EmbeddingRecord {
    std::uint64_t id = 0;
    FeatureVector vector;
};

// A set of embedding records with corpus-unique ids. `labels` carries the
// optional per-record class index lists from the JSONL format (sorted,
// deduplicated); binary corpora have none.
struct Corpus {
    std::vector<EmbeddingRecord> records;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> labels;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    std::size_t dimension() const { return records.empty() ? 0 : records.front().vector.size(); }
};

double l2_norm(const FeatureVector& v);

// Scale to unit L2 norm. Vectors already within 1e-12 of unit norm are
// returned unchanged, which makes the operation bitwise idempotent.
// Throws ZeroVectorError / NonFiniteError on degenerate input.
FeatureVector normalize(const FeatureVector& v);

// Dot product of two normalized vectors, accumulated left to right in
// 64-bit and clamped to [-1, 1]. The fixed summation order makes the
// result bitwise symmetric in its arguments.
double cosine_sim(const EmbeddingRecord& a, const EmbeddingRecord& b);
double cosine_sim(const FeatureVector& a, const FeatureVector& b);

// Normalize every record in place. Error messages name the record id.
void normalize_corpus(Corpus& corpus);

}  // namespace viser
