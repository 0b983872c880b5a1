#include "viser/embedding.hpp"

#include <cmath>
#include <string>

namespace viser {

double l2_norm(const FeatureVector& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

FeatureVector normalize(const FeatureVector& v) {
    if (v.empty()) throw ZeroVectorError("normalize: empty vector");
    for (double x : v) {
        if (!std::isfinite(x)) throw NonFiniteError("normalize: non-finite entry");
    }
    const double norm = l2_norm(v);
    if (norm == 0.0) throw ZeroVectorError("normalize: all-zero vector");
    if (std::abs(norm - 1.0) <= 1e-12) return v;
    FeatureVector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
    return out;
}

double cosine_sim(const FeatureVector& a, const FeatureVector& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatchError("cosine_sim: dimension mismatch (" + std::to_string(a.size()) +
                                     " vs " + std::to_string(b.size()) + ")");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    if (dot > 1.0) dot = 1.0;
    if (dot < -1.0) dot = -1.0;
    return dot;
}

double cosine_sim(const EmbeddingRecord& a, const EmbeddingRecord& b) {
    return cosine_sim(a.vector, b.vector);
}

void normalize_corpus(Corpus& corpus) {
    for (auto& rec : corpus.records) {
        try {
            rec.vector = normalize(rec.vector);
        } catch (const ZeroVectorError& e) {
            throw ZeroVectorError("record id " + std::to_string(rec.id) + ": " + e.what());
        } catch (const NonFiniteError& e) {
            throw NonFiniteError("record id " + std::to_string(rec.id) + ": " + e.what());
        }
    }
}

}  // namespace viser
