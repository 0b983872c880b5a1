#include "viser/neighbor_search.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>

#include "json.hpp"

namespace viser {

TopKAccumulator::TopKAccumulator(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ShapeError("TopKAccumulator: capacity must be positive");
    heap_.reserve(capacity);
}

void TopKAccumulator::insert(double score, std::uint64_t id) {
    // heap comparator: "better" entries sink, so the front is the worst.
    const Entry e{score, id};
    if (heap_.size() < capacity_) {
        heap_.push_back(e);
        std::push_heap(heap_.begin(), heap_.end(), better);
        return;
    }
    if (!better(e, heap_.front())) return;  // dominated, no-op
    std::pop_heap(heap_.begin(), heap_.end(), better);
    heap_.back() = e;
    std::push_heap(heap_.begin(), heap_.end(), better);
}

std::vector<std::pair<double, std::uint64_t>> TopKAccumulator::take_sorted() {
    std::sort(heap_.begin(), heap_.end(), better);
    std::vector<std::pair<double, std::uint64_t>> out;
    out.reserve(heap_.size());
    for (const Entry& e : heap_) out.emplace_back(e.score, e.id);
    heap_.clear();
    return out;
}

std::vector<NeighborMatch> map_phase(const EmbeddingRecord& candidate,
                                     const std::vector<EmbeddingRecord>& labeled_index,
                                     std::size_t k_m) {
    if (labeled_index.empty()) throw EmptyCorpusError("map_phase: empty labeled index");
    TopKAccumulator top(k_m);
    for (const auto& rec : labeled_index) {
        top.insert(cosine_sim(candidate.vector, rec.vector), rec.id);
    }
    std::vector<NeighborMatch> out;
    out.reserve(top.size());
    for (const auto& [score, labeled_id] : top.take_sorted()) {
        out.push_back({labeled_id, candidate.id, score});
    }
    return out;
}

std::vector<NeighborMatch> reduce_phase(std::uint64_t labeled_id,
                                        const std::vector<NeighborMatch>& matches,
                                        std::size_t k_r) {
    TopKAccumulator top(k_r);
    for (const auto& m : matches) {
        if (m.labeled_id != labeled_id) {
            throw KeyViolationError("reduce_phase: match keyed by " + std::to_string(m.labeled_id) +
                                    " in stream for " + std::to_string(labeled_id));
        }
        top.insert(m.score, m.unlabeled_id);
    }
    std::vector<NeighborMatch> out;
    out.reserve(top.size());
    for (const auto& [score, unlabeled_id] : top.take_sorted()) {
        out.push_back({labeled_id, unlabeled_id, score});
    }
    return out;
}

namespace {

void check_corpora(const Corpus& labeled, const Corpus& unlabeled) {
    if (labeled.empty()) throw EmptyCorpusError("search: empty labeled corpus");
    if (unlabeled.empty()) throw EmptyCorpusError("search: empty unlabeled corpus");
    if (labeled.dimension() != unlabeled.dimension()) {
        throw DimensionMismatchError("search: labeled dimension " +
                                     std::to_string(labeled.dimension()) + " != unlabeled " +
                                     std::to_string(unlabeled.dimension()));
    }
}

using EmissionBuffer = std::vector<NeighborMatch>;

EmissionBuffer run_shard(const Corpus& unlabeled, std::size_t begin, std::size_t end,
                         const std::vector<EmbeddingRecord>& labeled_index, std::size_t k_m) {
    EmissionBuffer emissions;
    for (std::size_t i = begin; i < end; ++i) {
        auto matches = map_phase(unlabeled.records[i], labeled_index, k_m);
        emissions.insert(emissions.end(), matches.begin(), matches.end());
    }
    return emissions;
}

}  // namespace

MatchTable search(const Corpus& labeled, const Corpus& unlabeled, const SearchParams& params,
                  unsigned parallelism) {
    check_corpora(labeled, unlabeled);
    if (params.k_m < 1 || params.k_r < 1 || params.shard_count < 1) {
        throw ShapeError("search: k_m, k_r and shard_count must be positive");
    }

    const std::size_t n = unlabeled.size();
    const std::size_t shards = std::min(params.shard_count, n);
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t s = 0; s < shards; ++s) {
        ranges.emplace_back(s * n / shards, (s + 1) * n / shards);
    }

    // Map phase: one private emission buffer per shard.
    std::vector<EmissionBuffer> buffers(ranges.size());
    if (parallelism <= 1 || ranges.size() == 1) {
        for (std::size_t s = 0; s < ranges.size(); ++s) {
            buffers[s] = run_shard(unlabeled, ranges[s].first, ranges[s].second, labeled.records,
                                   params.k_m);
        }
    } else {
        std::vector<std::future<EmissionBuffer>> futures;
        futures.reserve(ranges.size());
        for (const auto& [begin, end] : ranges) {
            futures.push_back(std::async(std::launch::async, run_shard, std::cref(unlabeled),
                                         begin, end, std::cref(labeled.records), params.k_m));
        }
        for (std::size_t s = 0; s < futures.size(); ++s) buffers[s] = futures[s].get();
    }

    // Shuffle: group emissions by labeled id.
    std::unordered_map<std::uint64_t, std::vector<NeighborMatch>> grouped;
    grouped.reserve(labeled.size());
    for (const auto& buffer : buffers) {
        for (const auto& m : buffer) grouped[m.labeled_id].push_back(m);
    }

    // Reduce: deterministic top-k_r per key.
    MatchTable result;
    for (auto& [labeled_id, group] : grouped) {
        result.emplace(labeled_id, reduce_phase(labeled_id, group, params.k_r));
    }
    return result;
}

MatchTable exact_search(const Corpus& labeled, const Corpus& unlabeled, std::size_t k_r) {
    check_corpora(labeled, unlabeled);
    if (k_r < 1) throw ShapeError("exact_search: k_r must be positive");
    MatchTable result;
    for (const auto& lrec : labeled.records) {
        TopKAccumulator top(k_r);
        for (const auto& urec : unlabeled.records) {
            top.insert(cosine_sim(lrec.vector, urec.vector), urec.id);
        }
        std::vector<NeighborMatch> matches;
        matches.reserve(top.size());
        for (const auto& [score, unlabeled_id] : top.take_sorted()) {
            matches.push_back({lrec.id, unlabeled_id, score});
        }
        result.emplace(lrec.id, std::move(matches));
    }
    return result;
}

double match_recall(const MatchTable& result, const MatchTable& oracle) {
    std::size_t oracle_total = 0;
    std::size_t recovered = 0;
    for (const auto& [labeled_id, oracle_matches] : oracle) {
        oracle_total += oracle_matches.size();
        auto it = result.find(labeled_id);
        if (it == result.end()) continue;
        for (const auto& m : oracle_matches) {
            if (std::find(it->second.begin(), it->second.end(), m) != it->second.end()) {
                ++recovered;
            }
        }
    }
    return oracle_total == 0 ? 1.0 : static_cast<double>(recovered) / oracle_total;
}

std::vector<RegularizedSample> transfer_labels(const MatchTable& matches,
                                               const LabelTable& labeled_labels,
                                               std::size_t take) {
    if (take < 1) throw ShapeError("transfer_labels: take must be >= 1");
    std::vector<RegularizedSample> out;
    std::set<std::pair<std::uint64_t, LabelVector>> seen;
    for (const auto& [labeled_id, match_list] : matches) {
        if (match_list.empty()) continue;
        auto lit = labeled_labels.find(labeled_id);
        if (lit == labeled_labels.end()) {
            throw MissingLabelsError("transfer_labels: no labels for labeled id " +
                                     std::to_string(labeled_id));
        }
        const std::size_t n = std::min(take, match_list.size());
        for (std::size_t i = 0; i < n; ++i) {
            RegularizedSample sample{match_list[i].unlabeled_id, lit->second};
            if (seen.emplace(sample.features_source_id, sample.labels).second) {
                out.push_back(std::move(sample));
            }
        }
    }
    return out;
}

void write_matches_jsonl(const MatchTable& matches, std::ostream& out) {
    for (const auto& [labeled_id, match_list] : matches) {
        for (const auto& m : match_list) {
            nlohmann::ordered_json obj;
            obj["labeled_id"] = m.labeled_id;
            obj["unlabeled_id"] = m.unlabeled_id;
            obj["score"] = m.score;
            out << obj.dump() << '\n';
        }
    }
}

void write_matches_csv(const MatchTable& matches, std::ostream& out) {
    out << "labeled_id,unlabeled_id,score\n";
    char buf[64];
    for (const auto& [labeled_id, match_list] : matches) {
        for (const auto& m : match_list) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.score);
            out << m.labeled_id << ',' << m.unlabeled_id << ',' << buf << '\n';
        }
    }
}

}  // namespace viser
