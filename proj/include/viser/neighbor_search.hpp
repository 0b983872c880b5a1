#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include "viser/embedding.hpp"

namespace viser {

struct SearchParams {
    std::size_t k_m = 1000;       // per-mapper emission cutoff
    std::size_t k_r = 10;         // per-key reducer cutoff
    std::size_t shard_count = 1;  // contiguous partitions of the unlabeled corpus
};

struct NeighborMatch {
    std::uint64_t labeled_id = 0;
    std::uint64_t unlabeled_id = 0;
    double score = 0.0;  // cosine similarity, in [-1, 1]

    friend bool operator==(const NeighborMatch&, const NeighborMatch&) = default;
};

// Bounded top-k selection ordered by (score desc, id asc). Inserting a
// dominated entry once full is a no-op.
class TopKAccumulator {
  public:
    explicit TopKAccumulator(std::size_t capacity);

    void insert(double score, std::uint64_t id);
    std::size_t size() const { return heap_.size(); }
    std::size_t capacity() const { return capacity_; }

    // Drains the accumulator, returning entries best-first.
    std::vector<std::pair<double, std::uint64_t>> take_sorted();

  private:
    struct Entry {
        double score;
        std::uint64_t id;
    };
    static bool better(const Entry& a, const Entry& b) {
        return a.score > b.score || (a.score == b.score && a.id < b.id);
    }

    std::size_t capacity_;
    std::vector<Entry> heap_;  // heap front = worst retained entry
};

// Results keyed by labeled id; each list sorted by (score desc, unlabeled id asc).
using MatchTable = std::map<std::uint64_t, std::vector<NeighborMatch>>;

// Mapper of the distributed search: similarities from one unlabeled
// candidate to every labeled record, truncated to the top k_m.
std::vector<NeighborMatch> map_phase(const EmbeddingRecord& candidate,
                                     const std::vector<EmbeddingRecord>& labeled_index,
                                     std::size_t k_m);

// Reducer: top k_r of one key's match stream, deterministic regardless of
// arrival order. Throws KeyViolationError on a foreign labeled_id.
std::vector<NeighborMatch> reduce_phase(std::uint64_t labeled_id,
                                        const std::vector<NeighborMatch>& matches,
                                        std::size_t k_r);

// Full map/shuffle/reduce pipeline over `shard_count` contiguous shards of
// the unlabeled corpus. Output is independent of shard count and of shard
// execution order; `parallelism` > 1 runs shards on worker threads.
MatchTable search(const Corpus& labeled, const Corpus& unlabeled, const SearchParams& params,
                  unsigned parallelism = 1);

// Exhaustive per-labeled-record scan; the oracle the approximate search is
// judged against. Same tie-break rule as `search`.
MatchTable exact_search(const Corpus& labeled, const Corpus& unlabeled, std::size_t k_r);

// Fraction of oracle matches (exact triple equality) recovered by `result`.
double match_recall(const MatchTable& result, const MatchTable& oracle);

struct RegularizedSample {
    std::uint64_t features_source_id = 0;  // id in the unlabeled corpus
    LabelVector labels;                    // copied verbatim from the donor

    friend bool operator==(const RegularizedSample&, const RegularizedSample&) = default;
};

using LabelTable = std::map<std::uint64_t, LabelVector>;

// For each labeled id take up to `take` top matches and copy the donor's
// label vector onto them; identical (unlabeled_id, labels) pairs are
// emitted once. Throws MissingLabelsError when a donor has no labels.
std::vector<RegularizedSample> transfer_labels(const MatchTable& matches,
                                               const LabelTable& labeled_labels,
                                               std::size_t take);

// Match output, sorted by (labeled_id, rank).
void write_matches_jsonl(const MatchTable& matches, std::ostream& out);
void write_matches_csv(const MatchTable& matches, std::ostream& out);

}  // namespace viser
