#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "viser/model.hpp"
#include "viser/neighbor_search.hpp"
#include "viser/synthetic.hpp"

namespace viser {

inline constexpr const char* kArtifactVersion = "viser 0.1.0";

enum class Method { cross_entropy, dropout, at, vat, viser };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct BenchConfig {
    std::vector<Method> methods{Method::cross_entropy, Method::dropout, Method::at, Method::vat,
                                Method::viser};
    std::uint32_t seed_start = 0;
    std::size_t seed_count = 50;
    SyntheticSpec data;
    TrainConfig train;        // per-seed; the seed field is overridden per run
    double eps_at = 0.25;     // l-inf budget for the AT method
    double eps_vat = 1.0;     // l2 budget for the VAT method
    double xi = 0.0;          // VAT finite-difference scale, 0 = auto
    std::size_t power_iters = 1;
    double reg_weight = 1.0;
    SearchParams search;
    std::size_t take = 1;
    bool viser_restart = false;  // restart fine-tuning from fresh weights
};

struct MethodStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
};

struct RunRecord {
    std::string artifact_version = kArtifactVersion;
    BenchConfig config;
    std::vector<std::pair<std::uint32_t, std::map<Method, double>>> per_seed;
    std::map<Method, MethodStats> aggregate;
    double wall_clock_seconds = 0.0;
};

// Table-3-style benchmark: per seed, generate a dataset, train every method
// from one shared initialization, and record the test error. The ViSeR arm
// embeds both sets with the plain cross-entropy model, augments via the
// neighbor search, and fine-tunes from the pretrained weights. Seeds run in
// parallel up to `threads` workers (0 = VISER_THREADS or hardware).
RunRecord run_benchmark(const BenchConfig& cfg, unsigned threads = 0,
                        const std::string& save_models_dir = "");

std::map<Method, MethodStats> recompute_aggregates(
    const std::vector<std::pair<std::uint32_t, std::map<Method, double>>>& per_seed);

nlohmann::ordered_json bench_config_json(const BenchConfig& cfg);
nlohmann::ordered_json run_record_json(const RunRecord& record);

// FNV-1a hash of the canonical config JSON; names the run record file.
std::string config_hash(const BenchConfig& cfg);

// Writes record_<hash>.json under `dir`; refuses to overwrite an existing
// record unless forced. Returns the path written.
std::string save_run_record(const RunRecord& record, const std::string& dir, bool force);

// Worker-count resolution shared by the CLI tools: explicit value, else the
// VISER_THREADS environment variable, else hardware concurrency.
unsigned resolve_threads(unsigned requested);

}  // namespace viser
