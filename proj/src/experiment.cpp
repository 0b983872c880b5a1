#include "viser/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace viser {

std::string method_name(Method m) {
    switch (m) {
        case Method::cross_entropy: return "cross_entropy";
        case Method::dropout: return "dropout";
        case Method::at: return "at";
        case Method::vat: return "vat";
        case Method::viser: return "viser";
    }
    throw Error("method_name: unknown method");
}

Method parse_method(const std::string& name) {
    if (name == "cross_entropy" || name == "none" || name == "ce") return Method::cross_entropy;
    if (name == "dropout") return Method::dropout;
    if (name == "at") return Method::at;
    if (name == "vat") return Method::vat;
    if (name == "viser") return Method::viser;
    throw Error("unknown method `" + name + "` (expected cross_entropy|dropout|at|vat|viser)");
}

namespace {

struct SeedOutcome {
    std::map<Method, double> errors;
    std::map<Method, MlpParams> models;
};

double test_error(const MlpParams& params, const std::vector<SyntheticSample>& test) {
    std::vector<FeatureVector> inputs;
    LabelVector truth;
    inputs.reserve(test.size());
    truth.reserve(test.size());
    for (const auto& s : test) {
        inputs.push_back(s.ambient);
        truth.push_back(static_cast<std::uint8_t>(s.cls));
    }
    std::vector<double> scores = predict_scores(params, inputs);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if ((scores[i] > 0.5) != (truth[i] != 0)) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(scores.size());
}

SeedOutcome run_seed(const BenchConfig& cfg, std::uint32_t seed, bool keep_models) {
    SyntheticSpec sspec = cfg.data;
    sspec.seed = seed;
    const SyntheticDataset ds = generate(sspec);

    std::vector<LabeledSample> labeled;
    labeled.reserve(ds.train.size());
    for (const auto& s : ds.train) {
        labeled.push_back({s.ambient, LabelVector{static_cast<std::uint8_t>(s.cls)}});
    }

    const MlpShape shape{sspec.ambient_dim, 100, 1};
    TrainConfig tcfg = cfg.train;
    tcfg.seed = mix_seed(seed, 0x7a11);

    PerturbationConfig pert;
    pert.xi = cfg.xi;
    pert.power_iters = cfg.power_iters;

    // The plain cross-entropy model doubles as the ViSeR embedding model.
    const bool need_ce =
        std::count(cfg.methods.begin(), cfg.methods.end(), Method::cross_entropy) > 0 ||
        std::count(cfg.methods.begin(), cfg.methods.end(), Method::viser) > 0;
    MlpParams ce_params;
    if (need_ce) {
        TrainConfig c = tcfg;
        c.dropout_p = 0.0;
        ce_params = train(labeled, shape, c).params;
    }

    SeedOutcome outcome;
    for (Method m : cfg.methods) {
        MlpParams params;
        switch (m) {
            case Method::cross_entropy: {
                params = ce_params;
                break;
            }
            case Method::dropout: {
                TrainOptions opts;
                opts.reg = Regularizer::dropout;
                params = train(labeled, shape, tcfg, opts).params;
                break;
            }
            case Method::at: {
                TrainConfig c = tcfg;
                c.dropout_p = 0.0;
                TrainOptions opts;
                opts.reg = Regularizer::adversarial;
                opts.pert = pert;
                opts.pert.epsilon = cfg.eps_at;
                opts.reg_weight = cfg.reg_weight;
                params = train(labeled, shape, c, opts).params;
                break;
            }
            case Method::vat: {
                TrainConfig c = tcfg;
                c.dropout_p = 0.0;
                TrainOptions opts;
                opts.reg = Regularizer::virtual_adversarial;
                opts.pert = pert;
                opts.pert.epsilon = cfg.eps_vat;
                opts.reg_weight = cfg.reg_weight;
                params = train(labeled, shape, c, opts).params;
                break;
            }
            case Method::viser: {
                // Curriculum: embed both sets with the pretrained model,
                // propagate labels to nearest unlabeled samples, fine-tune.
                Corpus labeled_emb, unlabeled_emb;
                labeled_emb.records.reserve(labeled.size());
                for (std::size_t i = 0; i < labeled.size(); ++i) {
                    labeled_emb.records.push_back({i, penultimate(ce_params, labeled[i].x)});
                }
                std::vector<FeatureVector> unlabeled_x;
                unlabeled_x.reserve(ds.unlabeled.size());
                unlabeled_emb.records.reserve(ds.unlabeled.size());
                for (std::size_t i = 0; i < ds.unlabeled.size(); ++i) {
                    unlabeled_x.push_back(ds.unlabeled[i].ambient);
                    unlabeled_emb.records.push_back(
                        {i, penultimate(ce_params, ds.unlabeled[i].ambient)});
                }
                const auto augmented = viser_augment(labeled, labeled_emb, unlabeled_x,
                                                     unlabeled_emb, cfg.search, cfg.take);
                TrainConfig c = tcfg;
                c.dropout_p = 0.0;
                TrainOptions opts;
                if (!cfg.viser_restart) opts.warm_start = &ce_params;
                params = train(augmented, shape, c, opts).params;
                break;
            }
        }
        outcome.errors[m] = test_error(params, ds.test);
        if (keep_models) outcome.models[m] = std::move(params);
    }
    return outcome;
}

}  // namespace

std::map<Method, MethodStats> recompute_aggregates(
    const std::vector<std::pair<std::uint32_t, std::map<Method, double>>>& per_seed) {
    std::map<Method, std::vector<double>> by_method;
    for (const auto& [seed, errors] : per_seed) {
        for (const auto& [m, err] : errors) by_method[m].push_back(err);
    }
    std::map<Method, MethodStats> stats;
    for (const auto& [m, values] : by_method) {
        MethodStats s;
        for (double v : values) s.mean += v;
        s.mean /= static_cast<double>(values.size());
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - s.mean) * (v - s.mean);
            s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        stats[m] = s;
    }
    return stats;
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("VISER_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

RunRecord run_benchmark(const BenchConfig& cfg, unsigned threads,
                        const std::string& save_models_dir) {
    if (cfg.methods.empty()) throw Error("run_benchmark: no methods selected");
    if (cfg.seed_count < 1) throw Error("run_benchmark: seed_count must be positive");

    const auto t0 = std::chrono::steady_clock::now();
    const unsigned workers =
        std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(cfg.seed_count));

    std::vector<std::map<Method, double>> results(cfg.seed_count);
    std::vector<std::map<Method, MlpParams>> models(cfg.seed_count);
    const bool keep_models = !save_models_dir.empty();

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::size_t first_error_seed = SIZE_MAX;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.seed_count) return;
            const std::uint32_t seed = cfg.seed_start + static_cast<std::uint32_t>(i);
            try {
                SeedOutcome outcome = run_seed(cfg, seed, keep_models);
                results[i] = std::move(outcome.errors);
                models[i] = std::move(outcome.models);
            } catch (const DivergenceError& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (i < first_error_seed) {
                    first_error_seed = i;
                    first_error = std::make_exception_ptr(DivergenceError(
                        "seed " + std::to_string(seed) + ": " + e.what(), e.step));
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (i < first_error_seed) {
                    first_error_seed = i;
                    first_error = std::current_exception();
                }
            }
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);  // a failed seed aborts the record

    RunRecord record;
    record.config = cfg;
    for (std::size_t i = 0; i < cfg.seed_count; ++i) {
        record.per_seed.emplace_back(cfg.seed_start + static_cast<std::uint32_t>(i),
                                     std::move(results[i]));
    }
    record.aggregate = recompute_aggregates(record.per_seed);
    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (keep_models) {
        std::filesystem::create_directories(save_models_dir);
        for (std::size_t i = 0; i < cfg.seed_count; ++i) {
            for (const auto& [m, params] : models[i]) {
                const std::string name = "seed" + std::to_string(cfg.seed_start + i) + "_" +
                                         method_name(m) + ".json";
                save_checkpoint(params, (std::filesystem::path(save_models_dir) / name).string());
            }
        }
    }
    return record;
}

nlohmann::ordered_json bench_config_json(const BenchConfig& cfg) {
    nlohmann::ordered_json methods = nlohmann::ordered_json::array();
    for (Method m : cfg.methods) methods.push_back(method_name(m));
    nlohmann::ordered_json obj;
    obj["methods"] = methods;
    obj["seed_start"] = cfg.seed_start;
    obj["seed_count"] = cfg.seed_count;
    obj["data"] = {{"modes_per_class", cfg.data.modes_per_class},
                   {"train_per_mode", cfg.data.train_per_mode},
                   {"n_unlabeled", cfg.data.n_unlabeled},
                   {"n_test", cfg.data.n_test},
                   {"ambient_dim", cfg.data.ambient_dim},
                   {"latent_dim", cfg.data.latent_dim}};
    obj["train"] = {{"learning_rate", cfg.train.learning_rate},
                    {"lr_decay_factor", cfg.train.lr_decay_factor},
                    {"decay_steps", cfg.train.decay_steps},
                    {"iterations", cfg.train.iterations},
                    {"batch_size", cfg.train.batch_size},
                    {"dropout_p", cfg.train.dropout_p}};
    obj["eps_at"] = cfg.eps_at;
    obj["eps_vat"] = cfg.eps_vat;
    obj["xi"] = cfg.xi;
    obj["power_iters"] = cfg.power_iters;
    obj["reg_weight"] = cfg.reg_weight;
    obj["search"] = {{"k_m", cfg.search.k_m},
                     {"k_r", cfg.search.k_r},
                     {"shard_count", cfg.search.shard_count}};
    obj["take"] = cfg.take;
    obj["viser_restart"] = cfg.viser_restart;
    return obj;
}

nlohmann::ordered_json run_record_json(const RunRecord& record) {
    nlohmann::ordered_json obj;
    obj["artifact_version"] = record.artifact_version;
    obj["config"] = bench_config_json(record.config);
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    for (const auto& [seed, errors] : record.per_seed) {
        nlohmann::ordered_json entry;
        entry["seed"] = seed;
        nlohmann::ordered_json errs;
        for (const auto& [m, err] : errors) errs[method_name(m)] = err;
        entry["errors"] = errs;
        per_seed.push_back(entry);
    }
    obj["per_seed"] = per_seed;
    nlohmann::ordered_json agg;
    for (const auto& [m, stats] : record.aggregate) {
        agg[method_name(m)] = {{"mean", stats.mean}, {"stddev", stats.stddev}};
    }
    obj["aggregate"] = agg;
    obj["wall_clock_seconds"] = record.wall_clock_seconds;
    return obj;
}

std::string config_hash(const BenchConfig& cfg) {
    const std::string dump = bench_config_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string save_run_record(const RunRecord& record, const std::string& dir, bool force) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path path =
        std::filesystem::path(dir) / ("record_" + config_hash(record.config) + ".json");
    if (std::filesystem::exists(path) && !force) {
        throw Error("run record " + path.string() +
                    " already exists for this config; pass --force to overwrite");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(path.string() + ": cannot open file for writing");
    out << run_record_json(record).dump(2) << '\n';
    out.flush();
    if (!out) throw LoadError(path.string() + ": write failed");
    return path.string();
}

}  // namespace viser
