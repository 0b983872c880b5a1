// viser: regularizer-sample search, synthetic benchmark and evaluation CLI.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "viser/corpus_io.hpp"
#include "viser/experiment.hpp"
#include "viser/metrics.hpp"
#include "viser/mil.hpp"
#include "viser/model.hpp"
#include "viser/neighbor_search.hpp"
#include "viser/perturbation.hpp"
#include "viser/synthetic.hpp"

using namespace viser;

namespace {

struct SearchOptions {
    std::string labeled_path;
    std::string unlabeled_path;
    SearchParams params;
    std::string out_path;
    std::string format = "jsonl";
    bool oracle = false;
    bool verify = false;
    unsigned threads = 0;
};

void write_matches(const MatchTable& table, const std::string& path, const std::string& format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError(path + ": cannot open file for writing");
    if (format == "csv") {
        write_matches_csv(table, out);
    } else {
        write_matches_jsonl(table, out);
    }
    out.flush();
    if (!out) throw LoadError(path + ": write failed");
}

int cmd_search(const SearchOptions& opt) {
    Corpus labeled = load_corpus(opt.labeled_path);
    Corpus unlabeled = load_corpus(opt.unlabeled_path);
    normalize_corpus(labeled);
    normalize_corpus(unlabeled);

    MatchTable result;
    if (opt.verify) {
        const MatchTable approx =
            search(labeled, unlabeled, opt.params, resolve_threads(opt.threads));
        const MatchTable oracle = exact_search(labeled, unlabeled, opt.params.k_r);
        std::printf("agreement: %g%%\n", 100.0 * match_recall(approx, oracle));
        result = opt.oracle ? oracle : approx;
    } else if (opt.oracle) {
        result = exact_search(labeled, unlabeled, opt.params.k_r);
    } else {
        result = search(labeled, unlabeled, opt.params, resolve_threads(opt.threads));
    }

    std::size_t emitted = 0;
    for (const auto& [key, matches] : result) emitted += matches.size();
    write_matches(result, opt.out_path, opt.format);
    std::printf("wrote %zu matches for %zu labeled ids to %s\n", emitted, result.size(),
                opt.out_path.c_str());
    return 0;
}

struct GenOptions {
    SyntheticSpec spec;
    std::string out_dir = ".";
};

int cmd_gen(const GenOptions& opt) {
    const SyntheticDataset ds = generate(opt.spec);
    std::filesystem::create_directories(opt.out_dir);
    const auto dir = std::filesystem::path(opt.out_dir);
    save_corpus(to_corpus(ds.train, true), (dir / "train.jsonl").string(), CorpusFormat::jsonl);
    save_corpus(to_corpus(ds.unlabeled, false), (dir / "unlabeled.jsonl").string(),
                CorpusFormat::jsonl);
    save_corpus(to_corpus(ds.test, true), (dir / "test.jsonl").string(), CorpusFormat::jsonl);
    std::printf("wrote train (%zu), unlabeled (%zu), test (%zu) to %s\n", ds.train.size(),
                ds.unlabeled.size(), ds.test.size(), opt.out_dir.c_str());
    return 0;
}

struct ContourOptions {
    SyntheticSpec spec;
    std::string method = "cross_entropy";
    TrainConfig train;
    PerturbationConfig pert;
    std::size_t take = 1;
    SearchParams search;
    std::size_t resolution = 100;
    std::string out_path = "contour.csv";
    std::string checkpoint;   // load instead of training
    std::string save_model;   // save the trained model
};

MlpParams train_for_method(Method method, const SyntheticDataset& ds, const TrainConfig& base,
                           const PerturbationConfig& pert, const SearchParams& sparams,
                           std::size_t take) {
    std::vector<LabeledSample> labeled;
    for (const auto& s : ds.train) {
        labeled.push_back({s.ambient, LabelVector{static_cast<std::uint8_t>(s.cls)}});
    }
    const MlpShape shape{ds.spec.ambient_dim, 100, 1};
    TrainConfig cfg = base;
    cfg.seed = mix_seed(ds.spec.seed, 0x7a11);

    TrainOptions opts;
    switch (method) {
        case Method::cross_entropy:
            cfg.dropout_p = 0.0;
            break;
        case Method::dropout:
            opts.reg = Regularizer::dropout;
            break;
        case Method::at:
            cfg.dropout_p = 0.0;
            opts.reg = Regularizer::adversarial;
            opts.pert = pert;
            break;
        case Method::vat:
            cfg.dropout_p = 0.0;
            opts.reg = Regularizer::virtual_adversarial;
            opts.pert = pert;
            break;
        case Method::viser: {
            cfg.dropout_p = 0.0;
            const MlpParams pre = train(labeled, shape, cfg).params;
            std::vector<FeatureVector> unlabeled_x;
            Corpus lemb, uemb;
            for (std::size_t i = 0; i < labeled.size(); ++i) {
                lemb.records.push_back({i, penultimate(pre, labeled[i].x)});
            }
            for (std::size_t i = 0; i < ds.unlabeled.size(); ++i) {
                unlabeled_x.push_back(ds.unlabeled[i].ambient);
                uemb.records.push_back({i, penultimate(pre, ds.unlabeled[i].ambient)});
            }
            const auto augmented = viser_augment(labeled, lemb, unlabeled_x, uemb, sparams, take);
            TrainOptions fine;
            fine.warm_start = &pre;
            return train(augmented, shape, cfg, fine).params;
        }
    }
    return train(labeled, shape, cfg, opts).params;
}

int cmd_contour(const ContourOptions& opt) {
    const SyntheticDataset ds = generate(opt.spec);
    MlpParams params;
    if (!opt.checkpoint.empty()) {
        params = load_checkpoint(opt.checkpoint);
        if (params.shape.input_dim != ds.spec.ambient_dim) {
            throw ShapeError("checkpoint input dimension does not match the dataset");
        }
    } else {
        params = train_for_method(parse_method(opt.method), ds, opt.train, opt.pert, opt.search,
                                  opt.take);
    }
    if (!opt.save_model.empty()) save_checkpoint(params, opt.save_model);

    const auto grid = contour_grid(params, ds, opt.resolution);
    std::ofstream out(opt.out_path, std::ios::binary);
    if (!out) throw LoadError(opt.out_path + ": cannot open file for writing");
    write_csv_matrix(grid, out);
    out.flush();
    if (!out) throw LoadError(opt.out_path + ": write failed");
    std::printf("wrote %zux%zu contour grid to %s\n", opt.resolution, opt.resolution,
                opt.out_path.c_str());
    return 0;
}

struct BenchOptions {
    BenchConfig config;
    std::string out_dir = "records";
    bool force = false;
    unsigned threads = 0;
    std::string save_models;
    std::string methods_csv = "cross_entropy,dropout,at,vat,viser";
};

int cmd_bench(BenchOptions& opt) {
    opt.config.methods.clear();
    std::string rest = opt.methods_csv;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        opt.config.methods.push_back(parse_method(rest.substr(0, comma)));
        rest = comma == std::string::npos ? "" : rest.substr(comma + 1);
    }
    const RunRecord record = run_benchmark(opt.config, opt.threads, opt.save_models);
    const std::string path = save_run_record(record, opt.out_dir, opt.force);
    for (const auto& [m, stats] : record.aggregate) {
        std::printf("%-14s %6.3f%% +- %.3f\n", method_name(m).c_str(), stats.mean, stats.stddev);
    }
    std::printf("record: %s (%.1fs)\n", path.c_str(), record.wall_clock_seconds);
    return 0;
}

struct EvalOptions {
    std::string checkpoint;
    std::string data_path;
    std::string predictions_path;
    std::string out_path;
    double tolerance = 18.0;
};

std::vector<PredictionRecord> predictions_from_corpus(const std::string& checkpoint,
                                                      const std::string& data_path) {
    const MlpParams params = load_checkpoint(checkpoint);
    const Corpus corpus = load_corpus(data_path);
    std::vector<PredictionRecord> records;
    records.reserve(corpus.size());
    for (const auto& rec : corpus.records) {
        auto it = corpus.labels.find(rec.id);
        if (it == corpus.labels.end()) {
            throw MissingLabelsError(data_path + ": record " + std::to_string(rec.id) +
                                     " has no labels to evaluate against");
        }
        PredictionRecord pr;
        const ForwardResult f = forward(params, rec.vector);
        for (Eigen::Index c = 0; c < f.logits.size(); ++c) {
            pr.scores.push_back(sigmoid(f.logits(c)));
        }
        pr.truth = to_label_vector(it->second, params.shape.classes);
        records.push_back(std::move(pr));
    }
    return records;
}

std::vector<PredictionRecord> predictions_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(path + ": cannot open file");
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(where + ": " + e.what());
        }
        PredictionRecord pr;
        if (!obj.contains("scores") || !obj.contains("truth")) {
            throw LoadError(where + ": expected `scores` and `truth`");
        }
        pr.scores = obj["scores"].get<std::vector<double>>();
        for (const auto& bit : obj["truth"]) {
            pr.truth.push_back(bit.get<int>() ? 1 : 0);
        }
        if (obj.contains("points")) {
            for (const auto& [key, val] : obj["points"].items()) {
                pr.points[std::stoul(key)] = {val.at(0).get<double>(), val.at(1).get<double>()};
            }
        }
        if (obj.contains("boxes")) {
            for (const auto& [key, val] : obj["boxes"].items()) {
                std::vector<Box> boxes;
                for (const auto& b : val) {
                    boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(),
                                     b.at(2).get<double>(), b.at(3).get<double>()});
                }
                pr.boxes[std::stoul(key)] = std::move(boxes);
            }
        }
        records.push_back(std::move(pr));
    }
    return records;
}

int cmd_eval(const EvalOptions& opt) {
    std::vector<PredictionRecord> records;
    if (!opt.predictions_path.empty()) {
        records = predictions_from_file(opt.predictions_path);
    } else {
        records = predictions_from_corpus(opt.checkpoint, opt.data_path);
    }
    const MetricReport report = evaluate(records, opt.tolerance);
    const auto json = report_json(report);
    if (opt.out_path.empty()) {
        std::cout << json.dump(2) << '\n';
    } else {
        std::ofstream out(opt.out_path, std::ios::binary);
        if (!out) throw LoadError(opt.out_path + ": cannot open file for writing");
        out << json.dump(2) << '\n';
        out.flush();
        if (!out) throw LoadError(opt.out_path + ": write failed");
        std::printf("wrote metric report to %s\n", opt.out_path.c_str());
    }
    return 0;
}

void add_spec_flags(CLI::App* app, SyntheticSpec& spec) {
    app->add_option("--seed", spec.seed, "dataset seed");
    app->add_option("--modes", spec.modes_per_class, "modes per class")->check(CLI::PositiveNumber);
    app->add_option("--train-per-mode", spec.train_per_mode)->check(CLI::PositiveNumber);
    app->add_option("--unlabeled", spec.n_unlabeled, "unlabeled sample count")
        ->check(CLI::PositiveNumber);
    app->add_option("--test", spec.n_test, "test sample count")->check(CLI::PositiveNumber);
    app->add_option("--ambient-dim", spec.ambient_dim)->check(CLI::PositiveNumber);
    app->add_option("--latent-dim", spec.latent_dim)->check(CLI::PositiveNumber);
}

void add_train_flags(CLI::App* app, TrainConfig& train) {
    app->add_option("--lr", train.learning_rate, "initial learning rate")
        ->check(CLI::PositiveNumber);
    app->add_option("--decay-factor", train.lr_decay_factor);
    app->add_option("--decay-steps", train.decay_steps, "iterations at which the rate decays");
    app->add_option("--iterations", train.iterations)->check(CLI::PositiveNumber);
    app->add_option("--batch-size", train.batch_size)->check(CLI::PositiveNumber);
    app->add_option("--dropout", train.dropout_p, "dropout probability for the dropout method");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ViSeR: visual self-regularization at desk scale"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML config file; command-line flags win");

    SearchOptions search_opt;
    auto* search_cmd =
        app.add_subcommand("search", "distributed regularizer-sample search over two corpora");
    search_cmd->add_option("--labeled", search_opt.labeled_path, "labeled corpus (jsonl or vsre)")
        ->required();
    search_cmd->add_option("--unlabeled", search_opt.unlabeled_path, "unlabeled corpus")
        ->required();
    search_cmd->add_option("--km", search_opt.params.k_m, "per-mapper emission cutoff")
        ->check(CLI::PositiveNumber);
    search_cmd->add_option("--kr", search_opt.params.k_r, "per-key reducer cutoff")
        ->check(CLI::PositiveNumber);
    search_cmd->add_option("--shards", search_opt.params.shard_count, "unlabeled shard count")
        ->check(CLI::PositiveNumber);
    search_cmd->add_option("--out", search_opt.out_path, "output path")->required();
    search_cmd->add_option("--format", search_opt.format, "jsonl or csv")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    search_cmd->add_flag("--oracle", search_opt.oracle, "run the exhaustive oracle instead");
    search_cmd->add_flag("--verify", search_opt.verify,
                         "run both search and oracle, report agreement");
    search_cmd->add_option("--threads", search_opt.threads, "worker threads (0 = auto)");

    GenOptions gen_opt;
    auto* gen_cmd = app.add_subcommand("gen", "generate and export a synthetic dataset");
    add_spec_flags(gen_cmd, gen_opt.spec);
    gen_cmd->add_option("--out-dir", gen_opt.out_dir, "output directory");

    BenchOptions bench_opt;
    auto* bench_cmd = app.add_subcommand("bench", "multi-seed regularization benchmark");
    bench_cmd->add_option("--methods", bench_opt.methods_csv, "comma-separated method list");
    bench_cmd->add_option("--seed-start", bench_opt.config.seed_start);
    bench_cmd->add_option("--seeds", bench_opt.config.seed_count, "number of seeds")
        ->check(CLI::PositiveNumber);
    add_spec_flags(bench_cmd, bench_opt.config.data);
    add_train_flags(bench_cmd, bench_opt.config.train);
    bench_cmd->add_option("--eps-at", bench_opt.config.eps_at, "l-inf budget for AT");
    bench_cmd->add_option("--eps-vat", bench_opt.config.eps_vat, "l2 budget for VAT");
    bench_cmd->add_option("--xi", bench_opt.config.xi, "VAT finite-difference scale (0 = auto)");
    bench_cmd->add_option("--power-iters", bench_opt.config.power_iters)
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--reg-weight", bench_opt.config.reg_weight,
                          "weight of the perturbed loss term");
    bench_cmd->add_option("--km", bench_opt.config.search.k_m)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--kr", bench_opt.config.search.k_r)->check(CLI::PositiveNumber);
    bench_cmd->add_option("--shards", bench_opt.config.search.shard_count)
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--take", bench_opt.config.take, "regularizer samples per labeled id")
        ->check(CLI::PositiveNumber);
    bench_cmd->add_flag("--viser-restart", bench_opt.config.viser_restart,
                        "fine-tune from fresh weights instead of the pretrained model");
    bench_cmd->add_option("--out-dir", bench_opt.out_dir, "run record directory");
    bench_cmd->add_flag("--force", bench_opt.force, "overwrite an existing run record");
    bench_cmd->add_option("--threads", bench_opt.threads, "seed-level workers (0 = auto)");
    bench_cmd->add_option("--save-models", bench_opt.save_models,
                          "directory for per-seed method checkpoints");

    ContourOptions contour_opt;
    auto* contour_cmd =
        app.add_subcommand("contour", "p(y=1|x) over the latent plane for a trained model");
    add_spec_flags(contour_cmd, contour_opt.spec);
    add_train_flags(contour_cmd, contour_opt.train);
    contour_cmd->add_option("--reg", contour_opt.method,
                            "training method: none|dropout|at|vat|viser");
    contour_cmd->add_option("--eps", contour_opt.pert.epsilon, "perturbation budget");
    contour_cmd->add_option("--xi", contour_opt.pert.xi);
    contour_cmd->add_option("--power-iters", contour_opt.pert.power_iters)
        ->check(CLI::PositiveNumber);
    contour_cmd->add_option("--take", contour_opt.take)->check(CLI::PositiveNumber);
    contour_cmd->add_option("--resolution", contour_opt.resolution)->check(CLI::PositiveNumber);
    contour_cmd->add_option("--out", contour_opt.out_path, "output CSV path");
    contour_cmd->add_option("--checkpoint", contour_opt.checkpoint,
                            "evaluate this checkpoint instead of training");
    contour_cmd->add_option("--save-model", contour_opt.save_model,
                            "save the trained checkpoint here");

    EvalOptions eval_opt;
    auto* eval_cmd = app.add_subcommand("eval", "metric report for a checkpoint or predictions");
    eval_cmd->add_option("--checkpoint", eval_opt.checkpoint, "model checkpoint");
    eval_cmd->add_option("--data", eval_opt.data_path, "labeled corpus to evaluate on");
    eval_cmd->add_option("--predictions", eval_opt.predictions_path,
                         "JSONL prediction records (scores/truth/points/boxes)");
    eval_cmd->add_option("--out", eval_opt.out_path, "report path (stdout when omitted)");
    eval_cmd->add_option("--tolerance", eval_opt.tolerance, "localization tolerance in pixels");

    CLI11_PARSE(app, argc, argv);

    try {
        if (search_cmd->parsed()) return cmd_search(search_opt);
        if (gen_cmd->parsed()) return cmd_gen(gen_opt);
        if (bench_cmd->parsed()) return cmd_bench(bench_opt);
        if (contour_cmd->parsed()) return cmd_contour(contour_opt);
        if (eval_cmd->parsed()) {
            if (eval_opt.predictions_path.empty() &&
                (eval_opt.checkpoint.empty() || eval_opt.data_path.empty())) {
                std::cerr << "eval: need either --predictions or both --checkpoint and --data\n";
                return 2;
            }
            return cmd_eval(eval_opt);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
