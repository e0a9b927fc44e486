// pairprompt CLI: drives the shared library through its C API.
//
// Subcommands: episode, train, infer, pivots, eval, sweep, analyze.
// Exit codes: 0 success, 1 configuration error, 2 pipeline failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pairprompt/pairprompt.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitPipelineError = 2;

struct CliError {
    int exit_code;
    std::string message;
};

[[noreturn]] void die(pp_status status) {
    const int code = (status == PP_ERR_INVALID_ARGUMENT || status == PP_ERR_PARSE)
                         ? kExitConfigError
                         : kExitPipelineError;
    throw CliError{code, pp_last_error()};
}

void check(pp_status status) {
    if (status != PP_OK) die(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError{kExitConfigError, "cannot open '" + path + "'"};
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw CliError{kExitPipelineError, "cannot write '" + path + "'"};
    out << content;
}

struct OwnedString {
    char* value = nullptr;
    ~OwnedString() { pp_string_free(value); }
    std::string str() const { return value ? value : ""; }
};

using DatasetHandle = std::unique_ptr<pp_dataset, decltype(&pp_dataset_free)>;
using EpisodeHandle = std::unique_ptr<pp_episode, decltype(&pp_episode_free)>;
using ScorerHandle = std::unique_ptr<pp_scorer, decltype(&pp_scorer_free)>;
using MatrixHandle = std::unique_ptr<pp_matrix, decltype(&pp_matrix_free)>;
using PredictionsHandle = std::unique_ptr<pp_predictions, decltype(&pp_predictions_free)>;
using PivotsHandle = std::unique_ptr<pp_pivots, decltype(&pp_pivots_free)>;

// Missing input files are configuration errors, not pipeline failures.
void require_readable(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw CliError{kExitConfigError, "input file '" + path + "' does not exist"};
}

DatasetHandle load_dataset(const std::string& path, const std::string& name) {
    require_readable(path);
    pp_dataset* raw = nullptr;
    check(pp_dataset_load(path.c_str(), name.empty() ? nullptr : name.c_str(), &raw));
    return {raw, &pp_dataset_free};
}

// Common --dataset/--ood-dataset flags shared by the stepwise subcommands.
struct DataArgs {
    std::string dataset;
    std::string name;
    std::string ood_dataset;
    std::string ood_name;

    void attach(CLI::App* cmd, bool with_ood = true) {
        cmd->add_option("--dataset", dataset, "JSONL corpus path")->required();
        cmd->add_option("--name", name, "dataset name (default: file stem)");
        if (with_ood) {
            cmd->add_option("--ood-dataset", ood_dataset, "out-of-domain JSONL corpus path");
            cmd->add_option("--ood-name", ood_name, "OOD dataset name");
        }
    }

    DatasetHandle load() const { return load_dataset(dataset, name); }
    DatasetHandle load_ood() const {
        if (ood_dataset.empty()) return {nullptr, &pp_dataset_free};
        return load_dataset(ood_dataset, ood_name);
    }
};

EpisodeHandle load_episode(const std::string& path, const DatasetHandle& dataset,
                           const DatasetHandle& ood) {
    pp_episode* raw = nullptr;
    check(pp_episode_from_json(read_file(path).c_str(), dataset.get(), ood.get(), &raw));
    return {raw, &pp_episode_free};
}

ScorerHandle load_checkpoint(const std::string& path) {
    pp_scorer* raw = nullptr;
    check(pp_scorer_from_json(read_file(path).c_str(), &raw));
    return {raw, &pp_scorer_free};
}

// ---- episode ----

struct EpisodeArgs {
    DataArgs data;
    int shots = 4;
    int query_size = 500;
    std::uint64_t seed = 1;
    int noise_m = 0;
    std::uint64_t noise_seed = 1;
    int ood_shots = 0;
    std::uint64_t ood_seed = 1;
    std::string out = "episode.json";
};

int run_episode(const EpisodeArgs& args) {
    const DatasetHandle dataset = args.data.load();
    const DatasetHandle ood = args.data.load_ood();

    pp_episode* raw = nullptr;
    check(pp_episode_sample(dataset.get(), args.shots, args.query_size, args.seed, &raw));
    EpisodeHandle episode{raw, &pp_episode_free};

    if (args.noise_m > 0) {
        pp_episode* noisy = nullptr;
        check(pp_episode_inject_noise(episode.get(), args.noise_m, args.noise_seed, &noisy));
        episode.reset(noisy);
    }
    if (args.ood_shots > 0) {
        if (!ood) throw CliError{kExitConfigError, "--ood-shots needs --ood-dataset"};
        pp_episode* mixed = nullptr;
        check(pp_episode_mix_ood(episode.get(), ood.get(), args.ood_shots, args.ood_seed, &mixed));
        episode.reset(mixed);
    }

    OwnedString doc;
    check(pp_episode_to_json(episode.get(), &doc.value));
    write_file(args.out, doc.str());
    std::cout << "episode written to " << args.out << "\n";
    return kExitOk;
}

// ---- train ----

struct TrainArgs {
    DataArgs data;
    std::string episode;
    std::string scorer = "tiny-mlm";
    std::string template_pattern;
    int max_tokens = 120;
    int embed_dim = 64;
    int blocks = 2;
    int heads = 2;
    int ff_dim = 0;
    int max_seq_len = 256;
    std::string aggregate = "probs";
    std::uint64_t init_seed = 0;
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 1;
    double weight_decay = 0.01;
    std::uint64_t train_seed = 0;
    std::string checkpoint = "checkpoint.json";
    std::string loss_trace;
};

int run_train(const TrainArgs& args) {
    const DatasetHandle dataset = args.data.load();
    const DatasetHandle ood = args.data.load_ood();
    const EpisodeHandle episode = load_episode(args.episode, dataset, ood);

    json scorer_config{{"scorer", args.scorer},
                       {"max_tokens", args.max_tokens},
                       {"embed_dim", args.embed_dim},
                       {"blocks", args.blocks},
                       {"heads", args.heads},
                       {"ff_dim", args.ff_dim},
                       {"max_seq_len", args.max_seq_len},
                       {"aggregate", args.aggregate},
                       {"init_seed", args.init_seed}};
    if (!args.template_pattern.empty()) scorer_config["template"] = args.template_pattern;

    pp_scorer* raw = nullptr;
    check(pp_scorer_create(dataset.get(), ood.get(), scorer_config.dump().c_str(), &raw));
    ScorerHandle scorer{raw, &pp_scorer_free};

    const json train_config{{"learning_rate", args.learning_rate},
                            {"batch_size", args.batch_size},
                            {"epochs", args.epochs},
                            {"weight_decay", args.weight_decay},
                            {"seed", args.train_seed}};
    OwnedString trace;
    check(pp_scorer_train(scorer.get(), episode.get(), train_config.dump().c_str(), &trace.value));

    OwnedString checkpoint;
    check(pp_scorer_to_json(scorer.get(), &checkpoint.value));
    write_file(args.checkpoint, checkpoint.str());
    if (!args.loss_trace.empty()) write_file(args.loss_trace, trace.str());
    std::cout << "checkpoint written to " << args.checkpoint << "\n";
    return kExitOk;
}

// ---- infer ----

struct InferArgs {
    DataArgs data;
    std::string episode;
    std::string checkpoint;
    std::string pooling = "mean";
    int k = 0;
    std::string pivots;
    std::string matrix_out;
    std::string predictions_out = "predictions.csv";
};

int run_infer(const InferArgs& args) {
    const DatasetHandle dataset = args.data.load();
    const DatasetHandle ood = args.data.load_ood();
    const EpisodeHandle episode = load_episode(args.episode, dataset, ood);
    const ScorerHandle scorer = load_checkpoint(args.checkpoint);

    PredictionsHandle predictions{nullptr, &pp_predictions_free};
    if (!args.pivots.empty()) {
        pp_pivots* pivots_raw = nullptr;
        check(pp_pivots_from_json(read_file(args.pivots).c_str(), &pivots_raw));
        PivotsHandle pivots{pivots_raw, &pp_pivots_free};
        pp_predictions* raw = nullptr;
        check(pp_pivot_infer(scorer.get(), episode.get(), pivots.get(), args.pooling.c_str(),
                             args.k, &raw));
        predictions.reset(raw);
    } else {
        pp_matrix* matrix_raw = nullptr;
        check(pp_score_matrix(scorer.get(), episode.get(), &matrix_raw));
        MatrixHandle matrix{matrix_raw, &pp_matrix_free};
        if (!args.matrix_out.empty()) {
            OwnedString csv;
            check(pp_matrix_to_csv(matrix.get(), &csv.value));
            write_file(args.matrix_out, csv.str());
        }
        pp_predictions* raw = nullptr;
        check(pp_classify(matrix.get(), episode.get(), args.pooling.c_str(), args.k, &raw));
        predictions.reset(raw);
    }

    OwnedString csv;
    check(pp_predictions_to_csv(predictions.get(), &csv.value));
    write_file(args.predictions_out, csv.str());

    double accuracy = 0.0;
    check(pp_predictions_accuracy(predictions.get(), &accuracy));
    std::cout << "predictions written to " << args.predictions_out << "\n";
    std::cout << "accuracy: " << 100.0 * accuracy << "\n";
    return kExitOk;
}

// ---- pivots ----

struct PivotArgs {
    DataArgs data;
    std::string episode;
    std::string checkpoint;
    int p = 2;
    bool exclude_self = false;
    std::string out = "pivots.json";
    std::string train_matrix_out;
};

int run_pivots(const PivotArgs& args) {
    const DatasetHandle dataset = args.data.load();
    const DatasetHandle ood = args.data.load_ood();
    const EpisodeHandle episode = load_episode(args.episode, dataset, ood);
    const ScorerHandle scorer = load_checkpoint(args.checkpoint);

    pp_matrix* matrix_raw = nullptr;
    check(pp_train_relevance_matrix(scorer.get(), episode.get(), &matrix_raw));
    MatrixHandle matrix{matrix_raw, &pp_matrix_free};
    if (!args.train_matrix_out.empty()) {
        OwnedString csv;
        check(pp_matrix_to_csv(matrix.get(), &csv.value));
        write_file(args.train_matrix_out, csv.str());
    }

    pp_pivots* pivots_raw = nullptr;
    check(pp_select_pivots(matrix.get(), args.p, args.exclude_self ? 1 : 0, 0, &pivots_raw));
    PivotsHandle pivots{pivots_raw, &pp_pivots_free};

    OwnedString doc;
    check(pp_pivots_to_json(pivots.get(), &doc.value));
    write_file(args.out, doc.str());
    std::cout << "pivots written to " << args.out << "\n";
    return kExitOk;
}

// ---- eval / sweep ----

// Config file merged with one-for-one CLI overrides.
struct ConfigArgs {
    std::string config_path;
    CLI::App* cmd = nullptr;
    std::string dataset, dataset_name, template_pattern, scorer, pooling, ood_dataset,
        ood_dataset_name, aggregate, out_dir;
    int shots = 0, query_size = 0, max_tokens = 0, embed_dim = 0, blocks = 0, heads = 0,
        ff_dim = 0, max_seq_len = 0, batch_size = 0, epochs = 0, k = 0, noise_m = 0,
        ood_shots = 0, pivot_p = 0;
    double learning_rate = 0.0, weight_decay = 0.0;
    bool exclude_self = false;
    std::string seeds;

    void attach(CLI::App* owner) {
        cmd = owner;
        owner->add_option("--config", config_path, "experiment config JSON file");
        owner->add_option("--dataset", dataset);
        owner->add_option("--dataset-name", dataset_name);
        owner->add_option("--shots", shots);
        owner->add_option("--query-size", query_size);
        owner->add_option("--seeds", seeds, "comma-separated seed list");
        owner->add_option("--template", template_pattern);
        owner->add_option("--max-tokens", max_tokens);
        owner->add_option("--scorer", scorer)->check(CLI::IsMember({"lexical", "tiny-mlm"}));
        owner->add_option("--embed-dim", embed_dim);
        owner->add_option("--blocks", blocks);
        owner->add_option("--heads", heads);
        owner->add_option("--ff-dim", ff_dim);
        owner->add_option("--max-seq-len", max_seq_len);
        owner->add_option("--learning-rate", learning_rate);
        owner->add_option("--batch-size", batch_size);
        owner->add_option("--epochs", epochs);
        owner->add_option("--weight-decay", weight_decay);
        owner->add_option("--pooling", pooling)->check(CLI::IsMember({"mean", "max", "knn"}));
        owner->add_option("--k", k);
        owner->add_option("--noise-m", noise_m);
        owner->add_option("--ood-dataset", ood_dataset);
        owner->add_option("--ood-dataset-name", ood_dataset_name);
        owner->add_option("--ood-shots", ood_shots);
        owner->add_option("--pivot-p", pivot_p);
        owner->add_flag("--exclude-self", exclude_self);
        owner->add_option("--aggregate", aggregate)->check(CLI::IsMember({"probs", "logits"}));
        owner->add_option("--out-dir", out_dir);
    }

    json merged() const {
        json doc = json::object();
        if (!config_path.empty()) {
            doc = json::parse(read_file(config_path), nullptr, false);
            if (doc.is_discarded() || !doc.is_object())
                throw CliError{kExitConfigError, "config file is not a JSON object"};
        }
        auto set_if = [&](const char* flag, const char* key, const json& value) {
            if (cmd->count(flag) > 0) doc[key] = value;
        };
        set_if("--dataset", "dataset", dataset);
        set_if("--dataset-name", "dataset_name", dataset_name);
        set_if("--shots", "shots", shots);
        set_if("--query-size", "query_size", query_size);
        set_if("--template", "template", template_pattern);
        set_if("--max-tokens", "max_tokens", max_tokens);
        set_if("--scorer", "scorer", scorer);
        set_if("--embed-dim", "embed_dim", embed_dim);
        set_if("--blocks", "blocks", blocks);
        set_if("--heads", "heads", heads);
        set_if("--ff-dim", "ff_dim", ff_dim);
        set_if("--max-seq-len", "max_seq_len", max_seq_len);
        set_if("--learning-rate", "learning_rate", learning_rate);
        set_if("--batch-size", "batch_size", batch_size);
        set_if("--epochs", "epochs", epochs);
        set_if("--weight-decay", "weight_decay", weight_decay);
        set_if("--pooling", "pooling", pooling);
        set_if("--k", "k", k);
        set_if("--noise-m", "noise_m", noise_m);
        set_if("--ood-dataset", "ood_dataset", ood_dataset);
        set_if("--ood-dataset-name", "ood_dataset_name", ood_dataset_name);
        set_if("--ood-shots", "ood_shots", ood_shots);
        set_if("--pivot-p", "pivot_p", pivot_p);
        set_if("--exclude-self", "exclude_self", exclude_self);
        set_if("--aggregate", "aggregate", aggregate);
        set_if("--out-dir", "out_dir", out_dir);
        if (cmd->count("--seeds") > 0) {
            std::vector<std::uint64_t> parsed;
            std::stringstream stream(seeds);
            std::string item;
            while (std::getline(stream, item, ',')) {
                if (item.empty()) continue;
                try {
                    parsed.push_back(std::stoull(item));
                } catch (const std::exception&) {
                    throw CliError{kExitConfigError, "invalid seed '" + item + "'"};
                }
            }
            doc["seeds"] = parsed;
        }
        if (doc.contains("dataset") && doc["dataset"].is_string())
            require_readable(doc["dataset"].get<std::string>());
        if (doc.contains("ood_dataset") && doc["ood_dataset"].is_string() &&
            !doc["ood_dataset"].get<std::string>().empty())
            require_readable(doc["ood_dataset"].get<std::string>());
        return doc;
    }
};

int run_eval(const ConfigArgs& args, bool as_json) {
    OwnedString report;
    check(pp_run_experiment(args.merged().dump().c_str(), &report.value));
    if (as_json) {
        std::cout << report.str() << "\n";
        return kExitOk;
    }
    const json doc = json::parse(report.str());
    std::cout << "mean accuracy: " << doc.at("mean_accuracy").get<double>() << "\n";
    if (doc.contains("pivot_mean_accuracy"))
        std::cout << "pivot mean accuracy: " << doc.at("pivot_mean_accuracy").get<double>()
                  << "\n";
    for (const auto& seed : doc.at("per_seed"))
        std::cout << "  seed " << seed.at("seed").get<std::uint64_t>() << ": "
                  << seed.at("accuracy").get<double>() << "\n";
    std::cout << "artifacts under " << doc.at("config").at("out_dir").get<std::string>() << "/"
              << doc.at("config_hash").get<std::string>() << "\n";
    return kExitOk;
}

int run_sweep_cmd(const ConfigArgs& args, const std::string& axis, const std::string& values,
                  bool as_json) {
    OwnedString report;
    check(pp_run_sweep(args.merged().dump().c_str(), axis.c_str(), values.c_str(), &report.value));
    if (as_json) {
        std::cout << report.str() << "\n";
        return kExitOk;
    }
    const json doc = json::parse(report.str());
    std::cout << "sweep over " << axis << ":\n";
    for (const auto& cell : doc.at("cells")) {
        std::cout << "  " << cell.at("value").get<std::string>() << ": ";
        if (cell.contains("error")) {
            std::cout << "FAILED (" << cell.at("error").get<std::string>() << ")";
        } else {
            std::cout << cell.at("report").at("mean_accuracy").get<double>();
        }
        std::cout << "\n";
    }
    if (doc.contains("performance_drop")) {
        std::cout << "performance drop vs clean:\n";
        for (const auto& [value, drop] : doc.at("performance_drop").items())
            std::cout << "  " << value << ": " << drop.get<double>() << "\n";
    }
    return kExitOk;
}

// ---- analyze ----

struct AnalyzeArgs {
    std::string matrix;
    std::string profile_out;
    std::string predictions;
    std::string episode;
    DataArgs data;
    std::string stats_out;
};

int run_analyze(const AnalyzeArgs& args) {
    bool did_anything = false;
    if (!args.matrix.empty()) {
        if (args.profile_out.empty())
            throw CliError{kExitConfigError, "--matrix needs --profile-out"};
        OwnedString profile;
        check(pp_score_profile_csv(read_file(args.matrix).c_str(), &profile.value));
        write_file(args.profile_out, profile.str());
        std::cout << "score profile written to " << args.profile_out << "\n";
        did_anything = true;
    }
    if (!args.predictions.empty()) {
        const std::string csv = read_file(args.predictions);
        double accuracy = 0.0;
        check(pp_predictions_csv_accuracy(csv.c_str(), &accuracy));
        std::cout << "accuracy: " << 100.0 * accuracy << "\n";
        did_anything = true;

        if (!args.episode.empty()) {
            if (args.data.dataset.empty())
                throw CliError{kExitConfigError, "--episode stats need --dataset"};
            const DatasetHandle dataset = args.data.load();
            const DatasetHandle ood = args.data.load_ood();
            OwnedString stats;
            check(pp_prediction_stats_json(csv.c_str(), read_file(args.episode).c_str(),
                                           dataset.get(), ood.get(), &stats.value));
            if (!args.stats_out.empty()) {
                write_file(args.stats_out, stats.str());
                std::cout << "prediction stats written to " << args.stats_out << "\n";
            } else {
                std::cout << stats.str() << "\n";
            }
        }
    }
    if (!did_anything)
        throw CliError{kExitConfigError, "analyze needs --matrix and/or --predictions"};
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pairprompt: few-shot text classification via text-pair relevance scoring"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pp_version()));

    EpisodeArgs episode_args;
    auto* episode_cmd = app.add_subcommand("episode", "sample a few-shot episode");
    episode_args.data.attach(episode_cmd);
    episode_cmd->add_option("--shots", episode_args.shots);
    episode_cmd->add_option("--query-size", episode_args.query_size,
                            "query draw size (0 = entire remainder)");
    episode_cmd->add_option("--seed", episode_args.seed);
    episode_cmd->add_option("--noise-m", episode_args.noise_m, "labels to corrupt");
    episode_cmd->add_option("--noise-seed", episode_args.noise_seed);
    episode_cmd->add_option("--ood-shots", episode_args.ood_shots);
    episode_cmd->add_option("--ood-seed", episode_args.ood_seed);
    episode_cmd->add_option("--out", episode_args.out);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a relevance scorer on an episode");
    train_args.data.attach(train_cmd);
    train_cmd->add_option("--episode", train_args.episode)->required();
    train_cmd->add_option("--scorer", train_args.scorer)
        ->check(CLI::IsMember({"lexical", "tiny-mlm"}));
    train_cmd->add_option("--template", train_args.template_pattern);
    train_cmd->add_option("--max-tokens", train_args.max_tokens);
    train_cmd->add_option("--embed-dim", train_args.embed_dim);
    train_cmd->add_option("--blocks", train_args.blocks);
    train_cmd->add_option("--heads", train_args.heads);
    train_cmd->add_option("--ff-dim", train_args.ff_dim);
    train_cmd->add_option("--max-seq-len", train_args.max_seq_len);
    train_cmd->add_option("--aggregate", train_args.aggregate)
        ->check(CLI::IsMember({"probs", "logits"}));
    train_cmd->add_option("--init-seed", train_args.init_seed);
    train_cmd->add_option("--learning-rate", train_args.learning_rate);
    train_cmd->add_option("--batch-size", train_args.batch_size);
    train_cmd->add_option("--epochs", train_args.epochs);
    train_cmd->add_option("--weight-decay", train_args.weight_decay);
    train_cmd->add_option("--train-seed", train_args.train_seed);
    train_cmd->add_option("--checkpoint", train_args.checkpoint, "checkpoint output path");
    train_cmd->add_option("--loss-trace", train_args.loss_trace, "loss trace output path");

    InferArgs infer_args;
    auto* infer_cmd = app.add_subcommand("infer", "score queries and classify them");
    infer_args.data.attach(infer_cmd);
    infer_cmd->add_option("--episode", infer_args.episode)->required();
    infer_cmd->add_option("--checkpoint", infer_args.checkpoint)->required();
    infer_cmd->add_option("--pooling", infer_args.pooling)
        ->check(CLI::IsMember({"mean", "max", "knn"}));
    infer_cmd->add_option("--k", infer_args.k, "knn neighbor count (0 = half the columns)");
    infer_cmd->add_option("--pivots", infer_args.pivots, "restrict columns to this pivot set");
    infer_cmd->add_option("--matrix", infer_args.matrix_out, "score matrix CSV output path");
    infer_cmd->add_option("--predictions", infer_args.predictions_out);

    PivotArgs pivot_args;
    auto* pivots_cmd = app.add_subcommand("pivots", "select representative pivot samples");
    pivot_args.data.attach(pivots_cmd);
    pivots_cmd->add_option("--episode", pivot_args.episode)->required();
    pivots_cmd->add_option("--checkpoint", pivot_args.checkpoint)->required();
    pivots_cmd->add_option("--p", pivot_args.p, "pivots per label");
    pivots_cmd->add_flag("--exclude-self", pivot_args.exclude_self,
                         "drop the self score from the same-label mean");
    pivots_cmd->add_option("--out", pivot_args.out);
    pivots_cmd->add_option("--train-matrix", pivot_args.train_matrix_out,
                           "train-relevance matrix CSV output path");

    ConfigArgs eval_args;
    bool eval_json = false;
    auto* eval_cmd = app.add_subcommand("eval", "run the full multi-seed experiment pipeline");
    eval_args.attach(eval_cmd);
    eval_cmd->add_flag("--json", eval_json, "print the report as JSON");

    ConfigArgs sweep_args;
    std::string sweep_axis, sweep_values;
    bool sweep_json = false;
    auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment per value along one axis");
    sweep_args.attach(sweep_cmd);
    sweep_cmd->add_option("--axis", sweep_axis)
        ->check(CLI::IsMember({"shots", "noise", "pivot_p", "pooling"}))
        ->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated axis values")->required();
    sweep_cmd->add_flag("--json", sweep_json, "print the report as JSON");

    AnalyzeArgs analyze_args;
    auto* analyze_cmd = app.add_subcommand("analyze", "post-hoc statistics over artifacts");
    analyze_cmd->add_option("--matrix", analyze_args.matrix, "score matrix CSV");
    analyze_cmd->add_option("--profile-out", analyze_args.profile_out);
    analyze_cmd->add_option("--predictions", analyze_args.predictions, "predictions CSV");
    analyze_cmd->add_option("--episode", analyze_args.episode, "episode JSON, for class stats");
    analyze_cmd->add_option("--dataset", analyze_args.data.dataset);
    analyze_cmd->add_option("--name", analyze_args.data.name);
    analyze_cmd->add_option("--ood-dataset", analyze_args.data.ood_dataset);
    analyze_cmd->add_option("--ood-name", analyze_args.data.ood_name);
    analyze_cmd->add_option("--stats-out", analyze_args.stats_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (episode_cmd->parsed()) return run_episode(episode_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (infer_cmd->parsed()) return run_infer(infer_args);
        if (pivots_cmd->parsed()) return run_pivots(pivot_args);
        if (eval_cmd->parsed()) return run_eval(eval_args, eval_json);
        if (sweep_cmd->parsed()) return run_sweep_cmd(sweep_args, sweep_axis, sweep_values, sweep_json);
        if (analyze_cmd->parsed()) return run_analyze(analyze_args);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPipelineError;
    }
    return kExitConfigError;
}
