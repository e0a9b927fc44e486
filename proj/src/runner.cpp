#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "pivot.hpp"
#include "prompting.hpp"
#include "tiny_mlm.hpp"

namespace pairprompt::runner {

using nlohmann::json;

namespace {

std::string pct(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

json config_to_json_value(const RunConfig& c) {
    return json{
        {"dataset", c.dataset_path},
        {"dataset_name", c.dataset_name},
        {"shots", c.shots},
        {"query_size", c.query_size},
        {"seeds", c.seeds},
        {"template", c.template_pattern},
        {"max_tokens", c.max_tokens},
        {"scorer", c.scorer},
        {"embed_dim", c.embed_dim},
        {"blocks", c.blocks},
        {"heads", c.heads},
        {"ff_dim", c.ff_dim},
        {"max_seq_len", c.max_seq_len},
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"weight_decay", c.weight_decay},
        {"pooling", c.pooling},
        {"k", c.k},
        {"noise_m", c.noise_m},
        {"ood_dataset", c.ood_dataset_path},
        {"ood_dataset_name", c.ood_dataset_name},
        {"ood_shots", c.ood_shots},
        {"pivot_p", c.pivot_p},
        {"exclude_self", c.exclude_self},
        {"aggregate", c.aggregate},
        {"out_dir", c.out_dir},
    };
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        fail(ErrorCode::Parse, "run config is not a JSON object");

    RunConfig c;
    const json defaults = config_to_json_value(c);
    for (const auto& [key, value] : doc.items()) {
        if (!defaults.contains(key))
            fail(ErrorCode::Parse, "unknown run config key '" + key + "'");
        (void)value;
    }
    auto get = [&](const char* key, auto member) {
        using T = std::decay_t<decltype(member)>;
        return doc.contains(key) ? doc.at(key).get<T>() : member;
    };
    c.dataset_path = get("dataset", c.dataset_path);
    c.dataset_name = get("dataset_name", c.dataset_name);
    c.shots = get("shots", c.shots);
    c.query_size = get("query_size", c.query_size);
    c.seeds = get("seeds", c.seeds);
    c.template_pattern = get("template", c.template_pattern);
    c.max_tokens = get("max_tokens", c.max_tokens);
    c.scorer = get("scorer", c.scorer);
    c.embed_dim = get("embed_dim", c.embed_dim);
    c.blocks = get("blocks", c.blocks);
    c.heads = get("heads", c.heads);
    c.ff_dim = get("ff_dim", c.ff_dim);
    c.max_seq_len = get("max_seq_len", c.max_seq_len);
    c.learning_rate = get("learning_rate", c.learning_rate);
    c.batch_size = get("batch_size", c.batch_size);
    c.epochs = get("epochs", c.epochs);
    c.weight_decay = get("weight_decay", c.weight_decay);
    c.pooling = get("pooling", c.pooling);
    c.k = get("k", c.k);
    c.noise_m = get("noise_m", c.noise_m);
    c.ood_dataset_path = get("ood_dataset", c.ood_dataset_path);
    c.ood_dataset_name = get("ood_dataset_name", c.ood_dataset_name);
    c.ood_shots = get("ood_shots", c.ood_shots);
    c.pivot_p = get("pivot_p", c.pivot_p);
    c.exclude_self = get("exclude_self", c.exclude_self);
    c.aggregate = get("aggregate", c.aggregate);
    c.out_dir = get("out_dir", c.out_dir);
    return c;
}

std::string RunConfig::to_json() const { return config_to_json_value(*this).dump(2); }

std::string RunConfig::hash() const {
    json doc = config_to_json_value(*this);
    doc.erase("out_dir");
    return to_hex(fnv1a64(doc.dump()));
}

void RunConfig::validate() const {
    if (dataset_path.empty()) fail(ErrorCode::InvalidArgument, "config: dataset path is required");
    if (shots < 1) fail(ErrorCode::InvalidArgument, "config: shots must be >= 1");
    if (query_size < 0) fail(ErrorCode::InvalidArgument, "config: query_size must be >= 0");
    if (seeds.empty()) fail(ErrorCode::InvalidArgument, "config: seeds must be non-empty");
    if (max_tokens < 1) fail(ErrorCode::InvalidArgument, "config: max_tokens must be >= 1");
    if (scorer != "lexical" && scorer != "tiny-mlm")
        fail(ErrorCode::InvalidArgument, "config: scorer must be 'lexical' or 'tiny-mlm'");
    pooling::pool_kind_from_string(pooling);
    scoring::aggregate_mode_from_string(aggregate);
    if (k < 0) fail(ErrorCode::InvalidArgument, "config: k must be >= 0");
    if (noise_m < 0) fail(ErrorCode::InvalidArgument, "config: noise_m must be >= 0");
    if (ood_shots < 0) fail(ErrorCode::InvalidArgument, "config: ood_shots must be >= 0");
    if (ood_shots > 0 && ood_dataset_path.empty())
        fail(ErrorCode::InvalidArgument, "config: ood_shots needs an ood_dataset");
    if (pivot_p < 0) fail(ErrorCode::InvalidArgument, "config: pivot_p must be >= 0");
    if (embed_dim < 2 || blocks < 1 || heads < 1 || max_seq_len < 2)
        fail(ErrorCode::InvalidArgument, "config: invalid scorer architecture");
    if (embed_dim % heads != 0)
        fail(ErrorCode::InvalidArgument, "config: embed_dim must be divisible by heads");
    if (learning_rate <= 0.0) fail(ErrorCode::InvalidArgument, "config: learning_rate must be > 0");
    if (batch_size < 1) fail(ErrorCode::InvalidArgument, "config: batch_size must be >= 1");
    if (epochs < 0) fail(ErrorCode::InvalidArgument, "config: epochs must be >= 0");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
    out << content;
}

namespace {

struct PipelineContext {
    corpus::Dataset dataset;
    std::optional<corpus::Dataset> ood;
    corpus::Tokenizer tokenizer;
    prompting::PromptTemplate prompt;
};

PipelineContext load_context(const RunConfig& config) {
    config.validate();
    corpus::Dataset dataset = corpus::load_dataset(config.dataset_path, config.dataset_name);
    std::optional<corpus::Dataset> ood;
    if (!config.ood_dataset_path.empty())
        ood = corpus::load_dataset(config.ood_dataset_path, config.ood_dataset_name);

    std::vector<const corpus::Dataset*> sources{&dataset};
    if (ood) sources.push_back(&*ood);
    corpus::Tokenizer tokenizer = corpus::Tokenizer::build(
        sources, prompting::template_literal_text(config.template_pattern));
    prompting::PromptTemplate prompt = prompting::PromptTemplate::parse(
        config.template_pattern, tokenizer, static_cast<std::size_t>(config.max_tokens));
    return {std::move(dataset), std::move(ood), std::move(tokenizer), std::move(prompt)};
}

// Everything for one seed that does not depend on the pooling method.
struct SeedArtifacts {
    corpus::Episode episode;
    std::unique_ptr<scoring::RelevanceScorer> scorer;
    pooling::ScoreMatrix matrix;
    bool has_pivots = false;
    pivot::PivotSet pivots;
    pooling::ScoreMatrix pivot_matrix;
    std::map<std::string, std::string> gold;
    SeedResult result;
    std::string loss_trace_json;
};

SeedArtifacts build_seed(const RunConfig& config, const PipelineContext& ctx, std::uint64_t seed) {
    SeedArtifacts art;
    art.result.seed = seed;

    art.episode = corpus::sample_episode(ctx.dataset, config.shots, config.query_size, seed);
    if (config.noise_m > 0)
        art.episode = corpus::inject_label_noise(art.episode, config.noise_m,
                                                 derive_seed(seed, "noise"));
    if (config.ood_shots > 0)
        art.episode = corpus::mix_ood(art.episode, *ctx.ood, config.ood_shots,
                                      derive_seed(seed, "ood"));

    for (const corpus::Sample& q : art.episode.query) art.gold[q.id] = q.label;

    if (config.scorer == "tiny-mlm") {
        scoring::TinyMLMConfig mlm;
        mlm.embed_dim = config.embed_dim;
        mlm.blocks = config.blocks;
        mlm.heads = config.heads;
        mlm.ff_dim = config.ff_dim;
        mlm.max_seq_len = config.max_seq_len;
        mlm.init_seed = derive_seed(seed, "init");
        mlm.aggregate = scoring::aggregate_mode_from_string(config.aggregate);
        auto scorer = std::make_unique<scoring::TinyMLMScorer>(ctx.tokenizer, ctx.prompt, mlm);

        const auto pairs = prompting::build_training_pairs(art.episode, ctx.prompt, ctx.tokenizer);
        art.result.train_pairs = pairs.size();
        scoring::TrainingConfig train;
        train.learning_rate = config.learning_rate;
        train.batch_size = config.batch_size;
        train.epochs = config.epochs > 0
                           ? config.epochs
                           : analysis::epochs_for(ctx.dataset.name, config.shots);
        train.weight_decay = config.weight_decay;
        train.seed = derive_seed(seed, "train");
        const scoring::TrainResult trained = scorer->train(pairs, train);
        art.result.epochs = train.epochs;
        art.result.final_epoch_loss = trained.epoch_mean_loss.back();
        art.loss_trace_json = json{{"epoch_mean_loss", trained.epoch_mean_loss},
                                   {"steps", trained.steps}}
                                  .dump(2);
        art.scorer = std::move(scorer);
    } else {
        art.scorer = std::make_unique<scoring::LexicalOverlapScorer>();
    }

    art.result.query_pairs = art.episode.query.size() * art.episode.train.size();
    const std::uint64_t calls_before_matrix = art.scorer->call_count();
    art.matrix = scoring::score_matrix(*art.scorer, art.episode);
    art.result.scorer_calls_inference = art.scorer->call_count() - calls_before_matrix;

    if (config.pivot_p > 0) {
        const pooling::ScoreMatrix train_rel = scoring::train_relevance_matrix(*art.scorer, art.episode);
        art.pivots = pivot::select_pivots(train_rel, config.pivot_p, config.exclude_self, seed);
        const std::uint64_t calls_before_pivot = art.scorer->call_count();
        art.pivot_matrix = pivot::pivot_score_matrix(*art.scorer, art.episode, art.pivots);
        art.result.scorer_calls_pivot_inference = art.scorer->call_count() - calls_before_pivot;
        art.has_pivots = true;
    }
    art.result.scorer_calls_total = art.scorer->call_count();
    return art;
}

pooling::PoolingMethod method_from_config(const RunConfig& config) {
    pooling::PoolingMethod method;
    method.kind = pooling::pool_kind_from_string(config.pooling);
    method.k = config.k;
    return method;
}

// Classifies with the configured pooling method and writes this seed's
// artifact directory. Returns the completed SeedResult.
SeedResult classify_and_write(const RunConfig& config, const SeedArtifacts& art,
                              const std::string& seed_dir) {
    SeedResult result = art.result;
    result.artifact_dir = seed_dir;

    const pooling::PoolingMethod method = method_from_config(config);
    const auto predictions = pooling::classify_matrix(art.matrix, method);
    result.accuracy = 100.0 * analysis::accuracy(predictions, art.gold);

    write_text_file(seed_dir + "/episode.json", corpus::episode_to_json(art.episode));
    write_text_file(seed_dir + "/checkpoint.json", scoring::scorer_to_checkpoint_json(*art.scorer));
    if (!art.loss_trace_json.empty())
        write_text_file(seed_dir + "/loss_trace.json", art.loss_trace_json);
    write_text_file(seed_dir + "/matrix.csv", art.matrix.to_csv());
    write_text_file(seed_dir + "/predictions.csv",
                    pooling::predictions_to_csv(predictions, art.gold, method));

    if (art.has_pivots) {
        pooling::PoolingMethod pivot_method = method;
        if (pivot_method.kind == pooling::PoolKind::Knn && pivot_method.k == 0)
            pivot_method.k = pooling::default_k(art.pivot_matrix.cols());
        const auto pivot_predictions = pooling::classify_matrix(art.pivot_matrix, pivot_method);
        result.pivot_accuracy = 100.0 * analysis::accuracy(pivot_predictions, art.gold);
        write_text_file(seed_dir + "/pivots.json", art.pivots.to_json());
        write_text_file(seed_dir + "/pivot_matrix.csv", art.pivot_matrix.to_csv());
        write_text_file(seed_dir + "/pivot_predictions.csv",
                        pooling::predictions_to_csv(pivot_predictions, art.gold, pivot_method));
    }
    return result;
}

RunReport assemble_report(const RunConfig& config, std::vector<SeedResult> per_seed) {
    RunReport report;
    report.config = config;
    report.config_hash = config.hash();
    report.per_seed = std::move(per_seed);

    double total = 0.0, pivot_total = 0.0;
    bool pivots = true;
    for (const SeedResult& r : report.per_seed) {
        total += r.accuracy;
        if (r.pivot_accuracy < 0.0) pivots = false;
        else pivot_total += r.pivot_accuracy;
    }
    report.mean_accuracy = total / static_cast<double>(report.per_seed.size());
    if (pivots && !report.per_seed.empty())
        report.pivot_mean_accuracy = pivot_total / static_cast<double>(report.per_seed.size());
    return report;
}

json seed_result_to_json(const SeedResult& r) {
    json doc{{"seed", r.seed},
             {"accuracy", r.accuracy},
             {"scorer_calls_inference", r.scorer_calls_inference},
             {"scorer_calls_total", r.scorer_calls_total},
             {"train_pairs", r.train_pairs},
             {"query_pairs", r.query_pairs},
             {"artifact_dir", r.artifact_dir}};
    if (r.pivot_accuracy >= 0.0) {
        doc["pivot_accuracy"] = r.pivot_accuracy;
        doc["scorer_calls_pivot_inference"] = r.scorer_calls_pivot_inference;
    }
    if (r.epochs > 0) {
        doc["epochs"] = r.epochs;
        doc["final_epoch_loss"] = r.final_epoch_loss;
    }
    return doc;
}

}  // namespace

std::string RunReport::to_json() const {
    json doc;
    doc["config"] = json::parse(config.to_json());
    doc["config_hash"] = config_hash;
    json seeds = json::array();
    for (const SeedResult& r : per_seed) seeds.push_back(seed_result_to_json(r));
    doc["per_seed"] = std::move(seeds);
    doc["mean_accuracy"] = mean_accuracy;
    if (pivot_mean_accuracy >= 0.0) doc["pivot_mean_accuracy"] = pivot_mean_accuracy;
    return doc.dump(2);
}

std::string RunReport::to_text() const {
    std::ostringstream out;
    out << "dataset: " << config.dataset_path << "  shots: " << config.shots
        << "  scorer: " << config.scorer << "  pooling: " << config.pooling << "\n";
    out << "noise_m: " << config.noise_m
        << "  ood: " << (config.ood_shots > 0 ? config.ood_dataset_path : "-")
        << "  pivot_p: " << config.pivot_p << "  hash: " << config_hash << "\n";
    const bool pivots = pivot_mean_accuracy >= 0.0;
    out << "\n  seed      accuracy";
    if (pivots) out << "  pivot_accuracy";
    out << "\n";
    for (const SeedResult& r : per_seed) {
        out << "  " << r.seed << std::string(r.seed < 10 ? 4 : 3, ' ') << std::string(6, ' ')
            << pct(r.accuracy);
        if (pivots) out << "          " << pct(r.pivot_accuracy);
        out << "\n";
    }
    out << "  mean      " << pct(mean_accuracy);
    if (pivots) out << "          " << pct(pivot_mean_accuracy);
    out << "\n";
    return out.str();
}

RunReport run_experiment(const RunConfig& config) {
    const PipelineContext ctx = load_context(config);
    const std::string run_dir = config.out_dir + "/" + config.hash();

    std::vector<SeedResult> per_seed;
    per_seed.reserve(config.seeds.size());
    for (const std::uint64_t seed : config.seeds) {
        const SeedArtifacts art = build_seed(config, ctx, seed);
        per_seed.push_back(classify_and_write(config, art, run_dir + "/seed" + std::to_string(seed)));
    }

    RunReport report = assemble_report(config, std::move(per_seed));
    write_text_file(run_dir + "/report.json", report.to_json());
    write_text_file(run_dir + "/report.txt", report.to_text());
    return report;
}

SweepAxis sweep_axis_from_string(std::string_view name) {
    if (name == "shots") return SweepAxis::Shots;
    if (name == "noise") return SweepAxis::Noise;
    if (name == "pivot_p") return SweepAxis::PivotP;
    if (name == "pooling") return SweepAxis::Pooling;
    fail(ErrorCode::InvalidArgument, "unknown sweep axis '" + std::string(name) + "'");
}

namespace {

std::string_view axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::Shots: return "shots";
        case SweepAxis::Noise: return "noise";
        case SweepAxis::PivotP: return "pivot_p";
        case SweepAxis::Pooling: return "pooling";
    }
    return "?";
}

RunConfig apply_axis(RunConfig config, SweepAxis axis, const std::string& value) {
    auto as_int = [&](int minimum) {
        int v = 0;
        try {
            v = std::stoi(value);
        } catch (const std::exception&) {
            fail(ErrorCode::InvalidArgument, "sweep value '" + value + "' is not an integer");
        }
        if (v < minimum)
            fail(ErrorCode::InvalidArgument, "sweep value " + value + " below minimum " +
                                                 std::to_string(minimum));
        return v;
    };
    switch (axis) {
        case SweepAxis::Shots: config.shots = as_int(1); break;
        case SweepAxis::Noise: config.noise_m = as_int(0); break;
        case SweepAxis::PivotP: config.pivot_p = as_int(1); break;
        case SweepAxis::Pooling:
            pooling::pool_kind_from_string(value);
            config.pooling = value;
            break;
    }
    return config;
}

// The pooling axis re-pools cached matrices so each seed is scored exactly
// once across the whole sweep.
std::vector<SweepCell> run_pooling_sweep(const RunConfig& base,
                                         const std::vector<std::string>& values,
                                         std::vector<std::uint64_t>* calls_per_seed) {
    const PipelineContext ctx = load_context(base);

    std::vector<SweepCell> cells(values.size());
    std::vector<std::vector<SeedResult>> per_cell_seeds(values.size());
    for (std::size_t v = 0; v < values.size(); ++v) {
        cells[v].value = values[v];
        try {
            pooling::pool_kind_from_string(values[v]);
        } catch (const Error& e) {
            cells[v].failed = true;
            cells[v].error = e.what();
        }
    }

    for (const std::uint64_t seed : base.seeds) {
        const SeedArtifacts art = build_seed(base, ctx, seed);
        if (calls_per_seed) calls_per_seed->push_back(art.result.scorer_calls_total);
        for (std::size_t v = 0; v < values.size(); ++v) {
            if (cells[v].failed) continue;
            const RunConfig cell_config = apply_axis(base, SweepAxis::Pooling, values[v]);
            const std::string seed_dir =
                cell_config.out_dir + "/" + cell_config.hash() + "/seed" + std::to_string(seed);
            try {
                per_cell_seeds[v].push_back(classify_and_write(cell_config, art, seed_dir));
            } catch (const Error& e) {
                cells[v].failed = true;
                cells[v].error = e.what();
            }
        }
    }

    for (std::size_t v = 0; v < values.size(); ++v) {
        if (cells[v].failed || per_cell_seeds[v].empty()) continue;
        const RunConfig cell_config = apply_axis(base, SweepAxis::Pooling, values[v]);
        cells[v].report = assemble_report(cell_config, std::move(per_cell_seeds[v]));
        const std::string run_dir = cell_config.out_dir + "/" + cell_config.hash();
        write_text_file(run_dir + "/report.json", cells[v].report.to_json());
        write_text_file(run_dir + "/report.txt", cells[v].report.to_text());
    }
    return cells;
}

}  // namespace

std::string SweepReport::to_json() const {
    json doc;
    doc["axis"] = axis;
    doc["base_hash"] = base_hash;
    json cell_array = json::array();
    for (const SweepCell& cell : cells) {
        json c{{"value", cell.value}};
        if (cell.failed) {
            c["error"] = cell.error;
        } else {
            c["report"] = json::parse(cell.report.to_json());
        }
        cell_array.push_back(std::move(c));
    }
    doc["cells"] = std::move(cell_array);
    if (!drops.empty()) {
        json d = json::object();
        for (const auto& [value, drop] : drops) d[value] = drop;
        doc["performance_drop"] = std::move(d);
    }
    if (!scorer_calls_per_seed.empty()) doc["scorer_calls_per_seed"] = scorer_calls_per_seed;
    return doc.dump(2);
}

std::string SweepReport::to_text() const {
    std::ostringstream out;
    out << "sweep axis: " << axis << "  base: " << base_hash << "\n\n";
    out << "  value       mean_accuracy";
    if (!drops.empty()) out << "  drop_vs_clean";
    out << "\n";
    for (const SweepCell& cell : cells) {
        out << "  " << cell.value << std::string(cell.value.size() < 10 ? 10 - cell.value.size() : 1, ' ');
        if (cell.failed) {
            out << "  FAILED: " << cell.error;
        } else {
            out << "  " << pct(cell.report.mean_accuracy);
            for (const auto& [value, drop] : drops)
                if (value == cell.value) out << "           " << pct(drop);
        }
        out << "\n";
    }
    return out.str();
}

SweepReport run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
    if (values.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one value");

    SweepReport report;
    report.axis = std::string(axis_name(axis));
    report.base_hash = base.hash();

    if (axis == SweepAxis::Pooling) {
        report.cells = run_pooling_sweep(base, values, &report.scorer_calls_per_seed);
    } else {
        for (const std::string& value : values) {
            SweepCell cell;
            cell.value = value;
            try {
                cell.report = run_experiment(apply_axis(base, axis, value));
            } catch (const Error& e) {
                cell.failed = true;
                cell.error = e.what();
            }
            report.cells.push_back(std::move(cell));
        }
    }

    if (axis == SweepAxis::Noise) {
        const SweepCell* clean = nullptr;
        for (const SweepCell& cell : report.cells)
            if (!cell.failed && cell.value == "0") clean = &cell;
        if (clean) {
            for (const SweepCell& cell : report.cells) {
                if (cell.failed || &cell == clean) continue;
                report.drops.emplace_back(
                    cell.value,
                    analysis::performance_drop(clean->report.mean_accuracy, cell.report.mean_accuracy));
            }
        }
    }

    const std::string sweep_dir =
        base.out_dir + "/sweep-" + report.base_hash + "-" + report.axis;
    write_text_file(sweep_dir + "/report.json", report.to_json());
    write_text_file(sweep_dir + "/report.txt", report.to_text());
    return report;
}

}  // namespace pairprompt::runner
