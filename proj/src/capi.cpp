#include "pairprompt/pairprompt.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "analysis.hpp"
#include "corpus.hpp"
#include "pivot.hpp"
#include "pooling.hpp"
#include "prompting.hpp"
#include "runner.hpp"
#include "scorer.hpp"
#include "tiny_mlm.hpp"

using nlohmann::json;
namespace pp = pairprompt;

struct pp_dataset {
    pp::corpus::Dataset value;
};
struct pp_episode {
    pp::corpus::Episode value;
};
struct pp_scorer {
    std::unique_ptr<pp::scoring::RelevanceScorer> value;
};
struct pp_matrix {
    pp::pooling::ScoreMatrix value;
};
struct pp_predictions {
    std::vector<pp::pooling::Prediction> value;
    std::map<std::string, std::string> gold;
    pp::pooling::PoolingMethod method;
};
struct pp_pivots {
    pp::pivot::PivotSet value;
};

namespace {

thread_local std::string g_last_error;

pp_status map_code(pp::ErrorCode code) {
    switch (code) {
        case pp::ErrorCode::InvalidArgument: return PP_ERR_INVALID_ARGUMENT;
        case pp::ErrorCode::Io: return PP_ERR_IO;
        case pp::ErrorCode::Parse: return PP_ERR_PARSE;
        case pp::ErrorCode::Precondition: return PP_ERR_PRECONDITION;
        case pp::ErrorCode::Numeric: return PP_ERR_NUMERIC;
        case pp::ErrorCode::Internal: return PP_ERR_INTERNAL;
    }
    return PP_ERR_INTERNAL;
}

template <typename Fn>
pp_status guard(Fn&& fn) noexcept {
    try {
        fn();
        return PP_OK;
    } catch (const pp::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PP_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return PP_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(bool condition, const char* what) {
    if (!condition) pp::fail(pp::ErrorCode::InvalidArgument, what);
}

// Scorer construction shared by pp_scorer_create and the checkpoint loader.
std::unique_ptr<pp::scoring::RelevanceScorer> build_scorer(const pp::corpus::Dataset* dataset,
                                                           const pp::corpus::Dataset* ood,
                                                           const std::string& config_json) {
    json doc = config_json.empty() ? json::object() : json::parse(config_json, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        pp::fail(pp::ErrorCode::Parse, "scorer config is not a JSON object");

    const std::string kind = doc.value("scorer", "lexical");
    if (kind == "lexical") return std::make_unique<pp::scoring::LexicalOverlapScorer>();
    if (kind != "tiny-mlm")
        pp::fail(pp::ErrorCode::InvalidArgument, "unknown scorer kind '" + kind + "'");

    const std::string pattern =
        doc.value("template", std::string(pp::prompting::kDefaultTemplatePattern));
    const std::size_t max_tokens = doc.value("max_tokens", std::size_t{120});

    std::vector<const pp::corpus::Dataset*> sources{dataset};
    if (ood) sources.push_back(ood);
    auto tokenizer =
        pp::corpus::Tokenizer::build(sources, pp::prompting::template_literal_text(pattern));
    auto tmpl = pp::prompting::PromptTemplate::parse(pattern, tokenizer, max_tokens);

    pp::scoring::TinyMLMConfig config;
    config.embed_dim = doc.value("embed_dim", config.embed_dim);
    config.blocks = doc.value("blocks", config.blocks);
    config.heads = doc.value("heads", config.heads);
    config.ff_dim = doc.value("ff_dim", config.ff_dim);
    config.max_seq_len = doc.value("max_seq_len", config.max_seq_len);
    config.init_seed = doc.value("init_seed", std::uint64_t{0});
    config.aggregate = pp::scoring::aggregate_mode_from_string(doc.value("aggregate", "probs"));
    return std::make_unique<pp::scoring::TinyMLMScorer>(std::move(tokenizer), std::move(tmpl),
                                                        config);
}

std::map<std::string, std::string> gold_of(const pp::corpus::Episode& episode) {
    std::map<std::string, std::string> gold;
    for (const auto& q : episode.query) gold[q.id] = q.label;
    return gold;
}

pp::pooling::PoolingMethod make_method(const char* pooling, int k) {
    require(pooling != nullptr, "pooling is null");
    pp::pooling::PoolingMethod method;
    method.kind = pp::pooling::pool_kind_from_string(pooling);
    method.k = k;
    return method;
}

}  // namespace

extern "C" {

const char* pp_version(void) { return "0.1.0"; }

const char* pp_last_error(void) { return g_last_error.c_str(); }

void pp_string_free(char* s) { std::free(s); }

pp_status pp_dataset_load(const char* path, const char* name, pp_dataset** out) {
    return guard([&] {
        require(path && out, "path/out is null");
        auto handle = std::make_unique<pp_dataset>();
        handle->value = pp::corpus::load_dataset(path, name ? name : "");
        *out = handle.release();
    });
}

void pp_dataset_free(pp_dataset* dataset) { delete dataset; }

int64_t pp_dataset_size(const pp_dataset* dataset) {
    return dataset ? static_cast<int64_t>(dataset->value.samples.size()) : -1;
}

int64_t pp_dataset_label_count(const pp_dataset* dataset) {
    return dataset ? static_cast<int64_t>(dataset->value.label_set.size()) : -1;
}

pp_status pp_episode_sample(const pp_dataset* dataset, int shots, int query_size, uint64_t seed,
                            pp_episode** out) {
    return guard([&] {
        require(dataset && out, "dataset/out is null");
        auto handle = std::make_unique<pp_episode>();
        handle->value = pp::corpus::sample_episode(dataset->value, shots, query_size, seed);
        *out = handle.release();
    });
}

pp_status pp_episode_inject_noise(const pp_episode* episode, int m, uint64_t seed,
                                  pp_episode** out) {
    return guard([&] {
        require(episode && out, "episode/out is null");
        auto handle = std::make_unique<pp_episode>();
        handle->value = pp::corpus::inject_label_noise(episode->value, m, seed);
        *out = handle.release();
    });
}

pp_status pp_episode_mix_ood(const pp_episode* episode, const pp_dataset* ood_source,
                             int ood_shots, uint64_t seed, pp_episode** out) {
    return guard([&] {
        require(episode && ood_source && out, "episode/ood/out is null");
        auto handle = std::make_unique<pp_episode>();
        handle->value = pp::corpus::mix_ood(episode->value, ood_source->value, ood_shots, seed);
        *out = handle.release();
    });
}

pp_status pp_episode_to_json(const pp_episode* episode, char** json_out) {
    return guard([&] {
        require(episode && json_out, "episode/out is null");
        *json_out = dup_string(pp::corpus::episode_to_json(episode->value));
    });
}

pp_status pp_episode_from_json(const char* json_text, const pp_dataset* dataset,
                               const pp_dataset* ood_source, pp_episode** out) {
    return guard([&] {
        require(json_text && dataset && out, "json/dataset/out is null");
        auto handle = std::make_unique<pp_episode>();
        handle->value = pp::corpus::episode_from_json(
            json_text, dataset->value, ood_source ? &ood_source->value : nullptr);
        *out = handle.release();
    });
}

void pp_episode_free(pp_episode* episode) { delete episode; }

pp_status pp_scorer_create(const pp_dataset* vocab_source, const pp_dataset* ood,
                           const char* config_json, pp_scorer** out) {
    return guard([&] {
        require(vocab_source && out, "dataset/out is null");
        auto handle = std::make_unique<pp_scorer>();
        handle->value = build_scorer(&vocab_source->value, ood ? &ood->value : nullptr,
                                     config_json ? config_json : "");
        *out = handle.release();
    });
}

pp_status pp_scorer_train(pp_scorer* scorer, const pp_episode* episode,
                          const char* train_config_json, char** loss_trace_json_out) {
    return guard([&] {
        require(scorer && episode, "scorer/episode is null");
        auto* mlm = dynamic_cast<pp::scoring::TinyMLMScorer*>(scorer->value.get());
        if (!mlm) {
            if (loss_trace_json_out) *loss_trace_json_out = dup_string("{}");
            return;  // training-free scorer
        }
        json doc = train_config_json && *train_config_json
                       ? json::parse(train_config_json, nullptr, false)
                       : json::object();
        if (doc.is_discarded() || !doc.is_object())
            pp::fail(pp::ErrorCode::Parse, "train config is not a JSON object");
        pp::scoring::TrainingConfig config;
        config.learning_rate = doc.value("learning_rate", config.learning_rate);
        config.batch_size = doc.value("batch_size", config.batch_size);
        config.epochs = doc.value("epochs", config.epochs);
        config.weight_decay = doc.value("weight_decay", config.weight_decay);
        config.seed = doc.value("seed", config.seed);

        const auto pairs = pp::prompting::build_training_pairs(episode->value,
                                                               mlm->prompt_template(),
                                                               mlm->tokenizer());
        const auto result = mlm->train(pairs, config);
        if (loss_trace_json_out) {
            json trace{{"epoch_mean_loss", result.epoch_mean_loss}, {"steps", result.steps}};
            *loss_trace_json_out = dup_string(trace.dump(2));
        }
    });
}

pp_status pp_scorer_to_json(const pp_scorer* scorer, char** checkpoint_json_out) {
    return guard([&] {
        require(scorer && checkpoint_json_out, "scorer/out is null");
        *checkpoint_json_out = dup_string(pp::scoring::scorer_to_checkpoint_json(*scorer->value));
    });
}

pp_status pp_scorer_from_json(const char* checkpoint_json, pp_scorer** out) {
    return guard([&] {
        require(checkpoint_json && out, "json/out is null");
        auto handle = std::make_unique<pp_scorer>();
        handle->value = pp::scoring::scorer_from_checkpoint_json(checkpoint_json);
        *out = handle.release();
    });
}

uint64_t pp_scorer_call_count(const pp_scorer* scorer) {
    return scorer ? scorer->value->call_count() : 0;
}

void pp_scorer_free(pp_scorer* scorer) { delete scorer; }

pp_status pp_score_matrix(const pp_scorer* scorer, const pp_episode* episode, pp_matrix** out) {
    return guard([&] {
        require(scorer && episode && out, "scorer/episode/out is null");
        auto handle = std::make_unique<pp_matrix>();
        handle->value = pp::scoring::score_matrix(*scorer->value, episode->value);
        *out = handle.release();
    });
}

pp_status pp_train_relevance_matrix(const pp_scorer* scorer, const pp_episode* episode,
                                    pp_matrix** out) {
    return guard([&] {
        require(scorer && episode && out, "scorer/episode/out is null");
        auto handle = std::make_unique<pp_matrix>();
        handle->value = pp::scoring::train_relevance_matrix(*scorer->value, episode->value);
        *out = handle.release();
    });
}

pp_status pp_matrix_to_csv(const pp_matrix* matrix, char** csv_out) {
    return guard([&] {
        require(matrix && csv_out, "matrix/out is null");
        *csv_out = dup_string(matrix->value.to_csv());
    });
}

void pp_matrix_free(pp_matrix* matrix) { delete matrix; }

pp_status pp_classify(const pp_matrix* matrix, const pp_episode* episode, const char* pooling,
                      int k, pp_predictions** out) {
    return guard([&] {
        require(matrix && episode && out, "matrix/episode/out is null");
        auto handle = std::make_unique<pp_predictions>();
        handle->method = make_method(pooling, k);
        handle->value = pp::pooling::classify_matrix(matrix->value, handle->method);
        handle->gold = gold_of(episode->value);
        *out = handle.release();
    });
}

pp_status pp_predictions_to_csv(const pp_predictions* predictions, char** csv_out) {
    return guard([&] {
        require(predictions && csv_out, "predictions/out is null");
        *csv_out = dup_string(
            pp::pooling::predictions_to_csv(predictions->value, predictions->gold,
                                            predictions->method));
    });
}

pp_status pp_predictions_accuracy(const pp_predictions* predictions, double* accuracy_out) {
    return guard([&] {
        require(predictions && accuracy_out, "predictions/out is null");
        *accuracy_out = pp::analysis::accuracy(predictions->value, predictions->gold);
    });
}

void pp_predictions_free(pp_predictions* predictions) { delete predictions; }

pp_status pp_select_pivots(const pp_matrix* train_relevance, int p, int exclude_self,
                           uint64_t episode_seed, pp_pivots** out) {
    return guard([&] {
        require(train_relevance && out, "matrix/out is null");
        auto handle = std::make_unique<pp_pivots>();
        handle->value = pp::pivot::select_pivots(train_relevance->value, p, exclude_self != 0,
                                                 episode_seed);
        *out = handle.release();
    });
}

pp_status pp_pivots_to_json(const pp_pivots* pivots, char** json_out) {
    return guard([&] {
        require(pivots && json_out, "pivots/out is null");
        *json_out = dup_string(pivots->value.to_json());
    });
}

pp_status pp_pivots_from_json(const char* json_text, pp_pivots** out) {
    return guard([&] {
        require(json_text && out, "json/out is null");
        auto handle = std::make_unique<pp_pivots>();
        handle->value = pp::pivot::PivotSet::from_json(json_text);
        *out = handle.release();
    });
}

pp_status pp_pivot_infer(const pp_scorer* scorer, const pp_episode* episode,
                         const pp_pivots* pivots, const char* pooling, int k,
                         pp_predictions** out) {
    return guard([&] {
        require(scorer && episode && pivots && out, "scorer/episode/pivots/out is null");
        auto handle = std::make_unique<pp_predictions>();
        handle->method = make_method(pooling, k);
        handle->value = pp::pivot::pivot_infer(*scorer->value, episode->value, pivots->value,
                                               handle->method);
        handle->gold = gold_of(episode->value);
        *out = handle.release();
    });
}

void pp_pivots_free(pp_pivots* pivots) { delete pivots; }

pp_status pp_score_profile_csv(const char* matrix_csv, char** profile_csv_out) {
    return guard([&] {
        require(matrix_csv && profile_csv_out, "csv/out is null");
        const auto matrix = pp::pooling::ScoreMatrix::from_csv(matrix_csv);
        *profile_csv_out = dup_string(
            pp::analysis::score_profile_csv(pp::analysis::score_profile(matrix)));
    });
}

pp_status pp_predictions_csv_accuracy(const char* predictions_csv, double* accuracy_out) {
    return guard([&] {
        require(predictions_csv && accuracy_out, "csv/out is null");
        const auto records = pp::pooling::predictions_from_csv(predictions_csv);
        if (records.empty()) pp::fail(pp::ErrorCode::Precondition, "predictions CSV has no rows");
        std::size_t correct = 0;
        for (const auto& r : records)
            if (r.predicted_label == r.gold_label) ++correct;
        *accuracy_out = static_cast<double>(correct) / static_cast<double>(records.size());
    });
}

pp_status pp_prediction_stats_json(const char* predictions_csv, const char* episode_json,
                                   const pp_dataset* dataset, const pp_dataset* ood,
                                   char** stats_json_out) {
    return guard([&] {
        require(predictions_csv && episode_json && dataset && stats_json_out,
                "csv/episode/dataset/out is null");
        const auto episode = pp::corpus::episode_from_json(episode_json, dataset->value,
                                                           ood ? &ood->value : nullptr);
        const auto records = pp::pooling::predictions_from_csv(predictions_csv);
        std::vector<pp::pooling::Prediction> predictions;
        predictions.reserve(records.size());
        std::size_t correct = 0;
        for (const auto& r : records) {
            pp::pooling::Prediction p;
            p.query_id = r.query_id;
            p.label = r.predicted_label;
            p.tie_broken = r.tie_broken;
            predictions.push_back(std::move(p));
            if (r.predicted_label == r.gold_label) ++correct;
        }

        std::map<std::string, int> label_counts;
        for (const auto& label : episode.label_set) label_counts[label] = 0;
        for (const auto& s : episode.train) ++label_counts[s.label];

        json by_size = json::object();
        for (const auto& [size, mean] :
             pp::analysis::predictions_by_class_size(predictions, label_counts))
            by_size[std::to_string(size)] = mean;

        json doc{
            {"accuracy", records.empty() ? 0.0
                                         : static_cast<double>(correct) /
                                               static_cast<double>(records.size())},
            {"prediction_count_stddev",
             pp::analysis::prediction_count_stddev(predictions, episode.label_set)},
            {"by_class_size", std::move(by_size)},
        };
        *stats_json_out = dup_string(doc.dump(2));
    });
}

pp_status pp_run_experiment(const char* run_config_json, char** report_json_out) {
    return guard([&] {
        require(run_config_json, "config is null");
        const auto config = pp::runner::RunConfig::from_json(run_config_json);
        const auto report = pp::runner::run_experiment(config);
        if (report_json_out) *report_json_out = dup_string(report.to_json());
    });
}

pp_status pp_run_sweep(const char* run_config_json, const char* axis, const char* values_csv,
                       char** report_json_out) {
    return guard([&] {
        require(run_config_json && axis && values_csv, "config/axis/values is null");
        const auto config = pp::runner::RunConfig::from_json(run_config_json);
        std::vector<std::string> values;
        std::stringstream stream(values_csv);
        std::string item;
        while (std::getline(stream, item, ',')) {
            if (!item.empty()) values.push_back(item);
        }
        const auto report =
            pp::runner::run_sweep(config, pp::runner::sweep_axis_from_string(axis), values);
        if (report_json_out) *report_json_out = dup_string(report.to_json());
    });
}

}  // extern "C"
