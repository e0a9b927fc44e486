#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <string>

#include "pairprompt/pairprompt.h"

#ifndef PAIRPROMPT_DATA_DIR
#define PAIRPROMPT_DATA_DIR "data"
#endif

namespace {

std::string data_path(const char* name) {
    return std::string(PAIRPROMPT_DATA_DIR) + "/" + name;
}

struct StringOut {
    char* value = nullptr;
    ~StringOut() { pp_string_free(value); }
    std::string str() const { return value ? value : ""; }
};

}  // namespace

TEST_CASE("version and error reporting basics") {
    CHECK(pp_version() != nullptr);
    CHECK(pp_dataset_load(nullptr, nullptr, nullptr) == PP_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(pp_last_error()) > 0);

    pp_dataset* missing = nullptr;
    CHECK(pp_dataset_load("/no/such/file.jsonl", nullptr, &missing) == PP_ERR_IO);
    CHECK(missing == nullptr);
}

TEST_CASE("full pipeline through the shared library surface") {
    pp_dataset* dataset = nullptr;
    REQUIRE(pp_dataset_load(data_path("synth4.jsonl").c_str(), nullptr, &dataset) == PP_OK);
    CHECK(pp_dataset_size(dataset) == 600);
    CHECK(pp_dataset_label_count(dataset) == 4);

    pp_episode* episode = nullptr;
    REQUIRE(pp_episode_sample(dataset, 2, 12, 9, &episode) == PP_OK);

    pp_episode* noisy = nullptr;
    REQUIRE(pp_episode_inject_noise(episode, 1, 5, &noisy) == PP_OK);

    StringOut episode_json;
    REQUIRE(pp_episode_to_json(noisy, &episode_json.value) == PP_OK);
    pp_episode* reloaded = nullptr;
    REQUIRE(pp_episode_from_json(episode_json.value, dataset, nullptr, &reloaded) == PP_OK);
    StringOut reloaded_json;
    REQUIRE(pp_episode_to_json(reloaded, &reloaded_json.value) == PP_OK);
    CHECK(reloaded_json.str() == episode_json.str());

    pp_scorer* scorer = nullptr;
    const char* scorer_config = R"({"scorer": "tiny-mlm", "embed_dim": 16, "blocks": 1,
                                    "heads": 2, "max_seq_len": 64, "max_tokens": 16})";
    REQUIRE(pp_scorer_create(dataset, nullptr, scorer_config, &scorer) == PP_OK);

    StringOut trace;
    REQUIRE(pp_scorer_train(scorer, noisy, R"({"epochs": 1, "batch_size": 16})",
                            &trace.value) == PP_OK);
    CHECK(trace.str().find("epoch_mean_loss") != std::string::npos);

    StringOut checkpoint;
    REQUIRE(pp_scorer_to_json(scorer, &checkpoint.value) == PP_OK);
    pp_scorer* restored = nullptr;
    REQUIRE(pp_scorer_from_json(checkpoint.value, &restored) == PP_OK);

    pp_matrix* matrix = nullptr;
    REQUIRE(pp_score_matrix(scorer, noisy, &matrix) == PP_OK);
    CHECK(pp_scorer_call_count(scorer) == 12 * 8);

    pp_matrix* matrix_restored = nullptr;
    REQUIRE(pp_score_matrix(restored, noisy, &matrix_restored) == PP_OK);
    StringOut csv_a, csv_b;
    REQUIRE(pp_matrix_to_csv(matrix, &csv_a.value) == PP_OK);
    REQUIRE(pp_matrix_to_csv(matrix_restored, &csv_b.value) == PP_OK);
    CHECK(csv_a.str() == csv_b.str());  // checkpoint round-trip is exact

    pp_predictions* predictions = nullptr;
    REQUIRE(pp_classify(matrix, noisy, "mean", 0, &predictions) == PP_OK);
    double accuracy = -1.0;
    REQUIRE(pp_predictions_accuracy(predictions, &accuracy) == PP_OK);
    CHECK(accuracy >= 0.0);
    CHECK(accuracy <= 1.0);

    StringOut predictions_csv;
    REQUIRE(pp_predictions_to_csv(predictions, &predictions_csv.value) == PP_OK);
    double csv_accuracy = -1.0;
    REQUIRE(pp_predictions_csv_accuracy(predictions_csv.value, &csv_accuracy) == PP_OK);
    CHECK(csv_accuracy == accuracy);

    StringOut profile_csv;
    REQUIRE(pp_score_profile_csv(csv_a.value, &profile_csv.value) == PP_OK);
    CHECK(profile_csv.str().rfind("rank,avg_score", 0) == 0);

    StringOut stats;
    REQUIRE(pp_prediction_stats_json(predictions_csv.value, episode_json.value, dataset, nullptr,
                                     &stats.value) == PP_OK);
    CHECK(stats.str().find("prediction_count_stddev") != std::string::npos);
    CHECK(stats.str().find("by_class_size") != std::string::npos);

    pp_matrix* train_rel = nullptr;
    REQUIRE(pp_train_relevance_matrix(scorer, noisy, &train_rel) == PP_OK);
    pp_pivots* pivots = nullptr;
    REQUIRE(pp_select_pivots(train_rel, 1, 0, 9, &pivots) == PP_OK);
    StringOut pivots_json;
    REQUIRE(pp_pivots_to_json(pivots, &pivots_json.value) == PP_OK);
    pp_pivots* pivots_back = nullptr;
    REQUIRE(pp_pivots_from_json(pivots_json.value, &pivots_back) == PP_OK);

    pp_predictions* pivot_predictions = nullptr;
    REQUIRE(pp_pivot_infer(scorer, noisy, pivots_back, "max", 0, &pivot_predictions) == PP_OK);
    double pivot_accuracy = -1.0;
    REQUIRE(pp_predictions_accuracy(pivot_predictions, &pivot_accuracy) == PP_OK);
    CHECK(pivot_accuracy >= 0.0);

    pp_predictions_free(pivot_predictions);
    pp_pivots_free(pivots_back);
    pp_pivots_free(pivots);
    pp_matrix_free(train_rel);
    pp_predictions_free(predictions);
    pp_matrix_free(matrix_restored);
    pp_matrix_free(matrix);
    pp_scorer_free(restored);
    pp_scorer_free(scorer);
    pp_episode_free(reloaded);
    pp_episode_free(noisy);
    pp_episode_free(episode);
    pp_dataset_free(dataset);
}

TEST_CASE("status codes map the library error taxonomy") {
    pp_dataset* dataset = nullptr;
    REQUIRE(pp_dataset_load(data_path("synth2.jsonl").c_str(), nullptr, &dataset) == PP_OK);

    pp_episode* episode = nullptr;
    CHECK(pp_episode_sample(dataset, 1000, 5, 1, &episode) == PP_ERR_PRECONDITION);
    CHECK(std::string(pp_last_error()).find("insufficient") != std::string::npos);

    REQUIRE(pp_episode_sample(dataset, 2, 5, 1, &episode) == PP_OK);
    pp_episode* mixed = nullptr;
    CHECK(pp_episode_mix_ood(episode, dataset, 2, 1, &mixed) == PP_ERR_PRECONDITION);

    pp_scorer* scorer = nullptr;
    CHECK(pp_scorer_create(dataset, nullptr, "{\"scorer\": \"bert\"}", &scorer) ==
          PP_ERR_INVALID_ARGUMENT);
    CHECK(pp_scorer_from_json("{}", &scorer) == PP_ERR_PARSE);

    pp_episode_free(episode);
    pp_dataset_free(dataset);
}

TEST_CASE("experiment runner and sweep through the C surface") {
    const std::string config = std::string(R"({"dataset": ")") + data_path("synth4.jsonl") +
                               R"(", "shots": 2, "query_size": 10, "seeds": [1, 2],
                                  "scorer": "lexical", "pooling": "mean",
                                  "out_dir": "capi_runs"})";

    StringOut report;
    REQUIRE(pp_run_experiment(config.c_str(), &report.value) == PP_OK);
    CHECK(report.str().find("mean_accuracy") != std::string::npos);

    StringOut sweep;
    REQUIRE(pp_run_sweep(config.c_str(), "pooling", "mean,max,knn", &sweep.value) == PP_OK);
    CHECK(sweep.str().find("scorer_calls_per_seed") != std::string::npos);

    CHECK(pp_run_experiment(R"({"bad_key": 1})", nullptr) == PP_ERR_PARSE);
    CHECK(pp_run_sweep(config.c_str(), "sideways", "1", nullptr) == PP_ERR_INVALID_ARGUMENT);
}
