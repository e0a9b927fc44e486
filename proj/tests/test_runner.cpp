#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "runner.hpp"
#include "support.hpp"

using namespace pairprompt;
using nlohmann::json;
using runner::RunConfig;
using runner::RunReport;
using runner::SweepAxis;

namespace {

RunConfig lexical_config(const std::string& out_dir) {
    RunConfig config;
    config.dataset_path = testsupport::data_path("synth4.jsonl");
    config.shots = 4;
    config.query_size = 40;
    config.seeds = {1, 2};
    config.scorer = "lexical";
    config.pooling = "mean";
    config.out_dir = out_dir;
    return config;
}

}  // namespace

TEST_CASE("run config JSON round-trips, rejects unknown keys, hashes stably") {
    RunConfig config = lexical_config("runner_out/cfg");
    const std::string doc = config.to_json();
    const RunConfig back = RunConfig::from_json(doc);
    CHECK(back.to_json() == doc);
    CHECK(back.hash() == config.hash());

    CHECK_THROWS_WITH_AS(RunConfig::from_json(R"({"datast": "x"})"),
                         doctest::Contains("unknown run config key"), Error);
    CHECK_THROWS_AS(RunConfig::from_json("not json"), Error);

    SUBCASE("out_dir does not contribute to the hash") {
        RunConfig moved = config;
        moved.out_dir = "elsewhere";
        CHECK(moved.hash() == config.hash());
        RunConfig changed = config;
        changed.shots = 8;
        CHECK(changed.hash() != config.hash());
    }

    SUBCASE("validation catches bad values") {
        RunConfig bad = config;
        bad.seeds.clear();
        CHECK_THROWS_AS(bad.validate(), Error);
        bad = config;
        bad.pooling = "median";
        CHECK_THROWS_AS(bad.validate(), Error);
        bad = config;
        bad.scorer = "bert";
        CHECK_THROWS_AS(bad.validate(), Error);
        bad = config;
        bad.ood_shots = 2;
        CHECK_THROWS_AS(bad.validate(), Error);  // needs ood_dataset
    }
}

TEST_CASE("run_experiment writes every artifact and a coherent report") {
    RunConfig config = lexical_config("runner_out/smoke");
    config.seeds = {7};
    config.pivot_p = 2;
    const RunReport report = runner::run_experiment(config);

    REQUIRE(report.per_seed.size() == 1);
    const auto& seed = report.per_seed[0];
    CHECK(seed.accuracy > 0.0);
    CHECK(report.mean_accuracy == seed.accuracy);
    CHECK(seed.query_pairs == 40 * 16);
    CHECK(seed.scorer_calls_inference == 40 * 16);
    // pivot pass: 4 labels x min(2, 4) pivots = 8 columns
    CHECK(seed.scorer_calls_pivot_inference == 40 * 8);
    CHECK(report.pivot_mean_accuracy >= 0.0);

    const std::string dir = config.out_dir + "/" + report.config_hash + "/seed7";
    for (const char* name : {"episode.json", "checkpoint.json", "matrix.csv", "predictions.csv",
                             "pivots.json", "pivot_matrix.csv", "pivot_predictions.csv"})
        CHECK(std::filesystem::exists(dir + "/" + std::string(name)));
    CHECK(std::filesystem::exists(config.out_dir + "/" + report.config_hash + "/report.json"));
    CHECK(std::filesystem::exists(config.out_dir + "/" + report.config_hash + "/report.txt"));

    const json parsed = json::parse(report.to_json());
    CHECK(parsed.at("per_seed").size() == 1);
    CHECK(parsed.at("config").at("dataset") == config.dataset_path);
}

TEST_CASE("ten seeds aggregate to a ten-entry report") {
    RunConfig config = lexical_config("runner_out/tens");
    config.query_size = 20;
    config.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const RunReport report = runner::run_experiment(config);
    REQUIRE(report.per_seed.size() == 10);
    double total = 0.0;
    for (const auto& s : report.per_seed) total += s.accuracy;
    CHECK(report.mean_accuracy == doctest::Approx(total / 10.0).epsilon(1e-12));
}

TEST_CASE("identical configs rerun to byte-identical artifacts") {
    RunConfig config = lexical_config("runner_out/determinism");
    config.seeds = {3};
    config.scorer = "tiny-mlm";
    config.embed_dim = 16;
    config.heads = 2;
    config.blocks = 1;
    config.max_seq_len = 64;
    config.max_tokens = 20;
    config.epochs = 2;
    config.query_size = 6;
    config.shots = 2;

    const RunReport first = runner::run_experiment(config);
    const std::string dir = config.out_dir + "/" + first.config_hash;
    const std::string predictions = runner::read_text_file(dir + "/seed3/predictions.csv");
    const std::string matrix = runner::read_text_file(dir + "/seed3/matrix.csv");
    const std::string report_json = runner::read_text_file(dir + "/report.json");
    const std::string checkpoint = runner::read_text_file(dir + "/seed3/checkpoint.json");

    const RunReport second = runner::run_experiment(config);
    CHECK(second.config_hash == first.config_hash);
    CHECK(runner::read_text_file(dir + "/seed3/predictions.csv") == predictions);
    CHECK(runner::read_text_file(dir + "/seed3/matrix.csv") == matrix);
    CHECK(runner::read_text_file(dir + "/report.json") == report_json);
    CHECK(runner::read_text_file(dir + "/seed3/checkpoint.json") == checkpoint);
}

TEST_CASE("noise sweep reports drops relative to the clean cell") {
    RunConfig config = lexical_config("runner_out/noise");
    config.query_size = 15;
    const auto sweep = runner::run_sweep(config, SweepAxis::Noise, {"0", "1", "2", "4"});
    REQUIRE(sweep.cells.size() == 4);
    for (const auto& cell : sweep.cells) CHECK_FALSE(cell.failed);
    REQUIRE(sweep.drops.size() == 3);  // relative to m=0
    const double clean = sweep.cells[0].report.mean_accuracy;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(sweep.drops[i].first == sweep.cells[i + 1].value);
        CHECK(sweep.drops[i].second ==
              doctest::Approx(clean - sweep.cells[i + 1].report.mean_accuracy));
    }
    CHECK(std::filesystem::exists(config.out_dir + "/sweep-" + sweep.base_hash +
                                  "-noise/report.json"));
}

TEST_CASE("pooling sweep scores each seed exactly once") {
    RunConfig config = lexical_config("runner_out/pool");
    config.query_size = 12;
    config.seeds = {5, 6};
    const auto sweep = runner::run_sweep(config, SweepAxis::Pooling, {"mean", "max", "knn"});
    REQUIRE(sweep.cells.size() == 3);
    for (const auto& cell : sweep.cells) {
        REQUIRE_FALSE(cell.failed);
        CHECK(cell.report.per_seed.size() == 2);
    }
    // one scorer pass per seed: 12 queries x 16 train, nothing more
    REQUIRE(sweep.scorer_calls_per_seed.size() == 2);
    for (const std::uint64_t calls : sweep.scorer_calls_per_seed) CHECK(calls == 12 * 16);

    SUBCASE("cells agree with standalone runs") {
        RunConfig solo = config;
        solo.pooling = "knn";
        const RunReport alone = runner::run_experiment(solo);
        CHECK(alone.mean_accuracy == sweep.cells[2].report.mean_accuracy);
        CHECK(alone.config_hash == sweep.cells[2].report.config_hash);
    }
}

TEST_CASE("sweeps continue past failing cells") {
    RunConfig config = lexical_config("runner_out/failing");
    config.query_size = 10;
    config.seeds = {1};
    // shots=1000 exceeds the corpus; the other cells must still complete
    const auto sweep = runner::run_sweep(config, SweepAxis::Shots, {"2", "1000", "4"});
    REQUIRE(sweep.cells.size() == 3);
    CHECK_FALSE(sweep.cells[0].failed);
    CHECK(sweep.cells[1].failed);
    CHECK(sweep.cells[1].error.find("insufficient") != std::string::npos);
    CHECK_FALSE(sweep.cells[2].failed);

    const json doc = json::parse(sweep.to_json());
    CHECK(doc.at("cells")[1].contains("error"));
}

TEST_CASE("pivot sweep mirrors the protocol grid") {
    RunConfig config = lexical_config("runner_out/pivotp");
    config.query_size = 10;
    config.seeds = {4};
    const auto sweep = runner::run_sweep(config, SweepAxis::PivotP, {"1", "2", "4"});
    for (const auto& cell : sweep.cells) {
        REQUIRE_FALSE(cell.failed);
        CHECK(cell.report.pivot_mean_accuracy >= 0.0);
    }
    // p = shots saturates the pivots: identical predictions to full inference
    CHECK(sweep.cells[2].report.pivot_mean_accuracy ==
          doctest::Approx(sweep.cells[2].report.mean_accuracy));
}

TEST_CASE("OOD configuration trains on mixed pairs but infers in-domain") {
    RunConfig config = lexical_config("runner_out/ood");
    config.query_size = 8;
    config.seeds = {2};
    config.ood_dataset_path = testsupport::data_path("ood5.jsonl");
    config.ood_shots = 2;
    const RunReport report = runner::run_experiment(config);
    // inference width is unchanged by the 5x2 OOD samples
    CHECK(report.per_seed[0].query_pairs == 8 * 16);
    CHECK(report.per_seed[0].scorer_calls_inference == 8 * 16);

    const std::string dir = config.out_dir + "/" + report.config_hash + "/seed2";
    const json episode = json::parse(runner::read_text_file(dir + "/episode.json"));
    CHECK(episode.at("ood_ids").size() == 10);
    CHECK(episode.at("ood_dataset") == "ood5");
}
