#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pooling.hpp"
#include "support.hpp"

using namespace pairprompt;
using pooling::classify_row;
using pooling::PoolingMethod;
using pooling::PoolKind;
using pooling::Prediction;
using pooling::ScoreMatrix;

namespace {

const std::vector<double> kRow = {0.9, 0.1, 0.3, 0.4};
const std::vector<std::string> kLabels = {"A", "A", "B", "B"};

double label_value(const Prediction& p, const std::string& label) {
    for (const auto& [l, v] : p.per_label)
        if (l == label) return v;
    FAIL("label not present");
    return 0.0;
}

}  // namespace

TEST_CASE("pool_mean averages each label's columns") {
    const auto scores = pooling::pool_mean(kRow, kLabels);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].first == "A");
    CHECK(scores[0].second == doctest::Approx(0.5));
    CHECK(scores[1].second == doctest::Approx(0.35));

    SUBCASE("singleton labels reproduce the column entry") {
        const auto single = pooling::pool_mean(std::vector<double>{0.7, -0.2}, std::vector<std::string>{"A", "B"});
        CHECK(single[0].second == doctest::Approx(0.7));
        CHECK(single[1].second == doctest::Approx(-0.2));
    }

    SUBCASE("a constant row scores every label equally") {
        const auto constant = pooling::pool_mean(std::vector<double>{0.3, 0.3, 0.3, 0.3}, kLabels);
        CHECK(constant[0].second == doctest::Approx(0.3));
        CHECK(constant[1].second == doctest::Approx(0.3));
    }
}

TEST_CASE("pool_max takes each label's best column") {
    const auto scores = pooling::pool_max(kRow, kLabels);
    CHECK(scores[0].second == doctest::Approx(0.9));
    CHECK(scores[1].second == doctest::Approx(0.4));

    SUBCASE("negative scores are handled as plain reals") {
        const auto neg = pooling::pool_max(std::vector<double>{-0.9, -0.1, -0.3, -0.4}, kLabels);
        CHECK(neg[0].second == doctest::Approx(-0.1));
        CHECK(neg[1].second == doctest::Approx(-0.3));
    }
}

TEST_CASE("pool_knn votes within the top-k columns") {
    SUBCASE("k=2 on the reference row splits the vote") {
        const auto votes = pooling::pool_knn(kRow, kLabels, 2);  // top-2: columns 0 and 3
        CHECK(label_value({.label = "", .tie_broken = false, .per_label = votes}, "A") == 1.0);
        CHECK(label_value({.label = "", .tie_broken = false, .per_label = votes}, "B") == 1.0);
    }

    SUBCASE("k equal to the row size returns class sizes") {
        const auto votes = pooling::pool_knn(kRow, kLabels, 4);
        CHECK(votes[0].second == 2.0);
        CHECK(votes[1].second == 2.0);
    }

    SUBCASE("k=1 casts a single vote for the argmax column") {
        const auto votes = pooling::pool_knn(kRow, kLabels, 1);
        CHECK(votes[0].second == 1.0);
        CHECK(votes[1].second == 0.0);
    }

    SUBCASE("boundary score ties go to the lower column index") {
        // columns 1 and 2 tie at 0.5; k=2 must take column 1 (label A)
        const auto votes = pooling::pool_knn(std::vector<double>{0.9, 0.5, 0.5, 0.1}, kLabels, 2);
        CHECK(votes[0].second == 2.0);
        CHECK(votes[1].second == 0.0);
    }

    SUBCASE("k out of range is rejected") {
        CHECK_THROWS_AS(pooling::pool_knn(kRow, kLabels, 0), Error);
        CHECK_THROWS_AS(pooling::pool_knn(kRow, kLabels, 5), Error);
    }
}

TEST_CASE("default_k is half the train size, clamped to 1") {
    CHECK(pooling::default_k(8) == 4);
    CHECK(pooling::default_k(1) == 1);
    CHECK(pooling::default_k(9) == 4);
    CHECK(pooling::default_k(2) == 1);
    CHECK(pooling::default_k(3) == 1);
}

TEST_CASE("classify_row picks the argmax label with deterministic ties") {
    SUBCASE("mean pooling on the reference row") {
        const auto p = classify_row(kRow, kLabels, {PoolKind::Mean, 0});
        CHECK(p.label == "A");
        CHECK_FALSE(p.tie_broken);
    }

    SUBCASE("knn k=2 tie resolves to the most relevant tied label") {
        const auto p = classify_row(kRow, kLabels, {PoolKind::Knn, 2});
        CHECK(p.label == "A");  // tied 1:1, column 0 (0.9, label A) is most relevant
        CHECK(p.tie_broken);
    }

    SUBCASE("an all-equal row falls back to first-occurrence order") {
        const auto p = classify_row(std::vector<double>{0.2, 0.2, 0.2, 0.2},
                                    std::vector<std::string>{"B", "B", "A", "A"},
                                    {PoolKind::Mean, 0});
        CHECK(p.label == "B");
        CHECK(p.tie_broken);
    }

    SUBCASE("knn vote tie where the most relevant tied sample is not first") {
        // votes: A gets column 0 (0.5), B gets column 3 (0.9): tie 1:1, B wins
        const auto p = classify_row(std::vector<double>{0.5, 0.1, 0.2, 0.9}, kLabels, {PoolKind::Knn, 2});
        CHECK(p.label == "B");
        CHECK(p.tie_broken);
    }

    SUBCASE("singleton classes make all three methods agree") {
        const std::vector<double> row = {0.4, 0.8, -0.1};
        const std::vector<std::string> labels = {"X", "Y", "Z"};
        const auto mean = classify_row(row, labels, {PoolKind::Mean, 0});
        const auto max = classify_row(row, labels, {PoolKind::Max, 0});
        const auto knn = classify_row(row, labels, {PoolKind::Knn, 1});
        CHECK(mean.label == "Y");
        CHECK(mean.label == max.label);
        CHECK(mean.label == knn.label);
    }
}

TEST_CASE("classify matches the brute-force oracle on random matrices") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Rng rng(9000 + seed);
        const std::size_t rows = 1 + rng.below(8);
        const std::size_t cols = 2 + rng.below(18);
        const std::size_t labels = 2 + rng.below(std::min<std::size_t>(cols - 1, 5));
        const auto m = testsupport::random_matrix(rows, cols, labels, seed * 31 + 7, seed % 2 == 0);
        const int k = pooling::default_k(cols);
        for (const char* method : {"mean", "max", "knn"}) {
            PoolingMethod pm{pooling::pool_kind_from_string(method), k};
            const auto predictions = pooling::classify_matrix(m, pm);
            for (std::size_t q = 0; q < rows; ++q) {
                const auto row = m.row(q);
                const auto oracle = testsupport::oracle_classify(
                    std::vector<double>(row.begin(), row.end()), m.train_labels, method, k);
                CHECK(predictions[q].label == oracle.label);
                CHECK(predictions[q].tie_broken == oracle.tie_broken);
            }
        }
    }
}

TEST_CASE("classification is invariant under shift, positive scale, and (knn) monotone maps") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto m = testsupport::random_matrix(4, 12, 3, 400 + seed, seed % 3 == 0);
        for (const auto kind : {PoolKind::Mean, PoolKind::Max, PoolKind::Knn}) {
            const PoolingMethod pm{kind, 5};
            const auto base = pooling::classify_matrix(m, pm);

            ScoreMatrix shifted = m;
            for (double& s : shifted.scores) s += 3.7;
            ScoreMatrix scaled = m;
            for (double& s : scaled.scores) s *= 0.41;
            const auto shifted_p = pooling::classify_matrix(shifted, pm);
            const auto scaled_p = pooling::classify_matrix(scaled, pm);
            for (std::size_t q = 0; q < m.rows(); ++q) {
                CHECK(shifted_p[q].label == base[q].label);
                CHECK(shifted_p[q].tie_broken == base[q].tie_broken);
                CHECK(scaled_p[q].label == base[q].label);
            }

            if (kind == PoolKind::Knn) {
                ScoreMatrix warped = m;
                for (double& s : warped.scores) s = std::exp(s) + s * s * s;  // strictly increasing
                const auto warped_p = pooling::classify_matrix(warped, pm);
                for (std::size_t q = 0; q < m.rows(); ++q) {
                    CHECK(warped_p[q].label == base[q].label);
                    CHECK(warped_p[q].tie_broken == base[q].tie_broken);
                    CHECK(warped_p[q].per_label == base[q].per_label);  // votes unchanged
                }
            }
        }
    }
}

TEST_CASE("equal class sizes make sum and mean argmax agree") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(700 + seed);
        const std::size_t n_labels = 2 + rng.below(4);
        const std::size_t per = 1 + rng.below(5);
        ScoreMatrix m;
        m.query_ids = {"q"};
        for (std::size_t l = 0; l < n_labels; ++l)
            for (std::size_t i = 0; i < per; ++i) {
                m.train_ids.push_back("t" + std::to_string(l) + "_" + std::to_string(i));
                m.train_labels.push_back("L" + std::to_string(l));
            }
        m.scores.resize(m.cols());
        for (double& s : m.scores) s = 2.0 * rng.uniform() - 1.0;

        const auto mean_p = pooling::classify_matrix(m, {PoolKind::Mean, 0})[0];
        // sum pooling by hand
        std::map<std::string, double> sums;
        for (std::size_t c = 0; c < m.cols(); ++c) sums[m.train_labels[c]] += m.scores[c];
        std::string best;
        double best_v = -1e300;
        for (const auto& label : testsupport::oracle_label_order(m.train_labels))
            if (sums[label] > best_v) best = label, best_v = sums[label];
        CHECK(mean_p.label == best);
    }
}

TEST_CASE("score matrix CSV round-trips") {
    auto m = testsupport::random_matrix(3, 5, 2, 12345);
    m.query_ids[1] = "has,comma";  // exercise quoting
    const std::string csv = m.to_csv();
    const auto back = ScoreMatrix::from_csv(csv, m.train_labels);
    CHECK(back.query_ids == m.query_ids);
    CHECK(back.train_ids == m.train_ids);
    REQUIRE(back.scores.size() == m.scores.size());
    for (std::size_t i = 0; i < m.scores.size(); ++i)
        CHECK(back.scores[i] == m.scores[i]);  // exact: shortest round-trip formatting

    CHECK_THROWS_AS(ScoreMatrix::from_csv("not,a,matrix\n1,2,3\n"), Error);
}

TEST_CASE("prediction CSV carries gold labels and tie metadata") {
    const auto m = testsupport::random_matrix(4, 6, 3, 777);
    const auto predictions = pooling::classify_matrix(m, {PoolKind::Mean, 0});
    std::map<std::string, std::string> gold;
    for (const auto& id : m.query_ids) gold[id] = "L0";

    const std::string csv = pooling::predictions_to_csv(predictions, gold, {PoolKind::Mean, 0});
    const auto records = pooling::predictions_from_csv(csv);
    REQUIRE(records.size() == predictions.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].query_id == predictions[i].query_id);
        CHECK(records[i].predicted_label == predictions[i].label);
        CHECK(records[i].gold_label == "L0");
        CHECK(records[i].method == "mean");
        CHECK(records[i].tie_broken == predictions[i].tie_broken);
    }

    std::map<std::string, std::string> incomplete;
    CHECK_THROWS_AS(pooling::predictions_to_csv(predictions, incomplete, {PoolKind::Mean, 0}),
                    Error);
}
