#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "util.hpp"

namespace pairprompt::pooling {

struct ScoreMatrix {
    std::vector<std::string> query_ids;
    std::vector<std::string> train_ids;
    std::vector<std::string> train_labels;  // one per column
    std::vector<double> scores;             // row-major, |query| x |train|

    std::size_t rows() const { return query_ids.size(); }
    std::size_t cols() const { return train_ids.size(); }
    std::span<const double> row(std::size_t q) const {
        return {scores.data() + q * cols(), cols()};
    }
    double& at(std::size_t q, std::size_t t) { return scores[q * cols() + t]; }
    double at(std::size_t q, std::size_t t) const { return scores[q * cols() + t]; }

    void validate() const;
    std::string to_csv() const;
    // Parses the layout written by to_csv. Column labels are not part of the
    // CSV; pass them when pooling is needed on a re-loaded matrix.
    static ScoreMatrix from_csv(const std::string& csv_text,
                                std::vector<std::string> train_labels = {});
};

enum class PoolKind { Mean, Max, Knn };

struct PoolingMethod {
    PoolKind kind = PoolKind::Mean;
    int k = 0;  // knn only; 0 = default_k(column count)
};

PoolKind pool_kind_from_string(std::string_view name);
std::string_view to_string(PoolKind kind);

struct Prediction {
    std::string query_id;
    std::string label;
    bool tie_broken = false;
    // Per-label scores (mean/max) or vote counts (knn), in label
    // first-occurrence order over the train columns.
    std::vector<std::pair<std::string, double>> per_label;
};

// Arithmetic mean of each label's column scores.
std::vector<std::pair<std::string, double>> pool_mean(std::span<const double> row,
                                                      std::span<const std::string> train_labels);

// Maximum of each label's column scores.
std::vector<std::pair<std::string, double>> pool_max(std::span<const double> row,
                                                     std::span<const std::string> train_labels);

// Vote counts within the k highest-scoring columns; score ties at the
// boundary go to the lower column index.
std::vector<std::pair<std::string, double>> pool_knn(std::span<const double> row,
                                                     std::span<const std::string> train_labels,
                                                     int k);

// Half the train-set size, floored, clamped to >= 1.
int default_k(std::size_t train_size);

Prediction classify_row(std::span<const double> row, std::span<const std::string> train_labels,
                        const PoolingMethod& method);

std::vector<Prediction> classify_matrix(const ScoreMatrix& matrix, const PoolingMethod& method);

// query_id, predicted_label, gold_label, method, tie_broken. Gold labels
// looked up by query id; missing ids raise.
std::string predictions_to_csv(const std::vector<Prediction>& predictions,
                               const std::map<std::string, std::string>& gold,
                               const PoolingMethod& method);

struct PredictionRecord {
    std::string query_id;
    std::string predicted_label;
    std::string gold_label;
    std::string method;
    bool tie_broken = false;
};

std::vector<PredictionRecord> predictions_from_csv(const std::string& csv_text);

}  // namespace pairprompt::pooling
