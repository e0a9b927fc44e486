#include "pooling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pairprompt::pooling {

namespace {

// Labels in first-occurrence order with their column indices.
std::vector<std::pair<std::string, std::vector<std::size_t>>> group_columns(
    std::span<const std::string> train_labels) {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
    for (std::size_t c = 0; c < train_labels.size(); ++c) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == train_labels[c]; });
        if (it == groups.end()) {
            groups.emplace_back(train_labels[c], std::vector<std::size_t>{c});
        } else {
            it->second.push_back(c);
        }
    }
    return groups;
}

void check_row(std::span<const double> row, std::span<const std::string> train_labels) {
    if (row.size() != train_labels.size())
        fail(ErrorCode::InvalidArgument, "row length does not match train label count");
    if (row.empty()) fail(ErrorCode::InvalidArgument, "empty score row");
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current += c;
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

}  // namespace

void ScoreMatrix::validate() const {
    if (train_ids.size() != train_labels.size())
        fail(ErrorCode::InvalidArgument, "score matrix: train ids/labels size mismatch");
    if (scores.size() != rows() * cols())
        fail(ErrorCode::InvalidArgument, "score matrix: score buffer size mismatch");
    for (const double s : scores)
        if (!std::isfinite(s)) fail(ErrorCode::Numeric, "score matrix contains a non-finite entry");
}

std::string ScoreMatrix::to_csv() const {
    std::string out = "query_id";
    for (const std::string& id : train_ids) {
        out += ',';
        out += csv_escape(id);
    }
    out += '\n';
    for (std::size_t q = 0; q < rows(); ++q) {
        out += csv_escape(query_ids[q]);
        for (std::size_t t = 0; t < cols(); ++t) {
            out += ',';
            out += format_double(at(q, t));
        }
        out += '\n';
    }
    return out;
}

ScoreMatrix ScoreMatrix::from_csv(const std::string& csv_text, std::vector<std::string> train_labels) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::Parse, "score matrix CSV is empty");
    std::vector<std::string> header = csv_split(line);
    if (header.empty() || header[0] != "query_id")
        fail(ErrorCode::Parse, "score matrix CSV must start with a query_id header");

    ScoreMatrix matrix;
    matrix.train_ids.assign(header.begin() + 1, header.end());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields = csv_split(line);
        if (fields.size() != header.size())
            fail(ErrorCode::Parse, "score matrix CSV row has " + std::to_string(fields.size()) +
                                       " fields, expected " + std::to_string(header.size()));
        matrix.query_ids.push_back(fields[0]);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            try {
                matrix.scores.push_back(std::stod(fields[i]));
            } catch (const std::exception&) {
                fail(ErrorCode::Parse, "score matrix CSV has a non-numeric entry '" + fields[i] + "'");
            }
        }
    }
    if (train_labels.empty()) {
        matrix.train_labels.assign(matrix.train_ids.size(), "");
    } else {
        matrix.train_labels = std::move(train_labels);
    }
    if (matrix.train_labels.size() != matrix.train_ids.size())
        fail(ErrorCode::InvalidArgument, "train label count does not match CSV columns");
    return matrix;
}

PoolKind pool_kind_from_string(std::string_view name) {
    if (name == "mean") return PoolKind::Mean;
    if (name == "max") return PoolKind::Max;
    if (name == "knn") return PoolKind::Knn;
    fail(ErrorCode::InvalidArgument, "unknown pooling method '" + std::string(name) + "'");
}

std::string_view to_string(PoolKind kind) {
    switch (kind) {
        case PoolKind::Mean: return "mean";
        case PoolKind::Max: return "max";
        case PoolKind::Knn: return "knn";
    }
    return "?";
}

std::vector<std::pair<std::string, double>> pool_mean(std::span<const double> row,
                                                      std::span<const std::string> train_labels) {
    check_row(row, train_labels);
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [label, columns] : group_columns(train_labels)) {
        double sum = 0.0;
        for (const std::size_t c : columns) sum += row[c];
        out.emplace_back(label, sum / static_cast<double>(columns.size()));
    }
    return out;
}

std::vector<std::pair<std::string, double>> pool_max(std::span<const double> row,
                                                     std::span<const std::string> train_labels) {
    check_row(row, train_labels);
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [label, columns] : group_columns(train_labels)) {
        double best = row[columns.front()];
        for (const std::size_t c : columns) best = std::max(best, row[c]);
        out.emplace_back(label, best);
    }
    return out;
}

std::vector<std::pair<std::string, double>> pool_knn(std::span<const double> row,
                                                     std::span<const std::string> train_labels,
                                                     int k) {
    check_row(row, train_labels);
    if (k < 1 || static_cast<std::size_t>(k) > row.size())
        fail(ErrorCode::InvalidArgument, "knn k=" + std::to_string(k) + " out of range [1, " +
                                             std::to_string(row.size()) + "]");
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });

    std::vector<std::pair<std::string, double>> votes;
    for (const auto& [label, columns] : group_columns(train_labels)) {
        (void)columns;
        votes.emplace_back(label, 0.0);
    }
    for (int i = 0; i < k; ++i) {
        const std::string& label = train_labels[order[static_cast<std::size_t>(i)]];
        for (auto& [vote_label, count] : votes)
            if (vote_label == label) {
                count += 1.0;
                break;
            }
    }
    return votes;
}

int default_k(std::size_t train_size) {
    if (train_size < 1) fail(ErrorCode::InvalidArgument, "default_k: train size must be >= 1");
    return std::max<int>(1, static_cast<int>(train_size / 2));
}

namespace {

// argmax over per-label entries; ties go to the earliest entry (label
// first-occurrence order).
std::pair<std::size_t, bool> argmax_with_tie(const std::vector<std::pair<std::string, double>>& entries) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (entries[i].second > entries[best].second) best = i;
    bool tied = false;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (i != best && entries[i].second == entries[best].second) tied = true;
    return {best, tied};
}

}  // namespace

Prediction classify_row(std::span<const double> row, std::span<const std::string> train_labels,
                        const PoolingMethod& method) {
    Prediction prediction;
    switch (method.kind) {
        case PoolKind::Mean:
            prediction.per_label = pool_mean(row, train_labels);
            break;
        case PoolKind::Max:
            prediction.per_label = pool_max(row, train_labels);
            break;
        case PoolKind::Knn: {
            const int k = method.k > 0 ? method.k : default_k(row.size());
            prediction.per_label = pool_knn(row, train_labels, k);
            break;
        }
    }

    const auto [best, tied] = argmax_with_tie(prediction.per_label);
    prediction.tie_broken = tied;

    if (method.kind == PoolKind::Knn && tied) {
        // Vote tie: take the label of the most relevant training sample among
        // the tied labels (lower column index on score ties).
        const double top_votes = prediction.per_label[best].second;
        std::size_t best_col = train_labels.size();
        for (std::size_t c = 0; c < train_labels.size(); ++c) {
            bool label_tied = false;
            for (const auto& [label, votes] : prediction.per_label)
                if (votes == top_votes && label == train_labels[c]) label_tied = true;
            if (!label_tied) continue;
            if (best_col == train_labels.size() || row[c] > row[best_col]) best_col = c;
        }
        prediction.label = train_labels[best_col];
    } else {
        prediction.label = prediction.per_label[best].first;
    }
    return prediction;
}

std::vector<Prediction> classify_matrix(const ScoreMatrix& matrix, const PoolingMethod& method) {
    matrix.validate();
    std::vector<Prediction> predictions(matrix.rows());
    parallel_for(matrix.rows(), [&](std::size_t q) {
        predictions[q] = classify_row(matrix.row(q), matrix.train_labels, method);
        predictions[q].query_id = matrix.query_ids[q];
    });
    return predictions;
}

std::string predictions_to_csv(const std::vector<Prediction>& predictions,
                               const std::map<std::string, std::string>& gold,
                               const PoolingMethod& method) {
    std::string method_name(to_string(method.kind));
    if (method.kind == PoolKind::Knn && method.k > 0) method_name += "-k" + std::to_string(method.k);
    std::string out = "query_id,predicted_label,gold_label,method,tie_broken\n";
    for (const Prediction& p : predictions) {
        const auto it = gold.find(p.query_id);
        if (it == gold.end())
            fail(ErrorCode::InvalidArgument, "no gold label for query id '" + p.query_id + "'");
        out += csv_escape(p.query_id);
        out += ',';
        out += csv_escape(p.label);
        out += ',';
        out += csv_escape(it->second);
        out += ',';
        out += method_name;
        out += ',';
        out += p.tie_broken ? "1" : "0";
        out += '\n';
    }
    return out;
}

std::vector<PredictionRecord> predictions_from_csv(const std::string& csv_text) {
    std::istringstream in(csv_text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::Parse, "predictions CSV is empty");
    if (csv_split(line) != std::vector<std::string>{"query_id", "predicted_label", "gold_label",
                                                    "method", "tie_broken"})
        fail(ErrorCode::Parse, "predictions CSV has an unexpected header");
    std::vector<PredictionRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields = csv_split(line);
        if (fields.size() != 5) fail(ErrorCode::Parse, "predictions CSV row has wrong field count");
        records.push_back({fields[0], fields[1], fields[2], fields[3], fields[4] == "1"});
    }
    return records;
}

}  // namespace pairprompt::pooling
