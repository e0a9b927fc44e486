#include "analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>

namespace pairprompt::analysis {

double accuracy(const std::vector<pooling::Prediction>& predictions,
                const std::map<std::string, std::string>& gold) {
    if (predictions.empty()) fail(ErrorCode::Precondition, "no predictions to score");
    std::size_t correct = 0;
    for (const auto& p : predictions) {
        const auto it = gold.find(p.query_id);
        if (it == gold.end())
            fail(ErrorCode::InvalidArgument, "no gold label for query id '" + p.query_id + "'");
        if (it->second == p.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::vector<double> score_profile(const pooling::ScoreMatrix& matrix) {
    if (matrix.rows() == 0 || matrix.cols() == 0)
        fail(ErrorCode::Precondition, "score profile needs a non-empty matrix");
    std::vector<double> profile(matrix.cols(), 0.0);
    std::vector<double> row(matrix.cols());
    for (std::size_t q = 0; q < matrix.rows(); ++q) {
        const auto src = matrix.row(q);
        row.assign(src.begin(), src.end());
        std::sort(row.begin(), row.end(), std::greater<double>());
        for (std::size_t i = 0; i < row.size(); ++i) profile[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(matrix.rows());
    for (double& v : profile) v *= inv;
    const double floor = *std::min_element(profile.begin(), profile.end());
    for (double& v : profile) v -= floor;
    return profile;
}

std::map<int, double> predictions_by_class_size(const std::vector<pooling::Prediction>& predictions,
                                                const std::map<std::string, int>& train_label_counts) {
    std::map<std::string, std::size_t> predicted;
    for (const auto& [label, count] : train_label_counts) predicted[label] = 0;
    for (const auto& p : predictions) {
        const auto it = predicted.find(p.label);
        if (it == predicted.end())
            fail(ErrorCode::InvalidArgument,
                 "predicted label '" + p.label + "' has no train-sample count");
        ++it->second;
    }
    std::map<int, std::pair<double, std::size_t>> groups;  // size -> (total, classes)
    for (const auto& [label, count] : train_label_counts) {
        auto& [total, classes] = groups[count];
        total += static_cast<double>(predicted[label]);
        ++classes;
    }
    std::map<int, double> out;
    for (const auto& [size, entry] : groups)
        out[size] = entry.first / static_cast<double>(entry.second);
    return out;
}

double prediction_count_stddev(const std::vector<pooling::Prediction>& predictions,
                               const std::vector<std::string>& label_set) {
    if (label_set.empty()) fail(ErrorCode::InvalidArgument, "label set is empty");
    std::map<std::string, double> counts;
    for (const std::string& label : label_set) counts[label] = 0.0;
    for (const auto& p : predictions) {
        const auto it = counts.find(p.label);
        if (it == counts.end())
            fail(ErrorCode::InvalidArgument, "predicted label '" + p.label + "' not in label set");
        it->second += 1.0;
    }
    const double n = static_cast<double>(label_set.size());
    double mean = 0.0;
    for (const auto& [label, c] : counts) mean += c;
    mean /= n;
    double var = 0.0;
    for (const auto& [label, c] : counts) var += (c - mean) * (c - mean);
    return std::sqrt(var / n);
}

namespace {

std::string canonical_dataset_name(std::string_view name) {
    std::string out;
    for (const char c : name)
        if (std::isalnum(static_cast<unsigned char>(c)))
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
}

struct EpochRow {
    const char* key;
    int epochs[4];  // 2, 4, 8, 16 shots
};

constexpr int kGridShots[4] = {2, 4, 8, 16};
constexpr EpochRow kEpochTable[] = {
    {"agnews", {120, 60, 30, 15}},
    {"dbpedia", {32, 16, 8, 4}},
    {"yahoo", {36, 18, 9, 5}},
};

}  // namespace

int epochs_for(std::string_view dataset_name, int shots) {
    if (shots < 1) fail(ErrorCode::InvalidArgument, "shots must be >= 1");
    const std::string canonical = canonical_dataset_name(dataset_name);
    const EpochRow* row = &kEpochTable[0];
    for (const EpochRow& candidate : kEpochTable) {
        if (canonical.find(candidate.key) != std::string::npos ||
            (candidate.key == std::string_view("agnews") &&
             canonical.find("ag") != std::string::npos &&
             canonical.find("news") != std::string::npos)) {
            row = &candidate;
            break;
        }
    }
    for (std::size_t i = 0; i < 4; ++i)
        if (kGridShots[i] == shots) return row->epochs[i];
    // Nearest grid row, scaled inversely with the shot count.
    std::size_t anchor = 0;
    for (std::size_t i = 1; i < 4; ++i)
        if (std::abs(kGridShots[i] - shots) < std::abs(kGridShots[anchor] - shots)) anchor = i;
    const double scaled =
        static_cast<double>(row->epochs[anchor]) * kGridShots[anchor] / static_cast<double>(shots);
    return std::max(1, static_cast<int>(std::lround(scaled)));
}

ExperimentReport aggregate_runs(const std::vector<std::uint64_t>& seeds,
                                const std::vector<double>& per_seed_accuracy) {
    if (per_seed_accuracy.empty()) fail(ErrorCode::Precondition, "no per-seed accuracies");
    if (seeds.size() != per_seed_accuracy.size())
        fail(ErrorCode::InvalidArgument, "seed and accuracy lists differ in length");
    ExperimentReport report;
    report.seeds = seeds;
    report.per_seed_accuracy = per_seed_accuracy;
    double total = 0.0;
    for (const double a : per_seed_accuracy) total += a;
    report.mean_accuracy = total / static_cast<double>(per_seed_accuracy.size());
    return report;
}

std::string score_profile_csv(const std::vector<double>& profile) {
    std::string out = "rank,avg_score\n";
    for (std::size_t i = 0; i < profile.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += format_double(profile[i]);
        out += '\n';
    }
    return out;
}

std::string class_size_csv(const std::map<int, double>& by_size) {
    std::string out = "train_count,avg_predicted_queries\n";
    for (const auto& [size, mean] : by_size) {
        out += std::to_string(size);
        out += ',';
        out += format_double(mean);
        out += '\n';
    }
    return out;
}

}  // namespace pairprompt::analysis
