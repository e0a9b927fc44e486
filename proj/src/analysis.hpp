#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pooling.hpp"

namespace pairprompt::analysis {

// Fraction of predictions whose label matches the gold label for the same
// query id. Every prediction must have a gold entry.
double accuracy(const std::vector<pooling::Prediction>& predictions,
                const std::map<std::string, std::string>& gold);

// Clean minus noisy, in percentage points. Negative values are allowed.
inline double performance_drop(double clean, double noisy) { return clean - noisy; }

// Each row sorted descending, rows averaged position-wise, then shifted so
// the minimum is exactly 0. Non-increasing and non-negative.
std::vector<double> score_profile(const pooling::ScoreMatrix& matrix);

// Groups classes by their train-sample count and reports the mean number of
// predicted queries per class in each size group.
std::map<int, double> predictions_by_class_size(const std::vector<pooling::Prediction>& predictions,
                                                const std::map<std::string, int>& train_label_counts);

// Population standard deviation of per-class predicted-query counts; classes
// with no predictions count as 0.
double prediction_count_stddev(const std::vector<pooling::Prediction>& predictions,
                               const std::vector<std::string>& label_set);

// Training-epoch schedule for the three reference corpora (AG's News,
// DBPedia, Yahoo) at 2/4/8/16 shots. Off-grid inputs scale the nearest grid
// row inversely with the shot count; unknown datasets use the AG's News row.
int epochs_for(std::string_view dataset_name, int shots);

struct ExperimentReport {
    std::string dataset;
    int shots = 0;
    std::string pooling;
    int noise_m = 0;
    std::string ood_source;
    int pivot_p = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> per_seed_accuracy;  // percentage points
    double mean_accuracy = 0.0;
};

// Arithmetic mean of per-seed accuracies, per-seed values retained.
ExperimentReport aggregate_runs(const std::vector<std::uint64_t>& seeds,
                                const std::vector<double>& per_seed_accuracy);

// CSV with one row per profile position, for external plotting.
std::string score_profile_csv(const std::vector<double>& profile);

std::string class_size_csv(const std::map<int, double>& by_size);

}  // namespace pairprompt::analysis
