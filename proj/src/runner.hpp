#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "corpus.hpp"
#include "pooling.hpp"
#include "scorer.hpp"

namespace pairprompt::runner {

// Flat experiment configuration. Serialized form is a single JSON object with
// exactly these keys; unknown keys are rejected.
struct RunConfig {
    std::string dataset_path;        // "dataset"
    std::string dataset_name;        // "" -> file stem
    int shots = 4;
    int query_size = 500;            // 0 -> entire remainder
    std::vector<std::uint64_t> seeds = {1};
    std::string template_pattern = "{a} [SEP] A news of [MASK] topic: {b}";
    int max_tokens = 120;            // per-side truncation limit
    std::string scorer = "lexical";  // lexical | tiny-mlm
    int embed_dim = 64;
    int blocks = 2;
    int heads = 2;
    int ff_dim = 0;                  // 0 -> 4 * embed_dim
    int max_seq_len = 256;
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 0;                  // 0 -> epochs_for(dataset, shots)
    double weight_decay = 0.01;
    std::string pooling = "mean";    // mean | max | knn
    int k = 0;                       // knn only; 0 -> default_k
    int noise_m = 0;
    std::string ood_dataset_path;    // "ood_dataset"
    std::string ood_dataset_name;
    int ood_shots = 0;
    int pivot_p = 0;                 // 0 -> pivot inference disabled
    bool exclude_self = false;
    std::string aggregate = "probs";
    std::string out_dir = "runs";

    static RunConfig from_json(const std::string& json_text);
    std::string to_json() const;
    // FNV-1a of the canonical JSON form, out_dir excluded: moving the output
    // directory does not change the experiment's identity.
    std::string hash() const;
    void validate() const;
};

struct SeedResult {
    std::uint64_t seed = 0;
    double accuracy = 0.0;        // percentage points
    double pivot_accuracy = -1.0; // -1 when pivots are disabled
    std::uint64_t scorer_calls_inference = 0;
    std::uint64_t scorer_calls_pivot_inference = 0;
    std::uint64_t scorer_calls_total = 0;  // all relevance calls for this seed
    std::size_t train_pairs = 0;
    std::size_t query_pairs = 0;
    int epochs = 0;
    double final_epoch_loss = -1.0;
    std::string artifact_dir;
};

struct RunReport {
    RunConfig config;
    std::string config_hash;
    std::vector<SeedResult> per_seed;
    double mean_accuracy = 0.0;
    double pivot_mean_accuracy = -1.0;

    std::string to_json() const;
    std::string to_text() const;
};

// Runs the full per-seed pipeline (sample, corrupt, mix, train, score, pool,
// classify, pivot) and writes every artifact under
// out_dir/<config_hash>/seed<seed>/.
RunReport run_experiment(const RunConfig& config);

enum class SweepAxis { Shots, Noise, PivotP, Pooling };

SweepAxis sweep_axis_from_string(std::string_view name);

struct SweepCell {
    std::string value;
    bool failed = false;
    std::string error;
    RunReport report;
};

struct SweepReport {
    std::string axis;
    std::string base_hash;
    std::vector<SweepCell> cells;
    // Noise axis only: performance drop of each noisy cell relative to the
    // m=0 cell, in percentage points.
    std::vector<std::pair<std::string, double>> drops;
    // Pooling axis only: total relevance calls per seed across the whole
    // sweep, demonstrating that each seed was scored exactly once.
    std::vector<std::uint64_t> scorer_calls_per_seed;

    std::string to_json() const;
    std::string to_text() const;
};

// One run per value with shared seeds. The pooling axis scores each seed once
// and re-pools the cached matrices; failed cells are recorded and skipped.
SweepReport run_sweep(const RunConfig& base, SweepAxis axis, const std::vector<std::string>& values);

// Filesystem helpers shared with the C API layer.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pairprompt::runner
