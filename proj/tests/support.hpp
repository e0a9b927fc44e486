#pragma once

// Shared fixtures and independent oracles for the test suites. Everything in
// here must stay independent of the implementation paths it checks.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "pooling.hpp"
#include "util.hpp"

#ifndef PAIRPROMPT_DATA_DIR
#define PAIRPROMPT_DATA_DIR "data"
#endif

namespace testsupport {

inline std::string data_path(const std::string& name) {
    return std::string(PAIRPROMPT_DATA_DIR) + "/" + name;
}

// Small in-memory corpus with per-class private vocabularies.
inline pairprompt::corpus::Dataset synthetic_dataset(const std::string& name, int n_labels,
                                                     int per_label, std::uint64_t seed,
                                                     int words_per_class = 10, int min_len = 5,
                                                     int max_len = 9) {
    pairprompt::Rng rng(seed);
    std::vector<pairprompt::corpus::Sample> samples;
    for (int l = 0; l < n_labels; ++l) {
        const std::string label = name + "-l" + std::to_string(l);
        for (int i = 0; i < per_label; ++i) {
            const int n = min_len + static_cast<int>(rng.below(
                                        static_cast<std::uint64_t>(max_len - min_len + 1)));
            std::string text;
            for (int w = 0; w < n; ++w) {
                if (w) text += ' ';
                text += label + "w" + std::to_string(rng.below(
                                          static_cast<std::uint64_t>(words_per_class)));
            }
            samples.push_back({label + "-s" + std::to_string(i), text, label, name});
        }
    }
    return pairprompt::corpus::make_dataset(name, std::move(samples));
}

// Random score matrix; when with_ties is set, roughly half the entries are
// drawn from a tiny value grid so exact ties occur often.
inline pairprompt::pooling::ScoreMatrix random_matrix(std::size_t rows, std::size_t cols,
                                                      std::size_t n_labels, std::uint64_t seed,
                                                      bool with_ties = false) {
    pairprompt::Rng rng(seed);
    pairprompt::pooling::ScoreMatrix m;
    for (std::size_t q = 0; q < rows; ++q) m.query_ids.push_back("q" + std::to_string(q));
    for (std::size_t t = 0; t < cols; ++t) {
        m.train_ids.push_back("t" + std::to_string(t));
        m.train_labels.push_back("L" + std::to_string(rng.below(n_labels)));
    }
    // Every label used must actually appear; remap the first occurrences.
    for (std::size_t l = 0; l < std::min(n_labels, cols); ++l)
        m.train_labels[l] = "L" + std::to_string(l);
    m.scores.resize(rows * cols);
    for (double& s : m.scores) {
        if (with_ties && rng.below(2) == 0) {
            s = -0.5 + 0.25 * static_cast<double>(rng.below(5));
        } else {
            s = 2.0 * rng.uniform() - 1.0;
        }
    }
    return m;
}

// Brute-force classification oracle: full sort, explicit recount, the tie
// rules re-implemented from scratch.
struct OraclePrediction {
    std::string label;
    bool tie_broken = false;
};

inline std::vector<std::string> oracle_label_order(const std::vector<std::string>& train_labels) {
    std::vector<std::string> order;
    for (const auto& l : train_labels)
        if (std::find(order.begin(), order.end(), l) == order.end()) order.push_back(l);
    return order;
}

inline OraclePrediction oracle_classify(const std::vector<double>& row,
                                        const std::vector<std::string>& train_labels,
                                        const std::string& method, int k) {
    const auto order = oracle_label_order(train_labels);
    std::map<std::string, double> value;
    if (method == "mean" || method == "max") {
        for (const auto& label : order) {
            std::vector<double> vals;
            for (std::size_t c = 0; c < row.size(); ++c)
                if (train_labels[c] == label) vals.push_back(row[c]);
            if (method == "mean") {
                double s = 0.0;
                for (const double v : vals) s += v;
                value[label] = s / static_cast<double>(vals.size());
            } else {
                value[label] = *std::max_element(vals.begin(), vals.end());
            }
        }
    } else {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t c = 0; c < row.size(); ++c) ranked.push_back({row[c], c});
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (const auto& label : order) value[label] = 0.0;
        for (int i = 0; i < k; ++i) value[train_labels[ranked[static_cast<std::size_t>(i)].second]] += 1.0;
    }

    double best = value[order[0]];
    for (const auto& label : order) best = std::max(best, value[label]);
    std::vector<std::string> winners;
    for (const auto& label : order)
        if (value[label] == best) winners.push_back(label);

    OraclePrediction out;
    out.tie_broken = winners.size() > 1;
    if (method == "knn" && winners.size() > 1) {
        // Most relevant column among the tied labels, lower index on ties.
        std::size_t best_col = row.size();
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (std::find(winners.begin(), winners.end(), train_labels[c]) == winners.end())
                continue;
            if (best_col == row.size() || row[c] > row[best_col]) best_col = c;
        }
        out.label = train_labels[best_col];
    } else {
        out.label = winners.front();
    }
    return out;
}

}  // namespace testsupport
