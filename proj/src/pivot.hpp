#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "pooling.hpp"
#include "scorer.hpp"

namespace pairprompt::pivot {

struct PivotSet {
    int p = 0;
    std::uint64_t episode_seed = 0;
    // label -> ids in descending representativeness, label first-occurrence
    // order; each list holds min(p, class size) entries.
    std::vector<std::pair<std::string, std::vector<std::string>>> per_label;

    bool contains(const std::string& id) const;
    std::string to_json() const;
    static PivotSet from_json(const std::string& json_text);
};

// r_i = mean of column i over same-label rows minus mean over other-label
// rows. The diagonal self score counts toward the same-label mean unless
// exclude_self is set (classes of size 1 always keep it).
double representativeness(const pooling::ScoreMatrix& train_relevance, std::size_t column,
                          bool exclude_self = false);

// Top-p most representative train samples per label; representativeness ties
// go to the lower column index.
PivotSet select_pivots(const pooling::ScoreMatrix& train_relevance, int p,
                       bool exclude_self = false, std::uint64_t episode_seed = 0);

// Full-inference pipeline with the score-matrix columns restricted to pivot
// ids (train order preserved). knn's default k is recomputed on the
// restricted column count.
std::vector<pooling::Prediction> pivot_infer(const scoring::RelevanceScorer& scorer,
                                             const corpus::Episode& episode, const PivotSet& pivots,
                                             const pooling::PoolingMethod& method);

// The restricted score matrix itself, for artifact export.
pooling::ScoreMatrix pivot_score_matrix(const scoring::RelevanceScorer& scorer,
                                        const corpus::Episode& episode, const PivotSet& pivots);

}  // namespace pairprompt::pivot
