#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "pooling.hpp"
#include "prompting.hpp"

namespace pairprompt::scoring {

// Fixed task-general word sets: {relevant, similar, consistent} vote for
// "same class", {irrelevant, inconsistent, different} against.
struct MetaVerbalizer {
    std::array<std::int32_t, 3> positive{};
    std::array<std::int32_t, 3> negative{};

    static MetaVerbalizer resolve(const corpus::Tokenizer& tokenizer);
};

struct VocabDistribution {
    std::vector<double> probs;

    void validate() const;  // non-negative, sums to 1 within 1e-9
};

struct BinomialRelevance {
    double p1 = 0.0;  // same class
    double p0 = 0.0;  // different class
};

enum class AggregateMode { Probs, Logits };

AggregateMode aggregate_mode_from_string(std::string_view name);
std::string_view to_string(AggregateMode mode);

// Probs mode: p1 and p0 proportional to the probability mass on each word
// set. Logits mode: log-probability sums through a two-way softmax (identical
// to aggregating raw mask logits, since both sets have three words).
BinomialRelevance meta_verbalize(const VocabDistribution& dist, const MetaVerbalizer& mv,
                                 AggregateMode mode = AggregateMode::Probs);

inline double delta(const BinomialRelevance& rel) { return rel.p1 - rel.p0; }

// Text-pair relevance metric. relevance() puts its first argument in the
// query ({a}) slot. Implementations must be safe to call concurrently.
class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;

    virtual BinomialRelevance relevance(const corpus::Sample& query_side,
                                        const corpus::Sample& reference_side) const = 0;
    virtual std::string kind() const = 0;

    double delta_score(const corpus::Sample& a, const corpus::Sample& b) const {
        return delta(relevance(a, b));
    }

    std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }
    void reset_call_count() { calls_.store(0, std::memory_order_relaxed); }

protected:
    void count_call() const { calls_.fetch_add(1, std::memory_order_relaxed); }

private:
    mutable std::atomic<std::uint64_t> calls_{0};
};

// Training-free reference metric: p1 = (1 + J) / 2 where J is the token
// Jaccard overlap of the two raw texts. delta(x, x) = 1 and the score is
// symmetric, which makes every downstream module testable without training.
class LexicalOverlapScorer : public RelevanceScorer {
public:
    BinomialRelevance relevance(const corpus::Sample& a, const corpus::Sample& b) const override;
    std::string kind() const override { return "lexical"; }

    static double jaccard(std::string_view text_a, std::string_view text_b);
};

// |query| x |train| matrix of delta scores; rows in query order, columns in
// train order, OOD samples excluded.
pooling::ScoreMatrix score_matrix(const RelevanceScorer& scorer, const corpus::Episode& episode);

// Square train-vs-train matrix: entry (j, i) scores train_j in the query slot
// against train_i. Input to pivot selection.
pooling::ScoreMatrix train_relevance_matrix(const RelevanceScorer& scorer,
                                            const corpus::Episode& episode);

// Self-describing checkpoint: kind, template, aggregate mode, vocabulary and
// (for the trainable scorer) architecture metadata plus named tensors.
std::string scorer_to_checkpoint_json(const RelevanceScorer& scorer);
std::unique_ptr<RelevanceScorer> scorer_from_checkpoint_json(const std::string& json_text);

}  // namespace pairprompt::scoring
