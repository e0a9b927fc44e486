#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "prompting.hpp"
#include "scorer.hpp"

namespace pairprompt::scoring {

struct TinyMLMConfig {
    int embed_dim = 64;
    int blocks = 2;
    int heads = 2;
    int ff_dim = 0;  // 0 -> 4 * embed_dim
    int max_seq_len = 256;
    std::uint64_t init_seed = 0;
    AggregateMode aggregate = AggregateMode::Probs;

    int resolved_ff_dim() const { return ff_dim > 0 ? ff_dim : 4 * embed_dim; }
};

struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool decay = true;  // decoupled weight decay applies to this tensor

    std::size_t size() const { return data.size(); }
};

struct ParamSet {
    std::vector<Tensor> tensors;

    std::size_t total_size() const;
    const Tensor& named(std::string_view name) const;
    static ParamSet zeros_like(const ParamSet& other);
};

struct TrainingConfig {
    double learning_rate = 1e-3;
    int batch_size = 16;
    int epochs = 1;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;

    // Settings used when the metric is a full pretrained encoder instead of
    // the built-in tiny model.
    static TrainingConfig finetune_preset(int epochs);
};

struct TrainResult {
    std::vector<double> epoch_mean_loss;  // mean per-pair loss, one entry per epoch
    std::uint64_t steps = 0;
};

// Trainable relevance metric: token + position embeddings, a small stack of
// bidirectional transformer encoder blocks, and a tied output projection read
// at the mask position. All math is double precision and deterministic.
class TinyMLMScorer : public RelevanceScorer {
public:
    TinyMLMScorer(corpus::Tokenizer tokenizer, prompting::PromptTemplate tmpl, TinyMLMConfig config);
    TinyMLMScorer(corpus::Tokenizer tokenizer, prompting::PromptTemplate tmpl, TinyMLMConfig config,
                  ParamSet params);

    BinomialRelevance relevance(const corpus::Sample& a, const corpus::Sample& b) const override;
    std::string kind() const override { return "tiny-mlm"; }

    // Output word distribution at the mask position.
    VocabDistribution f_vocab(const prompting::PromptedPair& pair) const;
    BinomialRelevance pair_relevance(const prompting::PromptedPair& pair) const;

    // Mean cross-entropy between the verbalized binomial and the one-hot pair
    // label over the batch.
    double pair_loss(std::span<const prompting::PromptedPair> batch) const;

    // AdamW minimization of pair_loss with per-epoch reshuffling. Gradients
    // are accumulated in pair-index order, so results are bit-identical for
    // any worker count.
    TrainResult train(std::span<const prompting::PromptedPair> pairs, const TrainingConfig& config);

    // Max relative error between the analytic gradient and central
    // differences; coordinates with |analytic - numeric| <= 1e-8 count as 0.
    // max_coords_per_tensor == 0 checks every coordinate.
    double grad_check(std::span<const prompting::PromptedPair> batch, double step = 1e-5,
                      std::size_t max_coords_per_tensor = 0, std::uint64_t coord_seed = 0) const;

    // Fraction of labeled pairs with sign(delta) matching y.
    double training_pair_accuracy(std::span<const prompting::PromptedPair> pairs) const;

    const ParamSet& params() const { return params_; }
    const TinyMLMConfig& config() const { return config_; }
    const corpus::Tokenizer& tokenizer() const { return tokenizer_; }
    const prompting::PromptTemplate& prompt_template() const { return template_; }
    const MetaVerbalizer& meta_verbalizer() const { return meta_; }

private:
    double loss_with(const ParamSet& params, std::span<const prompting::PromptedPair> batch) const;
    // Adds the batch-mean gradient into `grad` and returns the mean loss.
    double loss_and_grad(const ParamSet& params, std::span<const prompting::PromptedPair> batch,
                         ParamSet& grad) const;

    corpus::Tokenizer tokenizer_;
    prompting::PromptTemplate template_;
    TinyMLMConfig config_;
    MetaVerbalizer meta_;
    ParamSet params_;
};

}  // namespace pairprompt::scoring
