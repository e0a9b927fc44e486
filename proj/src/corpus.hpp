#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "util.hpp"

namespace pairprompt::corpus {

struct Sample {
    std::string id;
    std::string text;
    std::string label;
    std::string dataset_tag;
};

struct Dataset {
    std::string name;
    std::vector<Sample> samples;
    std::vector<std::string> label_set;  // first-occurrence order

    const Sample& by_id(const std::string& id) const;
    bool has_label(std::string_view label) const;
};

// One JSON object per line, required string fields "text" and "label",
// optional "id" (defaults to the zero-based line index). `name` defaults to
// the file stem and becomes every sample's dataset_tag.
Dataset load_dataset(const std::string& path, std::string name = "");

// Validates the same invariants as load_dataset; used for in-memory corpora.
Dataset make_dataset(std::string name, std::vector<Sample> samples);

struct Episode {
    std::string dataset_name;
    std::vector<std::string> label_set;
    std::vector<Sample> train;
    std::vector<Sample> query;
    int shots = 0;
    int query_size = 0;
    std::uint64_t seed = 0;
    std::set<std::string> noisy_ids;
    std::map<std::string, std::string> corrupted_labels;  // train id -> replacement
    std::string ood_dataset_name;
    std::vector<Sample> ood_train;
};

// Draws exactly `shots` train samples per label and `query_size` queries from
// the remainder, all without replacement. query_size == 0 keeps the whole
// remainder as the query set.
Episode sample_episode(const Dataset& dataset, int shots, int query_size, std::uint64_t seed);

// Replaces the labels of m distinct train samples with a uniformly chosen
// different label from the episode's label set.
Episode inject_label_noise(Episode episode, int m, std::uint64_t seed);

// Adds an ood_shots-per-label draw from another dataset to ood_train. Train
// and query are untouched; inference stays in-domain.
Episode mix_ood(Episode episode, const Dataset& ood_source, int ood_shots, std::uint64_t seed);

// Id-level serialization, sufficient to rebuild the episode from the source
// datasets without re-sampling.
std::string episode_to_json(const Episode& episode);
Episode episode_from_json(const std::string& json_text, const Dataset& dataset,
                          const Dataset* ood_source = nullptr);

inline constexpr std::array<std::string_view, 3> kPositiveMetaWords = {
    "relevant", "similar", "consistent"};
inline constexpr std::array<std::string_view, 3> kNegativeMetaWords = {
    "irrelevant", "inconsistent", "different"};

// Whitespace tokenizer over a corpus-built vocabulary: ASCII lowercase,
// punctuation stripped, special markers and the six meta words always present.
class Tokenizer {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::int32_t kMask = 2;
    static constexpr std::int32_t kSep = 3;
    static constexpr std::size_t kDefaultMaxTokens = 120;

    static Tokenizer build(std::span<const Dataset* const> datasets,
                           std::string_view extra_text = {});
    static Tokenizer from_vocab(std::vector<std::string> vocab);

    static std::vector<std::string> normalize(std::string_view text);

    std::vector<std::int32_t> encode(std::string_view text,
                                     std::size_t max_tokens = kDefaultMaxTokens) const;

    std::optional<std::int32_t> lookup(std::string_view token) const;
    const std::vector<std::string>& vocab() const { return vocab_; }
    std::size_t size() const { return vocab_.size(); }

private:
    std::int32_t intern(const std::string& token);

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::int32_t> index_;
};

inline std::vector<std::int32_t> tokenize_and_truncate(const Tokenizer& tokenizer,
                                                       std::string_view text,
                                                       std::size_t max_tokens = Tokenizer::kDefaultMaxTokens) {
    return tokenizer.encode(text, max_tokens);
}

}  // namespace pairprompt::corpus
