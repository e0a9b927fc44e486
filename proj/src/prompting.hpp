#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"

namespace pairprompt::prompting {

// Template pattern syntax: "{a}" and "{b}" mark the two text slots, "[MASK]"
// the single mask token, "[SEP]" the separator; everything else is literal
// text tokenized with the active vocabulary.
inline constexpr std::string_view kDefaultTemplatePattern =
    "{a} [SEP] A news of [MASK] topic: {b}";

struct PromptedPair {
    std::vector<std::int32_t> tokens;
    std::size_t mask_position = 0;
    std::optional<int> y;  // same-class label for training pairs
    std::string left_id;
    std::string right_id;
};

class PromptTemplate {
public:
    static PromptTemplate parse(std::string_view pattern, const corpus::Tokenizer& tokenizer,
                                std::size_t per_side_limit = corpus::Tokenizer::kDefaultMaxTokens);

    const std::string& pattern() const { return pattern_; }
    std::size_t per_side_limit() const { return per_side_limit_; }
    // Rendered length for given side lengths (after per-side truncation).
    std::size_t rendered_length(std::size_t a_len, std::size_t b_len) const;
    std::size_t literal_length() const { return fixed_tokens_; }

private:
    enum class Kind { TextA, TextB, Token };
    struct Segment {
        Kind kind;
        std::int32_t token = 0;  // for Kind::Token (literal, [SEP] or [MASK])
    };

    std::string pattern_;
    std::vector<Segment> segments_;
    std::size_t per_side_limit_ = corpus::Tokenizer::kDefaultMaxTokens;
    std::size_t fixed_tokens_ = 0;

    friend PromptedPair render_pair(const PromptTemplate&, std::span<const std::int32_t>,
                                    std::span<const std::int32_t>);
};

// 1 iff both samples share dataset_tag and label. Labels are namespaced by
// dataset, so OOD pairs with an in-domain label name stay negative.
int pair_label(const corpus::Sample& a, const corpus::Sample& b);

PromptedPair render_pair(const PromptTemplate& tmpl, std::span<const std::int32_t> a_tokens,
                         std::span<const std::int32_t> b_tokens);

// Full ordered cartesian square over train + ood_train (self-pairs included),
// row-major, y set from pair_label.
std::vector<PromptedPair> build_training_pairs(const corpus::Episode& episode,
                                               const PromptTemplate& tmpl,
                                               const corpus::Tokenizer& tokenizer);

// query x train (in-domain only), query-major, query text in the {a} slot,
// y unset.
std::vector<PromptedPair> build_query_pairs(const corpus::Episode& episode,
                                            const PromptTemplate& tmpl,
                                            const corpus::Tokenizer& tokenizer);

// Pattern text with the placeholders removed; feed to Tokenizer::build so the
// template literals are always in vocabulary.
std::string template_literal_text(std::string_view pattern);

}  // namespace pairprompt::prompting
