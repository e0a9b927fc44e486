#include "prompting.hpp"

#include <algorithm>

namespace pairprompt::prompting {

namespace {

struct Piece {
    enum class Kind { TextA, TextB, Mask, Sep, Literal } kind;
    std::string text;  // literal runs only
};

std::vector<Piece> split_pattern(std::string_view pattern) {
    static constexpr std::pair<std::string_view, Piece::Kind> markers[] = {
        {"{a}", Piece::Kind::TextA},
        {"{b}", Piece::Kind::TextB},
        {"[MASK]", Piece::Kind::Mask},
        {"[SEP]", Piece::Kind::Sep},
    };
    std::vector<Piece> pieces;
    std::string literal;
    std::size_t i = 0;
    while (i < pattern.size()) {
        bool matched = false;
        for (const auto& [marker, kind] : markers) {
            if (pattern.substr(i, marker.size()) == marker) {
                if (!literal.empty()) pieces.push_back({Piece::Kind::Literal, std::move(literal)}), literal.clear();
                pieces.push_back({kind, {}});
                i += marker.size();
                matched = true;
                break;
            }
        }
        if (!matched) literal.push_back(pattern[i++]);
    }
    if (!literal.empty()) pieces.push_back({Piece::Kind::Literal, std::move(literal)});
    return pieces;
}

}  // namespace

std::string template_literal_text(std::string_view pattern) {
    std::string out;
    for (const Piece& piece : split_pattern(pattern)) {
        if (piece.kind == Piece::Kind::Literal) {
            out += piece.text;
            out += ' ';
        }
    }
    return out;
}

PromptTemplate PromptTemplate::parse(std::string_view pattern, const corpus::Tokenizer& tokenizer,
                                     std::size_t per_side_limit) {
    if (per_side_limit < 1) fail(ErrorCode::InvalidArgument, "per-side limit must be >= 1");
    PromptTemplate tmpl;
    tmpl.pattern_ = std::string(pattern);
    tmpl.per_side_limit_ = per_side_limit;

    int n_a = 0, n_b = 0, n_mask = 0;
    for (const Piece& piece : split_pattern(pattern)) {
        switch (piece.kind) {
            case Piece::Kind::TextA:
                tmpl.segments_.push_back({Kind::TextA});
                ++n_a;
                break;
            case Piece::Kind::TextB:
                tmpl.segments_.push_back({Kind::TextB});
                ++n_b;
                break;
            case Piece::Kind::Mask:
                tmpl.segments_.push_back({Kind::Token, corpus::Tokenizer::kMask});
                ++n_mask;
                ++tmpl.fixed_tokens_;
                break;
            case Piece::Kind::Sep:
                tmpl.segments_.push_back({Kind::Token, corpus::Tokenizer::kSep});
                ++tmpl.fixed_tokens_;
                break;
            case Piece::Kind::Literal:
                for (const std::string& word : corpus::Tokenizer::normalize(piece.text)) {
                    const auto id = tokenizer.lookup(word);
                    tmpl.segments_.push_back({Kind::Token, id ? *id : corpus::Tokenizer::kUnk});
                    ++tmpl.fixed_tokens_;
                }
                break;
        }
    }
    if (n_a != 1 || n_b != 1 || n_mask != 1)
        fail(ErrorCode::InvalidArgument,
             "template must contain exactly one {a}, {b} and [MASK]; pattern: \"" +
                 tmpl.pattern_ + "\"");
    return tmpl;
}

std::size_t PromptTemplate::rendered_length(std::size_t a_len, std::size_t b_len) const {
    return fixed_tokens_ + std::min(a_len, per_side_limit_) + std::min(b_len, per_side_limit_);
}

int pair_label(const corpus::Sample& a, const corpus::Sample& b) {
    return (a.dataset_tag == b.dataset_tag && a.label == b.label) ? 1 : 0;
}

PromptedPair render_pair(const PromptTemplate& tmpl, std::span<const std::int32_t> a_tokens,
                         std::span<const std::int32_t> b_tokens) {
    const std::size_t limit = tmpl.per_side_limit_;
    const std::size_t a_len = std::min(a_tokens.size(), limit);
    const std::size_t b_len = std::min(b_tokens.size(), limit);

    PromptedPair pair;
    pair.tokens.reserve(tmpl.fixed_tokens_ + a_len + b_len);
    for (const auto& seg : tmpl.segments_) {
        switch (seg.kind) {
            case PromptTemplate::Kind::TextA:
                pair.tokens.insert(pair.tokens.end(), a_tokens.begin(), a_tokens.begin() + a_len);
                break;
            case PromptTemplate::Kind::TextB:
                pair.tokens.insert(pair.tokens.end(), b_tokens.begin(), b_tokens.begin() + b_len);
                break;
            case PromptTemplate::Kind::Token:
                if (seg.token == corpus::Tokenizer::kMask) pair.mask_position = pair.tokens.size();
                pair.tokens.push_back(seg.token);
                break;
        }
    }
    return pair;
}

std::vector<PromptedPair> build_training_pairs(const corpus::Episode& episode,
                                               const PromptTemplate& tmpl,
                                               const corpus::Tokenizer& tokenizer) {
    if (episode.train.empty()) fail(ErrorCode::Precondition, "episode has no training samples");

    std::vector<const corpus::Sample*> all;
    for (const auto& s : episode.train) all.push_back(&s);
    for (const auto& s : episode.ood_train) all.push_back(&s);

    std::vector<std::vector<std::int32_t>> tokens(all.size());
    for (std::size_t i = 0; i < all.size(); ++i)
        tokens[i] = tokenizer.encode(all[i]->text, tmpl.per_side_limit());

    std::vector<PromptedPair> pairs;
    pairs.reserve(all.size() * all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = 0; j < all.size(); ++j) {
            PromptedPair pair = render_pair(tmpl, tokens[i], tokens[j]);
            pair.y = pair_label(*all[i], *all[j]);
            pair.left_id = all[i]->id;
            pair.right_id = all[j]->id;
            pairs.push_back(std::move(pair));
        }
    }
    return pairs;
}

std::vector<PromptedPair> build_query_pairs(const corpus::Episode& episode,
                                            const PromptTemplate& tmpl,
                                            const corpus::Tokenizer& tokenizer) {
    if (episode.train.empty()) fail(ErrorCode::Precondition, "episode has no training samples");
    if (episode.query.empty()) fail(ErrorCode::Precondition, "episode has no query samples");

    std::vector<std::vector<std::int32_t>> train_tokens(episode.train.size());
    for (std::size_t i = 0; i < episode.train.size(); ++i)
        train_tokens[i] = tokenizer.encode(episode.train[i].text, tmpl.per_side_limit());

    std::vector<PromptedPair> pairs;
    pairs.reserve(episode.query.size() * episode.train.size());
    for (const corpus::Sample& q : episode.query) {
        const auto q_tokens = tokenizer.encode(q.text, tmpl.per_side_limit());
        for (std::size_t i = 0; i < episode.train.size(); ++i) {
            PromptedPair pair = render_pair(tmpl, q_tokens, train_tokens[i]);
            pair.left_id = q.id;
            pair.right_id = episode.train[i].id;
            pairs.push_back(std::move(pair));
        }
    }
    return pairs;
}

}  // namespace pairprompt::prompting
