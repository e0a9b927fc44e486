#include "scorer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "tiny_mlm.hpp"

namespace pairprompt::scoring {

using nlohmann::json;

MetaVerbalizer MetaVerbalizer::resolve(const corpus::Tokenizer& tokenizer) {
    MetaVerbalizer mv;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto pos = tokenizer.lookup(corpus::kPositiveMetaWords[i]);
        const auto neg = tokenizer.lookup(corpus::kNegativeMetaWords[i]);
        if (!pos || !neg)
            fail(ErrorCode::InvalidArgument, "vocabulary is missing a meta-verbalizer word");
        mv.positive[i] = *pos;
        mv.negative[i] = *neg;
    }
    return mv;
}

void VocabDistribution::validate() const {
    double total = 0.0;
    for (const double p : probs) {
        if (!(p >= 0.0)) fail(ErrorCode::Numeric, "vocab distribution has a negative entry");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        fail(ErrorCode::Numeric, "vocab distribution sums to " + format_double(total));
}

AggregateMode aggregate_mode_from_string(std::string_view name) {
    if (name == "probs") return AggregateMode::Probs;
    if (name == "logits") return AggregateMode::Logits;
    fail(ErrorCode::InvalidArgument, "unknown aggregate mode '" + std::string(name) + "'");
}

std::string_view to_string(AggregateMode mode) {
    return mode == AggregateMode::Probs ? "probs" : "logits";
}

BinomialRelevance meta_verbalize(const VocabDistribution& dist, const MetaVerbalizer& mv,
                                 AggregateMode mode) {
    for (const auto sets : {&mv.positive, &mv.negative})
        for (const std::int32_t w : *sets)
            if (w < 0 || static_cast<std::size_t>(w) >= dist.probs.size())
                fail(ErrorCode::InvalidArgument,
                     "meta-verbalizer word index outside the distribution's vocabulary");

    BinomialRelevance rel;
    if (mode == AggregateMode::Probs) {
        double s1 = 0.0, s0 = 0.0;
        for (const std::int32_t w : mv.positive) s1 += dist.probs[static_cast<std::size_t>(w)];
        for (const std::int32_t w : mv.negative) s0 += dist.probs[static_cast<std::size_t>(w)];
        const double total = s1 + s0;
        if (total <= 0.0)
            fail(ErrorCode::Numeric, "degenerate distribution: no mass on the meta-verbalizer words");
        rel.p1 = s1 / total;
        rel.p0 = s0 / total;
        return rel;
    }

    // Log-probability sums; equal set sizes make this identical to summing
    // raw mask logits.
    double a1 = 0.0, a0 = 0.0;
    for (const std::int32_t w : mv.positive) a1 += std::log(dist.probs[static_cast<std::size_t>(w)]);
    for (const std::int32_t w : mv.negative) a0 += std::log(dist.probs[static_cast<std::size_t>(w)]);
    if (!std::isfinite(a1) && !std::isfinite(a0))
        fail(ErrorCode::Numeric, "degenerate distribution: no mass on the meta-verbalizer words");
    const double s = a1 - a0;
    if (!std::isfinite(s)) {
        rel.p1 = s > 0.0 ? 1.0 : 0.0;
    } else {
        rel.p1 = 1.0 / (1.0 + std::exp(-s));
    }
    rel.p0 = 1.0 - rel.p1;
    return rel;
}

double LexicalOverlapScorer::jaccard(std::string_view text_a, std::string_view text_b) {
    const auto tokens_a = corpus::Tokenizer::normalize(text_a);
    const auto tokens_b = corpus::Tokenizer::normalize(text_b);
    const std::set<std::string> set_a(tokens_a.begin(), tokens_a.end());
    const std::set<std::string> set_b(tokens_b.begin(), tokens_b.end());
    if (set_a.empty() && set_b.empty()) return 1.0;  // two empty texts are identical
    std::size_t common = 0;
    for (const std::string& t : set_a) common += set_b.count(t);
    const std::size_t unions = set_a.size() + set_b.size() - common;
    return static_cast<double>(common) / static_cast<double>(unions);
}

BinomialRelevance LexicalOverlapScorer::relevance(const corpus::Sample& a,
                                                  const corpus::Sample& b) const {
    count_call();
    const double j = jaccard(a.text, b.text);
    return {(1.0 + j) / 2.0, (1.0 - j) / 2.0};
}

pooling::ScoreMatrix score_matrix(const RelevanceScorer& scorer, const corpus::Episode& episode) {
    if (episode.query.empty()) fail(ErrorCode::Precondition, "episode has no query samples");
    if (episode.train.empty()) fail(ErrorCode::Precondition, "episode has no training samples");

    pooling::ScoreMatrix matrix;
    for (const auto& s : episode.query) matrix.query_ids.push_back(s.id);
    for (const auto& s : episode.train) {
        matrix.train_ids.push_back(s.id);
        matrix.train_labels.push_back(s.label);
    }
    matrix.scores.assign(matrix.rows() * matrix.cols(), 0.0);
    parallel_for(matrix.rows() * matrix.cols(), [&](std::size_t idx) {
        const std::size_t q = idx / matrix.cols();
        const std::size_t t = idx % matrix.cols();
        matrix.scores[idx] = scorer.delta_score(episode.query[q], episode.train[t]);
    });
    matrix.validate();
    return matrix;
}

pooling::ScoreMatrix train_relevance_matrix(const RelevanceScorer& scorer,
                                            const corpus::Episode& episode) {
    if (episode.train.empty()) fail(ErrorCode::Precondition, "episode has no training samples");

    pooling::ScoreMatrix matrix;
    for (const auto& s : episode.train) {
        matrix.query_ids.push_back(s.id);
        matrix.train_ids.push_back(s.id);
        matrix.train_labels.push_back(s.label);
    }
    matrix.scores.assign(matrix.rows() * matrix.cols(), 0.0);
    parallel_for(matrix.rows() * matrix.cols(), [&](std::size_t idx) {
        const std::size_t j = idx / matrix.cols();
        const std::size_t i = idx % matrix.cols();
        matrix.scores[idx] = scorer.delta_score(episode.train[j], episode.train[i]);
    });
    matrix.validate();
    return matrix;
}

std::string scorer_to_checkpoint_json(const RelevanceScorer& scorer) {
    json doc;
    doc["format"] = "pairprompt-checkpoint-v1";
    doc["kind"] = scorer.kind();
    if (const auto* mlm = dynamic_cast<const TinyMLMScorer*>(&scorer)) {
        const TinyMLMConfig& config = mlm->config();
        doc["template"] = mlm->prompt_template().pattern();
        doc["max_tokens"] = mlm->prompt_template().per_side_limit();
        doc["aggregate"] = std::string(to_string(config.aggregate));
        doc["vocab"] = mlm->tokenizer().vocab();
        doc["arch"] = {
            {"vocab_size", mlm->tokenizer().size()}, {"embed_dim", config.embed_dim},
            {"blocks", config.blocks},               {"heads", config.heads},
            {"ff_dim", config.resolved_ff_dim()},    {"max_seq_len", config.max_seq_len},
        };
        json tensors = json::object();
        for (const Tensor& t : mlm->params().tensors)
            tensors[t.name] = {{"shape", t.shape}, {"decay", t.decay}, {"data", t.data}};
        doc["tensors"] = std::move(tensors);
    }
    return doc.dump();
}

std::unique_ptr<RelevanceScorer> scorer_from_checkpoint_json(const std::string& json_text) {
    json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() ||
        doc.value("format", "") != "pairprompt-checkpoint-v1")
        fail(ErrorCode::Parse, "not a pairprompt checkpoint document");

    const std::string kind = doc.value("kind", "");
    if (kind == "lexical") return std::make_unique<LexicalOverlapScorer>();
    if (kind != "tiny-mlm") fail(ErrorCode::Parse, "unknown scorer kind '" + kind + "'");

    auto tokenizer = corpus::Tokenizer::from_vocab(doc.at("vocab").get<std::vector<std::string>>());
    const json& arch = doc.at("arch");
    TinyMLMConfig config;
    config.embed_dim = arch.at("embed_dim").get<int>();
    config.blocks = arch.at("blocks").get<int>();
    config.heads = arch.at("heads").get<int>();
    config.ff_dim = arch.at("ff_dim").get<int>();
    config.max_seq_len = arch.at("max_seq_len").get<int>();
    config.aggregate = aggregate_mode_from_string(doc.at("aggregate").get<std::string>());
    if (arch.at("vocab_size").get<std::size_t>() != tokenizer.size())
        fail(ErrorCode::Parse, "checkpoint vocab_size does not match the stored vocabulary");

    auto tmpl = prompting::PromptTemplate::parse(doc.at("template").get<std::string>(), tokenizer,
                                                 doc.at("max_tokens").get<std::size_t>());

    ParamSet params;
    for (auto& [name, entry] : doc.at("tensors").items()) {
        Tensor t;
        t.name = name;
        t.shape = entry.at("shape").get<std::vector<std::size_t>>();
        t.decay = entry.at("decay").get<bool>();
        t.data = entry.at("data").get<std::vector<double>>();
        std::size_t n = 1;
        for (const std::size_t s : t.shape) n *= s;
        if (n != t.data.size())
            fail(ErrorCode::Parse, "tensor '" + name + "' shape does not match its data size");
        for (const double v : t.data)
            if (!std::isfinite(v)) fail(ErrorCode::Parse, "tensor '" + name + "' has a non-finite entry");
        params.tensors.push_back(std::move(t));
    }

    // Rebuild in canonical layout order and validate against a fresh skeleton.
    TinyMLMScorer skeleton(tokenizer, tmpl, config);
    ParamSet ordered;
    for (const Tensor& want : skeleton.params().tensors) {
        const Tensor& have = params.named(want.name);
        if (have.shape != want.shape)
            fail(ErrorCode::Parse, "tensor '" + want.name + "' has unexpected shape");
        ordered.tensors.push_back(have);
    }
    return std::make_unique<TinyMLMScorer>(std::move(tokenizer), std::move(tmpl), config,
                                           std::move(ordered));
}

}  // namespace pairprompt::scoring
