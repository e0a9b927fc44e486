#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "prompting.hpp"
#include "scorer.hpp"
#include "support.hpp"
#include "tiny_mlm.hpp"

using namespace pairprompt;
using prompting::PromptedPair;
using scoring::AggregateMode;
using scoring::ParamSet;
using scoring::TinyMLMConfig;
using scoring::TinyMLMScorer;
using scoring::TrainingConfig;

namespace {

struct MlmFixture {
    corpus::Dataset ds;
    corpus::Tokenizer tok;
    prompting::PromptTemplate tmpl;
    TinyMLMConfig config;

    explicit MlmFixture(int n_labels = 2, int per_label = 3, int embed = 16, int blocks = 1,
                        int ff = 32, int max_seq = 32, std::uint64_t seed = 5)
        : ds(testsupport::synthetic_dataset("mlm", n_labels, per_label, seed, 4, 3, 5)),
          tok([&] {
              const corpus::Dataset* sources[] = {&ds};
              return corpus::Tokenizer::build(sources, "A news of topic:");
          }()),
          tmpl(prompting::PromptTemplate::parse(prompting::kDefaultTemplatePattern, tok, 10)) {
        config.embed_dim = embed;
        config.blocks = blocks;
        config.heads = 2;
        config.ff_dim = ff;
        config.max_seq_len = max_seq;
        config.init_seed = 42;
    }

    TinyMLMScorer scorer() const { return TinyMLMScorer(tok, tmpl, config); }

    std::vector<PromptedPair> training_pairs(int shots = 2, std::uint64_t seed = 3) const {
        const auto episode = corpus::sample_episode(ds, shots, 1, seed);
        return prompting::build_training_pairs(episode, tmpl, tok);
    }
};

ParamSet zeroed(const ParamSet& params) {
    ParamSet z = ParamSet::zeros_like(params);
    // keep layer-norm gains at 1 so the forward pass stays well-defined
    for (auto& t : z.tensors)
        if (t.name.find(".gain") != std::string::npos || t.name == "final_ln.gain")
            std::fill(t.data.begin(), t.data.end(), 1.0);
    return z;
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t t = 0; t < a.tensors.size(); ++t)
        if (a.tensors[t].data != b.tensors[t].data) return false;
    return true;
}

}  // namespace

TEST_CASE("f_vocab yields a strictly positive normalized distribution") {
    const MlmFixture f;
    const TinyMLMScorer scorer = f.scorer();
    const auto pairs = f.training_pairs();

    const auto dist = scorer.f_vocab(pairs[1]);
    CHECK_NOTHROW(dist.validate());
    for (const double p : dist.probs) CHECK(p > 0.0);

    // near the maximum-entropy point at init: no word dominates
    const double top = *std::max_element(dist.probs.begin(), dist.probs.end());
    CHECK(top < 10.0 / static_cast<double>(dist.probs.size()));

    SUBCASE("bit-identical across repeated evaluation") {
        const auto again = scorer.f_vocab(pairs[1]);
        CHECK(again.probs == dist.probs);
    }

    SUBCASE("relevance is deterministic across threads") {
        const auto m1 = scoring::score_matrix(scorer, corpus::sample_episode(f.ds, 2, 2, 3));
        const auto m2 = scoring::score_matrix(scorer, corpus::sample_episode(f.ds, 2, 2, 3));
        CHECK(m1.scores == m2.scores);
    }
}

TEST_CASE("f_vocab validates sequence length, mask and token range") {
    const MlmFixture f;
    const TinyMLMScorer scorer = f.scorer();
    auto pair = f.training_pairs()[0];

    PromptedPair too_long = pair;
    too_long.tokens.assign(64, corpus::Tokenizer::kMask);
    too_long.mask_position = 0;
    CHECK_THROWS_WITH_AS(scorer.f_vocab(too_long), doctest::Contains("max_seq_len"), Error);

    PromptedPair bad_mask = pair;
    bad_mask.mask_position = 0;  // points at a non-mask token
    CHECK_THROWS_AS(scorer.f_vocab(bad_mask), Error);

    PromptedPair bad_token = pair;
    bad_token.tokens[0] = static_cast<std::int32_t>(f.tok.size()) + 5;
    CHECK_THROWS_WITH_AS(scorer.f_vocab(bad_token), doctest::Contains("vocabulary"), Error);
}

TEST_CASE("pair_loss is ln 2 at the uniform point and means per-pair losses") {
    const MlmFixture f;
    const auto pairs = f.training_pairs();
    const TinyMLMScorer init = f.scorer();

    SUBCASE("zeroed parameters give exactly ln 2 in both aggregate modes") {
        for (const auto mode : {AggregateMode::Probs, AggregateMode::Logits}) {
            TinyMLMConfig config = f.config;
            config.aggregate = mode;
            const TinyMLMScorer zero(f.tok, f.tmpl, config, zeroed(init.params()));
            CHECK(zero.pair_loss(pairs) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        }
    }

    SUBCASE("batch loss equals the mean of independently computed pair losses") {
        double total = 0.0;
        for (const auto& pair : pairs) total += init.pair_loss({&pair, 1});
        CHECK(init.pair_loss(pairs) ==
              doctest::Approx(total / static_cast<double>(pairs.size())).epsilon(1e-12));
    }

    SUBCASE("unlabeled pairs are rejected") {
        auto unlabeled = pairs;
        unlabeled[0].y.reset();
        CHECK_THROWS_AS(init.pair_loss(unlabeled), Error);
    }
}

TEST_CASE("analytic gradients match central differences on every coordinate") {
    const MlmFixture f;
    const TinyMLMScorer scorer = f.scorer();
    auto pairs = f.training_pairs();
    pairs.resize(4);

    const double err = scorer.grad_check(pairs, 1e-5);
    CHECK(err < 1e-4);

    SUBCASE("halving the step keeps the error at the noise floor") {
        const double err_half = scorer.grad_check(pairs, 5e-6);
        CHECK(err_half < std::max(err * 1.5, 1e-6));
    }

    SUBCASE("logits aggregation mode has exact gradients too") {
        TinyMLMConfig config = f.config;
        config.aggregate = AggregateMode::Logits;
        const TinyMLMScorer lg(f.tok, f.tmpl, config, scorer.params());
        CHECK(lg.grad_check(pairs, 1e-5) < 1e-4);
    }

    SUBCASE("zero gradients fall under the absolute tolerance") {
        // Zeroed weights leave most coordinates with an exactly zero gradient.
        const TinyMLMScorer zero(f.tok, f.tmpl, f.config, zeroed(scorer.params()));
        CHECK(zero.grad_check(pairs, 1e-5) < 1e-4);
    }

    SUBCASE("a seeded coordinate subset covers every tensor") {
        const double sub = scorer.grad_check(pairs, 1e-5, 5, 77);
        CHECK(sub < 1e-4);
    }
}

TEST_CASE("training minimizes pair loss deterministically") {
    const MlmFixture f(2, 4, 32, 1, 64, 32, 9);
    const auto pairs = f.training_pairs(2, 11);  // 16 pairs
    TrainingConfig config;
    config.learning_rate = 1e-3;
    config.batch_size = 8;
    config.epochs = 30;
    config.seed = 1;

    TinyMLMScorer a = f.scorer();
    const auto trace = a.train(pairs, config);
    CHECK(trace.steps == 30 * 2);  // ceil(16/8) batches per epoch
    REQUIRE(trace.epoch_mean_loss.size() == 30);
    CHECK(trace.epoch_mean_loss.back() < trace.epoch_mean_loss.front());
    CHECK(a.training_pair_accuracy(pairs) >= 0.75);

    SUBCASE("bit-identical parameters on a re-run") {
        TinyMLMScorer b = f.scorer();
        const auto trace_b = b.train(pairs, config);
        CHECK(trace_b.epoch_mean_loss == trace.epoch_mean_loss);
        CHECK(params_equal(a.params(), b.params()));
    }

    SUBCASE("worker count does not change the result") {
        setenv("PAIRPROMPT_THREADS", "1", 1);
        TinyMLMScorer b = f.scorer();
        b.train(pairs, config);
        unsetenv("PAIRPROMPT_THREADS");
        CHECK(params_equal(a.params(), b.params()));
    }

    SUBCASE("one pair, one epoch still takes a step") {
        TinyMLMScorer tiny = f.scorer();
        TrainingConfig one;
        one.epochs = 1;
        const auto t = tiny.train({pairs.data(), 1}, one);
        CHECK(t.steps == 1);
        CHECK(t.epoch_mean_loss.size() == 1);
    }

    SUBCASE("a non-finite parameter aborts with the failing step named") {
        ParamSet poisoned = f.scorer().params();
        poisoned.tensors[0].data[0] = std::numeric_limits<double>::quiet_NaN();
        TinyMLMScorer bad(f.tok, f.tmpl, f.config, std::move(poisoned));
        TrainingConfig quick;
        quick.epochs = 1;
        CHECK_THROWS_WITH_AS(bad.train(pairs, quick), doctest::Contains("step 1"), Error);
    }

    SUBCASE("empty or unlabeled training sets are rejected") {
        TinyMLMScorer fresh = f.scorer();
        CHECK_THROWS_AS(fresh.train({}, config), Error);
    }
}

TEST_CASE("finetune preset keeps the published optimizer settings") {
    const auto preset = TrainingConfig::finetune_preset(30);
    CHECK(preset.learning_rate == doctest::Approx(1e-5));
    CHECK(preset.batch_size == 16);
    CHECK(preset.epochs == 30);
}

TEST_CASE("tiny-mlm checkpoints round-trip exactly") {
    const MlmFixture f;
    TinyMLMScorer scorer = f.scorer();
    const auto pairs = f.training_pairs();
    TrainingConfig config;
    config.epochs = 2;
    scorer.train(pairs, config);

    const std::string doc = scoring::scorer_to_checkpoint_json(scorer);
    const auto restored = scoring::scorer_from_checkpoint_json(doc);
    REQUIRE(restored->kind() == "tiny-mlm");
    const auto* mlm = dynamic_cast<const TinyMLMScorer*>(restored.get());
    REQUIRE(mlm != nullptr);
    CHECK(params_equal(mlm->params(), scorer.params()));
    CHECK(mlm->tokenizer().vocab() == f.tok.vocab());

    const auto dist_a = scorer.f_vocab(pairs[0]);
    const auto dist_b = mlm->f_vocab(pairs[0]);
    CHECK(dist_a.probs == dist_b.probs);

    SUBCASE("shape tampering is caught at load") {
        std::string broken = doc;
        const auto pos = broken.find("\"tok_embedding\":{\"data\"");
        REQUIRE(pos != std::string::npos);
        // truncate one tensor's declared shape by swapping the vocab dimension
        broken.replace(broken.find("\"shape\":[", pos), 9, "\"shape\":[1,");
        CHECK_THROWS_AS(scoring::scorer_from_checkpoint_json(broken), Error);
    }
}

TEST_CASE("delta through the trained scorer orders duplicate texts first") {
    // overfit a minimal corpus and check that a query equal to a train sample
    // gets its own column as the row maximum
    MlmFixture f(2, 3, 32, 1, 64, 32, 21);
    f.ds = testsupport::synthetic_dataset("mlm", 2, 3, 21, 10, 6, 9);
    const corpus::Dataset* sources[] = {&f.ds};
    f.tok = corpus::Tokenizer::build(sources, "A news of topic:");
    f.tmpl = prompting::PromptTemplate::parse(prompting::kDefaultTemplatePattern, f.tok, 10);
    const auto episode = corpus::sample_episode(f.ds, 2, 2, 13);
    const auto pairs = prompting::build_training_pairs(episode, f.tmpl, f.tok);

    TinyMLMScorer scorer = f.scorer();
    TrainingConfig config;
    config.learning_rate = 2e-3;
    config.epochs = 120;
    scorer.train(pairs, config);

    corpus::Episode probe = episode;
    probe.query.clear();
    probe.query.push_back(episode.train[0]);
    probe.query[0].id = "dup-query";
    const auto matrix = scoring::score_matrix(scorer, probe);
    const auto row = matrix.row(0);
    for (std::size_t t = 1; t < matrix.cols(); ++t) CHECK(row[0] >= row[t]);
}
