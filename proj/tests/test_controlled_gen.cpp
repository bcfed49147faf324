#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "halknob/controlled_gen.hpp"
#include "halknob/synthgen.hpp"

using namespace halknob;

namespace {

Example make_example(const std::string& id,
                     std::vector<std::pair<std::string, std::string>> rows,
                     const std::string& target, std::optional<Tag> tag) {
    Example ex;
    ex.id = id;
    ex.source.rows = std::move(rows);
    ex.target = target;
    ex.tag = tag;
    return ex;
}

CopyMixtureModel model_over(const std::vector<Example>& examples, int order,
                            double k, double k_copy, double lambda) {
    std::vector<TokenSeq> targets;
    for (const auto& ex : examples) targets.push_back(tokenize(ex.target));
    CopyMixtureModel m;
    m.base = train_ngram(targets, order, {k});
    m.k_copy = k_copy;
    m.lambda = lambda;
    return m;
}

}  // namespace

TEST_CASE("train_controlled fits one weight per tag") {
    // hal_0 targets copy their sources verbatim; hal_4 targets are fluent
    // but unrelated to their sources. Targets are 24-word subsets of large
    // shared pools so the base model cannot memorize the transitions, which
    // would mask the copy signal.
    auto draw_words = [](SplitMixRng& rng, const std::string& prefix,
                         size_t pool, size_t count) {
        std::vector<size_t> ids(pool);
        for (size_t i = 0; i < pool; ++i) ids[i] = i;
        for (size_t i = 0; i < count; ++i)
            std::swap(ids[i], ids[i + rng.below(pool - i)]);
        std::string joined;
        for (size_t i = 0; i < count; ++i) {
            if (!joined.empty()) joined += " ";
            joined += prefix + std::to_string(ids[i]);
        }
        return joined;
    };
    SplitMixRng rng(7);
    std::vector<Example> corpus;
    for (size_t i = 0; i < 15; ++i) {
        std::string copied = draw_words(rng, "cw", 240, 24);
        corpus.push_back(make_example("copy" + std::to_string(i),
                                      {{"name", copied}}, copied,
                                      Tag::hal_0));
        corpus.push_back(make_example(
            "drift" + std::to_string(i), {{"name", copied}},
            draw_words(rng, "dw", 240, 24), Tag::hal_4));
    }

    SECTION("copy-heavy and unrelated subcorpora pull the weights apart") {
        CopyMixtureModel base = model_over(corpus, 1, 0.1, 0.01, 0.5);
        ControlledTrainReport rep;
        CopyMixtureModel m = train_controlled(base, corpus, &rep);
        REQUIRE(m.tag_lambda.has_value());
        CHECK((*m.tag_lambda)[0] > 0.9);
        CHECK((*m.tag_lambda)[4] < 0.1);
        CHECK(rep.n_examples[0] == 15);
        CHECK(rep.n_examples[4] == 15);
        CHECK_FALSE(rep.inherited[0]);
        CHECK_FALSE(rep.inherited[4]);
        // tags with no examples inherit the global weight
        for (size_t t : {1u, 2u, 3u}) {
            CHECK(rep.inherited[t]);
            CHECK((*m.tag_lambda)[t] == rep.global_lambda);
        }
        CHECK(m.lambda == rep.global_lambda);
    }

    SECTION("a single-tag corpus reproduces the global fit exactly") {
        std::vector<Example> mono;
        for (auto ex : corpus) {
            ex.tag = Tag::hal_2;
            mono.push_back(ex);
        }
        CopyMixtureModel base = model_over(mono, 1, 0.1, 0.01, 0.5);
        CopyMixtureModel m = train_controlled(base, mono);
        REQUIRE(m.tag_lambda.has_value());
        CHECK((*m.tag_lambda)[2] == m.lambda);
    }

    SECTION("an untagged example is rejected by id") {
        auto broken = corpus;
        broken[3].tag = std::nullopt;
        CopyMixtureModel base = model_over(corpus, 1, 0.1, 0.01, 0.5);
        try {
            train_controlled(base, broken);
            FAIL("expected schema_error");
        } catch (const schema_error& e) {
            CHECK(std::string(e.what()).find(broken[3].id) !=
                  std::string::npos);
        }
    }

    SECTION("an empty corpus is rejected") {
        CopyMixtureModel base = model_over(corpus, 1, 0.1, 0.01, 0.5);
        CHECK_THROWS_AS(train_controlled(base, {}), schema_error);
    }

    SECTION("per-tag EM keeps the likelihood non-decreasing") {
        CopyMixtureModel base = model_over(corpus, 1, 0.1, 0.01, 0.5);
        std::vector<detail::MixturePoint> points;
        for (const auto& ex : corpus)
            if (ex.tag == Tag::hal_0)
                detail::collect_mixture_points(base, ex, points);
        detail::EmResult res = detail::fit_lambda(points, 0.5);
        for (size_t i = 1; i < res.log_likelihood.size(); ++i)
            REQUIRE(res.log_likelihood[i] >= res.log_likelihood[i - 1]);
    }
}

TEST_CASE("filter_clean keeps the smallest scores in input order") {
    std::vector<Example> corpus;
    std::vector<double> wo = {0.9, 0.1, 0.8, 0.2, 0.7,
                              0.3, 0.6, 0.4, 0.5, 0.0};
    for (size_t i = 0; i < wo.size(); ++i) {
        Example ex = make_example("e" + std::to_string(i), {{"name", "ana"}},
                                  "ana", std::nullopt);
        ex.hal_wo = wo[i];
        ex.hal_lm = 1.0 - wo[i];  // reversed ordering for the lm route
        corpus.push_back(ex);
    }

    SECTION("fractional keep selects by score, emits by position") {
        auto kept = filter_clean(corpus, 0.2, ScoreBy::wo);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].id == "e1");  // 0.1 sits earlier than 0.0's position
        CHECK(kept[1].id == "e9");
    }

    SECTION("the lm route uses the other score") {
        auto kept = filter_clean(corpus, 0.2, ScoreBy::lm);
        REQUIRE(kept.size() == 2);
        CHECK(kept[0].id == "e0");
        CHECK(kept[1].id == "e2");
    }

    SECTION("keep fraction one is the identity") {
        auto kept = filter_clean(corpus, 1.0, ScoreBy::wo);
        REQUIRE(kept.size() == corpus.size());
        for (size_t i = 0; i < kept.size(); ++i)
            CHECK(kept[i].id == corpus[i].id);
    }

    SECTION("ties resolve by input order") {
        for (auto& ex : corpus) ex.hal_wo = 0.4;
        auto kept = filter_clean(corpus, 0.3, ScoreBy::wo);
        REQUIRE(kept.size() == 3);
        CHECK(kept[0].id == "e0");
        CHECK(kept[1].id == "e1");
        CHECK(kept[2].id == "e2");
    }

    SECTION("an unscored example is rejected by id") {
        corpus[4].hal_wo = std::nullopt;
        try {
            filter_clean(corpus, 0.5, ScoreBy::wo);
            FAIL("expected schema_error");
        } catch (const schema_error& e) {
            CHECK(std::string(e.what()).find("e4") != std::string::npos);
        }
    }

    SECTION("the keep fraction must lie in (0, 1]") {
        CHECK_THROWS_AS(filter_clean(corpus, 0.0, ScoreBy::wo), usage_error);
        CHECK_THROWS_AS(filter_clean(corpus, 1.1, ScoreBy::wo), usage_error);
        CHECK_THROWS_AS(filter_clean(corpus, -0.2, ScoreBy::wo), usage_error);
    }
}

TEST_CASE("greedy decoding is deterministic and copy-driven") {
    std::vector<Example> corpus = {
        make_example("t0", {{"name", "ana"}, {"occupation", "writer"}},
                     "ana writer .", std::nullopt),
        make_example("t1", {{"name", "bo"}, {"occupation", "poet"}},
                     "bo poet .", std::nullopt),
        make_example("t2", {{"name", "cy"}, {"occupation", "singer"}},
                     "cy singer .", std::nullopt),
    };
    CopyMixtureModel m = model_over(corpus, 3, 0.1, 0.01, 0.6);

    SECTION("the table's values win over corpus-frequent words") {
        GenerationConfig cfg;
        TokenSeq out = generate(m, corpus[1].source, cfg);
        REQUIRE(out == TokenSeq{"bo", "poet", "."});
        REQUIRE(generate(m, corpus[1].source, cfg) == out);
    }

    SECTION("a tag needs per-tag weights") {
        GenerationConfig cfg;
        cfg.tag = Tag::hal_0;
        CHECK_THROWS_AS(generate(m, corpus[0].source, cfg), model_error);
    }

    SECTION("config bounds are enforced") {
        GenerationConfig cfg;
        cfg.beam_width = 0;
        CHECK_THROWS_AS(generate(m, corpus[0].source, cfg), usage_error);
        cfg = {};
        cfg.max_len = 0;
        CHECK_THROWS_AS(generate(m, corpus[0].source, cfg), usage_error);
        cfg = {};
        cfg.temperature = 0.0;
        CHECK_THROWS_AS(generate(m, corpus[0].source, cfg), usage_error);
    }

    SECTION("max_len caps the emission count") {
        GenerationConfig cfg;
        cfg.max_len = 1;
        TokenSeq out = generate(m, corpus[0].source, cfg);
        CHECK(out.size() == 1);
    }

    SECTION("strategy names parse") {
        CHECK(parse_strategy("greedy") == GenStrategy::greedy);
        CHECK(parse_strategy("beam") == GenStrategy::beam);
        CHECK(parse_strategy("sample") == GenStrategy::sample);
        CHECK_THROWS_AS(parse_strategy("viterbi"), usage_error);
    }
}

TEST_CASE("beam width one reproduces greedy everywhere") {
    SynthConfig sc;
    sc.n_examples = 300;
    sc.seed = 11;
    sc.noise_rate = 0.4;
    sc.paraphrase_rate = 0.2;
    sc.inference_rate = 0.2;
    std::vector<Example> corpus = generate_corpus(sc);
    CopyMixtureModel m = model_over(corpus, 3, 0.1, 0.01, 0.5);
    m.tag_lambda = {{0.9, 0.7, 0.5, 0.3, 0.1}};

    for (size_t i = 0; i < 20; ++i) {
        GenerationConfig greedy_cfg;
        greedy_cfg.tag = static_cast<Tag>(i % kNumTags);
        GenerationConfig beam_cfg = greedy_cfg;
        beam_cfg.strategy = GenStrategy::beam;
        beam_cfg.beam_width = 1;
        TokenSeq g = generate(m, corpus[i].source, greedy_cfg);
        TokenSeq b = generate(m, corpus[i].source, beam_cfg);
        REQUIRE(g == b);
    }
}

TEST_CASE("beam escapes a greedy garden path") {
    // Hand-set counts: "a" edges out "b" from the start symbol, but "a"
    // splits its continuations while "b y" is near-deterministic.
    std::vector<Example> corpus = {
        make_example("g0", {}, "a x", std::nullopt),
        make_example("g1", {}, "a x", std::nullopt),
        make_example("g2", {}, "a x", std::nullopt),
        make_example("g3", {}, "a z", std::nullopt),
        make_example("g4", {}, "a z", std::nullopt),
        make_example("g5", {}, "a z", std::nullopt),
        make_example("g6", {}, "b y", std::nullopt),
        make_example("g7", {}, "b y", std::nullopt),
        make_example("g8", {}, "b y", std::nullopt),
        make_example("g9", {}, "b y", std::nullopt),
        make_example("g10", {}, "b y", std::nullopt),
    };
    CopyMixtureModel m = model_over(corpus, 2, 0.05, 0.01, 1e-6);
    Table empty_table;

    GenerationConfig greedy_cfg;
    greedy_cfg.max_len = 3;
    GenerationConfig beam_cfg = greedy_cfg;
    beam_cfg.strategy = GenStrategy::beam;
    beam_cfg.beam_width = 3;

    TokenSeq g = generate(m, empty_table, greedy_cfg);
    TokenSeq b = generate(m, empty_table, beam_cfg);
    REQUIRE(g == TokenSeq{"a", "x"});
    REQUIRE(b == TokenSeq{"b", "y"});

    // Exhaustive oracle over every sequence up to max_len, scored and
    // selected exactly as the decoder selects.
    TokenSeq src = linearize(empty_table, std::nullopt);
    std::vector<std::string> vocab;
    for (uint32_t w = 3; w < m.base.vocab_size(); ++w)
        vocab.push_back(m.base.id_to_token[w]);
    auto score_seq = [&](const TokenSeq& seq, bool capped) {
        double lp = 0.0;
        TokenSeq prefix;
        for (const auto& tok : seq) {
            auto p = next_distribution_cond(m, src, prefix);
            lp += std::log(p[m.base.id_of(tok)]);
            prefix.push_back(tok);
        }
        size_t steps = seq.size();
        if (!capped) {
            auto p = next_distribution_cond(m, src, prefix);
            lp += std::log(p[kEosId]);
            ++steps;
        }
        return std::pair<double, size_t>{lp, steps == 0 ? 1 : steps};
    };
    TokenSeq best_seq;
    double best_norm = -1e300, best_raw = -1e300;
    std::vector<TokenSeq> frontier = {{}};
    for (size_t len = 0; len <= beam_cfg.max_len; ++len) {
        for (const auto& seq : frontier) {
            bool capped = seq.size() == beam_cfg.max_len;
            auto [lp, steps] = score_seq(seq, capped);
            double norm = lp / static_cast<double>(steps);
            if (norm > best_norm ||
                (norm == best_norm && lp > best_raw)) {
                best_norm = norm;
                best_raw = lp;
                best_seq = seq;
            }
        }
        if (len == beam_cfg.max_len) break;
        std::vector<TokenSeq> next;
        for (const auto& seq : frontier)
            for (const auto& tok : vocab) {
                TokenSeq ext = seq;
                ext.push_back(tok);
                next.push_back(std::move(ext));
            }
        frontier = std::move(next);
    }
    REQUIRE(b == best_seq);

    // The returned hypothesis never scores below the greedy path.
    auto [lp_b, steps_b] = score_seq(b, b.size() == beam_cfg.max_len);
    auto [lp_g, steps_g] = score_seq(g, g.size() == greedy_cfg.max_len);
    (void)steps_b;
    (void)steps_g;
    REQUIRE(lp_b >= lp_g);
}

TEST_CASE("decodes never emit reserved tokens and sampling is seeded") {
    SynthConfig sc;
    sc.n_examples = 200;
    sc.seed = 5;
    sc.noise_rate = 0.5;
    sc.inference_rate = 0.1;
    std::vector<Example> corpus = generate_corpus(sc);
    CopyMixtureModel m = model_over(corpus, 3, 0.1, 0.01, 0.45);

    std::set<std::string> forbidden = {kUnkToken, kBosToken, kEosToken,
                                       kRowMarker, kColMarker};
    for (Tag t : kAllTags) forbidden.insert(tag_marker(t));

    for (size_t i = 0; i < 30; ++i) {
        GenerationConfig cfg;
        cfg.strategy = i % 3 == 0   ? GenStrategy::greedy
                       : i % 3 == 1 ? GenStrategy::beam
                                    : GenStrategy::sample;
        cfg.beam_width = 4;
        cfg.seed = 1000 + i;
        cfg.temperature = 0.8;
        TokenSeq out = generate(m, corpus[i].source, cfg);
        CHECK(out.size() <= cfg.max_len);
        for (const auto& tok : out) CHECK(forbidden.count(tok) == 0);
    }

    GenerationConfig cfg;
    cfg.strategy = GenStrategy::sample;
    cfg.seed = 99;
    TokenSeq first = generate(m, corpus[0].source, cfg);
    TokenSeq second = generate(m, corpus[0].source, cfg);
    REQUIRE(first == second);
}
