#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "halknob/eval.hpp"
#include "halknob/halscore.hpp"

using namespace halknob;

static TokenSeq toks(const std::string& text) { return tokenize(text); }

TEST_CASE("bleu4 goldens") {
    SECTION("identical corpus scores 1") {
        std::vector<TokenSeq> p = {toks("the quick brown fox jumps")};
        REQUIRE(bleu4(p, p) == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("no shared unigrams scores 0") {
        std::vector<TokenSeq> p = {toks("x y z")};
        std::vector<TokenSeq> r = {toks("a b c")};
        REQUIRE(bleu4(p, r) == 0.0);
    }

    SECTION("one-word-short prediction pays only brevity penalty") {
        // p1 = p2 = p3 = 1, no 4-grams in the prediction so the zero
        // count smooths to 1; everything rides on BP = exp(1 - 4/3).
        std::vector<TokenSeq> p = {toks("the cat sat")};
        std::vector<TokenSeq> r = {toks("the cat sat down")};
        REQUIRE(bleu4(p, r) ==
                Catch::Approx(std::exp(1.0 - 4.0 / 3.0)).margin(1e-12));
    }

    SECTION("two-sentence corpus pools counts before dividing") {
        std::vector<TokenSeq> p = {toks("a b c d"), toks("a x")};
        std::vector<TokenSeq> r = {toks("a b c d"), toks("a b")};
        // p1 = 5/6, p2 = 3/4, p3 = 2/2, p4 = 1/1, lengths tie so BP = 1.
        double expect = std::pow((5.0 / 6.0) * (3.0 / 4.0), 0.25);
        REQUIRE(bleu4(p, r) == Catch::Approx(expect).margin(1e-12));
    }

    SECTION("clipping caps repeated prediction words") {
        std::vector<TokenSeq> p = {toks("b b b b")};
        std::vector<TokenSeq> r = {toks("b c d e")};
        // Only one "b" in the reference: p1 = 1/4; bigrams "b b" never
        // match so every higher order smooths to (0+1)/(t+1).
        double expect = std::pow((1.0 / 4.0) * (1.0 / 4.0) * (1.0 / 3.0) *
                                     (1.0 / 2.0),
                                 0.25);
        REQUIRE(bleu4(p, r) == Catch::Approx(expect).margin(1e-12));
    }

    SECTION("longer prediction than reference pays no brevity penalty") {
        std::vector<TokenSeq> p = {toks("a b c d e")};
        std::vector<TokenSeq> r = {toks("a b c d")};
        // p1 = 4/5, p2 = 3/4, p3 = 2/3, p4 = 1/2, BP = 1.
        double expect = std::pow((4.0 / 5.0) * (3.0 / 4.0) * (2.0 / 3.0) *
                                     (1.0 / 2.0),
                                 0.25);
        REQUIRE(bleu4(p, r) == Catch::Approx(expect).margin(1e-12));
    }

    SECTION("empty prediction corpus scores 0") {
        std::vector<TokenSeq> p = {{}};
        std::vector<TokenSeq> r = {toks("a b")};
        REQUIRE(bleu4(p, r) == 0.0);
    }

    SECTION("count mismatch and empty input are schema errors") {
        std::vector<TokenSeq> one = {toks("a")};
        std::vector<TokenSeq> two = {toks("a"), toks("b")};
        REQUIRE_THROWS_AS(bleu4(one, two), schema_error);
        REQUIRE_THROWS_AS(bleu4({}, {}), schema_error);
    }
}

TEST_CASE("bleu4 basic properties") {
    std::mt19937_64 rng(404);
    std::vector<std::string> pool = {"a", "b", "c", "d", "e", "f"};
    auto sentence = [&](size_t len) {
        TokenSeq s;
        for (size_t i = 0; i < len; ++i)
            s.push_back(pool[rng() % pool.size()]);
        return s;
    };
    for (int it = 0; it < 200; ++it) {
        std::vector<TokenSeq> p, r;
        size_t n = 1 + rng() % 4;
        for (size_t i = 0; i < n; ++i) {
            p.push_back(sentence(1 + rng() % 8));
            r.push_back(sentence(1 + rng() % 8));
        }
        double score = bleu4(p, r);
        REQUIRE(score >= 0.0);
        REQUIRE(score <= 1.0 + 1e-12);
        REQUIRE(bleu4(p, r) == score);
        REQUIRE(bleu4(p, p) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("dropping a matched trailing token never raises clipped counts") {
    // Truncation keeps every remaining n-gram a contiguous piece of the
    // original, so per-order clipped counts are monotone. Interior
    // deletion can splice new n-grams together across the gap and is
    // deliberately not claimed here.
    std::mt19937_64 rng(515);
    std::vector<std::string> pool = {"a", "b", "c", "d"};
    auto clipped_at = [](const TokenSeq& p, const TokenSeq& r, size_t n) {
        auto pc = halknob::detail::ngram_counts(p, n);
        auto rc = halknob::detail::ngram_counts(r, n);
        size_t clipped = 0;
        for (const auto& [gram, c] : pc) {
            auto it = rc.find(gram);
            if (it != rc.end()) clipped += std::min(c, it->second);
        }
        return clipped;
    };
    for (int it = 0; it < 300; ++it) {
        TokenSeq pred, ref;
        size_t plen = 2 + rng() % 7, rlen = 1 + rng() % 7;
        for (size_t i = 0; i < plen; ++i)
            pred.push_back(pool[rng() % pool.size()]);
        for (size_t i = 0; i < rlen; ++i)
            ref.push_back(pool[rng() % pool.size()]);
        if (!word_set(ref).count(pred.back())) continue;
        TokenSeq shorter(pred.begin(), pred.end() - 1);
        for (size_t n = 1; n <= 4; ++n)
            REQUIRE(clipped_at(shorter, ref, n) <= clipped_at(pred, ref, n));
    }
}

TEST_CASE("coverage counts fully expressed cells") {
    Table t;
    t.rows = {{"name", "ana cole"}, {"job", "writer"}, {"notes", ""}};

    SECTION("subset rule per cell") {
        REQUIRE(coverage(toks("ana cole is a writer"), t) == 2);
        REQUIRE(coverage(toks("ana is a writer"), t) == 1);
        REQUIRE(coverage(toks("cole ana"), t) == 1);
        REQUIRE(coverage(toks("nothing relevant"), t) == 0);
    }

    SECTION("empty and punctuation-only values can never be covered") {
        Table u;
        u.rows = {{"a", ""}, {"b", "..."}, {"c", "x"}};
        REQUIRE(coverage(toks("x and everything else"), u) == 1);
    }

    SECTION("value words may be scattered through the prediction") {
        REQUIRE(coverage(toks("cole , the writer , ana"), t) == 2);
    }
}

TEST_CASE("entailment precision and recall") {
    Table t;
    t.rows = {{"name", "ana cole"}, {"job", "writer"}};
    TokenSeq ref = toks("ana cole is a writer from dulvia");

    SECTION("worked example") {
        // "poet" is backed by neither the table values nor the reference;
        // one of two cells is fully expressed and two of four reference
        // content words come back.
        EntailPR pr = entailment_pr(toks("ana cole is a poet"), t, ref);
        REQUIRE_FALSE(pr.empty_prediction);
        REQUIRE(pr.precision == Catch::Approx(2.0 / 3.0).margin(1e-12));
        REQUIRE(pr.recall == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("reference words count as support even when off-table") {
        EntailPR pr = entailment_pr(toks("ana cole from dulvia"), t, ref);
        REQUIRE(pr.precision == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("prediction with no content words is flagged") {
        EntailPR pr = entailment_pr(toks("is a the"), t, ref);
        REQUIRE(pr.empty_prediction);
        REQUIRE(pr.precision == 0.0);
        REQUIRE(pr.recall == 0.0);
    }

    SECTION("perfect prediction") {
        EntailPR pr = entailment_pr(ref, t, ref);
        REQUIRE(pr.precision == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(pr.recall == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("empty table puts all recall weight checks on the reference") {
        Table empty;
        EntailPR pr = entailment_pr(toks("ana cole"), empty, ref);
        // Cell term is 0 over an empty table, reference recall is 2/4.
        REQUIRE(pr.recall == Catch::Approx(0.25).margin(1e-12));
    }
}

TEST_CASE("unsupported rate") {
    SECTION("distinct content words against an explicit vocabulary") {
        std::set<std::string> support = {"ana", "cole"};
        auto u = unsupported_rate(toks("ana bob"), support);
        REQUIRE(u.has_value());
        REQUIRE(*u == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("function words and punctuation never count") {
        std::set<std::string> support = {"ana"};
        auto u = unsupported_rate(toks("the ana , is ."), support);
        REQUIRE(*u == 0.0);
    }

    SECTION("repeats collapse before the ratio") {
        std::set<std::string> support = {"ana"};
        auto u = unsupported_rate(toks("ana ana bob bob bob"), support);
        REQUIRE(*u == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("no content words means no rate") {
        std::set<std::string> support = {"ana"};
        REQUIRE_FALSE(unsupported_rate(toks("is a the ."), support)
                          .has_value());
        REQUIRE_FALSE(unsupported_rate(TokenSeq{}, support).has_value());
    }

    SECTION("table overload uses value words only") {
        Table t;
        t.rows = {{"occupation", "writer"}};
        // "occupation" is a field name, not support.
        auto u = unsupported_rate(toks("writer occupation"), t);
        REQUIRE(*u == Catch::Approx(0.5).margin(1e-12));
    }
}

TEST_CASE("unsupported rate matches word-overlap on function-word-free text") {
    std::mt19937_64 rng(77);
    std::vector<std::string> pool;
    for (int i = 0; i < 12; ++i) pool.push_back("w" + std::to_string(i));
    for (int it = 0; it < 300; ++it) {
        Table t;
        size_t cells = 1 + rng() % 3;
        for (size_t c = 0; c < cells; ++c) {
            std::string value = pool[rng() % pool.size()];
            if (rng() % 2) value += " " + pool[rng() % pool.size()];
            t.rows.push_back({"f" + std::to_string(c), value});
        }
        TokenSeq pred;
        size_t len = 1 + rng() % 6;
        for (size_t i = 0; i < len; ++i)
            pred.push_back(pool[rng() % pool.size()]);
        auto u = unsupported_rate(pred, t);
        auto wo = score_word_overlap(t, join(pred));
        REQUIRE(u.has_value());
        REQUIRE(wo.has_value());
        REQUIRE(*u == *wo);
    }
}

TEST_CASE("evaluate_corpus aggregates per-example metrics") {
    Example a;
    a.source.rows = {{"name", "ana cole"}, {"job", "writer"}};
    a.target = "ana cole is a writer from dulvia";
    Example b;
    b.source.rows = {{"name", "tom reed"}};
    b.target = "tom reed";
    std::vector<Example> corpus = {a, b};

    SECTION("perfect predictions") {
        std::vector<TokenSeq> preds = {tokenize(a.target),
                                       tokenize(b.target)};
        EvalReport rep = evaluate_corpus(preds, corpus);
        REQUIRE(rep.n == 2);
        REQUIRE(rep.bleu4 == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(rep.entail_precision == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(rep.entail_recall == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(rep.entail_f1 == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(rep.coverage_mean == Catch::Approx(1.5).margin(1e-12));
        // "dulvia" is in the reference but off-table, so even a perfect
        // prediction keeps a nonzero source-value unsupported rate.
        REQUIRE(rep.unsupported_rate ==
                Catch::Approx(0.5 * 0.25).margin(1e-12));
        REQUIRE(rep.mean_len == Catch::Approx((7.0 + 2.0) / 2.0).margin(1e-12));
    }

    SECTION("hand-checked mixed report") {
        std::vector<TokenSeq> preds = {toks("ana cole is a poet"),
                                       toks("tom reed")};
        EvalReport rep = evaluate_corpus(preds, corpus);
        REQUIRE(rep.entail_precision ==
                Catch::Approx(0.5 * (2.0 / 3.0 + 1.0)).margin(1e-12));
        REQUIRE(rep.entail_recall ==
                Catch::Approx(0.5 * (0.5 + 1.0)).margin(1e-12));
        double p = rep.entail_precision, r = rep.entail_recall;
        REQUIRE(rep.entail_f1 ==
                Catch::Approx(2.0 * p * r / (p + r)).margin(1e-12));
        REQUIRE(rep.coverage_mean == Catch::Approx(1.0).margin(1e-12));
        // Example one: {ana, cole, poet} with {ana, cole, writer} support
        // leaves 1/3 unsupported; example two is fully supported.
        REQUIRE(rep.unsupported_rate ==
                Catch::Approx(0.5 * (1.0 / 3.0)).margin(1e-12));
    }

    SECTION("explicit support vocabularies override the tables") {
        std::vector<std::set<std::string>> vocabs = {
            {"ana", "cole", "writer", "poet", "dulvia"},
            {"tom", "reed"}};
        std::vector<TokenSeq> preds = {toks("ana cole is a poet"),
                                       toks("tom reed")};
        EvalReport rep = evaluate_corpus(preds, corpus, &vocabs);
        REQUIRE(rep.unsupported_rate == 0.0);
    }

    SECTION("f1 collapses to 0 when precision does") {
        std::vector<TokenSeq> preds = {toks("is a"), toks("the of")};
        EvalReport rep = evaluate_corpus(preds, corpus);
        REQUIRE(rep.entail_precision == 0.0);
        REQUIRE(rep.entail_f1 == 0.0);
        // No prediction had content words, so the rate defaults to 0.
        REQUIRE(rep.unsupported_rate == 0.0);
    }

    SECTION("shape errors") {
        std::vector<TokenSeq> one = {toks("x")};
        REQUIRE_THROWS_AS(evaluate_corpus(one, corpus), schema_error);
        REQUIRE_THROWS_AS(evaluate_corpus({}, {}), schema_error);
        std::vector<std::set<std::string>> vocabs = {{"x"}};
        std::vector<TokenSeq> two = {toks("x"), toks("y")};
        REQUIRE_THROWS_AS(evaluate_corpus(two, corpus, &vocabs),
                          schema_error);
    }
}

TEST_CASE("eval report serialization uses fixed field names") {
    EvalReport rep;
    rep.bleu4 = 0.25;
    rep.entail_precision = 0.5;
    rep.entail_recall = 0.75;
    rep.entail_f1 = 0.6;
    rep.coverage_mean = 1.25;
    rep.unsupported_rate = 0.125;
    rep.mean_len = 6.5;
    rep.n = 4;
    nlohmann::json j = eval_report_to_json(rep);
    REQUIRE(j["bleu4"] == 0.25);
    REQUIRE(j["entail_precision"] == 0.5);
    REQUIRE(j["entail_recall"] == 0.75);
    REQUIRE(j["entail_f1"] == 0.6);
    REQUIRE(j["coverage_mean"] == 1.25);
    REQUIRE(j["unsupported_rate"] == 0.125);
    REQUIRE(j["mean_len"] == 6.5);
    REQUIRE(j["n"] == 4);
    REQUIRE(j.size() == 8);
}
