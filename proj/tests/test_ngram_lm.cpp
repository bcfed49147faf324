#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "halknob/ngram_lm.hpp"

using namespace halknob;

namespace {

std::vector<TokenSeq> toks(const std::vector<std::string>& sents) {
    std::vector<TokenSeq> out;
    for (const auto& s : sents) out.push_back(tokenize(s));
    return out;
}

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

// Reference argmax: full scan over the dense distribution, lowest id wins.
uint32_t dense_argmax(const std::vector<double>& p) {
    uint32_t best = 0;
    for (uint32_t w = 1; w < p.size(); ++w)
        if (p[w] > p[best]) best = w;
    return best;
}

std::vector<TokenSeq> random_corpus(std::mt19937& rng) {
    static const std::vector<std::string> words = {"a", "b", "c", "d", "e",
                                                   "f", "g"};
    std::uniform_int_distribution<size_t> n_sents(1, 12);
    std::uniform_int_distribution<size_t> n_words(0, 8);
    std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
    std::vector<TokenSeq> corpus(n_sents(rng));
    for (auto& sent : corpus) {
        size_t m = n_words(rng);
        for (size_t i = 0; i < m; ++i) sent.push_back(words[pick(rng)]);
    }
    return corpus;
}

}  // namespace

TEST_CASE("train_ngram basics") {
    SECTION("empty corpus rejected") {
        REQUIRE_THROWS_AS(train_ngram({}, 1, {0.1}), schema_error);
    }
    SECTION("unigram symmetry on one sentence") {
        auto m = train_ngram(toks({"a b"}), 1, {0.1});
        auto p = next_distribution(m, {});
        REQUIRE(p[m.id_of("a")] == p[m.id_of("b")]);
        REQUIRE(p[m.id_of("a")] > p[kUnkId]);
        REQUIRE(sum(p) == Catch::Approx(1.0).epsilon(1e-9));
    }
    SECTION("vocab ids are specials then sorted tokens") {
        auto m = train_ngram(toks({"b a c"}), 2, {0.1, 0.1});
        REQUIRE(m.id_to_token ==
                std::vector<std::string>{"<unk>", "<s>", "</s>", "a", "b", "c"});
    }
    SECTION("min_count maps rare words to UNK") {
        auto m = train_ngram(toks({"a a rare", "a a"}), 1, {0.1}, 2);
        REQUIRE(m.token_to_id.find("rare") == m.token_to_id.end());
        REQUIRE(m.id_of("rare") == kUnkId);
        // The rare word's count lands on UNK: events are a,a,<unk>,</s> and
        // a,a,</s>, so C = 7 and c(<unk>) = 1 with V = 3.
        auto p = next_distribution(m, {});
        REQUIRE(p[kUnkId] ==
                Catch::Approx((1.0 + 0.1 / 3.0) / 7.1).margin(1e-12));
    }
    SECTION("context preference: paris after in") {
        auto corpus = toks({"she lives in paris", "he works in paris",
                            "they met in paris", "the house is red",
                            "the day is long"});
        auto m = train_ngram(corpus, 2, {0.1, 0.1});
        auto p_in = next_distribution(m, {"in"});
        auto p_the = next_distribution(m, {"the"});
        REQUIRE(p_in[m.id_of("paris")] > p_the[m.id_of("paris")]);
    }
}

TEST_CASE("interpolated add-k arithmetic matches hand computation") {
    // Corpus "a b" / "a c", order 2, k = (0.5, 0.25).
    // Unigram events: a,b,</s> and a,c,</s>  ->  C = 6, V = 5.
    auto m = train_ngram(toks({"a b", "a c"}), 2, {0.5, 0.25});
    REQUIRE(m.vocab_size() == 6);
    double p1_a = (2.0 + 0.5 / 5.0) / 6.5;
    double p1_b = (1.0 + 0.5 / 5.0) / 6.5;
    double p1_unk = (0.0 + 0.5 / 5.0) / 6.5;
    auto ctx_a = m.context_ids({"a"});
    REQUIRE(m.prob(ctx_a, m.id_of("b")) ==
            Catch::Approx((1.0 + 0.25 * p1_b) / 2.25).margin(1e-12));
    REQUIRE(m.prob(ctx_a, kUnkId) ==
            Catch::Approx((0.0 + 0.25 * p1_unk) / 2.25).margin(1e-12));
    // Unseen context falls back through the same tree with zero counts.
    auto ctx_b = m.context_ids({"c"});
    REQUIRE(m.prob(ctx_b, kEosId) ==
            Catch::Approx((1.0 + 0.25 * ((2.0 + 0.5 / 5.0) / 6.5)) / 1.25)
                .margin(1e-12));
    auto ctx_unseen = m.context_ids({"zzz"});
    REQUIRE(m.prob(ctx_unseen, m.id_of("a")) ==
            Catch::Approx((0.0 + 0.25 * p1_a) / 0.25).margin(1e-12));
}

TEST_CASE("distribution invariants on random models") {
    std::mt19937 rng(4242);
    std::uniform_int_distribution<int> order_d(1, 3);
    std::uniform_real_distribution<double> k_d(0.01, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        auto corpus = random_corpus(rng);
        int order = order_d(rng);
        std::vector<double> k;
        for (int i = 0; i < order; ++i) k.push_back(k_d(rng));
        NgramModel m;
        try {
            m = train_ngram(corpus, order, k);
        } catch (const schema_error&) {
            continue;  // all-empty corpus draw
        }
        for (int q = 0; q < 5; ++q) {
            TokenSeq prefix;
            std::uniform_int_distribution<size_t> len_d(0, 4);
            static const std::vector<std::string> qwords = {"a", "b", "zz",
                                                            "c", "q"};
            std::uniform_int_distribution<size_t> pick(0, qwords.size() - 1);
            size_t len = len_d(rng);
            for (size_t i = 0; i < len; ++i) prefix.push_back(qwords[pick(rng)]);

            auto p = next_distribution(m, prefix);
            REQUIRE(sum(p) == Catch::Approx(1.0).epsilon(1e-9));
            REQUIRE(p[kBosId] == 0.0);
            for (uint32_t w = 0; w < p.size(); ++w) {
                if (w == kBosId) continue;
                REQUIRE(p[w] > 0.0);
                REQUIRE(std::isfinite(p[w]));
            }
            // Candidate-based argmax agrees with the dense scan, ties and all.
            auto ctx = m.context_ids(prefix);
            REQUIRE(m.argmax(ctx) == dense_argmax(p));
            // Scalar and dense probability paths are bit-identical.
            for (uint32_t w : {kUnkId, kEosId,
                               static_cast<uint32_t>(p.size() - 1)}) {
                REQUIRE(m.prob(ctx, w) == p[w]);
            }
        }
    }
}

TEST_CASE("monotone data effect of bigram counts") {
    auto base = toks({"u v", "u w", "x y"});
    auto more = toks({"u v", "u w", "x y", "u v", "u v"});
    auto m1 = train_ngram(base, 2, {0.1, 0.1});
    auto m2 = train_ngram(more, 2, {0.1, 0.1});
    auto p1v = next_distribution(m1, {"u"});
    auto p2v = next_distribution(m2, {"u"});
    REQUIRE(p2v[m2.id_of("v")] >= p1v[m1.id_of("v")]);
}

TEST_CASE("forced_path") {
    auto corpus = toks({"ana is a writer", "ana is a poet", "bo is a writer"});
    auto m = train_ngram(corpus, 3, {0.1, 0.1, 0.1});

    SECTION("trace length includes EOS") {
        auto tr = forced_path(m, tokenize("ana is a writer"));
        REQUIRE(tr.length() == 5);
        REQUIRE(tr.gold_tokens.back() == "</s>");
        REQUIRE(tr.gold_ids.back() == kEosId);
        REQUIRE(tr.gold_prob.size() == 5);
        REQUIRE(tr.gold_logprob.size() == 5);
        REQUIRE(tr.argmax_ids.size() == 5);
    }
    SECTION("empty target scores EOS only") {
        auto tr = forced_path(m, {});
        REQUIRE(tr.length() == 1);
        REQUIRE(tr.gold_ids[0] == kEosId);
    }
    SECTION("frequent sentence is mostly argmax-correct") {
        auto tr = forced_path(m, tokenize("ana is a writer"));
        size_t correct = 0;
        for (size_t t = 0; t < tr.length(); ++t)
            if (tr.argmax_ids[t] == tr.gold_ids[t]) ++correct;
        REQUIRE(correct >= 4);
    }
    SECTION("gold_logprob consistent with next_distribution, exactly") {
        TokenSeq target = tokenize("bo is a poet");
        auto tr = forced_path(m, target);
        for (size_t t = 0; t < tr.length(); ++t) {
            TokenSeq prefix(target.begin(),
                            target.begin() + static_cast<long>(
                                                 std::min(t, target.size())));
            auto p = next_distribution(m, prefix);
            REQUIRE(tr.gold_prob[t] == p[tr.gold_ids[t]]);
            REQUIRE(tr.gold_logprob[t] == std::log(p[tr.gold_ids[t]]));
            REQUIRE(tr.gold_logprob[t] <= 0.0);
            REQUIRE(std::isfinite(tr.gold_logprob[t]));
            REQUIRE(tr.argmax_ids[t] == dense_argmax(p));
        }
    }
}

TEST_CASE("model save and load") {
    std::mt19937 rng(77);
    auto corpus = random_corpus(rng);
    corpus.push_back(tokenize("a b c d e"));
    auto m = train_ngram(corpus, 3, {0.1, 0.2, 0.3}, 1);

    std::ostringstream buf;
    save_model_stream(m, buf);
    std::istringstream in(buf.str());
    auto m2 = load_ngram_stream(in);

    SECTION("distributions are bit-identical after a round trip") {
        std::uniform_int_distribution<size_t> len_d(0, 4);
        static const std::vector<std::string> qwords = {"a", "b", "c", "zz"};
        std::uniform_int_distribution<size_t> pick(0, qwords.size() - 1);
        for (int q = 0; q < 200; ++q) {
            TokenSeq prefix;
            size_t len = len_d(rng);
            for (size_t i = 0; i < len; ++i) prefix.push_back(qwords[pick(rng)]);
            REQUIRE(next_distribution(m, prefix) ==
                    next_distribution(m2, prefix));
        }
    }
    SECTION("save is deterministic") {
        std::ostringstream again;
        save_model_stream(m, again);
        REQUIRE(buf.str() == again.str());
        std::ostringstream from_loaded;
        save_model_stream(m2, from_loaded);
        REQUIRE(buf.str() == from_loaded.str());
    }
    SECTION("bad magic") {
        std::string data = buf.str();
        data[0] = 'X';
        std::istringstream bad(data);
        REQUIRE_THROWS_AS(load_ngram_stream(bad), model_error);
    }
    SECTION("unknown version") {
        std::string data = buf.str();
        data[4] = 99;
        std::istringstream bad(data);
        try {
            load_ngram_stream(bad);
            FAIL("expected model_error");
        } catch (const model_error& e) {
            REQUIRE(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SECTION("truncated file") {
        std::string data = buf.str().substr(0, buf.str().size() / 2);
        std::istringstream bad(data);
        REQUIRE_THROWS_AS(load_ngram_stream(bad), model_error);
    }
}
