#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "halknob/halscore.hpp"

using namespace halknob;

TEST_CASE("score_word_overlap") {
    SECTION("partial overlap, function words count against") {
        Table t{{{"name", "John Smith"}, {"born", "1950"}, {"job", "writer"}}};
        // W_y = {john, smith, is, a, french, writer}: three hits out of six.
        auto s = score_word_overlap(t, "john smith is a french writer");
        REQUIRE(s.has_value());
        REQUIRE(*s == Catch::Approx(0.5).margin(1e-12));
    }
    SECTION("verbatim subset of the source scores 0") {
        Table t{{{"name", "ana cole"}, {"job", "writer"}}};
        REQUIRE(*score_word_overlap(t, "ana writer") == 0.0);
        REQUIRE(*score_word_overlap(t, "Ana Cole!") == 0.0);
    }
    SECTION("disjoint target scores 1") {
        Table t{{{"name", "ana"}}};
        REQUIRE(*score_word_overlap(t, "someone else entirely") == 1.0);
    }
    SECTION("punctuation-only target is unscorable") {
        Table t{{{"name", "ana"}}};
        REQUIRE(!score_word_overlap(t, ". . !").has_value());
        REQUIRE(!score_word_overlap(t, "...").has_value());
    }
    SECTION("punctuation does not enter either side") {
        Table t{{{"name", "ana ."}}};
        REQUIRE(*score_word_overlap(t, "ana !") == 0.0);
    }
    SECTION("field names only on demand") {
        Table t{{{"occupation", "painter"}}};
        REQUIRE(*score_word_overlap(t, "occupation painter") == 0.5);
        REQUIRE(*score_word_overlap(t, "occupation painter", true) == 0.0);
    }
    SECTION("bounds and iff characterizations on random pairs") {
        std::mt19937 rng(17);
        std::vector<std::string> words = {"a", "b", "c", "d", "e", "f"};
        std::uniform_int_distribution<size_t> pick(0, words.size() - 1);
        std::uniform_int_distribution<size_t> len(1, 6);
        for (int i = 0; i < 200; ++i) {
            TokenSeq src_words, tgt_words;
            size_t ns = len(rng), nt = len(rng);
            for (size_t k = 0; k < ns; ++k) src_words.push_back(words[pick(rng)]);
            for (size_t k = 0; k < nt; ++k) tgt_words.push_back(words[pick(rng)]);
            Table t{{{"f", join(src_words)}}};
            std::string target = join(tgt_words);
            auto s = score_word_overlap(t, target);
            REQUIRE(s.has_value());
            REQUIRE(*s >= 0.0);
            REQUIRE(*s <= 1.0);
            auto wy = word_set(tokenize(target));
            auto wx = source_word_set(t);
            bool subset = std::includes(wx.begin(), wx.end(), wy.begin(),
                                        wy.end());
            REQUIRE((*s == 0.0) == subset);
            bool disjoint = true;
            for (const auto& w : wy)
                if (wx.count(w)) disjoint = false;
            REQUIRE((*s == 1.0) == disjoint);
        }
    }
}

TEST_CASE("lm_comparison_from_traces") {
    auto mk = [](TokenSeq toks, std::vector<uint32_t> gold,
                 std::vector<uint32_t> am, std::vector<double> prob) {
        ForcedPathTrace tr;
        tr.gold_tokens = std::move(toks);
        tr.gold_ids = std::move(gold);
        tr.argmax_ids = std::move(am);
        tr.gold_prob = std::move(prob);
        return tr;
    };
    SECTION("argmax correct everywhere scores 0 whatever the probabilities") {
        auto cond = mk({"a", "b", "</s>"}, {5, 6, 2}, {5, 6, 2},
                       {0.1, 0.1, 0.1});
        auto base = mk({"a", "b", "</s>"}, {5, 6, 2}, {9, 9, 9},
                       {0.9, 0.9, 0.9});
        REQUIRE(lm_comparison_from_traces(base, cond) == 0.0);
    }
    SECTION("one firing position out of three content words") {
        auto cond = mk({"a", "b", "c", "</s>"}, {5, 6, 7, 2}, {5, 9, 7, 2},
                       {0.2, 0.1, 0.2, 0.2});
        auto base = mk({"a", "b", "c", "</s>"}, {5, 6, 7, 2}, {5, 5, 5, 5},
                       {0.1, 0.3, 0.1, 0.1});
        REQUIRE(lm_comparison_from_traces(base, cond) ==
                Catch::Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("punctuation and EOS positions neither fire nor count") {
        // The "." and EOS steps would fire under the content rule; only
        // the single word position enters the score, and it is clean.
        auto cond = mk({"a", ".", "</s>"}, {5, 8, 2}, {5, 9, 9},
                       {0.2, 0.1, 0.1});
        auto base = mk({"a", ".", "</s>"}, {5, 8, 2}, {5, 8, 2},
                       {0.1, 0.3, 0.3});
        REQUIRE(lm_comparison_from_traces(base, cond) == 0.0);
    }
    SECTION("no content positions scores 0") {
        auto cond = mk({".", "</s>"}, {8, 2}, {9, 9}, {0.1, 0.1});
        auto base = mk({".", "</s>"}, {8, 2}, {8, 2}, {0.3, 0.3});
        REQUIRE(lm_comparison_from_traces(base, cond) == 0.0);
    }
    SECTION("equal probabilities never fire, strict inequality") {
        auto cond = mk({"a", "b"}, {5, 6}, {9, 9}, {0.25, 0.25});
        auto base = mk({"a", "b"}, {5, 6}, {5, 6}, {0.25, 0.25});
        REQUIRE(lm_comparison_from_traces(base, cond) == 0.0);
    }
    SECTION("wrong argmax alone is not enough") {
        auto cond = mk({"a"}, {5}, {9}, {0.5});
        auto base = mk({"a"}, {5}, {9}, {0.4});
        REQUIRE(lm_comparison_from_traces(base, cond) == 0.0);
    }
    SECTION("length mismatch is an invariant breach") {
        auto cond = mk({"a", "b"}, {5, 6}, {5, 6}, {0.1, 0.1});
        auto base = mk({"a"}, {5}, {5}, {0.1});
        REQUIRE_THROWS_AS(lm_comparison_from_traces(base, cond), error);
    }
    SECTION("missing gold tokens is an invariant breach") {
        auto cond = mk({}, {5, 6}, {5, 6}, {0.1, 0.1});
        auto base = mk({}, {5, 6}, {5, 6}, {0.1, 0.1});
        REQUIRE_THROWS_AS(lm_comparison_from_traces(base, cond), error);
    }
}

namespace {

// Toy world where "writer" is source-supported but "french" never is. The
// base model knows "french" from training; the conditional model's copy
// component pulls mass away from it.
struct FrenchWriterWorld {
    CopyMixtureModel lm_x;
    Table source{{{"name", "john"}, {"job", "writer"}}};
    std::string target = "john is a french writer";

    FrenchWriterWorld() {
        std::vector<TokenSeq> targets = {
            tokenize("john is a writer"),   tokenize("mary is a writer"),
            tokenize("bo is a writer"),     tokenize("ana is a french writer"),
            tokenize("lee is a writer"),    tokenize("kim is a writer"),
        };
        lm_x.base = train_ngram(targets, 3, {0.1}, 1);
        lm_x.lambda = 0.7;
    }
};

}  // namespace

TEST_CASE("score_lm_comparison end to end") {
    FrenchWriterWorld w;
    auto src = linearize(w.source, std::nullopt);
    TokenSeq target = tokenize(w.target);

    SECTION("unsupported french fires, score lands in (0,1)") {
        double s = score_lm_comparison(w.lm_x.base, w.lm_x, src, target);
        REQUIRE(s > 0.0);
        REQUIRE(s < 1.0);
        // The firing position is exactly "french": verify via the traces.
        auto base = forced_path(w.lm_x.base, target);
        auto cond = forced_path_cond(w.lm_x, src, target);
        size_t french_pos = 3;
        REQUIRE(target[french_pos] == "french");
        REQUIRE(cond.argmax_ids[french_pos] != cond.gold_ids[french_pos]);
        REQUIRE(base.gold_prob[french_pos] > cond.gold_prob[french_pos]);
        REQUIRE(s == Catch::Approx(1.0 / 5.0).margin(1e-12));
    }
    SECTION("fully supported target scores 0") {
        double s = score_lm_comparison(w.lm_x.base, w.lm_x, src,
                                       tokenize("john is a writer"));
        REQUIRE(s == 0.0);
    }
    SECTION("punctuation-only target scores 0") {
        double s = score_lm_comparison(w.lm_x.base, w.lm_x, src,
                                       tokenize(". ."));
        REQUIRE(s == 0.0);
    }
    SECTION("score equals the brute-force position scan") {
        for (const char* t :
             {"john is a french writer", "mary is a writer", "french french",
              "", "writer", "john . french ."}) {
            TokenSeq toks = tokenize(t);
            double s = score_lm_comparison(w.lm_x.base, w.lm_x, src, toks);
            auto base = forced_path(w.lm_x.base, toks);
            auto cond = forced_path_cond(w.lm_x, src, toks);
            size_t fired = 0;
            size_t content = 0;
            for (size_t pos = 0; pos < cond.length(); ++pos) {
                if (pos == toks.size() || is_punct_token(toks[pos])) continue;
                ++content;
                if (cond.argmax_ids[pos] != cond.gold_ids[pos] &&
                    base.gold_prob[pos] > cond.gold_prob[pos])
                    ++fired;
            }
            double want = content == 0 ? 0.0
                                       : static_cast<double>(fired) /
                                             static_cast<double>(content);
            REQUIRE(s == want);
        }
    }
}

TEST_CASE("make_bucketer and assign_tag") {
    SECTION("fixed mode ignores scores and uses 0.2 steps") {
        auto b = make_bucketer({}, BucketMode::fixed);
        REQUIRE(b.boundaries == std::array<double, 4>{0.2, 0.4, 0.6, 0.8});
        REQUIRE(!b.degenerate);
        REQUIRE(assign_tag(b, 0.0) == Tag::hal_0);
        REQUIRE(assign_tag(b, 0.19) == Tag::hal_0);
        REQUIRE(assign_tag(b, 0.2) == Tag::hal_1);
        REQUIRE(assign_tag(b, 0.4) == Tag::hal_2);
        REQUIRE(assign_tag(b, 0.6) == Tag::hal_3);
        REQUIRE(assign_tag(b, 0.8) == Tag::hal_4);
        REQUIRE(assign_tag(b, 1.0) == Tag::hal_4);
    }
    SECTION("quantile on ten equally spaced scores gives 2 per bucket") {
        std::vector<double> scores;
        for (int i = 0; i < 10; ++i) scores.push_back(0.1 * i);
        auto b = make_bucketer(scores, BucketMode::quantile);
        std::array<size_t, kNumTags> sizes{};
        for (double s : scores)
            ++sizes[static_cast<size_t>(assign_tag(b, s))];
        REQUIRE(sizes == std::array<size_t, kNumTags>{2, 2, 2, 2, 2});
    }
    SECTION("quantile needs five scorable values") {
        REQUIRE_THROWS_AS(make_bucketer({}, BucketMode::quantile),
                          schema_error);
        REQUIRE_THROWS_AS(make_bucketer({0.1, 0.2, 0.3, 0.4},
                                        BucketMode::quantile),
                          schema_error);
    }
    SECTION("all-identical scores collapse to hal_0") {
        std::vector<double> same(12, 0.37);
        auto b = make_bucketer(same, BucketMode::quantile);
        REQUIRE(b.degenerate);
        REQUIRE(assign_tag(b, 0.37) == Tag::hal_0);
        REQUIRE(assign_tag(b, 0.9) == Tag::hal_0);
    }
    SECTION("monotone in score") {
        std::mt19937 rng(23);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> scores;
        for (int i = 0; i < 40; ++i) scores.push_back(u(rng));
        for (auto mode : {BucketMode::fixed, BucketMode::quantile}) {
            auto b = make_bucketer(scores, mode);
            for (int i = 0; i < 100; ++i) {
                double a = u(rng), c = u(rng);
                if (a > c) std::swap(a, c);
                REQUIRE(assign_tag(b, a) <= assign_tag(b, c));
            }
        }
    }
    SECTION("quantile sizes within one of N/5 on distinct scores") {
        std::mt19937 rng(29);
        for (size_t n : {5, 6, 7, 9, 11, 20, 23, 60}) {
            std::vector<double> scores;
            for (size_t i = 0; i < n; ++i)
                scores.push_back(static_cast<double>(i) /
                                 static_cast<double>(n));
            std::shuffle(scores.begin(), scores.end(), rng);
            auto b = make_bucketer(scores, BucketMode::quantile);
            std::array<double, kNumTags> sizes{};
            for (double s : scores)
                ++sizes[static_cast<size_t>(assign_tag(b, s))];
            double ideal = static_cast<double>(n) / 5.0;
            for (double sz : sizes) {
                REQUIRE(sz >= std::floor(ideal) - 0.0);
                REQUIRE(sz <= std::ceil(ideal) + 0.0);
            }
        }
    }
}

TEST_CASE("score_corpus and annotate_corpus") {
    // Clean copies plus one noisy line and one unscorable line.
    std::vector<Example> corpus;
    for (int i = 0; i < 6; ++i) {
        Example ex;
        ex.id = "clean" + std::to_string(i);
        ex.source.rows = {{"name", "ana cole"}, {"job", "writer"}};
        ex.target = "ana cole writer";
        corpus.push_back(ex);
    }
    {
        Example noisy;
        noisy.id = "noisy";
        noisy.source.rows = {{"name", "ana cole"}};
        noisy.target = "someone unrelated here";
        corpus.push_back(noisy);
        Example unscorable;
        unscorable.id = "punct";
        unscorable.source.rows = {{"name", "ana cole"}};
        unscorable.target = "...";
        corpus.push_back(unscorable);
    }

    SECTION("wo scoring fills fields and skips the unscorable") {
        score_corpus(corpus, ScoreMethod::wo, nullptr, nullptr);
        REQUIRE(corpus[0].hal_wo == 0.0);
        REQUIRE(corpus[6].hal_wo == 1.0);
        REQUIRE(!corpus[7].hal_wo.has_value());
    }
    SECTION("annotate tags scorable examples, reports the rest") {
        score_corpus(corpus, ScoreMethod::wo, nullptr, nullptr);
        auto rep = annotate_corpus(corpus, ScoreBy::wo, BucketMode::fixed);
        REQUIRE(rep.n_examples == 8);
        REQUIRE(rep.n_tagged == 7);
        REQUIRE(rep.untagged_ids == std::vector<std::string>{"punct"});
        for (int i = 0; i < 6; ++i) REQUIRE(corpus[i].tag == Tag::hal_0);
        REQUIRE(corpus[6].tag == Tag::hal_4);
        REQUIRE(!corpus[7].tag.has_value());
        REQUIRE(rep.bucket_sizes[0] == 6);
        REQUIRE(rep.bucket_sizes[4] == 1);
        auto j = annotate_report_to_json(rep);
        REQUIRE(j["n_tagged"] == 7);
        REQUIRE(j["bucket_sizes"]["hal_0"] == 6);
    }
    SECTION("annotate without scores is an error") {
        REQUIRE_THROWS_AS(annotate_corpus(corpus, ScoreBy::wo, BucketMode::fixed),
                          schema_error);
    }
    SECTION("lm scoring requires models") {
        REQUIRE_THROWS_AS(
            score_corpus(corpus, ScoreMethod::lm, nullptr, nullptr),
            usage_error);
    }
    SECTION("worker count does not change results") {
        auto a = corpus;
        auto b = corpus;
        FrenchWriterWorld w;
        score_corpus(a, ScoreMethod::both, &w.lm_x.base, &w.lm_x, false, 1);
        score_corpus(b, ScoreMethod::both, &w.lm_x.base, &w.lm_x, false, 4);
        REQUIRE(a == b);
        for (const auto& ex : a) {
            REQUIRE(ex.hal_lm.has_value());
            REQUIRE(*ex.hal_lm >= 0.0);
            REQUIRE(*ex.hal_lm <= 1.0);
        }
    }
}

TEST_CASE("heldout scoring") {
    std::vector<Example> corpus;
    for (int i = 0; i < 12; ++i) {
        Example ex;
        ex.id = std::to_string(i);
        ex.source.rows = {{"name", "p" + std::to_string(i % 4)}};
        ex.target = "p" + std::to_string(i % 4) + " is here";
        corpus.push_back(ex);
    }
    SECTION("fills hal_lm for every example") {
        score_corpus_heldout(corpus, ScoreMethod::both, 3, {});
        for (const auto& ex : corpus) {
            REQUIRE(ex.hal_lm.has_value());
            REQUIRE(*ex.hal_lm >= 0.0);
            REQUIRE(*ex.hal_lm <= 1.0);
            REQUIRE(ex.hal_wo.has_value());
        }
    }
    SECTION("bad fold counts rejected") {
        REQUIRE_THROWS_AS(score_corpus_heldout(corpus, ScoreMethod::lm, 1, {}),
                          usage_error);
        REQUIRE_THROWS_AS(score_corpus_heldout(corpus, ScoreMethod::lm, 13, {}),
                          usage_error);
    }
    SECTION("deterministic across worker counts") {
        auto a = corpus;
        auto b = corpus;
        score_corpus_heldout(a, ScoreMethod::lm, 4, {}, 1);
        score_corpus_heldout(b, ScoreMethod::lm, 4, {}, 3);
        REQUIRE(a == b);
    }
}
