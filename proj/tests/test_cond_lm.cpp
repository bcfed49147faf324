#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "halknob/cond_lm.hpp"

using namespace halknob;

namespace {

double sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

uint32_t dense_argmax(const std::vector<double>& p) {
    uint32_t best = 0;
    for (uint32_t w = 1; w < p.size(); ++w)
        if (p[w] > p[best]) best = w;
    return best;
}

std::vector<std::string> word_pool(size_t n) {
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) out.push_back("w" + std::to_string(i));
    return out;
}

// Targets are exact copies of the source values, in shuffled order so the
// trigram base cannot simply memorize them.
std::vector<Example> copy_corpus(size_t n_examples, size_t words_per_example,
                                 uint32_t seed) {
    auto pool = word_pool(100);
    std::mt19937 rng(seed);
    std::vector<Example> out;
    for (size_t i = 0; i < n_examples; ++i) {
        std::shuffle(pool.begin(), pool.end(), rng);
        TokenSeq values(pool.begin(),
                        pool.begin() + static_cast<long>(words_per_example));
        Example ex;
        ex.id = std::to_string(i);
        ex.source.rows = {{"items", join(values)}};
        TokenSeq shuffled = values;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        ex.target = join(shuffled);
        out.push_back(std::move(ex));
    }
    return out;
}

// Targets never mention a source token.
std::vector<Example> disjoint_corpus(size_t n_examples, uint32_t seed) {
    auto source_pool = word_pool(40);
    std::vector<std::string> target_pool;
    for (size_t i = 0; i < 40; ++i) target_pool.push_back("t" + std::to_string(i));
    std::mt19937 rng(seed);
    std::vector<Example> out;
    for (size_t i = 0; i < n_examples; ++i) {
        std::shuffle(source_pool.begin(), source_pool.end(), rng);
        std::shuffle(target_pool.begin(), target_pool.end(), rng);
        Example ex;
        ex.id = std::to_string(i);
        ex.source.rows = {{"items", join({source_pool[0], source_pool[1],
                                          source_pool[2], source_pool[3]})}};
        ex.target = join({target_pool[0], target_pool[1], target_pool[2],
                          target_pool[3], target_pool[4], target_pool[5]});
        out.push_back(std::move(ex));
    }
    return out;
}

CopyMixtureModel model_over(const std::vector<Example>& examples, int order = 3) {
    std::vector<TokenSeq> targets;
    for (const auto& ex : examples) targets.push_back(tokenize(ex.target));
    CopyMixtureModel m;
    m.base = train_ngram(targets, order, {0.1}, 1);
    return m;
}

}  // namespace

TEST_CASE("copy_distribution") {
    std::vector<Example> corpus = {
        {"1", Table{{{"name", "ana"}, {"job", "writer"}}}, "ana is a writer",
         {}, {}, {}, {}, {}, {}},
    };
    auto m = model_over(corpus);
    SECTION("symmetry and dominance") {
        auto src = linearize(corpus[0].source, std::nullopt);
        auto p = copy_distribution(m, src);
        REQUIRE(p[m.base.id_of("ana")] == p[m.base.id_of("writer")]);
        REQUIRE(p[m.base.id_of("ana")] > 10.0 * p[m.base.id_of("is")]);
        REQUIRE(sum(p) == Catch::Approx(1.0).epsilon(1e-9));
        REQUIRE(p[kBosId] == 0.0);
    }
    SECTION("field names excluded by default, included on demand") {
        auto src = linearize(corpus[0].source, std::nullopt);
        auto p = copy_distribution(m, src);
        REQUIRE(p[m.base.id_of("name")] == p[m.base.id_of("is")]);
        CopyMixtureModel mf = m;
        mf.include_field_names = true;
        auto pf = copy_distribution(mf, src);
        REQUIRE(pf[mf.base.id_of("name")] > pf[mf.base.id_of("is")]);
    }
    SECTION("empty-value table is uniform over the support") {
        Table t{{{"club", ""}}};
        auto p = copy_distribution(m, linearize(t, std::nullopt));
        double u = 1.0 / static_cast<double>(m.base.support_size());
        for (uint32_t w = 0; w < p.size(); ++w) {
            if (w == kBosId) continue;
            REQUIRE(p[w] == Catch::Approx(u).epsilon(1e-9));
        }
    }
    SECTION("count ratio follows (c + k)/(c' + k)") {
        Table t{{{"a", "paris paris"}, {"b", "writer"}}};
        auto p = copy_distribution(m, linearize(t, std::nullopt));
        double ratio = p[m.base.id_of("paris")] / p[m.base.id_of("writer")];
        REQUIRE(ratio ==
                Catch::Approx((2.0 + m.k_copy) / (1.0 + m.k_copy)).epsilon(1e-9));
    }
    SECTION("leading control tag does not count as a source token") {
        Table t{{{"name", "ana"}}};
        auto with_tag = copy_distribution(m, linearize(t, Tag::hal_3));
        auto without = copy_distribution(m, linearize(t, std::nullopt));
        REQUIRE(with_tag == without);
    }
}

TEST_CASE("next_distribution_cond") {
    // One sentence per month so the base sees them uniformly.
    std::vector<std::string> months = {
        "january", "february", "march",     "april",   "may",      "june",
        "july",    "august",   "september", "october", "november", "december"};
    std::vector<Example> corpus;
    for (const auto& mth : months) {
        Example ex;
        ex.id = mth;
        ex.source.rows = {{"birth month", mth}};
        ex.target = "born in " + mth;
        corpus.push_back(ex);
    }
    auto m = model_over(corpus);
    m.lambda = 0.5;

    SECTION("source month gets boosted over the base") {
        Table june_table{{{"birth month", "june"}}};
        auto src = linearize(june_table, std::nullopt);
        auto p_cond = next_distribution_cond(m, src, {"born", "in"});
        auto p_base = next_distribution(m.base, {"born", "in"});
        REQUIRE(p_cond[m.base.id_of("june")] > p_base[m.base.id_of("june")]);
        REQUIRE(p_cond[m.base.id_of("march")] < p_base[m.base.id_of("march")]);
        REQUIRE(dense_argmax(p_cond) == m.base.id_of("june"));
    }
    SECTION("tiny lambda recovers the base distribution") {
        CopyMixtureModel weak = m;
        weak.lambda = 1e-9;
        Table t{{{"birth month", "june"}}};
        auto src = linearize(t, std::nullopt);
        auto p_cond = next_distribution_cond(weak, src, {"born"});
        auto p_base = next_distribution(m.base, {"born"});
        for (uint32_t w = 0; w < p_cond.size(); ++w)
            REQUIRE(p_cond[w] == Catch::Approx(p_base[w]).margin(1e-6));
    }
    SECTION("normalization under random sources and prefixes") {
        std::mt19937 rng(5);
        std::uniform_int_distribution<size_t> pick(0, months.size() - 1);
        for (int i = 0; i < 30; ++i) {
            Table t{{{"birth month", months[pick(rng)]},
                     {"other", months[pick(rng)]}}};
            TokenSeq prefix;
            size_t len = pick(rng) % 4;
            for (size_t j = 0; j < len; ++j) prefix.push_back(months[pick(rng)]);
            auto p = next_distribution_cond(m, linearize(t, std::nullopt), prefix);
            REQUIRE(sum(p) == Catch::Approx(1.0).epsilon(1e-9));
            for (uint32_t w = 0; w < p.size(); ++w) {
                if (w == kBosId) continue;
                REQUIRE(p[w] > 0.0);
            }
        }
    }
    SECTION("monotone in lambda for source-supported tokens") {
        Table t{{{"birth month", "june"}}};
        auto src = linearize(t, std::nullopt);
        CopyMixtureModel lo = m, hi = m;
        lo.lambda = 0.3;
        hi.lambda = 0.7;
        auto p_lo = next_distribution_cond(lo, src, {"born", "in"});
        auto p_hi = next_distribution_cond(hi, src, {"born", "in"});
        REQUIRE(p_hi[m.base.id_of("june")] >= p_lo[m.base.id_of("june")]);
    }
    SECTION("per-tag weight selected by tag, global otherwise") {
        CopyMixtureModel tagged = m;
        tagged.tag_lambda = {{0.9, 0.7, 0.5, 0.3, 0.1}};
        Table t{{{"birth month", "june"}}};
        auto src = linearize(t, std::nullopt);
        auto p0 = next_distribution_cond(tagged, src, {"born", "in"}, Tag::hal_0);
        auto p4 = next_distribution_cond(tagged, src, {"born", "in"}, Tag::hal_4);
        REQUIRE(p0[m.base.id_of("june")] > p4[m.base.id_of("june")]);
        auto pg = next_distribution_cond(tagged, src, {"born", "in"});
        auto pg_ref = next_distribution_cond(m, src, {"born", "in"});
        REQUIRE(pg == pg_ref);
    }
}

TEST_CASE("fit_copy_weight") {
    // EM fixtures run an order-1 base on purpose: a higher-order base
    // trained on these same targets memorizes each example's own n-gram
    // path (every shuffled sequence is unique), and copying would rightly
    // lose. Order 1 makes the base a bag of words, so the copy component
    // is the only explanation for the data.
    SECTION("verbatim copies push lambda high") {
        auto corpus = copy_corpus(80, 10, 11);
        auto m = fit_copy_weight(model_over(corpus, 1), corpus);
        REQUIRE(m.lambda > 0.9);
        REQUIRE(m.lambda < 1.0);
    }
    SECTION("disjoint targets push lambda low") {
        auto corpus = disjoint_corpus(60, 12);
        auto m = fit_copy_weight(model_over(corpus), corpus);
        REQUIRE(m.lambda < 0.1);
        REQUIRE(m.lambda > 0.0);
    }
    SECTION("EM log-likelihood never decreases") {
        auto corpus = copy_corpus(30, 6, 13);
        auto m = model_over(corpus);
        std::vector<detail::MixturePoint> points;
        for (const auto& ex : corpus)
            detail::collect_mixture_points(m, ex, points);
        auto res = detail::fit_lambda(points, 0.5);
        REQUIRE(res.log_likelihood.size() >= 2);
        for (size_t i = 1; i < res.log_likelihood.size(); ++i)
            REQUIRE(res.log_likelihood[i] >= res.log_likelihood[i - 1] - 1e-9);
    }
    SECTION("empty corpus rejected") {
        CopyMixtureModel m = model_over(copy_corpus(5, 4, 1));
        REQUIRE_THROWS_AS(fit_copy_weight(m, {}), schema_error);
    }
    SECTION("per-tag fit covers all five tags or errors") {
        auto corpus = copy_corpus(50, 6, 14);
        for (size_t i = 0; i < corpus.size(); ++i)
            corpus[i].tag = static_cast<Tag>(i % kNumTags);
        auto m = fit_copy_weight(model_over(corpus, 1), corpus, true);
        REQUIRE(m.tag_lambda.has_value());
        for (double l : *m.tag_lambda) {
            REQUIRE(l > 0.0);
            REQUIRE(l < 1.0);
        }

        auto missing = corpus;
        for (auto& ex : missing)
            if (ex.tag == Tag::hal_4) ex.tag = Tag::hal_3;
        try {
            fit_copy_weight(model_over(missing), missing, true);
            FAIL("expected schema_error");
        } catch (const schema_error& e) {
            REQUIRE(std::string(e.what()).find("hal_4") != std::string::npos);
        }

        auto untagged = corpus;
        untagged[7].tag.reset();
        try {
            fit_copy_weight(model_over(untagged), untagged, true);
            FAIL("expected schema_error");
        } catch (const schema_error& e) {
            REQUIRE(std::string(e.what()).find(untagged[7].id) !=
                    std::string::npos);
        }
    }
    SECTION("single-tag subcorpus matches the scalar fit") {
        auto corpus = copy_corpus(30, 6, 15);
        auto scalar = fit_copy_weight(model_over(corpus, 1), corpus);
        for (auto& ex : corpus) ex.tag = Tag::hal_2;
        // Per-tag fit would reject the other empty tags; fitting the one
        // subcorpus through the scalar path must agree.
        auto again = fit_copy_weight(model_over(corpus, 1), corpus);
        REQUIRE(again.lambda == scalar.lambda);
        REQUIRE(again.lambda > 0.5);
    }
}

TEST_CASE("forced_path_cond") {
    auto corpus = copy_corpus(60, 6, 21);
    // Order-1 base and a pinned weight: this case is about the forced-path
    // arithmetic, not the fit.
    auto m = model_over(corpus, 1);
    m.lambda = 0.8;

    SECTION("supported target scores above the base; disjoint below") {
        auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        const auto& ex = corpus[0];
        auto src = linearize(ex.source, std::nullopt);
        TokenSeq target = tokenize(ex.target);
        auto tr_cond = forced_path_cond(m, src, target);
        auto tr_base = forced_path(m.base, target);
        REQUIRE(tr_cond.length() == tr_base.length());
        REQUIRE(mean(tr_cond.gold_logprob) > mean(tr_base.gold_logprob));

        // In-vocabulary words that this source does not mention: the copy
        // floor is below their unigram probability, so conditioning hurts.
        std::set<std::string> source_words = word_set(tokenize(ex.source.rows[0].second));
        TokenSeq off_target;
        for (const auto& w : word_pool(100)) {
            if (source_words.count(w)) continue;
            off_target.push_back(w);
            if (off_target.size() == 4) break;
        }
        auto off_cond = forced_path_cond(m, src, off_target);
        auto off_base = forced_path(m.base, off_target);
        REQUIRE(mean(off_cond.gold_logprob) < mean(off_base.gold_logprob));
    }
    SECTION("parity with next_distribution_cond, exactly") {
        const auto& ex = corpus[1];
        auto src = linearize(ex.source, std::nullopt);
        TokenSeq target = tokenize(ex.target);
        auto tr = forced_path_cond(m, src, target);
        for (size_t t = 0; t < tr.length(); ++t) {
            TokenSeq prefix(target.begin(),
                            target.begin() + static_cast<long>(
                                                 std::min(t, target.size())));
            auto p = next_distribution_cond(m, src, prefix);
            REQUIRE(tr.gold_prob[t] == p[tr.gold_ids[t]]);
            REQUIRE(tr.argmax_ids[t] == dense_argmax(p));
        }
    }
    SECTION("empty target still scores EOS") {
        auto src = linearize(corpus[2].source, std::nullopt);
        auto tr = forced_path_cond(m, src, {});
        REQUIRE(tr.length() == 1);
        REQUIRE(tr.gold_ids[0] == kEosId);
    }
}

TEST_CASE("conditional model save and load") {
    auto corpus = copy_corpus(40, 6, 31);
    for (size_t i = 0; i < corpus.size(); ++i)
        corpus[i].tag = static_cast<Tag>(i % kNumTags);
    auto m = fit_copy_weight(model_over(corpus), corpus, true);
    m = fit_copy_weight(std::move(m), corpus, false);

    std::ostringstream buf;
    save_model_stream(m, buf);
    std::istringstream in(buf.str());
    auto m2 = load_cond_stream(in);

    SECTION("round trip preserves weights and distributions") {
        REQUIRE(m2.lambda == m.lambda);
        REQUIRE(m2.tag_lambda == m.tag_lambda);
        REQUIRE(m2.k_copy == m.k_copy);
        const auto& ex = corpus[0];
        auto src = linearize(ex.source, std::nullopt);
        for (const TokenSeq& prefix :
             {TokenSeq{}, TokenSeq{"w1"}, TokenSeq{"w3", "w5"}}) {
            REQUIRE(next_distribution_cond(m, src, prefix) ==
                    next_distribution_cond(m2, src, prefix));
        }
    }
    SECTION("bad magic distinguishes model kinds") {
        std::ostringstream ng;
        save_model_stream(m.base, ng);
        std::istringstream not_cond(ng.str());
        REQUIRE_THROWS_AS(load_cond_stream(not_cond), model_error);
        std::istringstream not_ngram(buf.str());
        REQUIRE_THROWS_AS(load_ngram_stream(not_ngram), model_error);
    }
    SECTION("corrupt lambda rejected") {
        std::string data = buf.str();
        // lambda sits after magic, version, k_copy and the field-name flag.
        size_t off = 4 + 4 + 8 + 1;
        double bad = 1.5;
        std::memcpy(data.data() + off, &bad, 8);
        std::istringstream bad_in(data);
        REQUIRE_THROWS_AS(load_cond_stream(bad_in), model_error);
    }
}
