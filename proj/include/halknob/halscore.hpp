#pragma once

// Per-example hallucination scores and their conversion to control tags.
//
// Word-overlap score: 1 - |W_y ∩ W_x| / |W_y| over word sets (punctuation
// excluded), undefined when the target has no words.
//
// LM-comparison score: fraction of content positions (punctuation and the
// EOS step carry no facts and are skipped) where the conditional model's
// argmax misses the gold token AND the unconditional model assigns the
// gold token strictly more probability.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "halknob/cond_lm.hpp"
#include "halknob/corpus.hpp"
#include "halknob/error.hpp"
#include "halknob/ngram_lm.hpp"
#include "halknob/pipeline.hpp"
#include "halknob/tag.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

// Source-side word set: value tokens of every cell, field names opt-in.
inline std::set<std::string> source_word_set(const Table& source,
                                             bool include_field_names = false) {
    std::set<std::string> out;
    for (const auto& [field, value] : source.rows) {
        for (const auto& w : word_set(tokenize(value))) out.insert(w);
        if (include_field_names)
            for (const auto& w : word_set(tokenize(field))) out.insert(w);
    }
    return out;
}

inline std::optional<double> score_word_overlap(
    const Table& source, const std::string& target,
    bool include_field_names = false) {
    std::set<std::string> wy = word_set(tokenize(target));
    if (wy.empty()) return std::nullopt;
    std::set<std::string> wx = source_word_set(source, include_field_names);
    size_t overlap = 0;
    for (const auto& w : wy)
        if (wx.count(w)) ++overlap;
    return 1.0 - static_cast<double>(overlap) / static_cast<double>(wy.size());
}

// A position counts when its gold token is a content word (punctuation
// and the EOS step carry no facts), the conditional argmax misses it, and
// the unconditional model beats the conditional on it, strictly. Equal
// probabilities never fire. The score is the fired fraction of content
// positions; a target with none scores 0.
inline double lm_comparison_from_traces(const ForcedPathTrace& base,
                                        const ForcedPathTrace& cond) {
    if (base.length() != cond.length())
        throw error("forced-path trace lengths diverged");
    if (cond.gold_tokens.size() != cond.length())
        throw error("forced-path trace lacks gold tokens");
    size_t fired = 0;
    size_t content = 0;
    for (size_t t = 0; t < cond.length(); ++t) {
        const std::string& gold = cond.gold_tokens[t];
        if (gold == kEosToken || is_punct_token(gold)) continue;
        ++content;
        if (cond.argmax_ids[t] != cond.gold_ids[t] &&
            base.gold_prob[t] > cond.gold_prob[t])
            ++fired;
    }
    if (content == 0) return 0.0;
    return static_cast<double>(fired) / static_cast<double>(content);
}

inline double score_lm_comparison(const NgramModel& lm,
                                  const CopyMixtureModel& lm_x,
                                  const TokenSeq& source,
                                  const TokenSeq& target) {
    ForcedPathTrace base = forced_path(lm, target);
    ForcedPathTrace cond = forced_path_cond(lm_x, source, target);
    return lm_comparison_from_traces(base, cond);
}

enum class BucketMode { fixed, quantile };

struct Bucketer {
    BucketMode mode = BucketMode::fixed;
    std::array<double, 4> boundaries = {0.2, 0.4, 0.6, 0.8};
    // All scores identical in quantile mode: every example is hal_0.
    bool degenerate = false;
};

inline Bucketer make_bucketer(const std::vector<double>& scores,
                              BucketMode mode) {
    Bucketer b;
    b.mode = mode;
    if (mode == BucketMode::fixed) return b;
    if (scores.empty())
        throw schema_error("quantile bucketing needs at least one score");
    if (scores.size() < 5)
        throw schema_error("quantile bucketing needs at least 5 scores, got " +
                           std::to_string(scores.size()));
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) {
        b.degenerate = true;
        b.boundaries = {sorted.front(), sorted.front(), sorted.front(),
                        sorted.front()};
        return b;
    }
    // Boundary i is the first score of the next fifth: index ceil(i*N/5).
    // On N divisible by 5 this puts exactly N/5 distinct scores per bucket.
    size_t n = sorted.size();
    for (size_t i = 1; i <= 4; ++i) {
        size_t idx = (i * n + 4) / 5;  // ceil(i*n/5)
        if (idx >= n) idx = n - 1;
        b.boundaries[i - 1] = sorted[idx];
    }
    return b;
}

// Intervals are left-closed: a score equal to a boundary belongs to the
// noisier bucket. The degenerate all-equal case collapses to hal_0.
inline Tag assign_tag(const Bucketer& b, double score) {
    if (b.degenerate) return Tag::hal_0;
    int level = 0;
    while (level < 4 && score >= b.boundaries[static_cast<size_t>(level)])
        ++level;
    return static_cast<Tag>(level);
}

enum class ScoreMethod { wo, lm, both };

// Fills hal_wo / hal_lm in place. Unscorable word-overlap targets keep the
// field unset. LM scoring needs both models.
inline void score_corpus(std::vector<Example>& examples, ScoreMethod method,
                         const NgramModel* lm, const CopyMixtureModel* lm_x,
                         bool include_field_names = false,
                         unsigned workers = 0) {
    bool want_wo = method != ScoreMethod::lm;
    bool want_lm = method != ScoreMethod::wo;
    if (want_lm && (!lm || !lm_x))
        throw usage_error("lm scoring needs both a base and a conditional model");
    struct Scored {
        std::optional<double> wo;
        std::optional<double> lm;
    };
    std::vector<const Example*> ptrs;
    ptrs.reserve(examples.size());
    for (const auto& ex : examples) ptrs.push_back(&ex);
    auto scored = parallel_map(
        ptrs,
        [&](const Example* ex) {
            Scored s;
            if (want_wo)
                s.wo = score_word_overlap(ex->source, ex->target,
                                          include_field_names);
            if (want_lm) {
                TokenSeq src = linearize(ex->source, std::nullopt);
                s.lm = score_lm_comparison(*lm, *lm_x, src,
                                           tokenize(ex->target));
            }
            return s;
        },
        workers);
    for (size_t i = 0; i < examples.size(); ++i) {
        if (scored[i].wo) examples[i].hal_wo = scored[i].wo;
        if (scored[i].lm) examples[i].hal_lm = scored[i].lm;
    }
}

// K-fold variant: each example is scored by models trained on the other
// folds, so a sentence never scores against a model that saw it. Folds are
// assigned round-robin by input index.
struct HeldoutConfig {
    int order = 3;
    double k = 0.1;
    uint32_t min_count = 1;
    double k_copy = 0.1;
    bool include_field_names = false;
    double lambda_init = 0.5;
};

inline void score_corpus_heldout(std::vector<Example>& examples,
                                 ScoreMethod method, int folds,
                                 const HeldoutConfig& cfg,
                                 unsigned workers = 0) {
    if (folds < 2) throw usage_error("heldout scoring needs at least 2 folds");
    if (static_cast<size_t>(folds) > examples.size())
        throw usage_error("more folds than examples");
    if (method == ScoreMethod::wo) {
        score_corpus(examples, method, nullptr, nullptr,
                     cfg.include_field_names, workers);
        return;
    }
    if (method == ScoreMethod::both)
        score_corpus(examples, ScoreMethod::wo, nullptr, nullptr,
                     cfg.include_field_names, workers);
    for (int fold = 0; fold < folds; ++fold) {
        std::vector<TokenSeq> train_targets;
        std::vector<Example> train_examples;
        std::vector<size_t> eval_idx;
        for (size_t i = 0; i < examples.size(); ++i) {
            if (static_cast<int>(i % static_cast<size_t>(folds)) == fold) {
                eval_idx.push_back(i);
            } else {
                train_targets.push_back(tokenize(examples[i].target));
                train_examples.push_back(examples[i]);
            }
        }
        CopyMixtureModel lm_x;
        lm_x.base = train_ngram(train_targets, cfg.order, {cfg.k},
                                cfg.min_count);
        lm_x.k_copy = cfg.k_copy;
        lm_x.include_field_names = cfg.include_field_names;
        lm_x.lambda = cfg.lambda_init;
        lm_x = fit_copy_weight(std::move(lm_x), train_examples, false);
        auto scores = parallel_map(
            eval_idx,
            [&](size_t i) {
                TokenSeq src = linearize(examples[i].source, std::nullopt);
                return score_lm_comparison(lm_x.base, lm_x, src,
                                           tokenize(examples[i].target));
            },
            workers);
        for (size_t j = 0; j < eval_idx.size(); ++j)
            examples[eval_idx[j]].hal_lm = scores[j];
    }
}

enum class ScoreBy { wo, lm };

inline std::optional<double> driving_score(const Example& ex, ScoreBy by) {
    return by == ScoreBy::wo ? ex.hal_wo : ex.hal_lm;
}

struct AnnotateReport {
    size_t n_examples = 0;
    size_t n_tagged = 0;
    std::vector<std::string> untagged_ids;
    Bucketer bucketer;
    std::array<size_t, kNumTags> bucket_sizes{};
    std::array<size_t, 10> score_histogram{};  // driving score, bins of 0.1
    ScoreBy by = ScoreBy::wo;
};

// Tags every example that carries the driving score; the rest pass through
// untagged and are listed in the report.
inline AnnotateReport annotate_with(std::vector<Example>& examples, ScoreBy by,
                                    const Bucketer& bucketer) {
    AnnotateReport rep;
    rep.by = by;
    rep.n_examples = examples.size();
    rep.bucketer = bucketer;
    for (auto& ex : examples) {
        auto s = driving_score(ex, by);
        if (!s) {
            rep.untagged_ids.push_back(ex.id);
            continue;
        }
        ex.tag = assign_tag(rep.bucketer, *s);
        ++rep.n_tagged;
        ++rep.bucket_sizes[static_cast<size_t>(*ex.tag)];
        size_t bin = std::min<size_t>(9, static_cast<size_t>(*s * 10.0));
        ++rep.score_histogram[bin];
    }
    if (rep.n_tagged == 0)
        throw schema_error("no examples carry the score to bucket on; run "
                           "scoring first");
    return rep;
}

// Bucket boundaries come from the corpus itself.
inline AnnotateReport annotate_corpus(std::vector<Example>& examples,
                                      ScoreBy by, BucketMode mode) {
    std::vector<double> scores;
    for (const auto& ex : examples)
        if (auto s = driving_score(ex, by)) scores.push_back(*s);
    if (scores.empty())
        throw schema_error("no examples carry the score to bucket on; run "
                           "scoring first");
    return annotate_with(examples, by, make_bucketer(scores, mode));
}

inline nlohmann::json annotate_report_to_json(const AnnotateReport& rep) {
    nlohmann::json j;
    j["n_examples"] = rep.n_examples;
    j["n_tagged"] = rep.n_tagged;
    j["untagged_ids"] = rep.untagged_ids;
    j["by"] = rep.by == ScoreBy::wo ? "wo" : "lm";
    j["bucket_mode"] =
        rep.bucketer.mode == BucketMode::fixed ? "fixed" : "quantile";
    j["boundaries"] = rep.bucketer.boundaries;
    j["degenerate"] = rep.bucketer.degenerate;
    nlohmann::json sizes;
    for (size_t t = 0; t < kNumTags; ++t)
        sizes[tag_name(static_cast<Tag>(t))] = rep.bucket_sizes[t];
    j["bucket_sizes"] = std::move(sizes);
    j["score_histogram"] = rep.score_histogram;
    return j;
}

}  // namespace halknob
