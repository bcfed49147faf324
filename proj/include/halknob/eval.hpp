#pragma once

// Automatic metrics for generated text against tables and references:
// corpus BLEU-4, a simplified table-entailment precision/recall (the full
// PARENT metric is out of scope and this is never called that), cell
// coverage, unsupported-content-word rate and length statistics.

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "halknob/corpus.hpp"
#include "halknob/error.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

// Fixed function-word list; "content words" are non-punctuation tokens
// outside this set.
inline const std::set<std::string>& function_words() {
    static const std::set<std::string> kWords = {
        "a",  "an",  "the", "is",   "are", "was", "were", "be",   "been",
        "in", "on",  "at",  "of",   "for", "to",  "and",  "or",   "with",
        "by", "from", "as", "his",  "her", "he",  "she"};
    return kWords;
}

inline std::set<std::string> content_word_set(const TokenSeq& seq) {
    std::set<std::string> out;
    for (const auto& w : word_set(seq))
        if (!function_words().count(w)) out.insert(w);
    return out;
}

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, size_t>;

inline NgramCounts ngram_counts(const TokenSeq& seq, size_t n) {
    NgramCounts out;
    if (seq.size() < n) return out;
    for (size_t i = 0; i + n <= seq.size(); ++i)
        ++out[std::vector<std::string>(seq.begin() + static_cast<long>(i),
                                       seq.begin() + static_cast<long>(i + n))];
    return out;
}

}  // namespace detail

// Corpus-level BLEU-4: geometric mean of clipped n-gram precisions against
// a single reference per prediction, with brevity penalty. A zero clipped
// count at n >= 2 is smoothed to (c+1)/(t+1); a zero unigram precision
// makes the whole score 0.
inline double bleu4(const std::vector<TokenSeq>& predictions,
                    const std::vector<TokenSeq>& references) {
    if (predictions.size() != references.size())
        throw schema_error("bleu4: prediction/reference count mismatch");
    if (predictions.empty()) throw schema_error("bleu4: empty input");

    double log_sum = 0.0;
    uint64_t pred_len = 0, ref_len = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        pred_len += predictions[i].size();
        ref_len += references[i].size();
    }
    for (size_t n = 1; n <= 4; ++n) {
        uint64_t clipped = 0, total = 0;
        for (size_t i = 0; i < predictions.size(); ++i) {
            auto pc = detail::ngram_counts(predictions[i], n);
            auto rc = detail::ngram_counts(references[i], n);
            for (const auto& [gram, c] : pc) {
                total += c;
                auto it = rc.find(gram);
                if (it != rc.end()) clipped += std::min(c, it->second);
            }
        }
        double precision;
        if (n == 1) {
            if (clipped == 0) return 0.0;
            precision = static_cast<double>(clipped) /
                        static_cast<double>(total);
        } else if (clipped == 0) {
            precision = (static_cast<double>(clipped) + 1.0) /
                        (static_cast<double>(total) + 1.0);
        } else {
            precision = static_cast<double>(clipped) /
                        static_cast<double>(total);
        }
        log_sum += 0.25 * std::log(precision);
    }
    double bp = 1.0;
    if (pred_len <= ref_len) {
        if (pred_len == 0) return 0.0;
        bp = std::exp(1.0 - static_cast<double>(ref_len) /
                                static_cast<double>(pred_len));
    }
    return bp * std::exp(log_sum);
}

// Cells counted as expressed: value has at least one word and all of its
// words appear in the prediction. Empty-value cells sit in the denominator
// of coverage_mean but can never be covered.
inline size_t coverage(const TokenSeq& prediction, const Table& source) {
    std::set<std::string> pred_words = word_set(prediction);
    size_t covered = 0;
    for (const auto& [field, value] : source.rows) {
        std::set<std::string> cell = word_set(tokenize(value));
        if (cell.empty()) continue;
        bool all = true;
        for (const auto& w : cell)
            if (!pred_words.count(w)) {
                all = false;
                break;
            }
        if (all) ++covered;
    }
    return covered;
}

struct EntailPR {
    double precision = 0.0;
    double recall = 0.0;
    bool empty_prediction = false;  // no content words: precision forced to 0
};

// Precision: distinct prediction content words backed by source values or
// the reference. Recall: half weight on fully-expressed cells, half on
// distinct reference content words recovered.
inline EntailPR entailment_pr(const TokenSeq& prediction, const Table& source,
                              const TokenSeq& reference) {
    EntailPR out;
    std::set<std::string> pred_content = content_word_set(prediction);
    std::set<std::string> pred_words = word_set(prediction);
    std::set<std::string> ref_words = word_set(reference);
    std::set<std::string> source_values;
    for (const auto& [field, value] : source.rows)
        for (const auto& w : word_set(tokenize(value))) source_values.insert(w);

    if (pred_content.empty()) {
        out.empty_prediction = true;
        out.precision = 0.0;
    } else {
        size_t supported = 0;
        for (const auto& w : pred_content)
            if (source_values.count(w) || ref_words.count(w)) ++supported;
        out.precision = static_cast<double>(supported) /
                        static_cast<double>(pred_content.size());
    }

    double cell_recall = 0.0;
    if (!source.rows.empty()) {
        cell_recall = static_cast<double>(coverage(prediction, source)) /
                      static_cast<double>(source.rows.size());
    }
    std::set<std::string> ref_content = content_word_set(reference);
    double ref_recall = 0.0;
    if (!ref_content.empty()) {
        size_t hit = 0;
        for (const auto& w : ref_content)
            if (pred_words.count(w)) ++hit;
        ref_recall = static_cast<double>(hit) /
                     static_cast<double>(ref_content.size());
    }
    out.recall = 0.5 * cell_recall + 0.5 * ref_recall;
    return out;
}

// Fraction of distinct prediction content words missing from the support
// vocabulary; undefined when the prediction has no content words. With the
// source's value words as support this coincides with the word-overlap
// score on function-word-free predictions.
inline std::optional<double> unsupported_rate(
    const TokenSeq& prediction, const std::set<std::string>& support) {
    std::set<std::string> content = content_word_set(prediction);
    if (content.empty()) return std::nullopt;
    size_t supported = 0;
    for (const auto& w : content)
        if (support.count(w)) ++supported;
    // Written as one minus the supported fraction so the value is
    // bit-identical to the word-overlap score whenever the two agree
    // on the word sets.
    return 1.0 - static_cast<double>(supported) /
                     static_cast<double>(content.size());
}

inline std::optional<double> unsupported_rate(const TokenSeq& prediction,
                                              const Table& source) {
    std::set<std::string> support;
    for (const auto& [field, value] : source.rows)
        for (const auto& w : word_set(tokenize(value))) support.insert(w);
    return unsupported_rate(prediction, support);
}

struct EvalReport {
    double bleu4 = 0.0;
    double entail_precision = 0.0;
    double entail_recall = 0.0;
    double entail_f1 = 0.0;
    double coverage_mean = 0.0;
    double unsupported_rate = 0.0;
    double mean_len = 0.0;
    size_t n = 0;
};

// References and tables come from the corpus examples; predictions line up
// by index. An optional per-example support vocabulary replaces the source
// value words in the unsupported rate (ground-truth mode for synthetic
// corpora).
inline EvalReport evaluate_corpus(
    const std::vector<TokenSeq>& predictions,
    const std::vector<Example>& examples,
    const std::vector<std::set<std::string>>* support_vocabs = nullptr) {
    if (predictions.size() != examples.size())
        throw schema_error("evaluate: prediction/example count mismatch");
    if (predictions.empty()) throw schema_error("evaluate: empty input");
    if (support_vocabs && support_vocabs->size() != predictions.size())
        throw schema_error("evaluate: support vocabulary count mismatch");

    EvalReport rep;
    rep.n = predictions.size();
    std::vector<TokenSeq> references;
    references.reserve(examples.size());
    for (const auto& ex : examples) references.push_back(tokenize(ex.target));
    rep.bleu4 = bleu4(predictions, references);

    double p_sum = 0.0, r_sum = 0.0, cov_sum = 0.0, len_sum = 0.0;
    double unsup_sum = 0.0;
    size_t unsup_n = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        EntailPR pr = entailment_pr(predictions[i], examples[i].source,
                                    references[i]);
        p_sum += pr.precision;
        r_sum += pr.recall;
        cov_sum += static_cast<double>(
            coverage(predictions[i], examples[i].source));
        len_sum += static_cast<double>(predictions[i].size());
        std::optional<double> u =
            support_vocabs
                ? unsupported_rate(predictions[i], (*support_vocabs)[i])
                : unsupported_rate(predictions[i], examples[i].source);
        if (u) {
            unsup_sum += *u;
            ++unsup_n;
        }
    }
    double n = static_cast<double>(rep.n);
    rep.entail_precision = p_sum / n;
    rep.entail_recall = r_sum / n;
    if (rep.entail_precision > 0.0 && rep.entail_recall > 0.0) {
        rep.entail_f1 = 2.0 * rep.entail_precision * rep.entail_recall /
                        (rep.entail_precision + rep.entail_recall);
    }
    rep.coverage_mean = cov_sum / n;
    rep.unsupported_rate = unsup_n ? unsup_sum / static_cast<double>(unsup_n)
                                   : 0.0;
    rep.mean_len = len_sum / n;
    return rep;
}

inline nlohmann::json eval_report_to_json(const EvalReport& rep) {
    nlohmann::json j;
    j["bleu4"] = rep.bleu4;
    j["entail_precision"] = rep.entail_precision;
    j["entail_recall"] = rep.entail_recall;
    j["entail_f1"] = rep.entail_f1;
    j["coverage_mean"] = rep.coverage_mean;
    j["unsupported_rate"] = rep.unsupported_rate;
    j["mean_len"] = rep.mean_len;
    j["n"] = rep.n;
    return j;
}

}  // namespace halknob
