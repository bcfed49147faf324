#pragma once

// Tag-conditioned generation. The control tag selects a per-tag copy weight
// fitted by EM on that tag's subcorpus, so decoding under hal_0 leans on
// the source and decoding under hal_4 leans on the unconditional model.
// Also the clean-data filtering baseline: keep the lowest-scored fraction
// of a corpus and retrain on it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "halknob/cond_lm.hpp"
#include "halknob/corpus.hpp"
#include "halknob/error.hpp"
#include "halknob/halscore.hpp"
#include "halknob/ngram_lm.hpp"
#include "halknob/rng.hpp"
#include "halknob/tag.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

enum class GenStrategy { greedy, beam, sample };

inline GenStrategy parse_strategy(const std::string& s) {
    if (s == "greedy") return GenStrategy::greedy;
    if (s == "beam") return GenStrategy::beam;
    if (s == "sample") return GenStrategy::sample;
    throw usage_error("unknown decoding strategy \"" + s +
                      "\" (greedy, beam, sample)");
}

struct GenerationConfig {
    std::optional<Tag> tag;  // absent: decode with the global weight
    GenStrategy strategy = GenStrategy::greedy;
    size_t beam_width = 1;
    size_t max_len = 40;
    uint64_t seed = 0;
    double temperature = 1.0;  // sampling only
};

struct ControlledTrainReport {
    double global_lambda = 0.0;
    std::array<double, kNumTags> lambda{};
    std::array<size_t, kNumTags> n_examples{};
    // true where a tag had no examples and fell back to the global weight
    std::array<bool, kNumTags> inherited{};
};

// Per-tag EM over the tag subcorpora. A tag with no examples inherits the
// global weight rather than failing: a skewed annotation is a property of
// the data, not a usage mistake. Every fit starts from the incoming
// model.lambda, so a single-tag corpus reproduces the global fit exactly.
inline CopyMixtureModel train_controlled(CopyMixtureModel model,
                                         const std::vector<Example>& examples,
                                         ControlledTrainReport* report =
                                             nullptr) {
    if (examples.empty())
        throw schema_error("cannot train the controlled model on an empty corpus");
    std::vector<detail::MixturePoint> all;
    std::array<std::vector<detail::MixturePoint>, kNumTags> by_tag;
    std::array<size_t, kNumTags> n_by_tag{};
    for (const auto& ex : examples) {
        if (!ex.tag)
            throw schema_error("controlled training needs a tag on every "
                               "example; \"" + ex.id + "\" has none");
        size_t t = static_cast<size_t>(*ex.tag);
        size_t before = all.size();
        detail::collect_mixture_points(model, ex, all);
        by_tag[t].insert(by_tag[t].end(), all.begin() + before, all.end());
        ++n_by_tag[t];
    }
    double init = model.lambda;
    double global = detail::fit_lambda(all, init).lambda;
    std::array<double, kNumTags> lambdas{};
    std::array<bool, kNumTags> inherited{};
    for (size_t t = 0; t < kNumTags; ++t) {
        if (by_tag[t].empty()) {
            lambdas[t] = global;
            inherited[t] = true;
        } else {
            lambdas[t] = detail::fit_lambda(by_tag[t], init).lambda;
        }
    }
    model.lambda = global;
    model.tag_lambda = lambdas;
    if (report) {
        report->global_lambda = global;
        report->lambda = lambdas;
        report->n_examples = n_by_tag;
        report->inherited = inherited;
    }
    return model;
}

// The ⌊N·keep_fraction⌋ examples with the smallest driving score, in input
// order; ties also resolve by input order.
inline std::vector<Example> filter_clean(const std::vector<Example>& examples,
                                         double keep_fraction, ScoreBy by) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw usage_error("keep fraction must lie in (0, 1]");
    std::vector<std::pair<double, size_t>> keyed;
    keyed.reserve(examples.size());
    for (size_t i = 0; i < examples.size(); ++i) {
        auto score = driving_score(examples[i], by);
        if (!score)
            throw schema_error("filter needs scores on every example; \"" +
                               examples[i].id + "\" has none");
        keyed.push_back({*score, i});
    }
    auto n_keep = static_cast<size_t>(
        std::floor(static_cast<double>(examples.size()) * keep_fraction));
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) {
                         return a.first < b.first;
                     });
    std::vector<size_t> kept;
    for (size_t i = 0; i < n_keep; ++i) kept.push_back(keyed[i].second);
    std::sort(kept.begin(), kept.end());
    std::vector<Example> out;
    out.reserve(kept.size());
    for (size_t i : kept) out.push_back(examples[i]);
    return out;
}

namespace gen_detail {

// Mixture distribution over the whole vocabulary for one decode step,
// sharing the copy counts across steps. Same expression per entry as
// next_distribution_cond, so decoding and scoring agree bit for bit.
inline std::vector<double> step_distribution(const CopyMixtureModel& m,
                                             const CopyCounts& cc,
                                             double lambda,
                                             const TokenSeq& prefix) {
    std::vector<double> p = next_distribution(m.base, prefix);
    for (uint32_t w = 0; w < p.size(); ++w) {
        if (w == kBosId) continue;
        auto it = cc.counts.find(w);
        double c = it == cc.counts.end() ? 0.0
                                         : static_cast<double>(it->second);
        p[w] = lambda * ((c + m.k_copy) / cc.denom) + (1.0 - lambda) * p[w];
    }
    return p;
}

// BOS can never be emitted; UNK is suppressed so decodes stay inside the
// real vocabulary.
inline bool emittable(uint32_t w) { return w != kBosId && w != kUnkId; }

inline uint32_t pick_argmax(const std::vector<double>& p) {
    uint32_t best_w = kEosId;
    double best = -1.0;
    for (uint32_t w = 0; w < p.size(); ++w) {
        if (!emittable(w)) continue;
        if (p[w] > best) {
            best = p[w];
            best_w = w;
        }
    }
    return best_w;
}

struct Hypothesis {
    std::vector<uint32_t> ids;  // emitted tokens, EOS never included
    double logprob = 0.0;
    size_t steps = 0;  // scored steps: emissions plus the EOS step if any
    bool done = false;

    double normalized() const {
        return logprob / static_cast<double>(steps == 0 ? 1 : steps);
    }
};

// Candidate ranking: probability first, then lowest token ids, so every
// sort is a total order and reruns are identical.
inline bool candidate_before(const Hypothesis& a, const Hypothesis& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.ids < b.ids;
}

inline TokenSeq to_tokens(const CopyMixtureModel& m,
                          const std::vector<uint32_t>& ids) {
    TokenSeq out;
    out.reserve(ids.size());
    for (uint32_t w : ids) out.push_back(m.base.id_to_token[w]);
    return out;
}

inline TokenSeq decode_greedy(const CopyMixtureModel& m, const CopyCounts& cc,
                              double lambda, size_t max_len) {
    TokenSeq out;
    while (out.size() < max_len) {
        std::vector<double> p = step_distribution(m, cc, lambda, out);
        uint32_t w = pick_argmax(p);
        if (w == kEosId) break;
        out.push_back(m.base.id_to_token[w]);
    }
    return out;
}

inline TokenSeq decode_beam(const CopyMixtureModel& m, const CopyCounts& cc,
                            double lambda, size_t width, size_t max_len) {
    std::vector<Hypothesis> active{Hypothesis{}};
    std::vector<Hypothesis> finished;
    while (!active.empty()) {
        std::vector<Hypothesis> cands;
        for (const auto& hyp : active) {
            std::vector<double> p =
                step_distribution(m, cc, lambda, to_tokens(m, hyp.ids));
            for (uint32_t w = 0; w < p.size(); ++w) {
                if (!emittable(w)) continue;
                Hypothesis next = hyp;
                next.logprob += std::log(p[w]);
                ++next.steps;
                if (w == kEosId) {
                    next.done = true;
                } else {
                    next.ids.push_back(w);
                    next.done = next.ids.size() >= max_len;
                }
                cands.push_back(std::move(next));
            }
        }
        std::sort(cands.begin(), cands.end(), candidate_before);
        if (cands.size() > width) cands.resize(width);
        active.clear();
        for (auto& hyp : cands) {
            if (hyp.done)
                finished.push_back(std::move(hyp));
            else
                active.push_back(std::move(hyp));
        }
    }
    // Length normalization happens here and only here.
    const Hypothesis* best = &finished.front();
    for (const auto& hyp : finished) {
        double a = hyp.normalized(), b = best->normalized();
        if (a > b || (a == b && candidate_before(hyp, *best)))
            best = &hyp;
    }
    return to_tokens(m, best->ids);
}

inline TokenSeq decode_sample(const CopyMixtureModel& m, const CopyCounts& cc,
                              double lambda, size_t max_len, uint64_t seed,
                              double temperature) {
    SplitMixRng rng(seed);
    TokenSeq out;
    while (out.size() < max_len) {
        std::vector<double> p = step_distribution(m, cc, lambda, out);
        double total = 0.0;
        for (uint32_t w = 0; w < p.size(); ++w) {
            if (!emittable(w)) {
                p[w] = 0.0;
                continue;
            }
            p[w] = std::pow(p[w], 1.0 / temperature);
            total += p[w];
        }
        double u = rng.unit() * total;
        uint32_t pick = kEosId;
        double acc = 0.0;
        for (uint32_t w = 0; w < p.size(); ++w) {
            if (p[w] <= 0.0) continue;
            acc += p[w];
            if (u < acc) {
                pick = w;
                break;
            }
        }
        if (pick == kEosId) break;
        out.push_back(m.base.id_to_token[pick]);
    }
    return out;
}

}  // namespace gen_detail

inline TokenSeq generate(const CopyMixtureModel& m, const Table& source,
                         const GenerationConfig& cfg) {
    if (cfg.beam_width < 1) throw usage_error("beam width must be >= 1");
    if (cfg.max_len < 1) throw usage_error("max length must be >= 1");
    if (!(cfg.temperature > 0.0))
        throw usage_error("sampling temperature must be > 0");
    if (cfg.tag && !m.tag_lambda)
        throw model_error("tagged decoding needs per-tag mixture weights; "
                          "train the controlled model first");
    double lambda = m.lambda_for(cfg.tag);
    CopyCounts cc = source_copy_counts(m, linearize(source, std::nullopt));
    switch (cfg.strategy) {
        case GenStrategy::greedy:
            return gen_detail::decode_greedy(m, cc, lambda, cfg.max_len);
        case GenStrategy::beam:
            return gen_detail::decode_beam(m, cc, lambda, cfg.beam_width,
                                           cfg.max_len);
        case GenStrategy::sample:
            return gen_detail::decode_sample(m, cc, lambda, cfg.max_len,
                                             cfg.seed, cfg.temperature);
    }
    throw usage_error("unknown decoding strategy");
}

}  // namespace halknob
