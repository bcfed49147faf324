#pragma once

// Source-conditioned model: a copy distribution over the linearized table's
// value tokens mixed with the unconditional n-gram model,
//   p(w | source, prefix) = lambda * copy(w) + (1 - lambda) * p_base(w | prefix)
// with copy(w) = (count_source(w) + k_copy) / (T + k_copy * V) over the same
// vocabulary (source tokens outside the vocab count toward UNK). The mixture
// weight is fitted by EM; a per-tag weight table turns the same machinery
// into the tag-controlled generator.
//
// Scoring always uses the global lambda. Tags do not exist yet when scores
// are computed, and the per-tag table belongs to generation only.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "halknob/corpus.hpp"
#include "halknob/error.hpp"
#include "halknob/ngram_lm.hpp"
#include "halknob/tag.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

struct CopyMixtureModel {
    NgramModel base;
    double k_copy = 0.1;
    bool include_field_names = false;
    double lambda = 0.5;
    std::optional<std::array<double, kNumTags>> tag_lambda;

    double lambda_for(std::optional<Tag> tag) const {
        if (tag && tag_lambda)
            return (*tag_lambda)[static_cast<size_t>(*tag)];
        return lambda;
    }
};

// Source value tokens folded to vocab ids. Structural markers and the
// optional leading control tag never count; field-name tokens only when the
// model says so.
struct CopyCounts {
    std::unordered_map<uint32_t, uint32_t> counts;
    uint64_t total = 0;
    double denom = 0.0;  // total + k_copy * V, fixed at build time
};

inline CopyCounts source_copy_counts(const CopyMixtureModel& m,
                                     const TokenSeq& source) {
    CopyCounts cc;
    bool in_field = false;
    size_t start = 0;
    if (!source.empty() && try_parse_tag(source[0])) start = 1;
    for (size_t i = start; i < source.size(); ++i) {
        const std::string& tok = source[i];
        if (tok == kRowMarker) {
            in_field = true;
        } else if (tok == kColMarker) {
            in_field = false;
        } else {
            if (in_field && !m.include_field_names) continue;
            ++cc.counts[m.base.id_of(tok)];
            ++cc.total;
        }
    }
    cc.denom = static_cast<double>(cc.total) +
               m.k_copy * static_cast<double>(m.base.support_size());
    return cc;
}

inline double copy_prob(const CopyMixtureModel& m, const CopyCounts& cc,
                        uint32_t w) {
    auto it = cc.counts.find(w);
    double c = it == cc.counts.end() ? 0.0 : static_cast<double>(it->second);
    return (c + m.k_copy) / cc.denom;
}

inline std::vector<double> copy_distribution(const CopyMixtureModel& m,
                                             const TokenSeq& source) {
    CopyCounts cc = source_copy_counts(m, source);
    std::vector<double> p(m.base.vocab_size(), 0.0);
    for (uint32_t w = 0; w < p.size(); ++w) {
        if (w == kBosId) continue;
        auto it = cc.counts.find(w);
        double c = it == cc.counts.end() ? 0.0
                                         : static_cast<double>(it->second);
        p[w] = (c + m.k_copy) / cc.denom;
    }
    return p;
}

inline double mixture_prob(const CopyMixtureModel& m, const CopyCounts& cc,
                           double lambda, const std::vector<uint32_t>& ctx,
                           uint32_t w) {
    return lambda * copy_prob(m, cc, w) +
           (1.0 - lambda) * m.base.prob(ctx, w);
}

inline std::vector<double> next_distribution_cond(
    const CopyMixtureModel& m, const TokenSeq& source, const TokenSeq& prefix,
    std::optional<Tag> tag = std::nullopt) {
    double lambda = m.lambda_for(tag);
    CopyCounts cc = source_copy_counts(m, source);
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

// Mixture argmax without a vocab scan: for tokens absent from the source the
// mixture is monotone in the base probability, so only source tokens and the
// base argmax can win. Lowest id on ties.
inline uint32_t argmax_cond(const CopyMixtureModel& m, const CopyCounts& cc,
                            double lambda,
                            const std::vector<uint32_t>& ctx) {
    std::vector<uint32_t> cands;
    cands.reserve(cc.counts.size() + 1);
    cands.push_back(m.base.argmax(ctx));
    for (const auto& [w, c] : cc.counts) cands.push_back(w);
    std::sort(cands.begin(), cands.end());
    double best = -1.0;
    uint32_t best_w = cands[0];
    for (uint32_t w : cands) {
        double p = mixture_prob(m, cc, lambda, ctx, w);
        if (p > best) {
            best = p;
            best_w = w;
        }
    }
    return best_w;
}

inline ForcedPathTrace forced_path_cond(const CopyMixtureModel& m,
                                        const TokenSeq& source,
                                        const TokenSeq& target) {
    CopyCounts cc = source_copy_counts(m, source);
    double lambda = m.lambda;  // scoring path: global weight only
    ForcedPathTrace tr;
    size_t len = target.size() + 1;
    tr.gold_tokens = target;
    tr.gold_tokens.push_back(kEosToken);
    tr.gold_ids.reserve(len);
    for (const auto& tok : target) tr.gold_ids.push_back(m.base.id_of(tok));
    tr.gold_ids.push_back(kEosId);

    std::vector<uint32_t> ctx(static_cast<size_t>(m.base.order - 1), kBosId);
    for (size_t t = 0; t < len; ++t) {
        uint32_t gold = tr.gold_ids[t];
        double p = mixture_prob(m, cc, lambda, ctx, gold);
        tr.gold_prob.push_back(p);
        tr.gold_logprob.push_back(std::log(p));
        uint32_t am = argmax_cond(m, cc, lambda, ctx);
        tr.argmax_ids.push_back(am);
        tr.argmax_tokens.push_back(m.base.id_to_token[am]);
        if (m.base.order > 1) {
            ctx.erase(ctx.begin());
            ctx.push_back(gold);
        }
    }
    return tr;
}

namespace detail {

// One teacher-forced position: the two component probabilities the EM step
// needs. Built once per corpus, then every iteration is O(positions).
struct MixturePoint {
    double p_copy;
    double p_base;
};

inline void collect_mixture_points(const CopyMixtureModel& m,
                                   const Example& ex,
                                   std::vector<MixturePoint>& out) {
    CopyCounts cc = source_copy_counts(m, linearize(ex.source, std::nullopt));
    TokenSeq target = tokenize(ex.target);
    std::vector<uint32_t> ctx(static_cast<size_t>(m.base.order - 1), kBosId);
    std::vector<uint32_t> gold_ids;
    for (const auto& tok : target) gold_ids.push_back(m.base.id_of(tok));
    gold_ids.push_back(kEosId);
    for (uint32_t gold : gold_ids) {
        out.push_back({copy_prob(m, cc, gold), m.base.prob(ctx, gold)});
        if (m.base.order > 1) {
            ctx.erase(ctx.begin());
            ctx.push_back(gold);
        }
    }
}

inline constexpr double kLambdaFloor = 1e-6;

struct EmResult {
    double lambda;
    std::vector<double> log_likelihood;  // one entry per iteration
};

inline EmResult fit_lambda(const std::vector<MixturePoint>& points,
                           double init) {
    if (points.empty()) throw schema_error("no positions to fit lambda on");
    double lambda = init;
    EmResult res;
    for (int iter = 0; iter < 200; ++iter) {
        double resp_sum = 0.0;
        double ll = 0.0;
        for (const auto& pt : points) {
            double pc = lambda * pt.p_copy;
            double pb = (1.0 - lambda) * pt.p_base;
            resp_sum += pc / (pc + pb);
            ll += std::log(pc + pb);
        }
        res.log_likelihood.push_back(ll);
        double next = resp_sum / static_cast<double>(points.size());
        next = std::clamp(next, kLambdaFloor, 1.0 - kLambdaFloor);
        double delta = std::abs(next - lambda);
        lambda = next;
        if (delta < 1e-6) break;
    }
    res.lambda = lambda;
    return res;
}

}  // namespace detail

inline CopyMixtureModel fit_copy_weight(CopyMixtureModel model,
                                        const std::vector<Example>& examples,
                                        bool per_tag = false) {
    if (examples.empty())
        throw schema_error("cannot fit mixture weight on an empty corpus");
    if (!per_tag) {
        std::vector<detail::MixturePoint> points;
        for (const auto& ex : examples)
            detail::collect_mixture_points(model, ex, points);
        model.lambda = detail::fit_lambda(points, model.lambda).lambda;
        return model;
    }
    std::array<std::vector<detail::MixturePoint>, kNumTags> by_tag;
    for (const auto& ex : examples) {
        if (!ex.tag)
            throw schema_error("per-tag fit needs a tag on every example; \"" +
                               ex.id + "\" has none");
        detail::collect_mixture_points(model, ex,
                                       by_tag[static_cast<size_t>(*ex.tag)]);
    }
    std::array<double, kNumTags> lambdas{};
    for (size_t t = 0; t < kNumTags; ++t) {
        if (by_tag[t].empty())
            throw schema_error("no examples tagged " +
                               tag_name(static_cast<Tag>(t)));
        lambdas[t] = detail::fit_lambda(by_tag[t], model.lambda).lambda;
    }
    model.tag_lambda = lambdas;
    return model;
}

inline constexpr char kCondMagic[4] = {'H', 'K', 'C', 'M'};
inline constexpr uint32_t kCondVersion = 1;

inline void save_model_stream(const CopyMixtureModel& m, std::ostream& out) {
    out.write(kCondMagic, 4);
    detail::put_u32(out, kCondVersion);
    detail::put_f64(out, m.k_copy);
    out.put(m.include_field_names ? 1 : 0);
    detail::put_f64(out, m.lambda);
    out.put(m.tag_lambda ? 1 : 0);
    if (m.tag_lambda)
        for (double l : *m.tag_lambda) detail::put_f64(out, l);
    save_model_stream(m.base, out);
}

inline void save_model(const CopyMixtureModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write model file: " + path);
    save_model_stream(m, out);
    if (!out) throw io_error("write failed: " + path);
}

inline CopyMixtureModel load_cond_stream(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCondMagic, 4) != 0)
        throw model_error("not a conditional model file (bad magic)");
    uint32_t version = detail::get_u32(in);
    if (version != kCondVersion)
        throw model_error("unsupported conditional model version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kCondVersion) + ")");
    CopyMixtureModel m;
    m.k_copy = detail::get_f64(in);
    if (!(m.k_copy > 0.0)) throw model_error("k_copy must be > 0");
    int inc = in.get();
    if (inc == EOF) throw model_error("model file truncated");
    m.include_field_names = inc != 0;
    m.lambda = detail::get_f64(in);
    if (!(m.lambda > 0.0 && m.lambda < 1.0))
        throw model_error("mixture weight out of (0,1)");
    int has_tags = in.get();
    if (has_tags == EOF) throw model_error("model file truncated");
    if (has_tags) {
        std::array<double, kNumTags> lambdas;
        for (double& l : lambdas) {
            l = detail::get_f64(in);
            if (!(l > 0.0 && l < 1.0))
                throw model_error("per-tag mixture weight out of (0,1)");
        }
        m.tag_lambda = lambdas;
    }
    m.base = load_ngram_stream(in);
    return m;
}

inline CopyMixtureModel load_cond_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open model file: " + path);
    return load_cond_stream(in);
}

}  // namespace halknob
