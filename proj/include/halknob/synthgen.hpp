#pragma once

// Synthetic data-to-text corpus with ground-truth per-token support labels.
// Targets are built from a small template family over recombining value
// pools, so a conditional model can genuinely predict values from the
// source while a target-only model cannot. Three label classes: supported
// (values, punctuation, paraphrases), inferable (occupation implied by a
// club), unsupported (injected noise).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "halknob/corpus.hpp"
#include "halknob/error.hpp"
#include "halknob/pipeline.hpp"
#include "halknob/rng.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

struct SynthConfig {
    size_t n_examples = 1000;
    uint64_t seed = 1;
    double noise_rate = 0.0;
    double paraphrase_rate = 0.0;
    double inference_rate = 0.0;
    // Field generators to draw on. "name" is the backbone and mandatory;
    // dropping "dates", "occupation", or "club" collapses the richer
    // templates onto the terser ones.
    std::vector<std::string> schema = {"name", "occupation", "dates", "club"};
};

namespace synth_detail {

using Rng = SplitMixRng;

inline std::vector<std::string> compose(const std::vector<std::string>& heads,
                                        const std::vector<std::string>& tails,
                                        size_t limit) {
    std::vector<std::string> out;
    for (const auto& h : heads) {
        for (const auto& t : tails) {
            if (out.size() == limit) return out;
            out.push_back(h + t);
        }
    }
    return out;
}

inline const std::vector<std::string>& first_names() {
    static const std::vector<std::string> kNames = compose(
        {"an", "bel", "cor", "dar", "el", "fen", "gal", "hol", "il", "jas",
         "kel", "lor", "mir", "nes", "ol", "pren", "quil", "ros", "sten",
         "tam"},
        {"a", "en", "is", "o"}, 80);
    return kNames;
}

inline const std::vector<std::string>& last_names() {
    static const std::vector<std::string> kNames = compose(
        {"ash", "brook", "clay", "dray", "fel", "gran", "hale", "iver",
         "kase", "lynd", "mor", "nash", "oak", "pell", "quar", "rill",
         "sorn", "thorn", "ulm", "vance"},
        {"berg", "dale", "ford", "holm", "mark", "stad", "vik", "wall"}, 160);
    return kNames;
}

// One dominant occupation plus a flat tail. The skew gives the copy
// weight something to fight at generation time: a weakly conditioned
// decoder drifts to the common word, a strongly conditioned one copies
// the table's.
inline const std::vector<std::string>& occupations() {
    static const std::vector<std::string> kWords = {
        "writer",    "painter",  "singer",    "dancer",   "poet",
        "sculptor",  "pianist",  "novelist",  "printer",  "chemist",
        "botanist",  "architect", "sailor",   "farmer",   "teacher",
        "judge",     "weaver",   "surgeon",   "engraver", "composer",
        "geologist", "violinist", "librarian", "falconer", "glassblower",
        "cartographer"};
    return kWords;
}

inline size_t draw_occupation(Rng& rng) {
    // index 0 carries weight 25 of 150; the other 25 carry 5 each
    size_t roll = rng.below(150);
    if (roll < 25) return 0;
    return 1 + (roll - 25) / 5;
}

inline const std::map<std::string, std::string>& paraphrase_lexicon() {
    static const std::map<std::string, std::string> kMap = {
        {"writer", "author"},       {"painter", "artist"},
        {"singer", "vocalist"},     {"dancer", "performer"},
        {"poet", "lyricist"},       {"sculptor", "carver"},
        {"pianist", "keyboardist"}, {"novelist", "storyteller"},
        {"printer", "typesetter"},  {"chemist", "scientist"},
        {"botanist", "naturalist"}, {"architect", "designer"},
        {"sailor", "mariner"},      {"farmer", "grower"},
        {"teacher", "tutor"},       {"judge", "jurist"},
        {"weaver", "spinner"},      {"surgeon", "physician"},
        {"engraver", "etcher"},     {"composer", "songwriter"},
        {"geologist", "surveyor"},  {"violinist", "fiddler"},
        {"librarian", "archivist"}, {"falconer", "hawker"},
        {"glassblower", "glazier"}, {"cartographer", "mapmaker"},
        {"january", "jan"},         {"february", "feb"},
        {"march", "mar"},           {"april", "apr"},
        {"may", "may"},             {"june", "jun"},
        {"july", "jul"},            {"august", "aug"},
        {"september", "sep"},       {"october", "oct"},
        {"november", "nov"},        {"december", "dec"}};
    return kMap;
}

inline const std::vector<std::string>& months() {
    static const std::vector<std::string> kWords = {
        "january", "february", "march",     "april",   "may",      "june",
        "july",    "august",   "september", "october", "november", "december"};
    return kWords;
}

inline const std::vector<std::string>& noise_pool() {
    static const std::vector<std::string> kWords = compose(
        {"vor", "zam", "plo", "krin", "dru", "smel", "tharn", "gly", "bro",
         "wex"},
        {"ka", "ib", "une", "osk"}, 40);
    return kWords;
}

// index 0 carries half the draw, the way one stock filler dominates
// injected boilerplate in real references; the tail splits the rest
inline size_t draw_noise_word(Rng& rng) {
    size_t roll = rng.below(156);
    if (roll < 78) return 0;
    return 1 + (roll - 78) / 2;
}

inline const std::vector<std::string>& club_stems() {
    static const std::vector<std::string> kWords = compose(
        {"sar", "tol", "ver", "mund", "bex", "cal", "dov", "fir", "gor",
         "hul"},
        {"ten", "mere", "wich", "pool"}, 40);
    return kWords;
}

inline const std::vector<std::string>& club_suffixes() {
    static const std::vector<std::string> kWords = {
        "united", "rovers", "athletic", "rangers",
        "wanderers", "county", "albion", "town"};
    return kWords;
}

inline const std::string& inference_word() {
    static const std::string kWord = "footballer";
    return kWord;
}

enum class Tier { kName, kJob, kBirth, kFull, kClub };

// kName..kFull priors 0.10/0.30/0.15/0.45; kClub replaces a draw at
// inference_rate.
inline Tier draw_tier(Rng& rng, const SynthConfig& cfg) {
    if (rng.unit() < cfg.inference_rate) return Tier::kClub;
    size_t roll = rng.below(100);
    if (roll < 10) return Tier::kName;
    if (roll < 40) return Tier::kJob;
    if (roll < 55) return Tier::kBirth;
    return Tier::kFull;
}

// Value mentions per tier, used to couple injection probability to target
// richness: P(noisy) = noise_rate^((max_mentions/mentions)^3). Rich
// targets carry almost the full rate, terse ones almost none, and rate 1
// still hits every example.
inline double mention_weight(Tier t) {
    switch (t) {
        case Tier::kName: return 2.0;
        case Tier::kJob: return 3.0;
        case Tier::kBirth: return 4.0;
        case Tier::kFull: return 5.0;
        case Tier::kClub: return 5.0;
    }
    return 2.0;
}

inline bool draw_noisy(Rng& rng, const SynthConfig& cfg, Tier tier) {
    if (cfg.noise_rate <= 0.0) return false;
    double ratio = 5.0 / mention_weight(tier);
    double p = std::pow(cfg.noise_rate, ratio * ratio * ratio);
    return rng.unit() < p;
}

struct TokenPlan {
    std::string token;
    SupportLabel label;
};

inline void push_supported(std::vector<TokenPlan>& plan,
                           const std::string& tok) {
    plan.push_back({tok, SupportLabel::supported});
}

// Emits a value word, possibly swapped for its lexicon synonym. The
// paraphrase stays labeled supported: it is faithful content that only
// the surface-overlap score misreads.
inline void push_value(std::vector<TokenPlan>& plan, Rng& rng,
                       const SynthConfig& cfg, const std::string& word,
                       bool paraphrasable) {
    if (paraphrasable && cfg.paraphrase_rate > 0.0 &&
        rng.unit() < cfg.paraphrase_rate) {
        auto it = paraphrase_lexicon().find(word);
        if (it != paraphrase_lexicon().end()) {
            plan.push_back({it->second, SupportLabel::supported});
            return;
        }
    }
    plan.push_back({word, SupportLabel::supported});
}

struct SchemaFields {
    bool occ = false;
    bool dates = false;
    bool club = false;
};

inline SchemaFields check_schema(const SynthConfig& cfg) {
    if (cfg.schema.empty()) throw usage_error("synth: schema has zero fields");
    bool has_name = false;
    SchemaFields f;
    for (const auto& field : cfg.schema) {
        if (field == "name") has_name = true;
        else if (field == "occupation") f.occ = true;
        else if (field == "dates") f.dates = true;
        else if (field == "club") f.club = true;
        else throw usage_error("synth: unknown schema field \"" + field + "\"");
    }
    if (!has_name) throw usage_error("synth: schema must include \"name\"");
    return f;
}

inline Example generate_example(const SynthConfig& cfg, SchemaFields fields,
                                size_t i) {
    bool has_occ = fields.occ, has_dates = fields.dates,
         has_club = fields.club;
    Rng rng(derive_seed(cfg.seed, i));
    Tier tier = draw_tier(rng, cfg);
    if (tier == Tier::kClub && !has_club) tier = Tier::kFull;
    if ((tier == Tier::kBirth || tier == Tier::kFull) && !has_dates)
        tier = Tier::kJob;
    if (tier != Tier::kName && tier != Tier::kClub && !has_occ)
        tier = Tier::kName;

    const auto& fn = first_names()[rng.below(first_names().size())];
    const auto& ln = last_names()[rng.below(last_names().size())];

    Example ex;
    ex.id = "ex" + std::to_string(100000 + i);
    ex.source.rows.push_back({"name", fn + " " + ln});

    std::vector<TokenPlan> plan;
    push_supported(plan, fn);
    push_supported(plan, ln);

    if (tier == Tier::kClub) {
        const auto& stem = club_stems()[rng.below(club_stems().size())];
        const auto& suff =
            club_suffixes()[rng.below(club_suffixes().size())];
        ex.source.rows.push_back({"club", stem + " " + suff});
        push_supported(plan, ",");
        push_supported(plan, stem);
        push_supported(plan, suff);
        push_supported(plan, ",");
        plan.push_back({inference_word(), SupportLabel::inferable});
        push_supported(plan, ".");
    } else if (tier == Tier::kName) {
        push_supported(plan, ".");
    } else {
        const auto& occ = occupations()[draw_occupation(rng)];
        ex.source.rows.push_back({"occupation", occ});
        std::string bm, dm;
        if (tier == Tier::kBirth || tier == Tier::kFull) {
            bm = months()[rng.below(12)];
            ex.source.rows.push_back({"born", bm});
        }
        if (tier == Tier::kFull) {
            dm = months()[rng.below(12)];
            ex.source.rows.push_back({"died", dm});
        }

        if (tier == Tier::kJob) {
            push_supported(plan, ".");
            push_value(plan, rng, cfg, occ, true);
            push_supported(plan, ".");
        } else {
            push_supported(plan, ",");
            push_supported(plan, "(");
            push_value(plan, rng, cfg, bm, true);
            push_supported(plan, ")");
            if (tier == Tier::kFull) {
                // square brackets around the death month keep the
                // close-paren context unambiguous about whether a
                // second date follows
                push_supported(plan, "[");
                push_value(plan, rng, cfg, dm, true);
                push_supported(plan, "]");
            }
            push_value(plan, rng, cfg, occ, true);
            push_supported(plan, ".");
        }
    }

    if (draw_noisy(rng, cfg, tier)) {
        double f = 0.92 * (rng.unit() * 0.999999 + 0.000001);
        double len = static_cast<double>(plan.size());
        auto count = static_cast<size_t>(
            std::max<long long>(1, std::llround(len * f / (1.0 - f))));
        // the first injected word lands right before the final content
        // mention, a spurious descriptor consistent enough across noisy
        // targets for a plain LM to learn; any others trail the sentence
        size_t desc_at = plan.size() >= 2 ? plan.size() - 2 : 0;
        plan.insert(plan.begin() + static_cast<ptrdiff_t>(desc_at),
                    {noise_pool()[draw_noise_word(rng)],
                     SupportLabel::unsupported});
        for (size_t k = 1; k < count; ++k)
            plan.push_back({noise_pool()[draw_noise_word(rng)],
                            SupportLabel::unsupported});
    }

    TokenSeq toks;
    std::vector<bool> support;
    std::vector<SupportLabel> labels;
    size_t unsupported = 0;
    for (const auto& tp : plan) {
        toks.push_back(tp.token);
        labels.push_back(tp.label);
        support.push_back(tp.label != SupportLabel::unsupported);
        if (tp.label == SupportLabel::unsupported) ++unsupported;
    }
    ex.target = join(toks);
    ex.gold_support = support;
    ex.gold_labels = labels;
    ex.noise_fraction = static_cast<double>(unsupported) /
                        static_cast<double>(plan.size());
    return ex;
}

}  // namespace synth_detail

// Deterministic function of the config; example i depends only on
// (seed, i), so any worker split produces the same corpus.
inline std::vector<Example> generate_corpus(const SynthConfig& cfg,
                                            unsigned workers = 0) {
    using namespace synth_detail;
    if (cfg.n_examples < 1) throw usage_error("synth: n_examples must be >= 1");
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(cfg.noise_rate) || !in_unit(cfg.paraphrase_rate) ||
        !in_unit(cfg.inference_rate))
        throw usage_error("synth: rates must lie in [0, 1]");
    SchemaFields fields = check_schema(cfg);
    std::vector<size_t> idx(cfg.n_examples);
    for (size_t i = 0; i < cfg.n_examples; ++i) idx[i] = i;
    return parallel_map(
        idx, [&](size_t i) { return generate_example(cfg, fields, i); },
        workers);
}

// Ground-truth support vocabulary for one example: its value words, their
// lexicon synonyms, and the inferable occupation when a club is present.
// Noise-pool words are deliberately absent.
inline std::set<std::string> support_vocabulary(const Example& ex) {
    using namespace synth_detail;
    std::set<std::string> out;
    bool has_club = false;
    for (const auto& [field, value] : ex.source.rows) {
        if (field == "club") has_club = true;
        for (const auto& w : word_set(tokenize(value))) {
            out.insert(w);
            auto it = paraphrase_lexicon().find(w);
            if (it != paraphrase_lexicon().end()) out.insert(it->second);
        }
    }
    if (has_club) out.insert(inference_word());
    return out;
}

struct ScorerReport {
    double spearman_wo = 0.0;
    double spearman_lm = 0.0;
    bool wo_constant = false;
    bool lm_constant = false;
    double auc_wo = 0.0;
    double auc_lm = 0.0;
    double inference_mean_wo = 0.0;
    double inference_mean_lm = 0.0;
    double inference_gap = 0.0;
    size_t n = 0;
    size_t n_noisy = 0;
    size_t n_inference = 0;
};

namespace synth_detail {

inline std::vector<double> average_ranks(const std::vector<double>& values) {
    size_t n = values.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) +
                     1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Pearson correlation of average ranks: exact Spearman under ties.
inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y, bool& constant) {
    constant = false;
    std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
    double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        constant = true;
        return 0.0;
    }
    return sxy / std::sqrt(sxx * syy);
}

// Mann-Whitney AUC of score as a detector of the positive class.
inline double rank_auc(const std::vector<double>& scores,
                       const std::vector<bool>& positive) {
    std::vector<double> ranks = average_ranks(scores);
    double rank_sum = 0.0;
    size_t n_pos = 0;
    for (size_t i = 0; i < scores.size(); ++i)
        if (positive[i]) {
            rank_sum += ranks[i];
            ++n_pos;
        }
    size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.0;
    double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) /
           (np * static_cast<double>(n_neg));
}

}  // namespace synth_detail

// Correlation and detection statistics of the two scorers against the
// generator's ground truth. Requires both scores and gold labels on every
// example.
inline ScorerReport scorer_report(const std::vector<Example>& examples) {
    using namespace synth_detail;
    if (examples.empty()) throw schema_error("scorer_report: empty corpus");
    std::vector<double> wo, lm, frac;
    std::vector<bool> noisy;
    double inf_wo = 0.0, inf_lm = 0.0;
    size_t n_inf = 0, n_noisy = 0;
    for (const auto& ex : examples) {
        if (!ex.gold_support || !ex.noise_fraction || !ex.gold_labels)
            throw schema_error("scorer_report: example " + ex.id +
                               " lacks gold labels");
        if (!ex.hal_wo || !ex.hal_lm)
            throw schema_error("scorer_report: example " + ex.id +
                               " lacks scores");
        wo.push_back(*ex.hal_wo);
        lm.push_back(*ex.hal_lm);
        frac.push_back(*ex.noise_fraction);
        bool is_noisy = *ex.noise_fraction > 0.0;
        noisy.push_back(is_noisy);
        if (is_noisy) ++n_noisy;
        bool has_inferable = false, has_unsupported = false;
        for (SupportLabel lab : *ex.gold_labels) {
            if (lab == SupportLabel::inferable) has_inferable = true;
            if (lab == SupportLabel::unsupported) has_unsupported = true;
        }
        if (has_inferable && !has_unsupported) {
            inf_wo += *ex.hal_wo;
            inf_lm += *ex.hal_lm;
            ++n_inf;
        }
    }
    ScorerReport rep;
    rep.n = examples.size();
    rep.n_noisy = n_noisy;
    rep.n_inference = n_inf;
    rep.spearman_wo = spearman(wo, frac, rep.wo_constant);
    rep.spearman_lm = spearman(lm, frac, rep.lm_constant);
    rep.auc_wo = rank_auc(wo, noisy);
    rep.auc_lm = rank_auc(lm, noisy);
    if (n_inf > 0) {
        rep.inference_mean_wo = inf_wo / static_cast<double>(n_inf);
        rep.inference_mean_lm = inf_lm / static_cast<double>(n_inf);
        rep.inference_gap = rep.inference_mean_wo - rep.inference_mean_lm;
    }
    return rep;
}

inline nlohmann::json scorer_report_to_json(const ScorerReport& rep) {
    nlohmann::json j;
    j["spearman_wo"] = rep.spearman_wo;
    j["spearman_lm"] = rep.spearman_lm;
    j["wo_constant"] = rep.wo_constant;
    j["lm_constant"] = rep.lm_constant;
    j["auc_wo"] = rep.auc_wo;
    j["auc_lm"] = rep.auc_lm;
    j["inference_mean_wo"] = rep.inference_mean_wo;
    j["inference_mean_lm"] = rep.inference_mean_lm;
    j["inference_gap"] = rep.inference_gap;
    j["n"] = rep.n;
    j["n_noisy"] = rep.n_noisy;
    j["n_inference"] = rep.n_inference;
    return j;
}

}  // namespace halknob
