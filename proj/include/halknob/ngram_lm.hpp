#pragma once

// Unconditional interpolated add-k n-gram model over target sentences, plus
// forced-path (teacher-forced) traces. This is the "how plausible is the
// next token given only the decoded prefix" half of the LM-comparison
// scorer; the conditional mixture in cond_lm.hpp builds on the same model.
//
// Probability chain, evaluated with one fixed expression tree so that
// independent recomputation from the raw counts is bit-identical:
//   P_1(w)      = (c_1(w) + k_1/V) / (C + k_1)
//   P_m(w|ctx)  = (c_m(ctx,w) + k_m * P_{m-1}(w|ctx')) / (total_m(ctx) + k_m)
// where ctx' drops the oldest context token, V counts every predictable
// token (vocab + UNK + EOS, never BOS) and C is the number of unigram
// events. Missing contexts use the same tree with zero counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "halknob/error.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kBosToken = "<s>";
inline constexpr const char* kEosToken = "</s>";
inline constexpr uint32_t kUnkId = 0;
inline constexpr uint32_t kBosId = 1;
inline constexpr uint32_t kEosId = 2;

namespace detail {

struct IdSeqHash {
    size_t operator()(const std::vector<uint32_t>& v) const {
        uint64_t h = 1469598103934665603ull;
        for (uint32_t x : v) {
            h ^= x;
            h *= 1099511628211ull;
        }
        return static_cast<size_t>(h);
    }
};

// Little-endian primitives for the model files.
inline void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::ostream& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

inline void put_str(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw model_error("model file truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& in) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        int c = in.get();
        if (c == EOF) throw model_error("model file truncated");
        v |= static_cast<uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

inline double get_f64(std::istream& in) {
    uint64_t bits = get_u64(in);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

inline std::string get_str(std::istream& in) {
    uint32_t n = get_u32(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw model_error("model file truncated");
    return s;
}

}  // namespace detail

// Teacher-forced run of one model over one target. Position count includes
// the EOS step, so an empty target still yields one position. gold_prob
// keeps the raw probability next to its log: score comparisons use the raw
// value so that no precision is lost to the log.
struct ForcedPathTrace {
    TokenSeq gold_tokens;              // target tokens plus "</s>"
    std::vector<uint32_t> gold_ids;    // UNK-mapped
    std::vector<double> gold_prob;
    std::vector<double> gold_logprob;
    std::vector<uint32_t> argmax_ids;
    TokenSeq argmax_tokens;

    size_t length() const { return gold_ids.size(); }
};

struct NgramModel {
    struct ContextCounts {
        std::unordered_map<uint32_t, uint32_t> next;
        uint64_t total = 0;
    };
    using CountTable =
        std::unordered_map<std::vector<uint32_t>, ContextCounts,
                           detail::IdSeqHash>;

    int order = 0;
    uint32_t min_count = 1;
    std::vector<double> k;                    // k[m-1] smooths order m
    std::vector<std::string> id_to_token;     // [0]=<unk> [1]=<s> [2]=</s>
    std::unordered_map<std::string, uint32_t> token_to_id;
    std::vector<CountTable> counts;           // counts[m-1] for order m

    // Derived, rebuilt after training or loading.
    std::vector<double> p1;       // unigram distribution, p1[BOS] = 0
    uint32_t champion1 = kEosId;  // lowest-id argmax of p1
    uint64_t unigram_total = 0;   // C
    double k1_over_v = 0.0;

    size_t vocab_size() const { return id_to_token.size(); }
    // Predictable tokens: everything but BOS.
    size_t support_size() const { return id_to_token.size() - 1; }

    uint32_t id_of(const std::string& tok) const {
        auto it = token_to_id.find(tok);
        return it == token_to_id.end() ? kUnkId : it->second;
    }

    void rebuild_derived() {
        const ContextCounts& uni = counts[0].at({});
        unigram_total = uni.total;
        double v = static_cast<double>(support_size());
        k1_over_v = k[0] / v;
        double denom = static_cast<double>(unigram_total) + k[0];
        p1.assign(vocab_size(), 0.0);
        for (uint32_t w = 0; w < vocab_size(); ++w) {
            if (w == kBosId) continue;
            auto it = uni.next.find(w);
            double c = it == uni.next.end()
                           ? 0.0
                           : static_cast<double>(it->second);
            p1[w] = (c + k1_over_v) / denom;
        }
        champion1 = kUnkId;
        double best = p1[kUnkId];
        for (uint32_t w = 0; w < vocab_size(); ++w) {
            if (w == kBosId) continue;
            if (p1[w] > best) {
                best = p1[w];
                champion1 = w;
            }
        }
    }

    // Last (order-1) ids of the prefix, BOS-padded on the left.
    std::vector<uint32_t> context_ids(const TokenSeq& prefix) const {
        std::vector<uint32_t> ctx(static_cast<size_t>(order - 1), kBosId);
        size_t n = prefix.size();
        size_t take = std::min(n, ctx.size());
        for (size_t i = 0; i < take; ++i)
            ctx[ctx.size() - take + i] = id_of(prefix[n - take + i]);
        return ctx;
    }

    // P_m(w | last m-1 entries of ctx); ctx holds order-1 ids.
    double prob_order(int m, const std::vector<uint32_t>& ctx,
                      uint32_t w) const {
        if (m == 1) return p1[w];
        double prev = prob_order(m - 1, ctx, w);
        std::vector<uint32_t> key(ctx.end() - (m - 1), ctx.end());
        auto it = counts[static_cast<size_t>(m - 1)].find(key);
        double c = 0.0, total = 0.0;
        if (it != counts[static_cast<size_t>(m - 1)].end()) {
            total = static_cast<double>(it->second.total);
            auto jt = it->second.next.find(w);
            if (jt != it->second.next.end())
                c = static_cast<double>(jt->second);
        }
        double km = k[static_cast<size_t>(m - 1)];
        return (c + km * prev) / (total + km);
    }

    double prob(const std::vector<uint32_t>& ctx, uint32_t w) const {
        return prob_order(order, ctx, w);
    }

    // Argmax over the support without scanning the vocabulary. The
    // maximizer of P_m is either an observed continuation of the context at
    // order m or the maximizer of P_{m-1}: every other token's value is a
    // monotone function of its P_{m-1}. Ties break to the lowest id.
    uint32_t argmax(const std::vector<uint32_t>& ctx) const {
        uint32_t champ = champion1;
        std::vector<uint32_t> cands;
        for (int m = 2; m <= order; ++m) {
            std::vector<uint32_t> key(ctx.end() - (m - 1), ctx.end());
            auto it = counts[static_cast<size_t>(m - 1)].find(key);
            cands.clear();
            cands.push_back(champ);
            if (it != counts[static_cast<size_t>(m - 1)].end()) {
                for (const auto& [w, c] : it->second.next) cands.push_back(w);
            }
            std::sort(cands.begin(), cands.end());
            double best = -1.0;
            uint32_t best_w = champ;
            for (uint32_t w : cands) {
                double p = prob_order(m, ctx, w);
                if (p > best) {
                    best = p;
                    best_w = w;
                }
            }
            champ = best_w;
        }
        return champ;
    }
};

inline NgramModel train_ngram(const std::vector<TokenSeq>& targets, int order,
                              std::vector<double> k, uint32_t min_count = 1) {
    if (targets.empty()) throw schema_error("cannot train on an empty corpus");
    if (order < 1) throw usage_error("ngram order must be >= 1");
    if (k.size() == 1 && order > 1) k.resize(static_cast<size_t>(order), k[0]);
    if (k.size() != static_cast<size_t>(order))
        throw usage_error("need one smoothing k per order");
    for (double v : k)
        if (!(v > 0.0)) throw usage_error("smoothing k must be > 0");

    NgramModel m;
    m.order = order;
    m.min_count = min_count;
    m.k = std::move(k);

    std::unordered_map<std::string, uint64_t> raw;
    for (const auto& t : targets)
        for (const auto& tok : t) ++raw[tok];
    std::vector<std::string> kept;
    for (const auto& [tok, c] : raw)
        if (c >= min_count) kept.push_back(tok);
    std::sort(kept.begin(), kept.end());

    m.id_to_token = {kUnkToken, kBosToken, kEosToken};
    for (auto& tok : kept) m.id_to_token.push_back(std::move(tok));
    for (uint32_t i = 0; i < m.id_to_token.size(); ++i)
        m.token_to_id[m.id_to_token[i]] = i;

    m.counts.assign(static_cast<size_t>(order), {});
    std::vector<uint32_t> ids;
    for (const auto& t : targets) {
        ids.assign(static_cast<size_t>(order - 1), kBosId);
        for (const auto& tok : t) ids.push_back(m.id_of(tok));
        ids.push_back(kEosId);
        for (size_t pos = static_cast<size_t>(order - 1); pos < ids.size();
             ++pos) {
            for (int g = 1; g <= order; ++g) {
                std::vector<uint32_t> ctx(ids.begin() + pos - (g - 1),
                                          ids.begin() + pos);
                auto& cc = m.counts[static_cast<size_t>(g - 1)][ctx];
                ++cc.next[ids[pos]];
                ++cc.total;
            }
        }
    }
    m.rebuild_derived();
    return m;
}

// Dense distribution over the vocabulary (index = id, BOS pinned to 0).
// Evaluates the same expression tree as NgramModel::prob, so the entry at
// any id is bit-identical to the scalar path.
inline std::vector<double> next_distribution(const NgramModel& m,
                                             const TokenSeq& prefix) {
    std::vector<uint32_t> ctx = m.context_ids(prefix);
    std::vector<double> p = m.p1;
    std::vector<double> c(m.vocab_size(), 0.0);
    for (int g = 2; g <= m.order; ++g) {
        std::vector<uint32_t> key(ctx.end() - (g - 1), ctx.end());
        auto it = m.counts[static_cast<size_t>(g - 1)].find(key);
        double total = 0.0;
        const NgramModel::ContextCounts* cc = nullptr;
        if (it != m.counts[static_cast<size_t>(g - 1)].end()) {
            cc = &it->second;
            total = static_cast<double>(cc->total);
            for (const auto& [w, n] : cc->next)
                c[w] = static_cast<double>(n);
        }
        double kg = m.k[static_cast<size_t>(g - 1)];
        double denom = total + kg;
        for (uint32_t w = 0; w < p.size(); ++w) {
            if (w == kBosId) continue;
            p[w] = (c[w] + kg * p[w]) / denom;
        }
        if (cc)
            for (const auto& [w, n] : cc->next) c[w] = 0.0;
    }
    return p;
}

inline ForcedPathTrace forced_path(const NgramModel& m, const TokenSeq& target) {
    ForcedPathTrace tr;
    size_t len = target.size() + 1;
    tr.gold_tokens = target;
    tr.gold_tokens.push_back(kEosToken);
    tr.gold_ids.reserve(len);
    for (const auto& tok : target) tr.gold_ids.push_back(m.id_of(tok));
    tr.gold_ids.push_back(kEosId);

    std::vector<uint32_t> ctx(static_cast<size_t>(m.order - 1), kBosId);
    tr.gold_prob.reserve(len);
    tr.gold_logprob.reserve(len);
    tr.argmax_ids.reserve(len);
    for (size_t t = 0; t < len; ++t) {
        uint32_t gold = tr.gold_ids[t];
        double p = m.prob(ctx, gold);
        tr.gold_prob.push_back(p);
        tr.gold_logprob.push_back(std::log(p));
        uint32_t am = m.argmax(ctx);
        tr.argmax_ids.push_back(am);
        tr.argmax_tokens.push_back(m.id_to_token[am]);
        if (m.order > 1) {
            ctx.erase(ctx.begin());
            ctx.push_back(gold);
        }
    }
    return tr;
}

inline constexpr char kNgramMagic[4] = {'H', 'K', 'N', 'G'};
inline constexpr uint32_t kNgramVersion = 1;

inline void save_model_stream(const NgramModel& m, std::ostream& out) {
    out.write(kNgramMagic, 4);
    detail::put_u32(out, kNgramVersion);
    detail::put_u32(out, static_cast<uint32_t>(m.order));
    detail::put_u32(out, m.min_count);
    for (double kv : m.k) detail::put_f64(out, kv);
    detail::put_u32(out, static_cast<uint32_t>(m.id_to_token.size()));
    for (const auto& tok : m.id_to_token) detail::put_str(out, tok);
    for (int g = 1; g <= m.order; ++g) {
        const auto& table = m.counts[static_cast<size_t>(g - 1)];
        std::vector<const std::vector<uint32_t>*> keys;
        keys.reserve(table.size());
        for (const auto& [key, cc] : table) keys.push_back(&key);
        std::sort(keys.begin(), keys.end(),
                  [](const auto* a, const auto* b) { return *a < *b; });
        detail::put_u64(out, keys.size());
        for (const auto* key : keys) {
            for (uint32_t id : *key) detail::put_u32(out, id);
            const auto& cc = table.at(*key);
            std::vector<std::pair<uint32_t, uint32_t>> entries(
                cc.next.begin(), cc.next.end());
            std::sort(entries.begin(), entries.end());
            detail::put_u32(out, static_cast<uint32_t>(entries.size()));
            for (const auto& [w, n] : entries) {
                detail::put_u32(out, w);
                detail::put_u32(out, n);
            }
        }
    }
}

inline void save_model(const NgramModel& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write model file: " + path);
    save_model_stream(m, out);
    if (!out) throw io_error("write failed: " + path);
}

inline NgramModel load_ngram_stream(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kNgramMagic, 4) != 0)
        throw model_error("not an ngram model file (bad magic)");
    uint32_t version = detail::get_u32(in);
    if (version != kNgramVersion)
        throw model_error("unsupported ngram model version " +
                          std::to_string(version) + " (expected " +
                          std::to_string(kNgramVersion) + ")");
    NgramModel m;
    m.order = static_cast<int>(detail::get_u32(in));
    if (m.order < 1 || m.order > 16)
        throw model_error("ngram model has implausible order");
    m.min_count = detail::get_u32(in);
    m.k.resize(static_cast<size_t>(m.order));
    for (double& kv : m.k) kv = detail::get_f64(in);
    uint32_t vocab = detail::get_u32(in);
    if (vocab < 3) throw model_error("ngram model vocab too small");
    m.id_to_token.reserve(vocab);
    for (uint32_t i = 0; i < vocab; ++i)
        m.id_to_token.push_back(detail::get_str(in));
    for (uint32_t i = 0; i < vocab; ++i) m.token_to_id[m.id_to_token[i]] = i;
    m.counts.assign(static_cast<size_t>(m.order), {});
    for (int g = 1; g <= m.order; ++g) {
        uint64_t n_ctx = detail::get_u64(in);
        auto& table = m.counts[static_cast<size_t>(g - 1)];
        table.reserve(static_cast<size_t>(n_ctx));
        for (uint64_t i = 0; i < n_ctx; ++i) {
            std::vector<uint32_t> key(static_cast<size_t>(g - 1));
            for (auto& id : key) id = detail::get_u32(in);
            NgramModel::ContextCounts cc;
            uint32_t n_entries = detail::get_u32(in);
            for (uint32_t e = 0; e < n_entries; ++e) {
                uint32_t w = detail::get_u32(in);
                uint32_t n = detail::get_u32(in);
                cc.next[w] = n;
                cc.total += n;
            }
            table.emplace(std::move(key), std::move(cc));
        }
    }
    if (m.counts[0].find({}) == m.counts[0].end())
        throw model_error("ngram model missing unigram table");
    m.rebuild_derived();
    return m;
}

inline NgramModel load_ngram_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open model file: " + path);
    return load_ngram_stream(in);
}

}  // namespace halknob
