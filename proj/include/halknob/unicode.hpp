#pragma once

// UTF-8 codec, NFC normalization and the character classes the tokenizer
// needs. Table-driven for the BMP (see unicode_data.hpp); Hangul syllables
// are composed/decomposed algorithmically. Codepoints above the BMP carry
// no canonical decompositions we care about and are passed through.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>

#include "halknob/unicode_data.hpp"

namespace halknob::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

// Tolerant decoder: malformed sequences become U+FFFD, one per bad byte.
inline std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        unsigned char b0 = static_cast<unsigned char>(s[i]);
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        }
        int len = 0;
        char32_t cp = 0;
        if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
        else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
        else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
        else { out.push_back(kReplacement); ++i; continue; }
        if (i + len > s.size()) { out.push_back(kReplacement); ++i; continue; }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            unsigned char b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) { ok = false; break; }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok || (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
            (len == 4 && cp < 0x10000) || cp > 0x10FFFF ||
            (cp >= 0xD800 && cp <= 0xDFFF)) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode_utf8(const std::u32string& s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) append_utf8(out, cp);
    return out;
}

namespace detail {

// Hangul syllable arithmetic (UAX #15).
inline constexpr char32_t kSBase = 0xAC00, kLBase = 0x1100, kVBase = 0x1161,
                          kTBase = 0x11A7;
inline constexpr int kLCount = 19, kVCount = 21, kTCount = 28;
inline constexpr int kNCount = kVCount * kTCount;
inline constexpr int kSCount = kLCount * kNCount;

inline uint8_t ccc(char32_t cp) {
    const auto* begin = unicode_data::kCcc;
    const auto* end = begin + unicode_data::kCcc_size;
    auto it = std::lower_bound(begin, end, cp,
                               [](const unicode_data::CccEntry& e, char32_t c) {
                                   return e.cp < c;
                               });
    return (it != end && it->cp == cp) ? it->ccc : 0;
}

inline void decompose_into(char32_t cp, std::u32string& out) {
    if (cp >= kSBase && cp < kSBase + kSCount) {
        int s = static_cast<int>(cp - kSBase);
        out.push_back(kLBase + s / kNCount);
        out.push_back(kVBase + (s % kNCount) / kTCount);
        if (s % kTCount != 0) out.push_back(kTBase + s % kTCount);
        return;
    }
    const auto* begin = unicode_data::kDecompIndex;
    const auto* end = begin + unicode_data::kDecompIndex_size;
    auto it = std::lower_bound(
        begin, end, cp,
        [](const unicode_data::DecompEntry& e, char32_t c) { return e.cp < c; });
    if (it != end && it->cp == cp) {
        // Pool entries are already fully decomposed.
        for (uint8_t k = 0; k < it->len; ++k)
            out.push_back(unicode_data::kDecompPool[it->offset + k]);
        return;
    }
    out.push_back(cp);
}

inline char32_t compose_pair(char32_t a, char32_t b) {
    if (a >= kLBase && a < kLBase + kLCount && b >= kVBase &&
        b < kVBase + kVCount) {
        return kSBase + ((a - kLBase) * kVCount + (b - kVBase)) * kTCount;
    }
    if (a >= kSBase && a < kSBase + kSCount && (a - kSBase) % kTCount == 0 &&
        b > kTBase && b < kTBase + kTCount) {
        return a + (b - kTBase);
    }
    const auto* begin = unicode_data::kComp;
    const auto* end = begin + unicode_data::kComp_size;
    auto it = std::lower_bound(begin, end, std::pair<char32_t, char32_t>{a, b},
                               [](const unicode_data::CompEntry& e,
                                  const std::pair<char32_t, char32_t>& p) {
                                   return e.first != p.first ? e.first < p.first
                                                             : e.second < p.second;
                               });
    if (it != end && it->first == a && it->second == b) return it->composed;
    return 0;
}

}  // namespace detail

inline std::u32string nfc(const std::u32string& in) {
    // Decompose.
    std::u32string buf;
    buf.reserve(in.size());
    for (char32_t cp : in) detail::decompose_into(cp, buf);

    // Canonical ordering: stable sort runs of nonzero-ccc marks.
    for (size_t i = 1; i < buf.size(); ++i) {
        uint8_t cc = detail::ccc(buf[i]);
        if (cc == 0) continue;
        size_t j = i;
        while (j > 0 && detail::ccc(buf[j - 1]) > cc) {
            std::swap(buf[j - 1], buf[j]);
            --j;
        }
    }

    // Compose.
    if (buf.empty()) return buf;
    std::u32string out;
    out.reserve(buf.size());
    out.push_back(buf[0]);
    int starter = detail::ccc(buf[0]) == 0 ? 0 : -1;
    uint8_t prev_cc = detail::ccc(buf[0]);
    for (size_t i = 1; i < buf.size(); ++i) {
        char32_t c = buf[i];
        uint8_t cc = detail::ccc(c);
        char32_t composed = 0;
        if (starter >= 0 &&
            (static_cast<size_t>(starter) == out.size() - 1 || prev_cc < cc)) {
            composed = detail::compose_pair(out[starter], c);
        }
        if (composed != 0) {
            out[static_cast<size_t>(starter)] = composed;
            if (static_cast<size_t>(starter) == out.size() - 1) prev_cc = 0;
        } else {
            if (cc == 0) starter = static_cast<int>(out.size());
            out.push_back(c);
            prev_cc = cc;
        }
    }
    return out;
}

// Simple (single-codepoint) lowercase; multi-char case foldings are skipped
// on purpose so the mapping stays 1:1.
inline char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    const auto* begin = unicode_data::kLower;
    const auto* end = begin + unicode_data::kLower_size;
    auto it = std::lower_bound(begin, end, cp,
                               [](const unicode_data::MapEntry& e, char32_t c) {
                                   return e.cp < c;
                               });
    return (it != end && it->cp == cp) ? it->to : cp;
}

inline bool in_ranges(char32_t cp, const unicode_data::Range* ranges,
                      uint32_t n) {
    auto it = std::upper_bound(ranges, ranges + n, cp,
                               [](char32_t c, const unicode_data::Range& r) {
                                   return c < r.lo;
                               });
    return it != ranges && cp <= (it - 1)->hi;
}

// Whitespace: Unicode Z* plus the ASCII/latin-1 control separators.
inline bool is_space(char32_t cp) {
    if (cp == '\t' || cp == '\n' || cp == '\v' || cp == '\f' || cp == '\r' ||
        (cp >= 0x1C && cp <= 0x1F) || cp == 0x85)
        return true;
    return in_ranges(cp, unicode_data::kSpaceRanges,
                     unicode_data::kSpaceRanges_size);
}

// Punctuation for tokenization purposes: Unicode P* and S*.
inline bool is_punct(char32_t cp) {
    return in_ranges(cp, unicode_data::kPunctRanges,
                     unicode_data::kPunctRanges_size);
}

}  // namespace halknob::unicode
