#pragma once

// Shared normalization and tokenization. Every module that touches text goes
// through tokenize() so scores, LM vocabularies and metrics agree on what a
// word is: NFC, lowercased, punctuation split into single-char tokens,
// whitespace dropped.

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "halknob/unicode.hpp"

namespace halknob {

using TokenSeq = std::vector<std::string>;

inline std::string normalize_text(std::string_view text) {
    std::u32string cps = unicode::nfc(unicode::decode_utf8(text));
    for (char32_t& cp : cps) cp = unicode::to_lower(cp);
    return unicode::encode_utf8(cps);
}

inline TokenSeq tokenize(std::string_view text) {
    std::u32string cps = unicode::nfc(unicode::decode_utf8(text));
    TokenSeq out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) {
            out.push_back(word);
            word.clear();
        }
    };
    for (char32_t cp : cps) {
        cp = unicode::to_lower(cp);
        if (unicode::is_space(cp)) {
            flush();
        } else if (unicode::is_punct(cp)) {
            flush();
            std::string tok;
            unicode::append_utf8(tok, cp);
            out.push_back(std::move(tok));
        } else {
            unicode::append_utf8(word, cp);
        }
    }
    flush();
    return out;
}

// True when every codepoint of the token is punctuation. By construction
// tokenize() emits punctuation as single-char tokens, but this also covers
// tokens from other sources.
inline bool is_punct_token(std::string_view token) {
    std::u32string cps = unicode::decode_utf8(token);
    if (cps.empty()) return false;
    for (char32_t cp : cps)
        if (!unicode::is_punct(cp)) return false;
    return true;
}

inline std::set<std::string> word_set(const TokenSeq& seq) {
    std::set<std::string> out;
    for (const auto& tok : seq)
        if (!is_punct_token(tok)) out.insert(tok);
    return out;
}

inline std::string join(const TokenSeq& seq) {
    std::string out;
    for (size_t i = 0; i < seq.size(); ++i) {
        if (i) out.push_back(' ');
        out += seq[i];
    }
    return out;
}

}  // namespace halknob
