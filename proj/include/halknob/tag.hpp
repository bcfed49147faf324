#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "halknob/error.hpp"

namespace halknob {

// Five noise degrees, hal_0 cleanest through hal_4 noisiest.
enum class Tag : int { hal_0 = 0, hal_1, hal_2, hal_3, hal_4 };

inline constexpr int kNumTags = 5;
inline constexpr std::array<Tag, kNumTags> kAllTags = {
    Tag::hal_0, Tag::hal_1, Tag::hal_2, Tag::hal_3, Tag::hal_4};

// Name as stored in JSON ("hal_2") and marker as it appears in token
// sequences ("<hal_2>").
inline std::string tag_name(Tag t) {
    return "hal_" + std::to_string(static_cast<int>(t));
}

inline std::string tag_marker(Tag t) { return "<" + tag_name(t) + ">"; }

// Accepts either form.
inline std::optional<Tag> try_parse_tag(std::string_view s) {
    for (Tag t : kAllTags) {
        if (s == tag_name(t) || s == tag_marker(t)) return t;
    }
    return std::nullopt;
}

inline Tag parse_tag(std::string_view s) {
    auto t = try_parse_tag(s);
    if (!t) throw schema_error("unknown tag: \"" + std::string(s) + "\"");
    return *t;
}

}  // namespace halknob
