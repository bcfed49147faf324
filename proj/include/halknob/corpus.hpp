#pragma once

// Data model and JSONL I/O for table-to-text examples, plus table
// linearization into the token stream the models consume.
//
// JSONL schema per line:
//   {"id": str?, "table": [[field, value], ...], "target": str,
//    "tag": str?, "hal_wo": float?, "hal_lm": float?,
//    "gold_support": [bool,...]?, "gold_labels": [str,...]?,
//    "noise_fraction": float?}
//
// gold_labels and noise_fraction are extensions written by the synthetic
// generator: a three-way per-token label (supported / inferable /
// unsupported) and the exact injected-noise fraction.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "halknob/error.hpp"
#include "halknob/tag.hpp"
#include "halknob/tokenizer.hpp"

namespace halknob {

// std::map-backed json: keys come out sorted, which makes dumps byte-stable.
using json = nlohmann::json;

inline constexpr const char* kRowMarker = "<row>";
inline constexpr const char* kColMarker = "<col>";

struct Table {
    // Ordered (field_name, value) pairs. Order is load-bearing.
    std::vector<std::pair<std::string, std::string>> rows;

    bool operator==(const Table&) const = default;
};

enum class SupportLabel : int { supported = 0, inferable = 1, unsupported = 2 };

inline std::string support_label_name(SupportLabel l) {
    switch (l) {
        case SupportLabel::supported: return "supported";
        case SupportLabel::inferable: return "inferable";
        case SupportLabel::unsupported: return "unsupported";
    }
    throw error("bad support label");
}

inline SupportLabel parse_support_label(const std::string& s) {
    if (s == "supported") return SupportLabel::supported;
    if (s == "inferable") return SupportLabel::inferable;
    if (s == "unsupported") return SupportLabel::unsupported;
    throw schema_error("unknown support label: \"" + s + "\"");
}

struct Example {
    std::string id;
    Table source;
    std::string target;
    std::optional<Tag> tag;
    std::optional<double> hal_wo;
    std::optional<double> hal_lm;
    std::optional<std::vector<bool>> gold_support;
    std::optional<std::vector<SupportLabel>> gold_labels;
    std::optional<double> noise_fraction;

    bool operator==(const Example&) const = default;
};

// Canonical cell text: what a cell looks like after a trip through the
// tokenizer. Linearize/delinearize round-trips exactly on canonical tables.
inline std::string canonical_text(const std::string& s) {
    return join(tokenize(s));
}

inline Table canonicalize(const Table& t) {
    Table out;
    out.rows.reserve(t.rows.size());
    for (const auto& [f, v] : t.rows)
        out.rows.emplace_back(canonical_text(f), canonical_text(v));
    return out;
}

inline void validate_table(const Table& t) {
    for (const auto& [f, v] : t.rows) {
        if (tokenize(f).empty())
            throw schema_error("table field name empty after normalization");
    }
}

inline TokenSeq linearize(const Table& source, std::optional<Tag> tag) {
    TokenSeq out;
    if (tag) out.push_back(tag_marker(*tag));
    for (const auto& [field, value] : source.rows) {
        out.push_back(kRowMarker);
        for (auto& tok : tokenize(field)) out.push_back(std::move(tok));
        out.push_back(kColMarker);
        for (auto& tok : tokenize(value)) out.push_back(std::move(tok));
    }
    return out;
}

inline Table delinearize(const TokenSeq& tokens) {
    Table out;
    size_t i = 0;
    if (i < tokens.size() && try_parse_tag(tokens[i])) ++i;
    while (i < tokens.size()) {
        if (tokens[i] != kRowMarker)
            throw schema_error("delinearize: expected " +
                               std::string(kRowMarker) + " at token " +
                               std::to_string(i));
        ++i;
        TokenSeq field;
        while (i < tokens.size() && tokens[i] != kColMarker) {
            if (tokens[i] == kRowMarker)
                throw schema_error("delinearize: row without " +
                                   std::string(kColMarker));
            field.push_back(tokens[i]);
            ++i;
        }
        if (i == tokens.size())
            throw schema_error("delinearize: row without " +
                               std::string(kColMarker));
        ++i;
        TokenSeq value;
        while (i < tokens.size() && tokens[i] != kRowMarker) {
            value.push_back(tokens[i]);
            ++i;
        }
        if (field.empty())
            throw schema_error("delinearize: empty field name");
        out.rows.emplace_back(join(field), join(value));
    }
    return out;
}

namespace detail {

inline const json* find_key(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

inline double score_field(const json& v, const char* key) {
    if (!v.is_number())
        throw schema_error(std::string(key) + " must be a number");
    double d = v.get<double>();
    if (!(d >= 0.0 && d <= 1.0))
        throw schema_error(std::string(key) + " out of [0,1]: " +
                           std::to_string(d));
    return d;
}

}  // namespace detail

inline Example example_from_json(const json& j) {
    if (!j.is_object()) throw schema_error("record is not an object");
    Example ex;

    const json* table = detail::find_key(j, "table");
    if (!table) throw schema_error("missing \"table\"");
    if (!table->is_array()) throw schema_error("\"table\" must be an array");
    for (const auto& row : *table) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_string() ||
            !row[1].is_string())
            throw schema_error("\"table\" rows must be [field, value] string pairs");
        ex.source.rows.emplace_back(row[0].get<std::string>(),
                                    row[1].get<std::string>());
    }
    validate_table(ex.source);

    const json* target = detail::find_key(j, "target");
    if (!target) throw schema_error("missing \"target\"");
    if (!target->is_string()) throw schema_error("\"target\" must be a string");
    ex.target = target->get<std::string>();
    if (ex.target.empty()) throw schema_error("\"target\" is empty");

    if (const json* id = detail::find_key(j, "id")) {
        if (!id->is_string()) throw schema_error("\"id\" must be a string");
        ex.id = id->get<std::string>();
    }
    if (const json* tag = detail::find_key(j, "tag")) {
        if (!tag->is_string()) throw schema_error("\"tag\" must be a string");
        ex.tag = parse_tag(tag->get<std::string>());
    }
    if (const json* v = detail::find_key(j, "hal_wo"))
        ex.hal_wo = detail::score_field(*v, "hal_wo");
    if (const json* v = detail::find_key(j, "hal_lm"))
        ex.hal_lm = detail::score_field(*v, "hal_lm");
    if (const json* v = detail::find_key(j, "noise_fraction"))
        ex.noise_fraction = detail::score_field(*v, "noise_fraction");

    size_t target_len = tokenize(ex.target).size();
    if (const json* gs = detail::find_key(j, "gold_support")) {
        if (!gs->is_array()) throw schema_error("\"gold_support\" must be an array");
        std::vector<bool> support;
        for (const auto& b : *gs) {
            if (!b.is_boolean())
                throw schema_error("\"gold_support\" entries must be booleans");
            support.push_back(b.get<bool>());
        }
        if (support.size() != target_len)
            throw schema_error("\"gold_support\" length " +
                               std::to_string(support.size()) +
                               " != tokenized target length " +
                               std::to_string(target_len));
        ex.gold_support = std::move(support);
    }
    if (const json* gl = detail::find_key(j, "gold_labels")) {
        if (!gl->is_array()) throw schema_error("\"gold_labels\" must be an array");
        std::vector<SupportLabel> labels;
        for (const auto& s : *gl) {
            if (!s.is_string())
                throw schema_error("\"gold_labels\" entries must be strings");
            labels.push_back(parse_support_label(s.get<std::string>()));
        }
        if (labels.size() != target_len)
            throw schema_error("\"gold_labels\" length " +
                               std::to_string(labels.size()) +
                               " != tokenized target length " +
                               std::to_string(target_len));
        if (ex.gold_support) {
            for (size_t i = 0; i < labels.size(); ++i) {
                bool sup = labels[i] != SupportLabel::unsupported;
                if ((*ex.gold_support)[i] != sup)
                    throw schema_error(
                        "\"gold_labels\" disagrees with \"gold_support\" at "
                        "token " + std::to_string(i));
            }
        }
        ex.gold_labels = std::move(labels);
    }
    return ex;
}

inline json example_to_json(const Example& ex) {
    json j;
    json table = json::array();
    for (const auto& [f, v] : ex.source.rows)
        table.push_back(json::array({f, v}));
    j["table"] = std::move(table);
    j["target"] = ex.target;
    if (!ex.id.empty()) j["id"] = ex.id;
    if (ex.tag) j["tag"] = tag_name(*ex.tag);
    if (ex.hal_wo) j["hal_wo"] = *ex.hal_wo;
    if (ex.hal_lm) j["hal_lm"] = *ex.hal_lm;
    if (ex.noise_fraction) j["noise_fraction"] = *ex.noise_fraction;
    if (ex.gold_support) {
        json arr = json::array();
        for (bool b : *ex.gold_support) arr.push_back(b);
        j["gold_support"] = std::move(arr);
    }
    if (ex.gold_labels) {
        json arr = json::array();
        for (SupportLabel l : *ex.gold_labels)
            arr.push_back(support_label_name(l));
        j["gold_labels"] = std::move(arr);
    }
    return j;
}

inline std::vector<Example> read_corpus_stream(std::istream& in,
                                               const std::string& name) {
    std::vector<Example> out;
    std::string line;
    size_t line_no = 0;
    std::set<std::string> seen_ids;
    for (; std::getline(in, line); ) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw schema_error(name + ":" + std::to_string(line_no) +
                               ": invalid json: " + e.what());
        }
        Example ex;
        try {
            ex = example_from_json(j);
        } catch (const schema_error& e) {
            throw schema_error(name + ":" + std::to_string(line_no) + ": " +
                               e.what());
        }
        if (ex.id.empty()) {
            ex.id = std::to_string(line_no);
        } else if (!seen_ids.insert(ex.id).second) {
            throw schema_error(name + ":" + std::to_string(line_no) +
                               ": duplicate id \"" + ex.id + "\"");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

inline std::vector<Example> read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open corpus file: " + path);
    return read_corpus_stream(in, path);
}

inline void write_corpus_stream(std::ostream& out,
                                const std::vector<Example>& examples) {
    for (const auto& ex : examples) out << example_to_json(ex).dump() << "\n";
}

inline void write_corpus(const std::string& path,
                         const std::vector<Example>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write corpus file: " + path);
    write_corpus_stream(out, examples);
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace halknob
