#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "halknob/corpus.hpp"

using namespace halknob;

TEST_CASE("read_corpus minimal records") {
    SECTION("one well-formed line") {
        std::istringstream in(
            R"({"table": [["name","john smith"]], "target": "john smith is a writer"})"
            "\n");
        auto ex = read_corpus_stream(in, "mem");
        REQUIRE(ex.size() == 1);
        REQUIRE(ex[0].id == "1");
        REQUIRE(ex[0].source.rows ==
                decltype(ex[0].source.rows){{"name", "john smith"}});
        REQUIRE(ex[0].target == "john smith is a writer");
        REQUIRE(!ex[0].tag);
        REQUIRE(!ex[0].hal_wo);
    }
    SECTION("empty stream") {
        std::istringstream in("");
        REQUIRE(read_corpus_stream(in, "mem").empty());
    }
    SECTION("missing target names the line") {
        std::istringstream in(
            "{\"table\": [[\"a\",\"b\"]], \"target\": \"x\"}\n"
            "{\"table\": [[\"a\",\"b\"]]}\n");
        try {
            read_corpus_stream(in, "mem");
            FAIL("expected schema_error");
        } catch (const schema_error& e) {
            REQUIRE(std::string(e.what()).find("mem:2") != std::string::npos);
            REQUIRE(std::string(e.what()).find("target") != std::string::npos);
        }
    }
    SECTION("duplicate explicit ids rejected") {
        std::istringstream in(
            R"({"id":"a","table":[["f","v"]],"target":"x"})" "\n"
            R"({"id":"a","table":[["f","v"]],"target":"y"})" "\n");
        REQUIRE_THROWS_AS(read_corpus_stream(in, "mem"), schema_error);
    }
    SECTION("score fields validated") {
        std::istringstream bad(
            R"({"table":[["f","v"]],"target":"x","hal_wo":1.5})" "\n");
        REQUIRE_THROWS_AS(read_corpus_stream(bad, "mem"), schema_error);
        std::istringstream ok(
            R"({"table":[["f","v"]],"target":"x","hal_wo":0.25,"tag":"hal_3"})" "\n");
        auto ex = read_corpus_stream(ok, "mem");
        REQUIRE(ex[0].hal_wo == 0.25);
        REQUIRE(ex[0].tag == Tag::hal_3);
    }
    SECTION("gold_support length must match tokenized target") {
        // "a b ." tokenizes to three tokens.
        std::istringstream bad(
            R"({"table":[["f","v"]],"target":"a b .","gold_support":[true,false]})" "\n");
        REQUIRE_THROWS_AS(read_corpus_stream(bad, "mem"), schema_error);
        std::istringstream ok(
            R"({"table":[["f","v"]],"target":"a b .","gold_support":[true,false,true]})" "\n");
        auto ex = read_corpus_stream(ok, "mem");
        REQUIRE(ex[0].gold_support->size() == 3);
    }
    SECTION("gold_labels must agree with gold_support") {
        std::istringstream bad(
            R"({"table":[["f","v"]],"target":"a b","gold_support":[true,true],)"
            R"("gold_labels":["supported","unsupported"]})" "\n");
        REQUIRE_THROWS_AS(read_corpus_stream(bad, "mem"), schema_error);
        std::istringstream ok(
            R"({"table":[["f","v"]],"target":"a b","gold_support":[true,false],)"
            R"("gold_labels":["inferable","unsupported"]})" "\n");
        auto ex = read_corpus_stream(ok, "mem");
        REQUIRE((*ex[0].gold_labels)[0] == SupportLabel::inferable);
    }
}

TEST_CASE("linearize") {
    Table t{{{"name", "ana"}}};
    SECTION("single cell, no tag") {
        REQUIRE(linearize(t, std::nullopt) ==
                TokenSeq{"<row>", "name", "<col>", "ana"});
    }
    SECTION("tag goes first") {
        REQUIRE(linearize(t, Tag::hal_0) ==
                TokenSeq{"<hal_0>", "<row>", "name", "<col>", "ana"});
    }
    SECTION("two rows, markers twice each, order preserved") {
        Table two{{{"name", "ana"}, {"job", "writer"}}};
        auto toks = linearize(two, std::nullopt);
        REQUIRE(std::count(toks.begin(), toks.end(), "<row>") == 2);
        REQUIRE(std::count(toks.begin(), toks.end(), "<col>") == 2);
        REQUIRE(delinearize(toks) == two);
    }
    SECTION("cell text goes through the tokenizer") {
        Table rich{{{"Birth-Date", "May 1 1950"}}};
        REQUIRE(linearize(rich, std::nullopt) ==
                TokenSeq{"<row>", "birth", "-", "date", "<col>", "may", "1",
                         "1950"});
    }
    SECTION("empty value keeps the cell") {
        Table empty_val{{{"club", ""}}};
        auto toks = linearize(empty_val, std::nullopt);
        REQUIRE(toks == TokenSeq{"<row>", "club", "<col>"});
        REQUIRE(delinearize(toks) == empty_val);
    }
}

TEST_CASE("delinearize errors") {
    REQUIRE_THROWS_AS(delinearize({"<row>", "name", "ana"}), schema_error);
    REQUIRE_THROWS_AS(delinearize({"name", "<col>", "ana"}), schema_error);
    REQUIRE_THROWS_AS(delinearize({"<row>", "<col>", "ana"}), schema_error);
}

namespace {

Table random_canonical_table(std::mt19937& rng) {
    static const std::vector<std::string> fields = {
        "name", "birth date", "occupation", "club", "nationality", "known for"};
    static const std::vector<std::string> words = {
        "ana", "maria", "cole", "1950", "writer", "footballer", "red", "star",
        "-", ".", "fc"};
    std::uniform_int_distribution<size_t> nf(1, 4);
    std::uniform_int_distribution<size_t> nw(0, 3);
    std::uniform_int_distribution<size_t> pf(0, fields.size() - 1);
    std::uniform_int_distribution<size_t> pw(0, words.size() - 1);
    Table t;
    size_t n = nf(rng);
    for (size_t i = 0; i < n; ++i) {
        TokenSeq value;
        size_t m = nw(rng);
        for (size_t k = 0; k < m; ++k) value.push_back(words[pw(rng)]);
        t.rows.emplace_back(fields[pf(rng)], halknob::join(value));
    }
    return t;
}

}  // namespace

TEST_CASE("linearize round trip on random canonical tables") {
    std::mt19937 rng(99);
    for (int i = 0; i < 50; ++i) {
        Table t = random_canonical_table(rng);
        REQUIRE(delinearize(linearize(t, std::nullopt)) == t);
        REQUIRE(delinearize(linearize(t, Tag::hal_2)) == t);
    }
    // Non-canonical tables round-trip to their canonical form.
    Table raw{{{"Name", "Ana-Maria"}}};
    REQUIRE(delinearize(linearize(raw, std::nullopt)) == canonicalize(raw));
}

TEST_CASE("corpus write then read is stable") {
    std::mt19937 rng(3);
    std::vector<Example> corpus;
    for (int i = 0; i < 20; ++i) {
        Example ex;
        ex.id = "ex" + std::to_string(i);
        ex.source = random_canonical_table(rng);
        ex.target = "ana is a writer .";
        if (i % 2) ex.tag = Tag::hal_1;
        if (i % 3) ex.hal_wo = 0.25;
        if (i % 5) {
            ex.gold_support = std::vector<bool>{true, true, true, false, true};
            ex.gold_labels = std::vector<SupportLabel>{
                SupportLabel::supported, SupportLabel::supported,
                SupportLabel::inferable, SupportLabel::unsupported,
                SupportLabel::supported};
            ex.noise_fraction = 0.2;
        }
        corpus.push_back(std::move(ex));
    }
    std::ostringstream out1;
    write_corpus_stream(out1, corpus);
    std::istringstream back(out1.str());
    auto reread = read_corpus_stream(back, "mem");
    REQUIRE(reread == corpus);
    std::ostringstream out2;
    write_corpus_stream(out2, reread);
    REQUIRE(out1.str() == out2.str());
}
