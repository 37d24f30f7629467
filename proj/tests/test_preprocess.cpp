#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "bionorm/preprocess.hpp"

using namespace bionorm;
using namespace bionorm::preprocess;
using Tokens = std::vector<Token>;

TEST_CASE("tokenize lowercases and strips punctuation in place") {
    CHECK(tokenize("Heart Failure") == Tokens{"heart", "failure"});
    CHECK(tokenize("non-small-cell") == Tokens{"nonsmallcell"});
    CHECK(tokenize("type 2 diabetes") == Tokens{"type", "2", "diabetes"});
    CHECK(tokenize("p53(+) marker!") == Tokens{"p53", "marker"});
    CHECK(tokenize("  spaced\tout\n") == Tokens{"spaced", "out"});
    CHECK(tokenize("") == Tokens{});
    CHECK(tokenize("--- ... !!") == Tokens{});
}

TEST_CASE("tokenize splits on unicode whitespace and drops other codepoints") {
    // U+00A0 no-break space and U+2003 em space act as separators.
    CHECK(tokenize("alpha\xC2\xA0ism") == Tokens{"alpha", "ism"});
    CHECK(tokenize("a\xE2\x80\x83" "b") == Tokens{"a", "b"});
    // Non-ASCII letters are dropped, not kept: "naïve" loses the ï.
    CHECK(tokenize("na\xC3\xAFve") == Tokens{"nave"});
    // U+3000 ideographic space separates.
    CHECK(tokenize("x\xE3\x80\x80y") == Tokens{"x", "y"});
}

TEST_CASE("spelling correction rewrites only listed tokens") {
    SpellingLexicon lex;
    lex.add("fist", "first");
    lex.add("haert", "heart");
    CHECK(correct_spelling({"fist", "degree"}, lex) == Tokens{"first", "degree"});
    CHECK(correct_spelling({"haert", "attack"}, lex) == Tokens{"heart", "attack"});
    CHECK(correct_spelling({"clean", "tokens"}, lex) == Tokens{"clean", "tokens"});
    // Multi-word corrections re-tokenize.
    SpellingLexicon multi;
    multi.add("heartfailure", "heart failure");
    CHECK(correct_spelling({"heartfailure"}, multi) == Tokens{"heart", "failure"});
}

TEST_CASE("spelling lexicon rejects degenerate entries") {
    SpellingLexicon lex;
    lex.add("teh", "the");
    CHECK_THROWS_AS(lex.add("teh", "tea"), UserError);
    CHECK_THROWS_AS(lex.add("same", "same"), UserError);
}

TEST_CASE("numeric table maps cardinals, ordinals, roman numerals, and single") {
    NumericTable t;
    CHECK(resolve_numerics({"one"}, t) == Tokens{"1"});
    CHECK(resolve_numerics({"first"}, t) == Tokens{"1"});
    CHECK(resolve_numerics({"i"}, t) == Tokens{"1"});
    CHECK(resolve_numerics({"single"}, t) == Tokens{"1"});
    CHECK(resolve_numerics({"second", "iii", "ten", "x"}, t) == Tokens{"2", "3", "10", "10"});
    CHECK(resolve_numerics({"grade", "iv"}, t) == Tokens{"grade", "4"});
    CHECK(resolve_numerics({"eleven"}, t) == Tokens{"eleven"});  // out of range: untouched
}

namespace {
AbbreviationMap detect(const std::string& text) {
    return detect_abbreviations(Document{"d1", text});
}
}  // namespace

TEST_CASE("abbreviation detection: canonical extraction cases") {
    SECTION("two-word long form") {
        auto m = detect("The patient presented with Wilms tumor (WT) at age five.");
        REQUIRE(m.find("WT") != nullptr);
        CHECK(*m.find("WT") == "Wilms tumor");
    }
    SECTION("lowercase clinical phrase") {
        auto m = detect("History of congestive heart failure (CHF) noted.");
        REQUIRE(m.find("CHF") != nullptr);
        CHECK(*m.find("CHF") == "congestive heart failure");
    }
    SECTION("single-word long form") {
        auto m = detect("An electrocardiogram (ECG) was performed.");
        REQUIRE(m.find("ECG") != nullptr);
        CHECK(*m.find("ECG") == "electrocardiogram");
    }
    SECTION("two definitions in one document") {
        auto m = detect("growth hormone (GH) and insulin resistance (IR) were measured.");
        REQUIRE(m.size() == 2);
        CHECK(*m.find("GH") == "growth hormone");
        CHECK(*m.find("IR") == "insulin resistance");
    }
    SECTION("short form characters may skip words") {
        auto m = detect("treated with magnetic resonance imaging (MRI) today");
        REQUIRE(m.find("MRI") != nullptr);
        CHECK(*m.find("MRI") == "magnetic resonance imaging");
    }
    SECTION("hyphenated long form") {
        auto m = detect("suspected non-small cell (NSC) histology");
        REQUIRE(m.find("NSC") != nullptr);
        CHECK(*m.find("NSC") == "non-small cell");
    }
    SECTION("digits allowed inside the short form") {
        auto m = detect("vitamin B12 deficiency (B12D) suspected");
        REQUIRE(m.find("B12D") != nullptr);
        CHECK(*m.find("B12D") == "B12 deficiency");
    }
    SECTION("last definition wins") {
        auto m = detect("alpha bundle (AB) first. albedo boost (AB) second.");
        REQUIRE(m.find("AB") != nullptr);
        CHECK(*m.find("AB") == "albedo boost");
    }
}

TEST_CASE("abbreviation detection: rejection cases") {
    SECTION("no letters in candidate") {
        CHECK(detect("measured at baseline (123) units").empty());
    }
    SECTION("single character too short") {
        CHECK(detect("radiation therapy (r) given").empty());
    }
    SECTION("more than two words") {
        CHECK(detect("complex phrase (a b c) here").empty());
    }
    SECTION("alignment failure: characters absent from window") {
        CHECK(detect("chronic heart failure (XQ) noted").empty());
    }
    SECTION("first character must start a word") {
        CHECK(detect("the slight change (LC) appeared").empty());
    }
    SECTION("long form may not end with the short form") {
        CHECK(detect("the protein p53 (p53) mutation").empty());
    }
    SECTION("window blocked by sentence break") {
        CHECK(detect("alpha beta. (AB) continues").empty());
    }
    SECTION("over-long candidate") {
        CHECK(detect("some sequence (ABCDEFGHIJKL) here").empty());
    }
    SECTION("no opening definition context") {
        CHECK(detect("(HF) with no preceding text").empty());
    }
}

TEST_CASE("expand_abbreviation replaces whole mentions and single words") {
    AbbreviationMap m;
    m.pairs["WT"] = "Wilms tumor";
    m.pairs["HF"] = "heart failure";
    CHECK(expand_abbreviation("WT", m) == "Wilms tumor");
    CHECK(expand_abbreviation("recurrent WT", m) == "recurrent Wilms tumor");
    CHECK(expand_abbreviation("WT HF", m) == "Wilms tumor heart failure");
    CHECK(expand_abbreviation("WTX", m) == "WTX");        // no partial-word match
    CHECK(expand_abbreviation("plain text", m) == "plain text");
    CHECK(expand_abbreviation("WT", AbbreviationMap{}) == "WT");
}

TEST_CASE("normalize applies expansion, spelling, numerics, stemming in order") {
    SpellingLexicon lex;
    lex.add("fist", "first");
    AbbreviationMap none;

    CHECK(normalize("fist degree", none, lex) == Tokens{"1", "degre"});
    CHECK(normalize("Grade III tumors", none, lex) == Tokens{"grade", "3", "tumor"});

    AbbreviationMap ab;
    ab.pairs["WT"] = "Wilms tumor";
    CHECK(normalize("WT", ab, lex) == Tokens{"wilm", "tumor"});
    // Expansion output is itself spelled/stemmed.
    AbbreviationMap ab2;
    ab2.pairs["FD"] = "fist degree";
    CHECK(normalize("FD", ab2, lex) == Tokens{"1", "degre"});
}

TEST_CASE("resources merge document-local over global abbreviations") {
    PreprocessResources res;
    res.global_abbrevs.pairs["HF"] = "heart failure";
    res.global_abbrevs.pairs["WT"] = "wild type";
    res.detect_from_documents({Document{"d1", "Known Wilms tumor (WT) case."},
                               Document{"d2", "No definitions here."}});

    auto d1 = res.abbrevs_for("d1");
    CHECK(*d1.find("WT") == "Wilms tumor");        // local shadows global
    CHECK(*d1.find("HF") == "heart failure");      // global still present
    auto d2 = res.abbrevs_for("d2");
    CHECK(*d2.find("WT") == "wild type");
    auto d3 = res.abbrevs_for("unseen-doc");
    CHECK(*d3.find("WT") == "wild type");

    Mention m{"d1", "WT", std::nullopt, GoldLabel::nil()};
    CHECK(res.normalize_mention(m) == Tokens{"wilm", "tumor"});
    // Concept names never see document or global abbreviations.
    CHECK(res.normalize_name("WT") == Tokens{"wt"});
}
