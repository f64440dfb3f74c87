#include <doctest.h>

#include <random>

#include "bookseg/matching.hpp"
#include "bookseg/text.hpp"
#include "../support/oracles.hpp"
#include "../support/vectors.hpp"

using namespace bookseg;

namespace {

std::string random_word(std::mt19937_64& rng, const std::string& alphabet, int max_len) {
    std::string s;
    const int n = std::uniform_int_distribution<int>(0, max_len)(rng);
    for (int i = 0; i < n; ++i) s.push_back(alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)]);
    return s;
}

MatchConfig only(MatchStrategy s) {
    MatchConfig c;
    c.strategies = {s};
    return c;
}

}  // namespace

TEST_SUITE("matching") {

TEST_CASE("normalize vectors") {
    for (const auto& v : vectors::normalize_cases()) {
        CAPTURE(v.input);
        CHECK(normalize(v.input) == v.expected);
    }
}

TEST_CASE("normalize is idempotent on random text") {
    std::mt19937_64 rng(3);
    const std::string alphabet = "aB /-.:  xY\t";
    for (int i = 0; i < 2000; ++i) {
        const auto s = random_word(rng, alphabet, 14);
        CAPTURE(s);
        CHECK(normalize(normalize(s)) == normalize(s));
    }
}

TEST_CASE("squash drops every space") {
    CHECK(squash("P U B L I C  LAW") == "publiclaw");
    CHECK(squash("") == "");
}

TEST_CASE("levenshtein examples") {
    CHECK(levenshtein("abc", "abc") == 0);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("a", "") == 1);
    CHECK(levenshtein("", "") == 0);
    CHECK(levenshtein("\xC3\xA9t\xC3\xA9", "ete") == 2);  // code points, not bytes
}

TEST_CASE("levenshtein equals the exhaustive recursion and is a metric") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 600; ++i) {
        const auto a = random_word(rng, "abc", 7);
        const auto b = random_word(rng, "abc", 7);
        const auto c = random_word(rng, "abc", 7);
        const auto ab = levenshtein(a, b);
        CHECK(ab == oracle::edit_distance(a, b));
        CHECK(ab == levenshtein(b, a));
        CHECK((ab == 0) == (a == b));
        CHECK(ab <= levenshtein(a, c) + levenshtein(c, b));
    }
}

TEST_CASE("bounded levenshtein caps at bound + 1") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 600; ++i) {
        const auto a = text::decode_utf8(random_word(rng, "abcd", 9));
        const auto b = text::decode_utf8(random_word(rng, "abcd", 9));
        for (std::size_t bound : {0, 1, 2, 4}) {
            CHECK(levenshtein_bounded(a, b, bound) == std::min(levenshtein(a, b), bound + 1));
        }
    }
}

TEST_CASE("partial_ratio examples") {
    CHECK(partial_ratio("chapter", "chapter one") == 100);
    CHECK(partial_ratio("chapter one", "chapter") == 100);
    CHECK(partial_ratio("a", "a") == 100);
    CHECK(partial_ratio("", "") == 100);
    CHECK(partial_ratio("", "x") == 0);
    CHECK(partial_ratio("abcd", "xxabzdxx") == oracle::partial_ratio("abcd", "xxabzdxx"));
    CHECK(partial_ratio("abcd", "xxabzdxx") == 75);
    CHECK(partial_ratio("abc", "xyz") == 0);
}

TEST_CASE("partial_ratio equals window enumeration") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 800; ++i) {
        const auto a = random_word(rng, "abc", 6);
        const auto b = random_word(rng, "abc", 10);
        CAPTURE(a);
        CAPTURE(b);
        CHECK(partial_ratio(a, b) == oracle::partial_ratio(a, b));
    }
}

TEST_CASE("match_heading examples") {
    const auto r1 = match_heading("CHAPTER  ONE", "Chapter One");
    CHECK(r1.matched);
    CHECK(r1.strategy == MatchStrategy::exact);

    // normalized, spaces deleted: "1intraductiontolaw" against "introductiontolaw"
    CHECK(partial_ratio(squash("Introduction to Law"), squash("1 Intraduction to Law")) >= 80);
    const auto r2 = match_heading("1 Intraduction to Law", "Introduction to Law");
    CHECK(r2.matched);
    CHECK(r2.strategy == MatchStrategy::fuzzy);

    const auto r3 = match_heading("references", "Chapter Nine");
    CHECK_FALSE(r3.matched);
    CHECK(r3.strategy == MatchStrategy::none);
    CHECK_FALSE(exact_match("references", "Chapter Nine"));
    CHECK_FALSE(substring_match("references", "Chapter Nine"));
    CHECK_FALSE(fuzzy_match("references", "Chapter Nine", {}));
}

TEST_CASE("word containment needs a whole word of min_word_len") {
    CHECK(fuzzy_match("the trustee has many duties today and tomorrow", "Duties of Care", {}));
    CHECK_FALSE(fuzzy_match("the dutiesful clause in many other parts here", "Duties of Care", {}));
    MatchConfig longer;
    longer.min_word_len = 7;
    CHECK_FALSE(fuzzy_match("the trustee has many duties today and tomorrow", "Duties of Care", longer));
}

TEST_CASE("strategies can be disabled but keep their order") {
    const auto sub = match_heading("Chapter 3: Contracts", "Contracts", only(MatchStrategy::fuzzy));
    CHECK(sub.strategy == MatchStrategy::fuzzy);
    MatchConfig reversed;
    reversed.strategies = {MatchStrategy::fuzzy, MatchStrategy::exact};
    CHECK(match_heading("Contracts", "Contracts", reversed).strategy == MatchStrategy::exact);
    MatchConfig none;
    none.strategies = {};
    CHECK_FALSE(match_heading("Contracts", "Contracts", none).matched);
}

TEST_CASE("strategy table: nested acceptance and first-fire reporting") {
    const auto cases = vectors::strategy_cases();
    CHECK(cases.size() == 200);
    for (const auto& c : cases) {
        CAPTURE(c.text);
        CAPTURE(c.heading);
        const bool e = match_heading(c.text, c.heading, only(MatchStrategy::exact)).matched;
        const bool s = match_heading(c.text, c.heading, only(MatchStrategy::substring)).matched;
        const bool f = match_heading(c.text, c.heading, only(MatchStrategy::fuzzy)).matched;
        CHECK((!e || s));
        CHECK((!s || f));
        const auto r = match_heading(c.text, c.heading);
        CHECK(r.strategy == c.expected);
        CHECK(r.matched == (c.expected != MatchStrategy::none));
    }
}

TEST_CASE("self match is exact") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 500; ++i) {
        const auto x = random_word(rng, "ab C-/.", 10);
        if (normalize(x).empty() || squash(x).empty()) continue;
        CHECK(match_heading(x, x).strategy == MatchStrategy::exact);
    }
}

TEST_CASE("degenerate headings never match") {
    CHECK(is_degenerate_heading("..."));
    CHECK(is_degenerate_heading("   "));
    CHECK_FALSE(is_degenerate_heading("A"));
    CHECK_FALSE(match_heading("...", "...").matched);
}

TEST_CASE("config validation and strategy names") {
    MatchConfig c;
    c.fuzzy_threshold = 101;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.fuzzy_threshold = 80;
    c.min_word_len = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_strategy("substring") == MatchStrategy::substring);
    CHECK(to_string(MatchStrategy::fuzzy) == "fuzzy");
    CHECK_THROWS(parse_strategy("soundex"));
}

}  // TEST_SUITE
