#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace bookseg {

enum class MatchStrategy { none, exact, substring, fuzzy };

std::string_view to_string(MatchStrategy s);
MatchStrategy parse_strategy(std::string_view name);

struct MatchConfig {
    int fuzzy_threshold = 80;
    int min_word_len = 4;
    std::vector<MatchStrategy> strategies{MatchStrategy::exact, MatchStrategy::substring, MatchStrategy::fuzzy};

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct MatchResult {
    bool matched = false;
    MatchStrategy strategy = MatchStrategy::none;
};

/// Squeeze spaces, drop spaces around "/" and "-", join letter-spaced words
/// ("P U B L I C" -> "PUBLIC"), strip punctuation, lowercase. The pass is
/// repeated until it no longer changes the text, so normalize is idempotent.
std::string normalize(std::string_view text);

/// normalize() with every space removed.
std::string squash(std::string_view text);

/// Unit-cost edit distance over Unicode code points.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// levenshtein(a, b) if it is <= bound, otherwise bound + 1. Runs in O(bound * max(|a|, |b|)).
std::size_t levenshtein_bounded(std::u32string_view a, std::u32string_view b, std::size_t bound);

/// Best similarity (0..100) of the shorter string against every same-length
/// window of the longer one: round(100 * (1 - distance / window_length)).
int partial_ratio(std::string_view needle, std::string_view haystack);

// The individual strategy checks. All return false for headings whose
// normalization is empty.
bool exact_match(std::string_view text, std::string_view heading);
bool substring_match(std::string_view text, std::string_view heading);
bool fuzzy_match(std::string_view text, std::string_view heading, const MatchConfig& cfg);

/// Runs the enabled strategies in the fixed order exact, substring, fuzzy and
/// reports the first one that fires.
MatchResult match_heading(std::string_view text, std::string_view heading, const MatchConfig& cfg = {});

/// A heading is degenerate when its normalization is empty; it never matches.
bool is_degenerate_heading(std::string_view heading);

}  // namespace bookseg
