#include "bookseg/matching.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "bookseg/text.hpp"

namespace bookseg {

std::string_view to_string(MatchStrategy s) {
    switch (s) {
        case MatchStrategy::exact: return "exact";
        case MatchStrategy::substring: return "substring";
        case MatchStrategy::fuzzy: return "fuzzy";
        case MatchStrategy::none: break;
    }
    return "none";
}

MatchStrategy parse_strategy(std::string_view name) {
    if (name == "exact") return MatchStrategy::exact;
    if (name == "substring") return MatchStrategy::substring;
    if (name == "fuzzy") return MatchStrategy::fuzzy;
    throw std::invalid_argument("unknown match strategy '" + std::string(name) + "'");
}

void MatchConfig::validate() const {
    if (fuzzy_threshold < 0 || fuzzy_threshold > 100) {
        throw std::invalid_argument("fuzzy_threshold must lie in [0, 100]");
    }
    if (min_word_len < 1) throw std::invalid_argument("min_word_len must be >= 1");
    for (std::size_t i = 0; i < strategies.size(); ++i) {
        if (strategies[i] == MatchStrategy::none) throw std::invalid_argument("'none' is not a strategy");
        for (std::size_t j = 0; j < i; ++j) {
            if (strategies[i] == strategies[j]) throw std::invalid_argument("duplicate match strategy");
        }
    }
}

namespace {

using U32 = std::u32string;

U32 squeeze_spaces(const U32& in) {
    U32 out;
    bool pending = false;
    for (char32_t c : in) {
        if (text::is_space(c)) {
            pending = true;
            continue;
        }
        if (pending && !out.empty()) out.push_back(U' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

U32 drop_spaces_around_joiners(const U32& in) {
    auto joiner = [](char32_t c) { return c == U'/' || c == U'-'; };
    U32 out;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] == U' ') {
            const bool after = i > 0 && joiner(in[i - 1]);
            const bool before = i + 1 < in.size() && joiner(in[i + 1]);
            if (after || before) continue;
        }
        out.push_back(in[i]);
    }
    return out;
}

U32 join_letter_spacing(const U32& in) {
    std::vector<U32> tokens;
    U32 cur;
    for (char32_t c : in) {
        if (c == U' ') {
            tokens.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    tokens.push_back(std::move(cur));

    auto single_letter = [](const U32& t) { return t.size() == 1 && text::is_letter(t[0]); };
    U32 out;
    std::size_t i = 0;
    while (i < tokens.size()) {
        std::size_t j = i;
        while (j < tokens.size() && single_letter(tokens[j])) ++j;
        if (j - i >= 2) {
            if (!out.empty()) out.push_back(U' ');
            for (std::size_t k = i; k < j; ++k) out += tokens[k];
            i = j;
            continue;
        }
        if (!out.empty()) out.push_back(U' ');
        out += tokens[i];
        ++i;
    }
    return out;
}

U32 strip_punctuation(const U32& in) {
    U32 out;
    for (char32_t c : in) {
        if (c != U'/' && text::is_punctuation(c)) continue;
        out.push_back(c);
    }
    return out;
}

U32 normalize_pass(const U32& in) {
    U32 s = squeeze_spaces(in);
    s = drop_spaces_around_joiners(s);
    s = join_letter_spacing(s);
    s = strip_punctuation(s);
    for (auto& c : s) c = text::to_lower(c);
    return s;
}

U32 normalize32(std::string_view text) {
    U32 cur = text::decode_utf8(text);
    for (;;) {
        U32 next = normalize_pass(cur);
        if (next == cur) return cur;
        cur = std::move(next);
    }
}

U32 without_spaces(U32 s) {
    std::erase(s, U' ');
    return s;
}

int ratio_percent(std::size_t len, std::size_t dist) {
    if (len == 0) return 100;
    // round-half-up of 100 * (len - dist) / len
    return static_cast<int>((200 * (len - dist) + len) / (2 * len));
}

int partial_ratio32(const U32& a, const U32& b) {
    const U32& shorter = a.size() <= b.size() ? a : b;
    const U32& longer = a.size() <= b.size() ? b : a;
    const std::size_t m = shorter.size();
    if (m == 0) return longer.empty() ? 100 : 0;
    if (longer.find(shorter) != U32::npos) return 100;
    std::size_t best = m;
    for (std::size_t start = 0; start + m <= longer.size() && best > 0; ++start) {
        const std::u32string_view window(longer.data() + start, m);
        const std::size_t d = levenshtein_bounded(shorter, window, best - 1);
        best = std::min(best, d);
    }
    return ratio_percent(m, best);
}

std::vector<U32> words_of(const U32& s) {
    std::vector<U32> words;
    U32 cur;
    for (char32_t c : s) {
        if (c == U' ') {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

// Partial ratio runs on the space-free forms so that every substring match is
// also a 100-ratio fuzzy match.
bool fuzzy32(const U32& norm_heading, const U32& norm_text, const MatchConfig& cfg) {
    if (partial_ratio32(without_spaces(norm_heading), without_spaces(norm_text)) >= cfg.fuzzy_threshold) return true;
    const auto text_words = words_of(norm_text);
    for (const auto& w : words_of(norm_heading)) {
        if (w.size() < static_cast<std::size_t>(cfg.min_word_len)) continue;
        if (std::find(text_words.begin(), text_words.end(), w) != text_words.end()) return true;
    }
    return false;
}

}  // namespace

std::string normalize(std::string_view text) { return text::encode_utf8(normalize32(text)); }

std::string squash(std::string_view text) { return text::encode_utf8(without_spaces(normalize32(text))); }

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + cost});
            diag = up;
        }
    }
    return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    return levenshtein(text::decode_utf8(a), text::decode_utf8(b));
}

std::size_t levenshtein_bounded(std::u32string_view a, std::u32string_view b, std::size_t bound) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    const std::size_t diff = n > m ? n - m : m - n;
    if (diff > bound) return bound + 1;
    const std::size_t inf = bound + 1;
    std::vector<std::size_t> prev(m + 1, inf);
    std::vector<std::size_t> cur(m + 1, inf);
    for (std::size_t j = 0; j <= std::min(m, bound); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        const std::size_t lo = i > bound ? i - bound : 0;
        const std::size_t hi = std::min(m, i + bound);
        std::fill(cur.begin(), cur.end(), inf);
        if (lo == 0) cur[0] = i <= bound ? i : inf;
        std::size_t row_min = cur[0];
        for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            std::size_t v = prev[j - 1] + cost;
            v = std::min(v, prev[j] + 1);
            v = std::min(v, cur[j - 1] + 1);
            cur[j] = std::min(v, inf);
            row_min = std::min(row_min, cur[j]);
        }
        if (row_min > bound) return inf;
        std::swap(prev, cur);
    }
    return std::min(prev[m], inf);
}

int partial_ratio(std::string_view needle, std::string_view haystack) {
    return partial_ratio32(text::decode_utf8(needle), text::decode_utf8(haystack));
}

bool is_degenerate_heading(std::string_view heading) { return without_spaces(normalize32(heading)).empty(); }

bool exact_match(std::string_view text, std::string_view heading) {
    const U32 h = without_spaces(normalize32(heading));
    if (h.empty()) return false;
    return without_spaces(normalize32(text)) == h;
}

bool substring_match(std::string_view text, std::string_view heading) {
    const U32 h = without_spaces(normalize32(heading));
    if (h.empty()) return false;
    return without_spaces(normalize32(text)).find(h) != U32::npos;
}

bool fuzzy_match(std::string_view text, std::string_view heading, const MatchConfig& cfg) {
    const U32 nh = normalize32(heading);
    if (without_spaces(nh).empty()) return false;
    return fuzzy32(nh, normalize32(text), cfg);
}

MatchResult match_heading(std::string_view text, std::string_view heading, const MatchConfig& cfg) {
    const U32 nh = normalize32(heading);
    const U32 h = without_spaces(nh);
    if (h.empty()) return {};
    const U32 nt = normalize32(text);
    const U32 t = without_spaces(nt);

    auto enabled = [&](MatchStrategy s) {
        return std::find(cfg.strategies.begin(), cfg.strategies.end(), s) != cfg.strategies.end();
    };
    if (enabled(MatchStrategy::exact) && t == h) return {true, MatchStrategy::exact};
    if (enabled(MatchStrategy::substring) && t.find(h) != U32::npos) return {true, MatchStrategy::substring};
    if (enabled(MatchStrategy::fuzzy) && fuzzy32(nh, nt, cfg)) return {true, MatchStrategy::fuzzy};
    return {};
}

}  // namespace bookseg
