#include "bookseg/candidates.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "bookseg/text.hpp"

namespace bookseg {

std::string_view to_string(CandidateSource s) { return s == CandidateSource::xml ? "xml" : "ocr"; }

void CandidateConfig::validate() const {
    if (!(rare_max_share > 0.0 && rare_max_share <= 1.0)) throw std::invalid_argument("rare_max_share must lie in (0, 1]");
    if (min_occurrences < 1) throw std::invalid_argument("min_occurrences must be >= 1");
    if (merge_gap_factor < 0.0) throw std::invalid_argument("merge_gap_factor must be >= 0");
    if (gap_factor <= 0.0) throw std::invalid_argument("gap_factor must be > 0");
    if (max_words < 1) throw std::invalid_argument("max_words must be >= 1");
}

namespace {

std::size_t visible_chars(const TextNode& node) {
    std::size_t n = 0;
    for (char32_t c : text::decode_utf8(raw_text(node))) n += text::is_space(c) ? 0 : 1;
    return n;
}

std::vector<std::size_t> reading_order(const std::vector<TextNode>& nodes) {
    std::vector<std::size_t> order(nodes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(nodes[a].top, nodes[a].left) < std::tie(nodes[b].top, nodes[b].left);
    });
    return order;
}

void append_capped(std::string& dst, std::string_view piece, std::size_t cap) {
    if (piece.empty() || text::length(dst) >= cap) return;
    if (!dst.empty()) dst.push_back(' ');
    dst += piece;
    if (text::length(dst) > cap) dst = text::truncate(dst, cap);
}

void sort_candidates(std::vector<HeadingCandidate>& c) {
    std::stable_sort(c.begin(), c.end(), [](const HeadingCandidate& a, const HeadingCandidate& b) {
        return std::tie(a.page, a.features.top) < std::tie(b.page, b.features.top);
    });
}

}  // namespace

std::map<std::string, double> font_statistics(const BookDocument& doc) {
    std::map<std::string, std::size_t> chars;
    std::size_t total = 0;
    for (const auto& page : doc.pages) {
        for (const auto& node : page.nodes) {
            const std::size_t n = visible_chars(node);
            chars[node.font] += n;
            total += n;
        }
    }
    if (total == 0) throw std::invalid_argument("font statistics need a document with text");
    std::map<std::string, double> shares;
    for (const auto& [font, n] : chars) shares[font] = static_cast<double>(n) / static_cast<double>(total);
    return shares;
}

std::string body_font(const BookDocument& doc) {
    const auto shares = font_statistics(doc);
    std::string best;
    double best_share = -1.0;
    auto consider = [&](const std::string& id) {
        const auto it = shares.find(id);
        if (it != shares.end() && it->second > best_share) {
            best_share = it->second;
            best = id;
        }
    };
    for (const auto& f : doc.fonts) consider(f.id);
    for (const auto& [id, share] : shares) consider(id);
    return best;
}

std::vector<HeadingCandidate> select_xml_candidates(const BookDocument& doc, const CandidateConfig& cfg) {
    std::vector<HeadingCandidate> out;
    std::map<std::string, double> shares;
    try {
        shares = font_statistics(doc);
    } catch (const std::invalid_argument&) {
        return out;
    }
    const std::string body = body_font(doc);

    std::map<std::string, int> occurrences;
    for (const auto& page : doc.pages) {
        for (const auto& node : page.nodes) {
            if (!concat_with_formatting(node).empty()) ++occurrences[node.font];
        }
    }
    auto is_candidate_font = [&](const std::string& font) {
        if (font == body) return false;
        const auto it = shares.find(font);
        return it != shares.end() && it->second < cfg.rare_max_share && occurrences[font] >= cfg.min_occurrences;
    };

    for (const auto& page : doc.pages) {
        const auto order = reading_order(page.nodes);
        HeadingCandidate* open = nullptr;       // candidate still accepting stacked lines
        HeadingCandidate* trailing = nullptr;   // candidate collecting following body text
        const TextNode* last = nullptr;
        int bottom = 0;
        int right = 0;

        for (std::size_t idx : order) {
            const TextNode& node = page.nodes[idx];
            const std::string txt = concat_with_formatting(node);
            if (txt.empty()) continue;
            if (is_candidate_font(node.font)) {
                const bool stacked = open != nullptr && last != nullptr && last->font == node.font &&
                                     node.top - (last->top + last->height) <= cfg.merge_gap_factor * last->height;
                if (stacked) {
                    auto& f = open->features;
                    open->text += " " + txt;
                    f.bold = f.bold || is_bold(node);
                    f.left = std::min(f.left, node.left);
                    bottom = std::max(bottom, node.top + node.height);
                    right = std::max(right, node.left + node.width);
                    f.width = right - f.left;
                    f.height = bottom - f.top;
                } else {
                    HeadingCandidate c;
                    c.text = txt;
                    c.page = page.number;
                    c.source = CandidateSource::xml;
                    const FontSpec* font = doc.find_font(node.font);
                    c.features = CandidateFeatures{node.font, font ? font->size : 0, is_bold(node),
                                                   node.height, node.width, node.left, node.top};
                    bottom = node.top + node.height;
                    right = node.left + node.width;
                    out.push_back(std::move(c));
                    open = &out.back();
                }
                trailing = open;
                last = &node;
                continue;
            }
            open = nullptr;
            last = &node;
            if (trailing != nullptr && node.font == body) append_capped(trailing->trailing_text, txt, cfg.trailing_cap);
        }
    }
    sort_candidates(out);
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

bool parse_int(const std::string& s, int& out) {
    const auto t = text::trim(s);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    return res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty();
}

bool parse_double(const std::string& s, double& out) {
    const auto t = text::trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

constexpr std::size_t kTsvColumns = 12;

}  // namespace

OcrParseResult parse_ocr_tsv(std::istream& in) {
    OcrParseResult result;
    std::string line;
    std::size_t line_no = 0;

    struct Group {
        int page, block, par, line;
        int left, top, right, bottom;
        std::string text;
        double conf_sum = 0.0;
        int words = 0;
    };
    std::vector<Group> groups;
    std::map<std::tuple<int, int, int, int>, std::size_t> by_key;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line.empty()) continue;
            const auto header = split_tabs(line);
            if (header.size() != kTsvColumns || text::trim(header.front()) != "level") {
                throw OcrFormatError("OCR TSV header has " + std::to_string(header.size()) + " columns, expected " +
                                     std::to_string(kTsvColumns));
            }
            continue;
        }
        if (text::trim(line).empty()) continue;
        auto f = split_tabs(line);
        if (f.size() == kTsvColumns - 1) f.emplace_back();  // non-word rows may omit the empty text column
        std::array<int, 10> v{};
        double conf = 0.0;
        bool ok = f.size() == kTsvColumns;
        for (std::size_t i = 0; ok && i < 10; ++i) ok = parse_int(f[i], v[i]);
        ok = ok && parse_double(f[10], conf);
        if (!ok) {
            result.warnings.push_back("skipping malformed OCR row " + std::to_string(line_no));
            continue;
        }
        if (v[0] != 5) continue;  // only word rows carry text
        const std::string word = text::collapse_whitespace(f[11]);
        if (word.empty()) continue;

        const auto key = std::make_tuple(v[1], v[2], v[3], v[4]);
        auto it = by_key.find(key);
        if (it == by_key.end()) {
            it = by_key.emplace(key, groups.size()).first;
            groups.push_back(Group{v[1], v[2], v[3], v[4], v[6], v[7], v[6] + v[8], v[7] + v[9], {}, 0.0, 0});
        }
        Group& g = groups[it->second];
        g.left = std::min(g.left, v[6]);
        g.top = std::min(g.top, v[7]);
        g.right = std::max(g.right, v[6] + v[8]);
        g.bottom = std::max(g.bottom, v[7] + v[9]);
        if (!g.text.empty()) g.text.push_back(' ');
        g.text += word;
        g.conf_sum += conf;
        ++g.words;
    }

    std::map<int, int> next_index;
    for (const auto& g : groups) {
        OcrLine l;
        l.page = g.page;
        l.line_index = next_index[g.page]++;
        l.top = g.top;
        l.left = g.left;
        l.width = g.right - g.left;
        l.height = g.bottom - g.top;
        l.text = g.text;
        l.conf = g.words > 0 ? g.conf_sum / g.words : 0.0;
        result.lines.push_back(std::move(l));
    }
    return result;
}

OcrParseResult parse_ocr_tsv(std::string_view tsv) {
    std::istringstream in{std::string(tsv)};
    return parse_ocr_tsv(in);
}

namespace {

void sort_lines(std::vector<OcrLine>& lines) {
    std::stable_sort(lines.begin(), lines.end(), [](const OcrLine& a, const OcrLine& b) {
        return std::tie(a.page, a.top) < std::tie(b.page, b.top);
    });
}

double median_height(const std::vector<OcrLine>& lines, std::size_t begin, std::size_t end) {
    std::vector<int> h;
    for (std::size_t i = begin; i < end; ++i) h.push_back(lines[i].height);
    std::sort(h.begin(), h.end());
    const std::size_t n = h.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? h[n / 2] : (h[n / 2 - 1] + h[n / 2]) / 2.0;
}

// [begin, end) index ranges of each page in page-sorted lines.
std::vector<std::pair<std::size_t, std::size_t>> page_ranges(const std::vector<OcrLine>& lines) {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t i = 0;
    while (i < lines.size()) {
        std::size_t j = i;
        while (j < lines.size() && lines[j].page == lines[i].page) ++j;
        ranges.emplace_back(i, j);
        i = j;
    }
    return ranges;
}

int gap_between(const OcrLine& upper, const OcrLine& lower) { return lower.top - (upper.top + upper.height); }

std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char32_t c : text::decode_utf8(s)) {
        if (text::is_space(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

}  // namespace

std::vector<bool> isolated_lines(const std::vector<OcrLine>& input, const CandidateConfig& cfg) {
    std::vector<OcrLine> lines = input;
    sort_lines(lines);
    std::vector<bool> iso(lines.size(), false);
    for (const auto& [b, e] : page_ranges(lines)) {
        const double threshold = cfg.gap_factor * median_height(lines, b, e);
        for (std::size_t i = b; i < e; ++i) {
            const bool above = i == b || gap_between(lines[i - 1], lines[i]) > threshold;
            const bool below = i + 1 == e || gap_between(lines[i], lines[i + 1]) > threshold;
            iso[i] = above || below;
        }
    }
    return iso;
}

bool passes_ocr_filters(const HeadingCandidate& c, const CandidateConfig& cfg) {
    const std::string t = text::collapse_whitespace(c.text);
    if (t.empty()) return false;
    if (word_count(t) > static_cast<std::size_t>(cfg.max_words)) return false;
    if (t.back() == ',' || t.back() == ':') return false;
    std::string compact = t;
    std::erase(compact, ' ');
    if (std::all_of(compact.begin(), compact.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) return false;
    if (c.conf && *c.conf < cfg.min_conf) return false;
    return true;
}

std::vector<HeadingCandidate> select_ocr_candidates(std::vector<OcrLine> lines, const CandidateConfig& cfg) {
    sort_lines(lines);
    const auto iso = isolated_lines(lines, cfg);
    std::vector<HeadingCandidate> out;

    for (const auto& [b, e] : page_ranges(lines)) {
        const double threshold = cfg.gap_factor * median_height(lines, b, e);
        struct Run {
            std::size_t first, last;
        };
        std::vector<Run> kept;
        std::size_t i = b;
        while (i < e) {
            if (!iso[i]) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < e && iso[j + 1] && gap_between(lines[j], lines[j + 1]) <= threshold) ++j;

            HeadingCandidate c;
            c.page = lines[i].page;
            c.source = CandidateSource::ocr;
            int left = lines[i].left, top = lines[i].top, right = 0, bottom = 0;
            double conf = 0.0;
            for (std::size_t k = i; k <= j; ++k) {
                if (!c.text.empty()) c.text.push_back(' ');
                c.text += lines[k].text;
                left = std::min(left, lines[k].left);
                top = std::min(top, lines[k].top);
                right = std::max(right, lines[k].left + lines[k].width);
                bottom = std::max(bottom, lines[k].top + lines[k].height);
                conf += lines[k].conf;
            }
            c.text = text::collapse_whitespace(c.text);
            c.conf = conf / static_cast<double>(j - i + 1);
            c.features = CandidateFeatures{"", 0, false, bottom - top, right - left, left, top};
            if (passes_ocr_filters(c, cfg)) {
                out.push_back(std::move(c));
                kept.push_back(Run{i, j});
            }
            i = j + 1;
        }
        // Trailing text: the lines after a candidate up to the next kept candidate.
        const std::size_t base = out.size() - kept.size();
        for (std::size_t r = 0; r < kept.size(); ++r) {
            const std::size_t stop = r + 1 < kept.size() ? kept[r + 1].first : e;
            for (std::size_t k = kept[r].last + 1; k < stop; ++k) {
                append_capped(out[base + r].trailing_text, lines[k].text, cfg.trailing_cap);
            }
        }
    }
    return out;
}

std::vector<HeadingCandidate> fuse_candidates(const std::vector<HeadingCandidate>& xml,
                                              const std::vector<HeadingCandidate>& ocr, const MatchConfig& match) {
    std::vector<HeadingCandidate> out;
    for (const auto& o : ocr) {
        HeadingCandidate fused = o;
        const HeadingCandidate* best = nullptr;
        int best_ratio = -1;
        for (const auto& x : xml) {
            if (x.page != o.page) continue;
            if (!match_heading(x.text, o.text, match).matched && !match_heading(o.text, x.text, match).matched) continue;
            const int r = partial_ratio(squash(o.text), squash(x.text));
            if (r > best_ratio) {
                best_ratio = r;
                best = &x;
            }
        }
        if (best != nullptr) {
            fused.features.font_id = best->features.font_id;
            fused.features.font_size = best->features.font_size;
            fused.features.bold = best->features.bold;
            fused.source = CandidateSource::xml;
            if (fused.trailing_text.empty()) fused.trailing_text = best->trailing_text;
        }
        const bool duplicate = std::any_of(out.begin(), out.end(), [&](const HeadingCandidate& e) {
            return e.page == fused.page && match_heading(e.text, fused.text, match).matched &&
                   match_heading(fused.text, e.text, match).matched;
        });
        if (!duplicate) out.push_back(std::move(fused));
    }
    return out;
}

nlohmann::json to_json(const std::vector<HeadingCandidate>& candidates) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : candidates) {
        const auto& f = c.features;
        nlohmann::json j{{"text", c.text},
                         {"page", c.page},
                         {"features",
                          {{"font_id", f.font_id},
                           {"font_size", f.font_size},
                           {"bold", f.bold},
                           {"height", f.height},
                           {"width", f.width},
                           {"left", f.left},
                           {"top", f.top}}},
                         {"trailing_text", c.trailing_text},
                         {"source", to_string(c.source)}};
        j["conf"] = c.conf ? nlohmann::json(*c.conf) : nlohmann::json(nullptr);
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<HeadingCandidate> candidates_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("candidates JSON must be an array");
    std::vector<HeadingCandidate> out;
    for (const auto& e : j) {
        HeadingCandidate c;
        c.text = e.at("text").get<std::string>();
        c.page = e.at("page").get<int>();
        const auto& f = e.at("features");
        c.features = CandidateFeatures{f.value("font_id", std::string()), f.value("font_size", 0), f.value("bold", false),
                                       f.value("height", 0), f.value("width", 0), f.value("left", 0), f.value("top", 0)};
        c.trailing_text = e.value("trailing_text", std::string());
        const auto src = e.value("source", std::string("xml"));
        if (src != "xml" && src != "ocr") throw std::invalid_argument("unknown candidate source '" + src + "'");
        c.source = src == "xml" ? CandidateSource::xml : CandidateSource::ocr;
        if (e.contains("conf") && !e["conf"].is_null()) c.conf = e["conf"].get<double>();
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace bookseg
