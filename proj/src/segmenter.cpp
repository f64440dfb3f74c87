#include "bookseg/segmenter.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "bookseg/text.hpp"

namespace bookseg {

namespace {

bool heading_matches(std::string_view candidate, std::string_view heading, const MatchConfig& cfg) {
    return match_heading(candidate, heading, cfg).matched;
}

}  // namespace

SegmentationResult segment_document(const BookDocument& doc, const std::vector<DetectedHeading>& headings,
                                    const SegmenterOptions& opts) {
    for (const auto& h : headings) {
        if (text::collapse_whitespace(h.text).empty()) {
            throw std::invalid_argument("heading with empty text on page " + std::to_string(h.page));
        }
    }
    const MatchConfig& cfg = opts.match;
    const PageHeadingIndex index = build_page_index(headings);

    SegmentationResult result;
    result.file_key = doc.file_key;
    const int first_page = doc.pages.empty() ? 1 : doc.pages.front().number;
    Segment current{0, "", {}, first_page, first_page, 0, ""};

    auto log_missing_pages_before = [&](auto& it, int limit) {
        for (; it != index.end() && it->first < limit; ++it) {
            if (doc.find_page(it->first) != nullptr) continue;
            for (const auto& h : it->second) result.unmatched.push_back({h.text, it->first, doc.file_key});
        }
    };
    auto pending = index.begin();

    std::size_t line_base = 0;
    for (const Page& page : doc.pages) {
        log_missing_pages_before(pending, page.number);
        const auto lines = text_lines(page.nodes, opts.top_tolerance);

        const auto heads_it = index.find(page.number);
        if (heads_it == index.end()) {
            for (const auto& line : lines) current.content.push_back(line.text);
            if (!lines.empty()) current.end_page = page.number;
            line_base += lines.size();
            continue;
        }

        std::vector<std::size_t> line_of(page.nodes.size(), 0);
        for (std::size_t li = 0; li < lines.size(); ++li) {
            for (std::size_t ni : lines[li].nodes) line_of[ni] = line_base + li;
        }

        std::vector<std::string> formatted;
        formatted.reserve(page.nodes.size());
        for (const auto& node : page.nodes) formatted.push_back(concat_with_formatting(node));

        auto append_node = [&](std::size_t j) {
            if (formatted[j].empty()) return;
            current.content.push_back(formatted[j]);
            current.end_page = page.number;
        };
        auto open_section = [&](const IndexedHeading& h, std::size_t start_line, std::string anchor) {
            result.segments.push_back(std::move(current));
            current = Segment{h.level, h.text, {}, page.number, page.number, start_line, std::move(anchor)};
        };

        std::size_t cursor = 0;
        for (const auto& h : heads_it->second) {
            bool matched = false;
            for (; cursor < page.nodes.size(); ++cursor) {
                const std::string raw = raw_text(page.nodes[cursor]);
                if (heading_matches(raw, h.text, cfg) ||
                    (raw != formatted[cursor] && heading_matches(formatted[cursor], h.text, cfg))) {
                    open_section(h, line_of[cursor], formatted[cursor]);
                    ++cursor;
                    matched = true;
                    break;
                }
                append_node(cursor);
            }
            if (!matched) {
                // Match-only fallback: headings split across several nodes.
                // Never reaches back before the section that is open.
                const std::size_t first = current.start_line > line_base ? current.start_line - line_base : 0;
                for (std::size_t li = first; li < lines.size(); ++li) {
                    if (heading_matches(lines[li].text, h.text, cfg)) {
                        open_section(h, line_base + li, "");
                        matched = true;
                        break;
                    }
                }
            }
            if (!matched) result.unmatched.push_back({h.text, page.number, doc.file_key});
        }
        for (; cursor < page.nodes.size(); ++cursor) append_node(cursor);
        line_base += lines.size();
    }
    log_missing_pages_before(pending, std::numeric_limits<int>::max());

    result.segments.push_back(std::move(current));
    result.segments = merge_consecutive_duplicates(std::move(result.segments));
    return result;
}

std::vector<Segment> merge_consecutive_duplicates(std::vector<Segment> segments) {
    std::vector<Segment> out;
    out.reserve(segments.size());
    for (auto& seg : segments) {
        if (!out.empty() && out.back().heading == seg.heading && out.back().level == seg.level) {
            Segment& prev = out.back();
            if (!seg.anchor.empty()) prev.content.push_back(std::move(seg.anchor));
            prev.content.insert(prev.content.end(), std::make_move_iterator(seg.content.begin()),
                                std::make_move_iterator(seg.content.end()));
            prev.start_page = std::min(prev.start_page, seg.start_page);
            prev.end_page = std::max(prev.end_page, seg.end_page);
            continue;
        }
        out.push_back(std::move(seg));
    }
    return out;
}

std::size_t document_line_count(const BookDocument& doc, int top_tolerance) {
    std::size_t n = 0;
    for (const auto& page : doc.pages) n += text_lines(page.nodes, top_tolerance).size();
    return n;
}

namespace {

struct LevelledTitle {
    int level;
    const std::string* title;
    int page;
};

SectionTree build_tree(const std::vector<LevelledTitle>& items) {
    SectionTree tree;
    tree.nodes.push_back(SectionNode{0, "", 0, std::nullopt, {}});
    std::vector<std::size_t> stack{0};
    for (const auto& item : items) {
        if (item.level <= 0) continue;
        while (tree.nodes[stack.back()].level >= item.level) stack.pop_back();
        const std::size_t parent = stack.back();
        const std::size_t id = tree.nodes.size();
        tree.nodes.push_back(SectionNode{item.level, *item.title, item.page, parent, {}});
        tree.nodes[parent].children.push_back(id);
        stack.push_back(id);
    }
    return tree;
}

}  // namespace

SectionTree build_section_tree(const std::vector<Segment>& segments) {
    std::vector<LevelledTitle> items;
    items.reserve(segments.size());
    for (const auto& s : segments) items.push_back({s.level, &s.heading, s.start_page});
    return build_tree(items);
}

SectionTree build_section_tree(const std::vector<DetectedHeading>& headings) {
    std::vector<LevelledTitle> items;
    items.reserve(headings.size());
    for (const auto& h : headings) items.push_back({h.level, &h.text, h.page});
    return build_tree(items);
}

nlohmann::json to_json(const SegmentationResult& result) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : result.segments) {
        segs.push_back({{"level", s.level},
                        {"heading", s.heading},
                        {"start_page", s.start_page},
                        {"end_page", s.end_page},
                        {"start_line", s.start_line},
                        {"anchor", s.anchor},
                        {"content", s.content}});
    }
    nlohmann::json unmatched = nlohmann::json::array();
    for (const auto& u : result.unmatched) {
        unmatched.push_back({{"heading", u.heading}, {"page", u.page}, {"file_key", u.file_key}});
    }
    return {{"file_key", result.file_key}, {"segments", std::move(segs)}, {"unmatched", std::move(unmatched)}};
}

SegmentationResult segmentation_from_json(const nlohmann::json& j) {
    SegmentationResult r;
    r.file_key = j.at("file_key").get<std::string>();
    for (const auto& s : j.at("segments")) {
        Segment seg;
        seg.level = s.at("level").get<int>();
        seg.heading = s.at("heading").get<std::string>();
        seg.start_page = s.at("start_page").get<int>();
        seg.end_page = s.at("end_page").get<int>();
        seg.start_line = s.at("start_line").get<std::size_t>();
        seg.anchor = s.value("anchor", std::string());
        seg.content = s.at("content").get<std::vector<std::string>>();
        r.segments.push_back(std::move(seg));
    }
    for (const auto& u : j.value("unmatched", nlohmann::json::array())) {
        r.unmatched.push_back({u.at("heading").get<std::string>(), u.at("page").get<int>(),
                               u.value("file_key", r.file_key)});
    }
    return r;
}

std::string unmatched_to_jsonl(const std::vector<UnmatchedHeading>& unmatched) {
    std::string out;
    for (const auto& u : unmatched) {
        out += nlohmann::json{{"heading", u.heading}, {"page", u.page}, {"file_key", u.file_key}}.dump();
        out.push_back('\n');
    }
    return out;
}

}  // namespace bookseg
