#include "bookseg/headings.hpp"

#include <algorithm>

namespace bookseg {

std::string_view to_string(HeadingSource s) {
    switch (s) {
        case HeadingSource::toc: return "toc";
        case HeadingSource::candidate: return "candidate";
        case HeadingSource::llm: return "llm";
        case HeadingSource::external: return "external";
    }
    return "external";
}

HeadingSource parse_heading_source(std::string_view s) {
    if (s == "toc") return HeadingSource::toc;
    if (s == "candidate") return HeadingSource::candidate;
    if (s == "llm") return HeadingSource::llm;
    if (s == "external") return HeadingSource::external;
    throw std::invalid_argument("unknown heading source '" + std::string(s) + "'");
}

std::vector<DetectedHeading> headings_from_outline(const BookDocument& doc) {
    if (!doc.outline || doc.outline->empty()) throw NoOutlineError();
    std::vector<DetectedHeading> out;
    for (const OutlineEntry* e : flatten_outline(*doc.outline)) {
        out.push_back(DetectedHeading{e->level, e->title, e->page, HeadingSource::toc});
    }
    return out;
}

PageHeadingIndex build_page_index(const std::vector<DetectedHeading>& headings) {
    std::vector<const DetectedHeading*> sorted;
    sorted.reserve(headings.size());
    for (const auto& h : headings) sorted.push_back(&h);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const DetectedHeading* a, const DetectedHeading* b) { return a->page < b->page; });
    PageHeadingIndex index;
    for (const auto* h : sorted) index[h->page].push_back(IndexedHeading{h->text, h->level});
    return index;
}

nlohmann::json to_json(const std::vector<DetectedHeading>& headings) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& h : headings) {
        arr.push_back({{"level", h.level}, {"text", h.text}, {"page", h.page}, {"source", to_string(h.source)}});
    }
    return arr;
}

std::vector<DetectedHeading> headings_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::invalid_argument("headings JSON must be an array");
    std::vector<DetectedHeading> out;
    for (const auto& e : j) {
        DetectedHeading h;
        h.level = e.at("level").get<int>();
        h.text = e.at("text").get<std::string>();
        h.page = e.at("page").get<int>();
        h.source = parse_heading_source(e.value("source", std::string("external")));
        if (h.level < 0) throw std::invalid_argument("heading level must be >= 0");
        out.push_back(std::move(h));
    }
    return out;
}

}  // namespace bookseg
