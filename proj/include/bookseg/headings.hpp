#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bookseg/document.hpp"

namespace bookseg {

enum class HeadingSource { toc, candidate, llm, external };

std::string_view to_string(HeadingSource s);
HeadingSource parse_heading_source(std::string_view s);

/// A confirmed title. Level 0 is reserved for the synthetic segment that
/// precedes the first heading.
struct DetectedHeading {
    int level = 1;
    std::string text;
    int page = 1;
    HeadingSource source = HeadingSource::toc;

    bool operator==(const DetectedHeading&) const = default;
};

struct IndexedHeading {
    std::string text;
    int level = 1;

    bool operator==(const IndexedHeading&) const = default;
};

/// Page number -> headings expected on that page, in input order.
using PageHeadingIndex = std::map<int, std::vector<IndexedHeading>>;

class NoOutlineError : public std::runtime_error {
public:
    NoOutlineError() : std::runtime_error("no outline metadata") {}
};

/// Pre-order flattening of the document outline (source = toc). Page numbers
/// are copied verbatim. Throws NoOutlineError when the outline is absent or empty.
std::vector<DetectedHeading> headings_from_outline(const BookDocument& doc);

/// Stable sort by page, then bucket.
PageHeadingIndex build_page_index(const std::vector<DetectedHeading>& headings);

// Headings JSON: [{level, text, page, source}].
nlohmann::json to_json(const std::vector<DetectedHeading>& headings);
std::vector<DetectedHeading> headings_from_json(const nlohmann::json& j);

}  // namespace bookseg
