#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bookseg/document.hpp"
#include "bookseg/headings.hpp"
#include "bookseg/matching.hpp"

namespace bookseg {

struct Segment {
    int level = 0;
    std::string heading;
    std::vector<std::string> content;
    int start_page = 1;
    int end_page = 1;
    /// Index of the reading-order line where the segment opens, counted over
    /// the text-bearing lines of the whole document.
    std::size_t start_line = 0;
    /// Text of the node that opened the segment; empty for the preamble and
    /// for segments opened by the line-level fallback.
    std::string anchor;

    bool operator==(const Segment&) const = default;
};

struct UnmatchedHeading {
    std::string heading;
    int page = 0;
    std::string file_key;

    bool operator==(const UnmatchedHeading&) const = default;
};

struct SegmentationResult {
    std::string file_key;
    std::vector<Segment> segments;
    std::vector<UnmatchedHeading> unmatched;
};

struct SegmenterOptions {
    MatchConfig match;
    int top_tolerance = kDefaultTopTolerance;
};

/// Opens a new section at each heading found on its indicated page.
///
/// Pages without an expected heading contribute their reading-order lines to
/// the open section. On pages with headings a single forward cursor walks the
/// text nodes: each heading, in index order, consumes nodes up to and
/// including the first node that matches it; skipped nodes go to the section
/// that was open. A heading that no remaining node matches consumes the rest
/// of the page and may still open an (empty) section through a match on the
/// reading-order lines at or after the open section. Headings that match
/// nothing, or whose page does not exist, are logged as unmatched.
///
/// Throws std::invalid_argument for headings with blank text.
SegmentationResult segment_document(const BookDocument& doc, const std::vector<DetectedHeading>& headings,
                                    const SegmenterOptions& opts = {});

/// Merges adjacent segments with equal (heading, level). The second
/// segment's anchor text becomes ordinary content of the merged segment.
std::vector<Segment> merge_consecutive_duplicates(std::vector<Segment> segments);

/// Number of text-bearing reading-order lines in the document.
std::size_t document_line_count(const BookDocument& doc, int top_tolerance = kDefaultTopTolerance);

struct SectionNode {
    int level = 0;
    std::string heading;
    int page = 0;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
};

/// Ordered tree with a synthetic level-0 root at index 0; nodes are stored in pre-order.
struct SectionTree {
    std::vector<SectionNode> nodes;

    const SectionNode& root() const { return nodes.front(); }
    std::size_t size() const { return nodes.size(); }
};

/// Each segment becomes a child of the most recent segment with a strictly
/// smaller level. Level-0 segments (the preamble) are folded into the root.
SectionTree build_section_tree(const std::vector<Segment>& segments);
SectionTree build_section_tree(const std::vector<DetectedHeading>& headings);

nlohmann::json to_json(const SegmentationResult& result);
SegmentationResult segmentation_from_json(const nlohmann::json& j);
/// One JSON object per line: {heading, page, file_key}.
std::string unmatched_to_jsonl(const std::vector<UnmatchedHeading>& unmatched);

}  // namespace bookseg
