#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bookseg {

struct FontSpec {
    std::string id;
    int size = 0;
    std::string family;
    std::string color;

    bool operator==(const FontSpec&) const = default;
};

/// Font id assigned to text nodes whose font attribute does not resolve.
inline constexpr std::string_view kUnknownFontId = "__unknown__";

/// One positioned <text> fragment. `content` is an XML fragment: character
/// data is entity-escaped and inline bold/italic runs are kept as literal
/// <b>...</b> / <i>...</i> markers.
struct TextNode {
    int page = 1;
    int top = 0;
    int left = 0;
    int width = 0;
    int height = 0;
    std::string font;
    std::string content;

    bool operator==(const TextNode&) const = default;
};

struct OutlineEntry {
    std::string title;
    int page = 1;
    int level = 1;
    std::vector<OutlineEntry> children;

    bool operator==(const OutlineEntry&) const = default;
};

struct Page {
    int number = 1;
    int width = 0;
    int height = 0;
    std::vector<TextNode> nodes;

    bool operator==(const Page&) const = default;
};

struct BookDocument {
    std::string file_key;
    std::vector<Page> pages;
    std::vector<FontSpec> fonts;
    std::optional<std::vector<OutlineEntry>> outline;
    std::vector<std::string> warnings;

    const FontSpec* find_font(std::string_view id) const;
    const Page* find_page(int number) const;
    std::size_t node_count() const;

    bool operator==(const BookDocument&) const = default;
};

/// A reading-order line: fragments sharing a vertical coordinate, sorted by left.
struct Line {
    std::string text;
    int top = 0;
    int left = 0;
    int width = 0;
    int height = 0;
    /// Indices into the page's node list, in left-to-right order.
    std::vector<std::size_t> nodes;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " at byte " + std::to_string(byte_offset)), offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

struct ParseOptions {
    std::string file_key;
    std::size_t chunk_size = 64 * 1024;
};

/// Parses pdftohtml -xml output. Reads the stream in chunks.
BookDocument parse_book(std::istream& in, const ParseOptions& opts = {});
BookDocument parse_book(std::string_view xml, const ParseOptions& opts = {});
BookDocument parse_book_file(const std::string& path);

/// Node content with inline markers removed and entities decoded.
std::string raw_text(const TextNode& node);

/// All character data of the node in document order, whitespace runs collapsed, ends trimmed.
std::string concat_with_formatting(const TextNode& node);

bool is_bold(const TextNode& node);
bool is_italic(const TextNode& node);

inline constexpr int kDefaultTopTolerance = 2;

/// Groups nodes of one page into reading-order lines. A line is anchored at
/// the top of its first node; nodes within `tolerance` px of the anchor join it.
/// Lines whose text is empty after trimming are kept so that node indices stay
/// complete; callers that need text-bearing lines use `text_lines`.
std::vector<Line> combine_by_top(const std::vector<TextNode>& nodes, int tolerance = kDefaultTopTolerance);

/// combine_by_top with empty lines removed.
std::vector<Line> text_lines(const std::vector<TextNode>& nodes, int tolerance = kDefaultTopTolerance);

/// Pre-order flattening of an outline forest.
std::vector<const OutlineEntry*> flatten_outline(const std::vector<OutlineEntry>& forest);

// Canonical document JSON.
nlohmann::json to_json(const BookDocument& doc);
BookDocument document_from_json(const nlohmann::json& j);

/// Loads a document from pdftohtml XML, or from canonical JSON when the path ends in ".json".
BookDocument load_document(const std::string& path);

/// File name without directory and extension.
std::string file_key_for_path(const std::string& path);

}  // namespace bookseg
