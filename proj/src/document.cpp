#include "bookseg/document.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <expat.h>

#include "bookseg/text.hpp"

namespace bookseg {

const FontSpec* BookDocument::find_font(std::string_view id) const {
    for (const auto& f : fonts) {
        if (f.id == id) return &f;
    }
    return nullptr;
}

const Page* BookDocument::find_page(int number) const {
    auto it = std::lower_bound(pages.begin(), pages.end(), number,
                               [](const Page& p, int n) { return p.number < n; });
    if (it == pages.end() || it->number != number) return nullptr;
    return &*it;
}

std::size_t BookDocument::node_count() const {
    return std::accumulate(pages.begin(), pages.end(), std::size_t{0},
                           [](std::size_t n, const Page& p) { return n + p.nodes.size(); });
}

namespace {

struct FlatItem {
    int level;
    int page;
    std::string title;
};

class XmlBuilder {
public:
    explicit XmlBuilder(XML_Parser parser, std::string file_key) : parser_(parser) {
        doc_.file_key = std::move(file_key);
    }

    void start(const char* name, const char** attrs) {
        if (failed_) return;
        const std::string_view tag(name);
        if (in_text_ > 0) {
            ++in_text_;
            inline_stack_.emplace_back(tag);
            if (tag == "b" || tag == "i") node_.content += "<" + std::string(tag) + ">";
            return;
        }
        if (tag == "page") {
            Page p;
            p.number = int_attr(attrs, "number", 0);
            p.width = int_attr(attrs, "width", 0);
            p.height = int_attr(attrs, "height", 0);
            if (p.number < 1) return fail("page number must be >= 1");
            if (!doc_.pages.empty() && p.number <= doc_.pages.back().number) {
                return fail("page numbers must strictly increase (page " + std::to_string(p.number) + ")");
            }
            doc_.pages.push_back(std::move(p));
        } else if (tag == "fontspec") {
            FontSpec f;
            f.id = str_attr(attrs, "id");
            f.size = int_attr(attrs, "size", 0);
            f.family = str_attr(attrs, "family");
            f.color = str_attr(attrs, "color");
            if (f.size <= 0) {
                doc_.warnings.push_back("font " + f.id + " has non-positive size; using 1");
                f.size = 1;
            }
            if (const FontSpec* prev = doc_.find_font(f.id)) {
                if (!(*prev == f)) doc_.warnings.push_back("duplicate fontspec id " + f.id + " ignored");
                return;
            }
            doc_.fonts.push_back(std::move(f));
        } else if (tag == "text") {
            if (doc_.pages.empty()) return fail("text element outside of a page");
            node_ = TextNode{};
            node_.page = doc_.pages.back().number;
            node_.top = std::max(0, int_attr(attrs, "top", 0));
            node_.left = std::max(0, int_attr(attrs, "left", 0));
            node_.width = std::max(0, int_attr(attrs, "width", 0));
            node_.height = std::max(0, int_attr(attrs, "height", 0));
            node_.font = str_attr(attrs, "font");
            in_text_ = 1;
        } else if (tag == "outline") {
            ++outline_depth_;
            saw_outline_ = true;
        } else if (tag == "item" && outline_depth_ > 0) {
            const int level = outline_depth_ + static_cast<int>(open_items_.size());
            open_items_.push_back(items_.size());
            items_.push_back(FlatItem{level, int_attr(attrs, "page", 0), {}});
        }
    }

    void end(const char* name) {
        if (failed_) return;
        const std::string_view tag(name);
        if (in_text_ > 1) {
            --in_text_;
            if (tag == "b" || tag == "i") node_.content += "</" + std::string(tag) + ">";
            inline_stack_.pop_back();
            return;
        }
        if (in_text_ == 1 && tag == "text") {
            in_text_ = 0;
            doc_.pages.back().nodes.push_back(std::move(node_));
            node_ = TextNode{};
        } else if (tag == "outline") {
            --outline_depth_;
        } else if (tag == "item" && !open_items_.empty()) {
            auto& item = items_[open_items_.back()];
            item.title = text::collapse_whitespace(item.title);
            open_items_.pop_back();
        }
    }

    void chars(const char* s, int len) {
        if (failed_) return;
        const std::string_view data(s, static_cast<std::size_t>(len));
        if (in_text_ > 0) {
            node_.content += text::xml_escape(data);
        } else if (!open_items_.empty()) {
            items_[open_items_.back()].title.append(data);
        }
    }

    BookDocument finish() {
        resolve_fonts();
        if (saw_outline_) doc_.outline = build_forest();
        return std::move(doc_);
    }

    bool failed() const { return failed_; }
    const std::string& error() const { return error_; }
    std::size_t error_offset() const { return error_offset_; }

private:
    static const char* find_attr(const char** attrs, const char* key) {
        for (int i = 0; attrs[i] != nullptr; i += 2) {
            if (std::strcmp(attrs[i], key) == 0) return attrs[i + 1];
        }
        return nullptr;
    }

    static std::string str_attr(const char** attrs, const char* key) {
        const char* v = find_attr(attrs, key);
        return v ? std::string(v) : std::string();
    }

    // pdftohtml emits integer pixels; some builds emit decimals, which are rounded.
    static int int_attr(const char** attrs, const char* key, int fallback) {
        const char* v = find_attr(attrs, key);
        if (v == nullptr || *v == '\0') return fallback;
        char* end = nullptr;
        const double d = std::strtod(v, &end);
        if (end == v) return fallback;
        return static_cast<int>(std::lround(d));
    }

    void fail(std::string msg) {
        failed_ = true;
        error_ = std::move(msg);
        error_offset_ = static_cast<std::size_t>(XML_GetCurrentByteIndex(parser_));
        XML_StopParser(parser_, XML_FALSE);
    }

    void resolve_fonts() {
        bool need_sentinel = false;
        for (auto& page : doc_.pages) {
            for (auto& node : page.nodes) {
                if (doc_.find_font(node.font) != nullptr) continue;
                doc_.warnings.push_back("text on page " + std::to_string(page.number) + " references unknown font '" +
                                        node.font + "'");
                node.font = std::string(kUnknownFontId);
                need_sentinel = true;
            }
        }
        if (need_sentinel && doc_.find_font(kUnknownFontId) == nullptr) {
            doc_.fonts.push_back(FontSpec{std::string(kUnknownFontId), 1, "unknown", "#000000"});
        }
    }

    std::vector<OutlineEntry> build_forest() {
        std::vector<OutlineEntry> forest;
        // Path of child indices from the forest root to the last inserted entry.
        std::vector<std::size_t> path;
        for (auto& item : items_) {
            int level = item.level;
            const int max_level = static_cast<int>(path.size()) + 1;
            if (level > max_level) {
                doc_.warnings.push_back("outline item '" + item.title + "' skips a level; attached at level " +
                                        std::to_string(max_level));
                level = max_level;
            }
            path.resize(static_cast<std::size_t>(level - 1));
            std::vector<OutlineEntry>* siblings = &forest;
            for (std::size_t idx : path) siblings = &(*siblings)[idx].children;
            siblings->push_back(OutlineEntry{std::move(item.title), item.page, level, {}});
            path.push_back(siblings->size() - 1);
        }
        return forest;
    }

    XML_Parser parser_;
    BookDocument doc_;
    TextNode node_;
    int in_text_ = 0;
    std::vector<std::string> inline_stack_;
    int outline_depth_ = 0;
    bool saw_outline_ = false;
    std::vector<FlatItem> items_;
    std::vector<std::size_t> open_items_;
    bool failed_ = false;
    std::string error_;
    std::size_t error_offset_ = 0;
};

void XMLCALL on_start(void* user, const XML_Char* name, const XML_Char** attrs) {
    static_cast<XmlBuilder*>(user)->start(name, attrs);
}

void XMLCALL on_end(void* user, const XML_Char* name) { static_cast<XmlBuilder*>(user)->end(name); }

void XMLCALL on_chars(void* user, const XML_Char* s, int len) { static_cast<XmlBuilder*>(user)->chars(s, len); }

struct ParserDeleter {
    void operator()(XML_ParserStruct* p) const { XML_ParserFree(p); }
};

}  // namespace

BookDocument parse_book(std::istream& in, const ParseOptions& opts) {
    std::unique_ptr<XML_ParserStruct, ParserDeleter> parser(XML_ParserCreate("UTF-8"));
    if (!parser) throw std::runtime_error("cannot allocate XML parser");
    XmlBuilder builder(parser.get(), opts.file_key);
    XML_SetUserData(parser.get(), &builder);
    XML_SetElementHandler(parser.get(), on_start, on_end);
    XML_SetCharacterDataHandler(parser.get(), on_chars);

    std::vector<char> buf(std::max<std::size_t>(opts.chunk_size, 1));
    bool done = false;
    while (!done) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        done = got < static_cast<std::streamsize>(buf.size());
        if (XML_Parse(parser.get(), buf.data(), static_cast<int>(got), done ? XML_TRUE : XML_FALSE) ==
            XML_STATUS_ERROR) {
            if (builder.failed()) throw ParseError(builder.error(), builder.error_offset());
            throw ParseError(XML_ErrorString(XML_GetErrorCode(parser.get())),
                             static_cast<std::size_t>(XML_GetCurrentByteIndex(parser.get())));
        }
    }
    return builder.finish();
}

BookDocument parse_book(std::string_view xml, const ParseOptions& opts) {
    std::istringstream in{std::string(xml)};
    return parse_book(in, opts);
}

BookDocument parse_book_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file not found: " + path);
    ParseOptions opts;
    opts.file_key = file_key_for_path(path);
    return parse_book(in, opts);
}

std::string file_key_for_path(const std::string& path) {
    auto name = std::filesystem::path(path).filename().string();
    for (const char* suffix : {".segments.json", ".headings.json", ".candidates.json", ".toc.json", ".eval.json", ".transcript.json", ".unmatched.jsonl", ".json", ".xml", ".tsv"}) {
        const std::string_view sv(suffix);
        if (name.size() > sv.size() && name.compare(name.size() - sv.size(), sv.size(), sv) == 0) {
            return name.substr(0, name.size() - sv.size());
        }
    }
    return std::filesystem::path(name).stem().string();
}

namespace {

// Walks the stored content fragment, calling on_text for decoded character data.
template <typename OnText, typename OnTag>
void walk_content(std::string_view content, OnText&& on_text, OnTag&& on_tag) {
    std::string pending;
    std::size_t i = 0;
    while (i < content.size()) {
        const char c = content[i];
        if (c == '<') {
            const auto close = content.find('>', i);
            if (close == std::string_view::npos) {
                pending.append(content.substr(i));
                break;
            }
            if (!pending.empty()) {
                on_text(pending);
                pending.clear();
            }
            on_tag(content.substr(i + 1, close - i - 1));
            i = close + 1;
        } else if (c == '&') {
            const auto semi = content.find(';', i);
            const auto ent = semi == std::string_view::npos ? std::string_view{} : content.substr(i + 1, semi - i - 1);
            if (ent == "amp") pending.push_back('&');
            else if (ent == "lt") pending.push_back('<');
            else if (ent == "gt") pending.push_back('>');
            else if (ent == "quot") pending.push_back('"');
            else if (ent == "apos") pending.push_back('\'');
            else {
                pending.push_back('&');
                ++i;
                continue;
            }
            i = semi + 1;
        } else {
            pending.push_back(c);
            ++i;
        }
    }
    if (!pending.empty()) on_text(pending);
}

}  // namespace

std::string raw_text(const TextNode& node) {
    std::string out;
    walk_content(node.content, [&](const std::string& s) { out += s; }, [](std::string_view) {});
    return out;
}

std::string concat_with_formatting(const TextNode& node) {
    std::string joined;
    walk_content(
        node.content, [&](const std::string& s) { joined += s; },
        // Inline element boundaries never glue words across a whitespace run.
        [](std::string_view) {});
    return text::collapse_whitespace(joined);
}

bool is_bold(const TextNode& node) { return node.content.find("<b>") != std::string::npos; }

bool is_italic(const TextNode& node) { return node.content.find("<i>") != std::string::npos; }

std::vector<Line> combine_by_top(const std::vector<TextNode>& nodes, int tolerance) {
    std::vector<std::size_t> order(nodes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (nodes[a].top != nodes[b].top) return nodes[a].top < nodes[b].top;
        return nodes[a].left < nodes[b].left;
    });

    std::vector<Line> lines;
    std::size_t i = 0;
    while (i < order.size()) {
        const int anchor = nodes[order[i]].top;
        std::size_t j = i;
        while (j < order.size() && nodes[order[j]].top - anchor <= tolerance) ++j;

        Line line;
        line.nodes.assign(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(j));
        std::stable_sort(line.nodes.begin(), line.nodes.end(),
                         [&](std::size_t a, std::size_t b) { return nodes[a].left < nodes[b].left; });
        int top = nodes[line.nodes.front()].top;
        int left = nodes[line.nodes.front()].left;
        int right = left;
        int bottom = top;
        for (std::size_t idx : line.nodes) {
            const auto& n = nodes[idx];
            top = std::min(top, n.top);
            left = std::min(left, n.left);
            right = std::max(right, n.left + n.width);
            bottom = std::max(bottom, n.top + n.height);
            const auto piece = concat_with_formatting(n);
            if (piece.empty()) continue;
            if (!line.text.empty()) line.text.push_back(' ');
            line.text += piece;
        }
        line.top = top;
        line.left = left;
        line.width = right - left;
        line.height = bottom - top;
        lines.push_back(std::move(line));
        i = j;
    }
    return lines;
}

std::vector<Line> text_lines(const std::vector<TextNode>& nodes, int tolerance) {
    auto lines = combine_by_top(nodes, tolerance);
    std::erase_if(lines, [](const Line& l) { return l.text.empty(); });
    return lines;
}

std::vector<const OutlineEntry*> flatten_outline(const std::vector<OutlineEntry>& forest) {
    std::vector<const OutlineEntry*> out;
    auto visit = [&](auto&& self, const OutlineEntry& e) -> void {
        out.push_back(&e);
        for (const auto& c : e.children) self(self, c);
    };
    for (const auto& e : forest) visit(visit, e);
    return out;
}

namespace {

nlohmann::json outline_to_json(const OutlineEntry& e) {
    nlohmann::json children = nlohmann::json::array();
    for (const auto& c : e.children) children.push_back(outline_to_json(c));
    return {{"title", e.title}, {"page", e.page}, {"level", e.level}, {"children", std::move(children)}};
}

OutlineEntry outline_from_json(const nlohmann::json& j) {
    OutlineEntry e;
    e.title = j.at("title").get<std::string>();
    e.page = j.at("page").get<int>();
    e.level = j.at("level").get<int>();
    for (const auto& c : j.value("children", nlohmann::json::array())) e.children.push_back(outline_from_json(c));
    return e;
}

}  // namespace

nlohmann::json to_json(const BookDocument& doc) {
    nlohmann::json fonts = nlohmann::json::array();
    for (const auto& f : doc.fonts) {
        fonts.push_back({{"id", f.id}, {"size", f.size}, {"family", f.family}, {"color", f.color}});
    }
    nlohmann::json pages = nlohmann::json::array();
    for (const auto& p : doc.pages) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : p.nodes) {
            nodes.push_back({{"top", n.top},
                             {"left", n.left},
                             {"width", n.width},
                             {"height", n.height},
                             {"font", n.font},
                             {"content", n.content}});
        }
        pages.push_back({{"number", p.number}, {"width", p.width}, {"height", p.height}, {"nodes", std::move(nodes)}});
    }
    nlohmann::json j{{"format", "bookseg-document/1"},
                     {"file_key", doc.file_key},
                     {"fonts", std::move(fonts)},
                     {"pages", std::move(pages)},
                     {"warnings", doc.warnings}};
    if (doc.outline) {
        nlohmann::json outline = nlohmann::json::array();
        for (const auto& e : *doc.outline) outline.push_back(outline_to_json(e));
        j["outline"] = std::move(outline);
    } else {
        j["outline"] = nullptr;
    }
    return j;
}

BookDocument document_from_json(const nlohmann::json& j) {
    BookDocument doc;
    doc.file_key = j.at("file_key").get<std::string>();
    for (const auto& f : j.at("fonts")) {
        doc.fonts.push_back(FontSpec{f.at("id").get<std::string>(), f.at("size").get<int>(),
                                     f.value("family", std::string()), f.value("color", std::string())});
    }
    for (const auto& pj : j.at("pages")) {
        Page p;
        p.number = pj.at("number").get<int>();
        p.width = pj.value("width", 0);
        p.height = pj.value("height", 0);
        for (const auto& nj : pj.at("nodes")) {
            TextNode n;
            n.page = p.number;
            n.top = nj.at("top").get<int>();
            n.left = nj.at("left").get<int>();
            n.width = nj.value("width", 0);
            n.height = nj.value("height", 0);
            n.font = nj.at("font").get<std::string>();
            n.content = nj.at("content").get<std::string>();
            p.nodes.push_back(std::move(n));
        }
        if (!doc.pages.empty() && p.number <= doc.pages.back().number) {
            throw std::runtime_error("document JSON: page numbers must strictly increase");
        }
        doc.pages.push_back(std::move(p));
    }
    if (j.contains("outline") && !j["outline"].is_null()) {
        std::vector<OutlineEntry> forest;
        for (const auto& e : j["outline"]) forest.push_back(outline_from_json(e));
        doc.outline = std::move(forest);
    }
    if (j.contains("warnings")) doc.warnings = j["warnings"].get<std::vector<std::string>>();
    return doc;
}

BookDocument load_document(const std::string& path) {
    if (path.size() > 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("file not found: " + path);
        return document_from_json(nlohmann::json::parse(in));
    }
    return parse_book_file(path);
}

}  // namespace bookseg
