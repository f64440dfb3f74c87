#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "bookseg/candidates.hpp"
#include "bookseg/text.hpp"
#include "../support/synth.hpp"
#include "../support/util.hpp"

using namespace bookseg;
using testutil::node;

namespace {

BookDocument doc_with(std::vector<TextNode> nodes) {
    BookDocument d;
    d.file_key = "t";
    d.fonts = {{"0", 11, "Times", "#000"}, {"1", 16, "Helvetica", "#000"}, {"2", 9, "Courier", "#000"}};
    std::map<int, Page> pages;
    for (auto& n : nodes) {
        auto& p = pages[n.page];
        p.number = n.page;
        p.nodes.push_back(std::move(n));
    }
    for (auto& [_, p] : pages) d.pages.push_back(std::move(p));
    return d;
}

std::vector<TextNode> filler(int page, int from_top, int count, std::string font = "0") {
    std::vector<TextNode> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(node(from_top + 18 * i, 72, "lorem ipsum dolor sit amet consectetur", font, page));
    }
    return out;
}

OcrLine line(int page, int top, std::string text, int height = 14, double conf = 95) {
    OcrLine l;
    l.page = page;
    l.top = top;
    l.left = 72;
    l.width = static_cast<int>(text.size()) * 6;
    l.height = height;
    l.text = std::move(text);
    l.conf = conf;
    return l;
}

// A page of body lines 18 apart with `extra` lines inserted at the given tops.
std::vector<OcrLine> page_lines(int page, int body_lines, const std::vector<OcrLine>& extra) {
    std::vector<OcrLine> out;
    int top = 100;
    for (int i = 0; i < body_lines; ++i) {
        for (const auto& e : extra) {
            if (e.line_index == i) {
                top += 30;
                auto x = e;
                x.page = page;
                x.top = top;
                out.push_back(x);
                top += x.height + 30;
            }
        }
        out.push_back(line(page, top, "lorem ipsum dolor sit amet body line " + std::to_string(i)));
        top += 18;
    }
    return out;
}

OcrLine planted(int at, std::string text, double conf = 95) {
    auto l = line(1, 0, std::move(text), 14, conf);
    l.line_index = at;
    return l;
}

std::set<std::string> texts(const std::vector<HeadingCandidate>& c) {
    std::set<std::string> out;
    for (const auto& x : c) out.insert(x.text);
    return out;
}

}  // namespace

TEST_SUITE("candidates") {

TEST_CASE("font shares") {
    const auto one = doc_with(filler(1, 100, 3));
    const auto s1 = font_statistics(one);
    REQUIRE(s1.size() == 1);
    CHECK(s1.at("0") == 1.0);

    const auto two = doc_with({node(100, 72, "aa b", "0"), node(120, 72, "c", "1")});
    const auto s2 = font_statistics(two);
    CHECK(s2.at("0") == doctest::Approx(0.75));
    CHECK(s2.at("1") == doctest::Approx(0.25));
    CHECK(body_font(two) == "0");

    CHECK_THROWS_AS(font_statistics(doc_with({})), std::invalid_argument);
}

TEST_CASE("shares on a synthetic book match a separate tally") {
    std::mt19937_64 rng(8);
    const auto book = synth::make_book(rng, {.pages = 6, .headings = 8});
    const auto doc = parse_book(std::string_view(book.xml));
    std::map<std::string, double> tally;
    double total = 0;
    for (const auto& page : book.layout) {
        for (const auto& item : page.items) {
            for (char32_t c : text::decode_utf8(item.text)) {
                if (text::is_space(c)) continue;
                tally[item.font] += 1;
                total += 1;
            }
        }
    }
    const auto shares = font_statistics(doc);
    double sum = 0;
    for (const auto& [font, share] : shares) {
        CHECK(share == doctest::Approx(tally[font] / total).epsilon(1e-12));
        sum += share;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rare font nodes become candidates") {
    std::mt19937_64 rng(10);
    const auto book = synth::make_book(rng, {.pages = 10, .headings = 12, .heading_share = 0.05});
    const auto doc = parse_book(std::string_view(book.xml));
    const auto c = select_xml_candidates(doc);
    std::set<std::string> planted;
    for (const auto& h : book.headings) planted.insert(h.title);
    CHECK(texts(c) == planted);
    CHECK(c.size() == book.headings.size());
    for (const auto& x : c) {
        CHECK(x.features.font_id == "1");
        CHECK(x.features.bold);
        CHECK(x.features.font_size == 16);
        CHECK(x.source == CandidateSource::xml);
        CHECK(x.trailing_text.size() <= 300);
    }
    CHECK(std::is_sorted(c.begin(), c.end(), [](const HeadingCandidate& a, const HeadingCandidate& b) {
        return std::tie(a.page, a.features.top) < std::tie(b.page, b.features.top);
    }));
}

TEST_CASE("homogeneous book yields nothing") {
    std::mt19937_64 rng(11);
    const auto book = synth::make_book(rng, {.pages = 5, .headings = 6, .homogeneous = true});
    CHECK(select_xml_candidates(parse_book(std::string_view(book.xml))).empty());
}

TEST_CASE("stacked lines of one font merge") {
    auto nodes = filler(1, 300, 40);
    nodes.push_back(node(100, 72, "Part One", "1"));
    nodes.push_back(node(120, 72, "General Rules", "1"));  // gap 6 < 1.5 x 14
    nodes.push_back(node(200, 72, "Part Two", "1"));
    nodes.push_back(node(260, 72, "Other Rules", "1"));  // gap 46, separate
    auto d = doc_with(nodes);
    const auto c = select_xml_candidates(d);
    REQUIRE(c.size() == 3);
    CHECK(c[0].text == "Part One General Rules");
    CHECK(c[0].features.height == 34);
    CHECK(c[1].text == "Part Two");
    CHECK(c[2].text == "Other Rules");
    CHECK(c[2].trailing_text.rfind("lorem ipsum", 0) == 0);
    CHECK(c[0].trailing_text.empty());  // nothing in body font before the next candidate
}

TEST_CASE("occurrence floor and trailing cap") {
    auto nodes = filler(1, 300, 40);
    nodes.push_back(node(100, 72, "Once", "1"));
    nodes.push_back(node(200, 72, "Twice", "1"));
    CHECK(select_xml_candidates(doc_with(nodes)).empty());

    nodes.push_back(node(250, 72, "Thrice", "1"));
    CandidateConfig cfg;
    cfg.trailing_cap = 20;
    const auto c = select_xml_candidates(doc_with(nodes), cfg);
    REQUIRE(c.size() == 3);
    CHECK(text::decode_utf8(c[2].trailing_text).size() <= 20);
    CHECK_FALSE(c[2].trailing_text.empty());

    cfg.min_occurrences = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("tsv parsing") {
    const std::string header = "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext\n";
    CHECK(parse_ocr_tsv("").lines.empty());
    CHECK(parse_ocr_tsv(header).lines.empty());

    const auto r = parse_ocr_tsv(header +
                                 "1\t1\t0\t0\t0\t0\t0\t0\t900\t1200\t-1\t\n"
                                 "5\t1\t1\t1\t1\t1\t100\t50\t40\t12\t90\tw1\n"
                                 "5\t1\t1\t1\t1\t2\t150\t48\t30\t16\t80\tw2\n"
                                 "5\t1\t1\t1\t2\t1\t100\t80\t40\t12\t70\tnext\n"
                                 "5\t1\t1\t1\t2\tx\t100\t80\t40\t12\t70\tbad\n"
                                 "5\t1\t1\t1\t2\t2\t150\t80\t40\t12\t70\n");
    REQUIRE(r.lines.size() == 2);
    CHECK(r.lines[0].text == "w1 w2");
    CHECK(r.lines[0].left == 100);
    CHECK(r.lines[0].top == 48);
    CHECK(r.lines[0].width == 80);
    CHECK(r.lines[0].height == 16);
    CHECK(r.lines[0].conf == doctest::Approx(85.0));
    CHECK(r.lines[1].text == "next");
    CHECK(r.lines[1].line_index == 1);
    CHECK(r.warnings.size() == 1);

    CHECK_THROWS_AS(parse_ocr_tsv("level\tpage_num\ttext\n5\t1\tx\n"), OcrFormatError);
    CHECK_THROWS_AS(parse_ocr_tsv("5\t1\t1\t1\t1\t1\t100\t50\t40\t12\t90\tw1\n"), OcrFormatError);
    std::istringstream in(header + "5\t1\t1\t1\t1\t1\t1\t1\t1\t1\t1\tx\n");
    CHECK(parse_ocr_tsv(in).lines.size() == 1);
}

TEST_CASE("rendered page has one line per distinct key") {
    std::mt19937_64 rng(12);
    const auto book = synth::make_book(rng, {.pages = 1, .headings = 3});
    const auto tsv = synth::render_tsv(book.layout);
    std::set<std::string> keys;
    std::istringstream in(tsv);
    std::string row;
    std::getline(in, row);
    while (std::getline(in, row)) {
        std::vector<std::string> f;
        std::stringstream ss(row);
        std::string cell;
        while (std::getline(ss, cell, '\t')) f.push_back(cell);
        if (f.size() >= 12 && f[0] == "5" && !f[11].empty()) keys.insert(f[1] + "/" + f[2] + "/" + f[3] + "/" + f[4]);
    }
    CHECK(parse_ocr_tsv(tsv).lines.size() == keys.size());
}

TEST_CASE("isolation and filters") {
    auto lines = page_lines(1, 10, {planted(5, "Chapter Two")});
    const auto iso = isolated_lines(lines);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        CAPTURE(lines[i].text);
        // page edges, the heading and its two neighbours
        const bool expect = i == 0 || i + 1 == lines.size() || lines[i].text == "Chapter Two" ||
                            (i + 1 < lines.size() && lines[i + 1].text == "Chapter Two") ||
                            (i > 0 && lines[i - 1].text == "Chapter Two");
        CHECK(iso[i] == expect);
    }

    HeadingCandidate c;
    c.text = "This is clearly a very long running sentence of fourteen words in total here";
    CHECK_FALSE(passes_ocr_filters(c));
    c.text = "Provided that:";
    CHECK_FALSE(passes_ocr_filters(c));
    c.text = "the following,";
    CHECK_FALSE(passes_ocr_filters(c));
    c.text = "1 2 3";
    CHECK_FALSE(passes_ocr_filters(c));
    c.text = "Chapter Two";
    CHECK(passes_ocr_filters(c));
    c.conf = 39.9;
    CHECK_FALSE(passes_ocr_filters(c));
    c.conf = 40.0;
    CHECK(passes_ocr_filters(c));
}

TEST_CASE("ocr candidates") {
    auto lines = page_lines(1, 12, {planted(3, "Chapter Two"), planted(6, "Provided that:"),
                                    planted(8, "This is clearly a very long running sentence of fourteen words in total here"),
                                    planted(10, "Blurry Heading", 20)});
    const auto c = select_ocr_candidates(lines);
    const auto got = texts(c);
    CHECK(got.count("Chapter Two") == 1);
    CHECK(got.count("Provided that:") == 0);
    CHECK(got.count("Blurry Heading") == 0);
    for (const auto& x : c) CHECK(x.text.find("fourteen") == std::string::npos);

    const auto it = std::find_if(c.begin(), c.end(), [](const auto& x) { return x.text == "Chapter Two"; });
    REQUIRE(it != c.end());
    CHECK(it->source == CandidateSource::ocr);
    CHECK(it->features.font_id.empty());
    CHECK(*it->conf == 95.0);

    // Subset of isolated lines, every one passes the filters.
    const auto iso = isolated_lines(lines);
    std::set<std::string> iso_text;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (iso[i]) iso_text.insert(lines[i].text);
    }
    for (const auto& x : c) {
        CHECK(iso_text.count(x.text) == 1);
        CHECK(passes_ocr_filters(x));
    }
}

TEST_CASE("isolated runs merge into one candidate") {
    std::vector<OcrLine> lines;
    for (int i = 0; i < 8; ++i) lines.push_back(line(1, 100 + 18 * i, "body text line " + std::to_string(i)));
    lines.push_back(line(1, 300, "Part One"));
    lines.push_back(line(1, 318, "The Beginning"));  // same run, tight gap but both isolated on one side
    for (int i = 0; i < 8; ++i) lines.push_back(line(1, 400 + 18 * i, "body text more " + std::to_string(i)));
    const auto c = select_ocr_candidates(lines);
    CHECK(texts(c).count("Part One The Beginning") == 1);
}

TEST_CASE("fusion") {
    HeadingCandidate x{"Chapter 1", 2, {"1", 16, true, 20, 100, 72, 100}, "xml trailing", CandidateSource::xml, {}};
    HeadingCandidate o{"Chapter 1", 2, {"", 0, false, 22, 104, 70, 98}, "", CandidateSource::ocr, 91.0};
    HeadingCandidate art{"~~ scan artifact ~~", 2, {"", 0, false, 10, 10, 10, 10}, "", CandidateSource::ocr, 50.0};
    const auto f = fuse_candidates({x}, {o, art});
    REQUIRE(f.size() == 2);
    CHECK(f[0].features.font_id == "1");
    CHECK(f[0].features.bold);
    CHECK(f[0].features.top == 98);  // geometry stays from OCR
    CHECK(f[0].trailing_text == "xml trailing");
    CHECK(f[0].source == CandidateSource::xml);
    CHECK(f[1] == art);

    auto other_page = x;
    other_page.page = 3;
    CHECK(fuse_candidates({other_page}, {o})[0].source == CandidateSource::ocr);
    CHECK(fuse_candidates({x}, {o, o}).size() == 1);
    CHECK(fuse_candidates({}, f) == f);
}

TEST_CASE("fused output has no mutual matches on one page") {
    std::mt19937_64 rng(21);
    const std::vector<std::string> base = {"Chapter One", "Chapter Two", "Remedies", "Remedies and Damages",
                                           "Property", "Index"};
    for (int round = 0; round < 30; ++round) {
        std::vector<HeadingCandidate> ocr;
        for (int i = 0; i < 20; ++i) {
            HeadingCandidate c;
            c.text = base[std::uniform_int_distribution<std::size_t>(0, base.size() - 1)(rng)];
            if (std::bernoulli_distribution(0.3)(rng)) c.text = synth::corrupt(rng, c.text, 1);
            c.page = std::uniform_int_distribution<int>(1, 2)(rng);
            c.source = CandidateSource::ocr;
            ocr.push_back(c);
        }
        const auto f = fuse_candidates({}, ocr);
        for (std::size_t i = 0; i < f.size(); ++i) {
            for (std::size_t j = i + 1; j < f.size(); ++j) {
                if (f[i].page != f[j].page) continue;
                CHECK_FALSE((match_heading(f[i].text, f[j].text).matched && match_heading(f[j].text, f[i].text).matched));
            }
        }
        CHECK(fuse_candidates({}, f) == f);
    }
}

TEST_CASE("candidate JSON round trip") {
    std::vector<HeadingCandidate> c = {
        {"Chapter 1", 2, {"1", 16, true, 20, 100, 72, 100}, "after", CandidateSource::xml, {}},
        {"Scan \"line\"", 3, {}, "", CandidateSource::ocr, 77.5},
    };
    CHECK(candidates_from_json(to_json(c)) == c);
    CHECK(candidates_from_json(nlohmann::json::parse(to_json(c).dump())) == c);
}

}  // TEST_SUITE
