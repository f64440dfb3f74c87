#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bookseg/document.hpp"
#include "bookseg/matching.hpp"

namespace bookseg {

enum class CandidateSource { xml, ocr };

std::string_view to_string(CandidateSource s);

struct CandidateFeatures {
    std::string font_id;  // empty when no XML counterpart is known
    int font_size = 0;
    bool bold = false;
    int height = 0;
    int width = 0;
    int left = 0;
    int top = 0;

    bool operator==(const CandidateFeatures&) const = default;
};

struct HeadingCandidate {
    std::string text;
    int page = 1;
    CandidateFeatures features;
    std::string trailing_text;
    CandidateSource source = CandidateSource::xml;
    /// Mean OCR confidence of the candidate's lines (OCR candidates only).
    std::optional<double> conf;

    bool operator==(const HeadingCandidate&) const = default;
};

struct CandidateConfig {
    // XML font statistics
    double rare_max_share = 0.10;
    int min_occurrences = 3;
    double merge_gap_factor = 1.5;
    std::size_t trailing_cap = 300;
    // OCR spacing heuristics
    double gap_factor = 1.8;
    int max_words = 12;
    double min_conf = 40.0;

    void validate() const;
};

/// Share of non-whitespace characters per font id. Throws std::invalid_argument
/// when the document has no text.
std::map<std::string, double> font_statistics(const BookDocument& doc);

/// Font with the largest share (ties: first in the font table).
std::string body_font(const BookDocument& doc);

/// Every node set in a rare font (share below rare_max_share, used by at least
/// min_occurrences nodes) becomes a candidate; stacked nodes of one font merge.
std::vector<HeadingCandidate> select_xml_candidates(const BookDocument& doc, const CandidateConfig& cfg = {});

struct OcrLine {
    int page = 1;
    int line_index = 0;
    int top = 0;
    int left = 0;
    int width = 0;
    int height = 0;
    std::string text;
    double conf = 0.0;

    bool operator==(const OcrLine&) const = default;
};

struct OcrParseResult {
    std::vector<OcrLine> lines;
    std::vector<std::string> warnings;
};

class OcrFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tesseract TSV (level, page_num, block_num, par_num, line_num, word_num,
/// left, top, width, height, conf, text). Word rows group into lines keyed by
/// (page, block, par, line).
OcrParseResult parse_ocr_tsv(std::string_view tsv);
OcrParseResult parse_ocr_tsv(std::istream& in);

/// Per line: gap to the previous or next line on the page exceeds
/// gap_factor x median line height (page edges count as gaps).
std::vector<bool> isolated_lines(const std::vector<OcrLine>& lines, const CandidateConfig& cfg = {});

/// The word-count, trailing-punctuation, all-digit and confidence filters.
bool passes_ocr_filters(const HeadingCandidate& candidate, const CandidateConfig& cfg = {});

std::vector<HeadingCandidate> select_ocr_candidates(std::vector<OcrLine> lines, const CandidateConfig& cfg = {});

/// OCR candidates are primary. Each one takes font features from the best
/// matching XML candidate on its page; candidates that match each other in
/// both directions on one page are emitted once.
std::vector<HeadingCandidate> fuse_candidates(const std::vector<HeadingCandidate>& xml,
                                              const std::vector<HeadingCandidate>& ocr,
                                              const MatchConfig& match = {});

nlohmann::json to_json(const std::vector<HeadingCandidate>& candidates);
std::vector<HeadingCandidate> candidates_from_json(const nlohmann::json& j);

}  // namespace bookseg
