#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bookseg/document.hpp"
#include "bookseg/headings.hpp"
#include "bookseg/segmenter.hpp"

namespace bookseg {

struct GroundTruthEntry {
    int level = 1;
    std::string title;
    int page = 1;

    bool operator==(const GroundTruthEntry&) const = default;
};

struct GroundTruthToc {
    std::string file_key;
    std::vector<GroundTruthEntry> entries;

    std::vector<DetectedHeading> as_headings() const;
    int max_depth() const;
};

nlohmann::json to_json(const GroundTruthToc& gt);
GroundTruthToc ground_truth_from_json(const nlohmann::json& j);

struct MatchCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    bool operator==(const MatchCounts&) const = default;
};

struct TitleScores {
    double precision = 0.0;
    double recall = 0.0;
    MatchCounts counts;
};

inline constexpr std::size_t kTitleEditTolerance = 2;

/// Greedy one-to-one assignment over all (prediction, GT) pairs within
/// `tolerance` (levenshtein on trimmed, unnormalized strings). Same-page pairs
/// are taken before cross-page ones, closer pairs before farther ones. Ties
/// are broken on the texts and pages, so the counts do not depend on the order
/// of either list.
TitleScores title_pr_ed(const std::vector<DetectedHeading>& pred, const GroundTruthToc& gt,
                        std::size_t tolerance = kTitleEditTolerance);

/// Ordered labeled tree; node 0 is the root, children listed left to right.
struct LabeledTree {
    struct Node {
        std::string label;
        std::vector<std::size_t> children;
    };
    std::vector<Node> nodes;

    std::size_t add(std::string label, std::optional<std::size_t> parent = std::nullopt);
    std::size_t size() const { return nodes.size(); }
};

/// Section tree with labels normalize(heading); the synthetic root gets "".
LabeledTree labeled_tree(const SectionTree& tree);

/// Zhang-Shasha ordered tree edit distance, unit costs (relabel costs 1 when labels differ).
std::size_t zss_distance(const LabeledTree& a, const LabeledTree& b);
std::size_t zss_distance(const SectionTree& a, const SectionTree& b);

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// b[i] is true when a segment starts at unit i. b[0] carries no information:
/// the first unit always opens a segment.
using BoundarySequence = std::vector<bool>;

/// One entry per text-bearing reading-order line of `doc`.
BoundarySequence linearize_boundaries(const SegmentationResult& segments, const BookDocument& doc,
                                      int top_tolerance = kDefaultTopTolerance);

/// max(2, round(mean reference segment length / 2)).
std::size_t default_window(const BoundarySequence& ref);

/// Beeferman's Pk over windows (i, i + k]. Throws EvaluationError when the
/// sequences differ in length or are shorter than k + 1.
double pk(const BoundarySequence& ref, const BoundarySequence& hyp, std::optional<std::size_t> k = std::nullopt);

/// Pevzner-Hearst WindowDiff over the same windows.
double window_diff(const BoundarySequence& ref, const BoundarySequence& hyp,
                   std::optional<std::size_t> k = std::nullopt);

struct EvalReport {
    std::string file_key;
    int max_depth = 0;
    double precision_ed = 0.0;
    double recall_ed = 0.0;
    std::size_t tree_edit_distance = 0;
    /// Empty when the document has too few lines for the window.
    std::optional<double> pk;
    std::optional<double> window_diff;
    MatchCounts counts;
};

struct EvalOptions {
    SegmenterOptions segmenter;
    std::size_t title_tolerance = kTitleEditTolerance;
};

/// Scores one predicted segmentation. The reference boundaries come from
/// segmenting `doc` with the GT headings.
EvalReport evaluate_file(const SegmentationResult& pred, const GroundTruthToc& gt, const BookDocument& doc,
                         const EvalOptions& opts = {});

/// Predicted headings of a segmentation (the level-0 preamble excluded), page = start page.
std::vector<DetectedHeading> segment_headings(const SegmentationResult& result);

nlohmann::json to_json(const EvalReport& report);

/// Corpus CSV: file_key,max_depth,P_ED,R_ED,TED,Pk,WD (one row per report, input order).
std::string corpus_csv(const std::vector<EvalReport>& reports);

struct DepthSummary {
    int max_depth = 0;  // 0 marks the all-files row
    std::size_t files = 0;
    double precision_ed = 0.0;
    double recall_ed = 0.0;
    double tree_edit_distance = 0.0;
    std::optional<double> pk;
    std::optional<double> window_diff;
};

/// Unweighted means per max GT depth, followed by an overall row.
std::vector<DepthSummary> summarize_by_depth(const std::vector<EvalReport>& reports);
std::string summary_csv(const std::vector<DepthSummary>& rows);

/// Parses a corpus CSV back into reports (counts are not stored and come back zero).
std::vector<EvalReport> reports_from_csv(const std::string& csv);

}  // namespace bookseg
