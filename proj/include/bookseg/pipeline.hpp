#pragma once

#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bookseg/candidates.hpp"
#include "bookseg/document.hpp"
#include "bookseg/evaluator.hpp"
#include "bookseg/headings.hpp"
#include "bookseg/matching.hpp"
#include "bookseg/refiner.hpp"
#include "bookseg/segmenter.hpp"

namespace bookseg::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,     // bad arguments, missing input files, bad config
    kParse = 3,     // malformed XML, TSV or JSON input
    kPipeline = 4,  // a stage failed (no outline, refiner failure, ...)
    kMismatch = 5,  // evaluation inputs do not line up
};

/// Bad invocation or missing input; maps to kUsage.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input that is not XML, TSV or JSON; maps to kParse.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// key=value lines on one stream, serialized across worker threads.
class Logger {
public:
    explicit Logger(std::ostream& out, bool quiet = false) : out_(out), quiet_(quiet) {}
    using Fields = std::initializer_list<std::pair<std::string_view, std::string>>;
    void info(std::string_view event, Fields fields = {});
    void warn(std::string_view event, Fields fields = {});
    void error(std::string_view event, Fields fields = {});

private:
    void write(std::string_view level, std::string_view event, Fields fields);
    std::ostream& out_;
    bool quiet_;
    std::mutex mu_;
};

/// Writes to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

struct PipelineConfig {
    SegmenterOptions segmenter;
    CandidateConfig candidates;
    RefinerConfig refiner;
    /// Mock rules file; selects the offline refiner.
    std::string mock_rules;
    /// Transcript file (single input) or directory of <key>.transcript.json.
    std::string record;
    std::string replay;
    /// File (single input) or directory of <key>.tsv.
    std::string ocr;
    std::filesystem::path out_dir = ".";
    unsigned jobs = 1;

    void validate() const;
};

int cmd_ingest(const std::vector<std::string>& inputs, bool export_toc, const PipelineConfig& cfg, Logger& log,
               std::ostream& out);
int cmd_toc_segment(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log);
/// Segments one document with an externally supplied headings JSON.
int cmd_segment(const std::string& input, const std::string& headings_path, const PipelineConfig& cfg, Logger& log);
int cmd_candidates(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log);
/// Inputs are <key>.candidates.json files; writes <key>.headings.json.
int cmd_refine(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log);
int cmd_llm_segment(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log);

struct EvalPaths {
    std::string pred_dir;
    std::string gt_dir;
    std::string docs_dir;
    std::string out_csv;  // defaults to <out_dir>/corpus.csv
};
int cmd_eval(const EvalPaths& paths, const PipelineConfig& cfg, Logger& log);
/// Prints the per-depth summary of a corpus CSV and optionally writes it.
int cmd_report(const std::string& corpus_csv, const std::string& out_path, Logger& log, std::ostream& out);

/// Candidate stage of the LLM pipeline: fused OCR + XML candidates when an
/// OCR TSV is given, XML candidates otherwise.
std::vector<HeadingCandidate> detect_candidates(const BookDocument& doc, const std::optional<std::string>& ocr_tsv,
                                                const PipelineConfig& cfg);

/// Ground-truth JSON for the document's own outline.
GroundTruthToc toc_from_outline(const BookDocument& doc);

}  // namespace bookseg::cli
