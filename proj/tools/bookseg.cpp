// bookseg command-line front end. Options shared by several commands live on
// the top-level app so one TOML config file can set them; flags override it.
#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "bookseg/pipeline.hpp"

namespace {

using bookseg::cli::PipelineConfig;

std::vector<bookseg::MatchStrategy> parse_strategies(const std::string& list) {
    std::vector<bookseg::MatchStrategy> out;
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(bookseg::parse_strategy(item));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical section segmentation for book-length PDF XML"};
    app.set_config("--config", "", "TOML config file (command-line flags take precedence)");
    app.require_subcommand(1);
    app.fallthrough();

    PipelineConfig cfg;
    std::string out_dir = ".";
    std::string strategies = "exact,substring,fuzzy";
    bool quiet = false;
    auto& m = cfg.segmenter.match;
    auto& c = cfg.candidates;
    auto& r = cfg.refiner;

    app.add_option("-o,--out-dir", out_dir, "Output directory")->capture_default_str();
    app.add_option("-j,--jobs", cfg.jobs, "Files processed in parallel")->capture_default_str();
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    app.add_option("--fuzzy-threshold", m.fuzzy_threshold, "Partial-ratio threshold 0-100")->group("Matching")->capture_default_str();
    app.add_option("--min-word-len", m.min_word_len, "Shortest word the fuzzy containment test uses")->group("Matching")->capture_default_str();
    app.add_option("--strategies", strategies, "Enabled strategies, comma separated")->group("Matching")->capture_default_str();
    app.add_option("--top-tolerance", cfg.segmenter.top_tolerance, "Max top difference for one line")->group("Matching")->capture_default_str();

    app.add_option("--rare-max-share", c.rare_max_share, "Font share below which a font is rare")->group("Candidates")->capture_default_str();
    app.add_option("--min-occurrences", c.min_occurrences, "Nodes a rare font needs")->group("Candidates")->capture_default_str();
    app.add_option("--merge-gap-factor", c.merge_gap_factor, "Stacked-line merge gap, in line heights")->group("Candidates")->capture_default_str();
    app.add_option("--trailing-cap", c.trailing_cap, "Trailing text cap in characters")->group("Candidates")->capture_default_str();
    app.add_option("--gap-factor", c.gap_factor, "OCR isolation gap, in median line heights")->group("Candidates")->capture_default_str();
    app.add_option("--max-words", c.max_words, "OCR candidates with more words are dropped")->group("Candidates")->capture_default_str();
    app.add_option("--min-conf", c.min_conf, "OCR candidates below this confidence are dropped")->group("Candidates")->capture_default_str();
    app.add_option("--ocr", cfg.ocr, "OCR TSV file, or a directory of <key>.tsv")->group("Candidates");

    app.add_option("--mock", cfg.mock_rules, "Mock refiner rules JSON (offline)")->group("Refiner");
    app.add_option("--endpoint", r.endpoint_url, "Chat-completions URL")->group("Refiner")->capture_default_str();
    app.add_option("--model", r.model_name, "Model name sent to the endpoint")->group("Refiner")->capture_default_str();
    app.add_option("--api-key-env", r.api_key_env, "Environment variable holding the API key")->group("Refiner")->capture_default_str();
    app.add_option("--batch-size", r.batch_size, "Candidates per request")->group("Refiner")->capture_default_str();
    app.add_option("--max-level", r.max_level, "Deepest allowed level (1-10)")->group("Refiner")->capture_default_str();
    app.add_option("--temperature", r.temperature, "Sampling temperature")->group("Refiner")->capture_default_str();
    app.add_option("--max-retries", r.max_retries, "Retries per batch and per HTTP request")->group("Refiner")->capture_default_str();
    app.add_option("--backoff-ms", r.backoff_ms, "First HTTP retry delay")->group("Refiner")->capture_default_str();
    app.add_option("--timeout", r.timeout_s, "HTTP read timeout in seconds")->group("Refiner")->capture_default_str();
    app.add_option("--max-context", r.max_context, "Confirmed headings carried into each prompt")->group("Refiner")->capture_default_str();
    app.add_option("--record", cfg.record, "Save the LLM exchanges as a transcript (file or directory)")->group("Refiner");
    app.add_option("--replay", cfg.replay, "Answer from a recorded transcript (file or directory)")->group("Refiner");

    std::vector<std::string> inputs;
    bool export_toc = false;
    auto* ingest = app.add_subcommand("ingest", "Parse pdftohtml XML into document JSON");
    ingest->add_option("inputs", inputs, "XML files")->required();
    ingest->add_flag("--export-toc", export_toc, "Also write the outline as <key>.toc.json ground truth");

    auto* toc = app.add_subcommand("toc-segment", "Segment using the embedded outline");
    toc->add_option("inputs", inputs, "XML or document JSON files")->required();

    std::string headings_path;
    auto* segment = app.add_subcommand("segment", "Segment one document with a headings JSON");
    segment->add_option("input", inputs, "XML or document JSON file")->required()->expected(1);
    segment->add_option("--headings", headings_path, "Headings JSON [{level,text,page,source}]")->required();

    auto* cands = app.add_subcommand("candidates", "Detect heading candidates from font statistics and OCR");
    cands->add_option("inputs", inputs, "XML or document JSON files")->required();

    auto* refine = app.add_subcommand("refine", "Confirm candidates and assign levels with the LLM refiner");
    refine->add_option("inputs", inputs, "<key>.candidates.json files")->required();

    auto* llm = app.add_subcommand("llm-segment", "Candidates, refinement and segmentation in one run");
    llm->add_option("inputs", inputs, "XML or document JSON files")->required();

    bookseg::cli::EvalPaths eval_paths;
    auto* eval = app.add_subcommand("eval", "Score predicted segmentations against ground-truth TOCs");
    eval->add_option("--pred", eval_paths.pred_dir, "Directory of <key>.segments.json")->required();
    eval->add_option("--gt", eval_paths.gt_dir, "Directory of ground-truth TOC JSON")->required();
    eval->add_option("--docs", eval_paths.docs_dir, "Directory of <key>.xml or <key>.json documents")->required();
    eval->add_option("--csv", eval_paths.out_csv, "Corpus CSV path (default <out-dir>/corpus.csv)");

    std::string corpus;
    std::string summary_out;
    auto* report = app.add_subcommand("report", "Aggregate a corpus CSV by ground-truth depth");
    report->add_option("corpus", corpus, "Corpus CSV written by eval")->required();
    report->add_option("--summary", summary_out, "Also write the summary CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return bookseg::cli::kUsage;
    }

    bookseg::cli::Logger log(std::cerr, quiet);
    try {
        m.strategies = parse_strategies(strategies);
    } catch (const std::exception& e) {
        log.error("failed", {{"error", e.what()}});
        return bookseg::cli::kUsage;
    }
    cfg.out_dir = out_dir;

    if (*ingest) return bookseg::cli::cmd_ingest(inputs, export_toc, cfg, log, std::cout);
    if (*toc) return bookseg::cli::cmd_toc_segment(inputs, cfg, log);
    if (*segment) return bookseg::cli::cmd_segment(inputs.front(), headings_path, cfg, log);
    if (*cands) return bookseg::cli::cmd_candidates(inputs, cfg, log);
    if (*refine) return bookseg::cli::cmd_refine(inputs, cfg, log);
    if (*llm) return bookseg::cli::cmd_llm_segment(inputs, cfg, log);
    if (*eval) return bookseg::cli::cmd_eval(eval_paths, cfg, log);
    if (*report) return bookseg::cli::cmd_report(corpus, summary_out, log, std::cout);
    return bookseg::cli::kUsage;
}
