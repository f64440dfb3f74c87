#include "bookseg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace bookseg::cli {

namespace fs = std::filesystem;

namespace {

bool needs_quotes(std::string_view v) {
    return v.empty() || v.find_first_of(" \t\"=") != std::string_view::npos;
}

void put_value(std::ostream& os, std::string_view v) {
    if (!needs_quotes(v)) {
        os << v;
        return;
    }
    os << '"';
    for (char c : v) {
        if (c == '"' || c == '\\') os << '\\';
        if (c == '\n') {
            os << "\\n";
            continue;
        }
        os << c;
    }
    os << '"';
}

}  // namespace

void Logger::write(std::string_view level, std::string_view event, Fields fields) {
    std::ostringstream line;
    line << "level=" << level << " event=" << event;
    for (const auto& [k, v] : fields) {
        line << ' ' << k << '=';
        put_value(line, v);
    }
    line << '\n';
    std::lock_guard lock(mu_);
    out_ << line.str() << std::flush;
}

void Logger::info(std::string_view event, Fields fields) {
    if (!quiet_) write("info", event, fields);
}
void Logger::warn(std::string_view event, Fields fields) { write("warn", event, fields); }
void Logger::error(std::string_view event, Fields fields) { write("error", event, fields); }

void write_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw InputError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

void PipelineConfig::validate() const {
    try {
        segmenter.match.validate();
        candidates.validate();
        refiner.validate();
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    if (segmenter.top_tolerance < 0) throw InputError("top tolerance must be >= 0");
    if (jobs < 1) throw InputError("--jobs must be >= 1");
    if (!record.empty() && !replay.empty()) throw InputError("--record and --replay exclude each other");
    if (!mock_rules.empty() && !fs::is_regular_file(mock_rules)) throw InputError("file not found: " + mock_rules);
    if (!replay.empty() && !fs::exists(replay)) throw InputError("file not found: " + replay);
}

namespace {

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("file not found: " + path);
    return nlohmann::json::parse(in);
}

void require_files(const std::vector<std::string>& paths) {
    if (paths.empty()) throw InputError("no input files");
    for (const auto& p : paths) {
        if (!fs::is_regular_file(p)) throw InputError("file not found: " + p);
    }
}

// Runs `body` and turns exceptions into exit codes plus one error log line.
int guarded(std::string_view cmd, const std::string& subject, Logger& log, const std::function<void()>& body) {
    auto fail = [&](int code, const std::string& msg, std::string_view hint = {}) {
        if (hint.empty()) {
            log.error("failed", {{"cmd", std::string(cmd)}, {"input", subject}, {"error", msg}});
        } else {
            log.error("failed",
                      {{"cmd", std::string(cmd)}, {"input", subject}, {"error", msg}, {"hint", std::string(hint)}});
        }
        return code;
    };
    try {
        body();
        return kOk;
    } catch (const InputError& e) {
        return fail(kUsage, e.what());
    } catch (const RefinerConfigError& e) {
        return fail(kUsage, e.what());
    } catch (const ParseError& e) {
        return fail(kParse, e.what());
    } catch (const OcrFormatError& e) {
        return fail(kParse, e.what());
    } catch (const FormatError& e) {
        return fail(kParse, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(kParse, e.what());
    } catch (const NoOutlineError& e) {
        return fail(kPipeline, e.what(), "the document has no outline; use `bookseg llm-segment` for the candidate pipeline");
    } catch (const RefinerError& e) {
        return fail(kPipeline, std::string("refine: ") + e.what());
    } catch (const EvaluationError& e) {
        return fail(kMismatch, e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(kUsage, e.what());
    } catch (const std::exception& e) {
        return fail(kPipeline, e.what());
    }
}

// Applies `each` to every input on up to `jobs` threads. Returns the exit code
// of the first failing input in argument order.
int for_each_input(const std::vector<std::string>& inputs, unsigned jobs, std::string_view cmd, Logger& log,
                   const std::function<void(const std::string&)>& each) {
    std::vector<int> codes(inputs.size(), kOk);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
            codes[i] = guarded(cmd, inputs[i], log, [&] { each(inputs[i]); });
        }
    };
    const unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(inputs.size()));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (int c : codes) {
        if (c != kOk) return c;
    }
    return kOk;
}

// Resolves a per-file path option: a plain file for a single input, else <dir>/<key><suffix>.
fs::path per_file(const std::string& option, const std::string& key, std::string_view suffix, std::size_t inputs) {
    if (fs::is_directory(option) || inputs > 1) return fs::path(option) / (key + std::string(suffix));
    return option;
}

BookDocument load_checked(const std::string& path, Logger& log) {
    BookDocument doc = load_document(path);
    for (const auto& w : doc.warnings) log.warn("document", {{"file_key", doc.file_key}, {"warning", w}});
    return doc;
}

void write_segmentation(const SegmentationResult& result, const PipelineConfig& cfg, Logger& log) {
    const fs::path seg = cfg.out_dir / (result.file_key + ".segments.json");
    const fs::path unmatched = cfg.out_dir / (result.file_key + ".unmatched.jsonl");
    write_atomic(seg, dump(to_json(result)));
    write_atomic(unmatched, unmatched_to_jsonl(result.unmatched));
    for (const auto& u : result.unmatched) {
        log.warn("unmatched_heading", {{"file_key", u.file_key}, {"page", std::to_string(u.page)}, {"heading", u.heading}});
    }
    log.info("written", {{"file_key", result.file_key},
                         {"path", seg.string()},
                         {"segments", std::to_string(result.segments.size())},
                         {"unmatched", std::to_string(result.unmatched.size())}});
}

struct Refiner {
    std::unique_ptr<ChatBackend> base;
    std::unique_ptr<RecordingBackend> recorder;
    ReplayBackend* replay = nullptr;
    fs::path record_path;

    ChatBackend& backend() { return recorder ? static_cast<ChatBackend&>(*recorder) : *base; }
};

Refiner make_refiner(const PipelineConfig& cfg, const std::string& key, std::size_t inputs) {
    Refiner r;
    if (!cfg.replay.empty()) {
        auto replay = std::make_unique<ReplayBackend>(
            ReplayBackend::from_file(per_file(cfg.replay, key, ".transcript.json", inputs).string()));
        r.replay = replay.get();
        r.base = std::move(replay);
    } else if (!cfg.mock_rules.empty()) {
        r.base = std::make_unique<MockBackend>(MockBackend::from_file(cfg.mock_rules));
    } else {
        r.base = std::make_unique<HttpChatBackend>(cfg.refiner);
    }
    if (!cfg.record.empty()) {
        r.record_path = per_file(cfg.record, key, ".transcript.json", inputs);
        r.recorder = std::make_unique<RecordingBackend>(*r.base, cfg.refiner.model_name);
    }
    return r;
}

std::vector<DetectedHeading> run_refiner(const std::vector<HeadingCandidate>& candidates, const std::string& key,
                                         const PipelineConfig& cfg, std::size_t inputs, Logger& log) {
    Refiner r = make_refiner(cfg, key, inputs);
    auto headings = refine(candidates, r.backend(), cfg.refiner);
    if (r.recorder) {
        if (r.record_path.has_parent_path()) fs::create_directories(r.record_path.parent_path());
        r.recorder->save(r.record_path.string());
    }
    if (r.replay != nullptr && r.replay->remaining() > 0) {
        log.warn("transcript_not_exhausted", {{"file_key", key}, {"remaining", std::to_string(r.replay->remaining())}});
    }
    log.info("refined", {{"file_key", key},
                         {"candidates", std::to_string(candidates.size())},
                         {"headings", std::to_string(headings.size())}});
    return headings;
}

std::optional<std::string> ocr_for(const PipelineConfig& cfg, const std::string& key, std::size_t inputs, Logger& log) {
    if (cfg.ocr.empty()) return std::nullopt;
    const fs::path p = per_file(cfg.ocr, key, ".tsv", inputs);
    if (!fs::is_regular_file(p)) {
        log.warn("ocr_missing", {{"file_key", key}, {"path", p.string()}, {"fallback", "xml-only candidates"}});
        return std::nullopt;
    }
    return p.string();
}

std::string candidates_key(const std::string& path) {
    std::string name = fs::path(path).filename().string();
    constexpr std::string_view suffix = ".candidates.json";
    if (name.ends_with(suffix)) return name.substr(0, name.size() - suffix.size());
    return file_key_for_path(path);
}

}  // namespace

GroundTruthToc toc_from_outline(const BookDocument& doc) {
    GroundTruthToc gt;
    gt.file_key = doc.file_key;
    for (const auto& h : headings_from_outline(doc)) gt.entries.push_back({h.level, h.text, h.page});
    return gt;
}

std::vector<HeadingCandidate> detect_candidates(const BookDocument& doc, const std::optional<std::string>& ocr_tsv,
                                                const PipelineConfig& cfg) {
    auto xml = select_xml_candidates(doc, cfg.candidates);
    if (!ocr_tsv) return xml;
    std::ifstream in(*ocr_tsv, std::ios::binary);
    if (!in) throw InputError("file not found: " + *ocr_tsv);
    const auto parsed = parse_ocr_tsv(in);
    const auto ocr = select_ocr_candidates(parsed.lines, cfg.candidates);
    return fuse_candidates(xml, ocr, cfg.segmenter.match);
}

int cmd_ingest(const std::vector<std::string>& inputs, bool export_toc, const PipelineConfig& cfg, Logger& log,
               std::ostream& out) {
    const int pre = guarded("ingest", "", log, [&] {
        cfg.validate();
        require_files(inputs);
    });
    if (pre != kOk) return pre;
    std::mutex out_mu;
    return for_each_input(inputs, cfg.jobs, "ingest", log, [&](const std::string& path) {
        const BookDocument doc = load_checked(path, log);
        const fs::path target = cfg.out_dir / (doc.file_key + ".json");
        if (fs::exists(path) && fs::exists(target) && fs::equivalent(path, target)) {
            throw InputError("output would overwrite the input " + path);
        }
        write_atomic(target, dump(to_json(doc)));
        if (export_toc) write_atomic(cfg.out_dir / (doc.file_key + ".toc.json"), dump(to_json(toc_from_outline(doc))));
        std::lock_guard lock(out_mu);
        out << doc.file_key << " pages=" << doc.pages.size() << " nodes=" << doc.node_count()
            << " fonts=" << doc.fonts.size() << " outline=" << (doc.outline ? "yes" : "no") << "\n";
    });
}

int cmd_toc_segment(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log) {
    const int pre = guarded("toc-segment", "", log, [&] {
        cfg.validate();
        require_files(inputs);
    });
    if (pre != kOk) return pre;
    return for_each_input(inputs, cfg.jobs, "toc-segment", log, [&](const std::string& path) {
        const BookDocument doc = load_checked(path, log);
        const auto headings = headings_from_outline(doc);
        write_segmentation(segment_document(doc, headings, cfg.segmenter), cfg, log);
    });
}

int cmd_segment(const std::string& input, const std::string& headings_path, const PipelineConfig& cfg, Logger& log) {
    const int pre = guarded("segment", "", log, [&] {
        cfg.validate();
        require_files({input, headings_path});
    });
    if (pre != kOk) return pre;
    return guarded("segment", input, log, [&] {
        const BookDocument doc = load_checked(input, log);
        const auto headings = headings_from_json(read_json(headings_path));
        write_segmentation(segment_document(doc, headings, cfg.segmenter), cfg, log);
    });
}

int cmd_candidates(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log) {
    const int pre = guarded("candidates", "", log, [&] {
        cfg.validate();
        require_files(inputs);
    });
    if (pre != kOk) return pre;
    return for_each_input(inputs, cfg.jobs, "candidates", log, [&](const std::string& path) {
        const BookDocument doc = load_checked(path, log);
        const auto candidates = detect_candidates(doc, ocr_for(cfg, doc.file_key, inputs.size(), log), cfg);
        const fs::path target = cfg.out_dir / (doc.file_key + ".candidates.json");
        write_atomic(target, dump(to_json(candidates)));
        log.info("written",
                 {{"file_key", doc.file_key}, {"path", target.string()}, {"candidates", std::to_string(candidates.size())}});
    });
}

int cmd_refine(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log) {
    const int pre = guarded("refine", "", log, [&] {
        cfg.validate();
        require_files(inputs);
    });
    if (pre != kOk) return pre;
    return for_each_input(inputs, cfg.jobs, "refine", log, [&](const std::string& path) {
        const std::string key = candidates_key(path);
        const auto candidates = candidates_from_json(read_json(path));
        const auto headings = run_refiner(candidates, key, cfg, inputs.size(), log);
        const fs::path target = cfg.out_dir / (key + ".headings.json");
        write_atomic(target, dump(to_json(headings)));
        log.info("written", {{"file_key", key}, {"path", target.string()}});
    });
}

int cmd_llm_segment(const std::vector<std::string>& inputs, const PipelineConfig& cfg, Logger& log) {
    const int pre = guarded("llm-segment", "", log, [&] {
        cfg.validate();
        require_files(inputs);
    });
    if (pre != kOk) return pre;
    return for_each_input(inputs, cfg.jobs, "llm-segment", log, [&](const std::string& path) {
        const BookDocument doc = load_checked(path, log);
        std::vector<HeadingCandidate> candidates;
        try {
            candidates = detect_candidates(doc, ocr_for(cfg, doc.file_key, inputs.size(), log), cfg);
        } catch (const OcrFormatError& e) {
            throw OcrFormatError(std::string("candidates: ") + e.what());
        }
        const auto headings = run_refiner(candidates, doc.file_key, cfg, inputs.size(), log);
        write_atomic(cfg.out_dir / (doc.file_key + ".headings.json"), dump(to_json(headings)));
        SegmentationResult result;
        try {
            result = segment_document(doc, headings, cfg.segmenter);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(std::string("segment: ") + e.what());
        }
        write_segmentation(result, cfg, log);
    });
}

namespace {

std::optional<fs::path> find_doc(const fs::path& dir, const std::string& key) {
    for (const char* ext : {".xml", ".json"}) {
        const fs::path p = dir / (key + ext);
        if (fs::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

}  // namespace

int cmd_eval(const EvalPaths& paths, const PipelineConfig& cfg, Logger& log) {
    std::vector<GroundTruthToc> gts;
    const int pre = guarded("eval", paths.gt_dir, log, [&] {
        cfg.validate();
        for (const auto& d : {paths.pred_dir, paths.gt_dir, paths.docs_dir}) {
            if (!fs::is_directory(d)) throw InputError("directory not found: " + d);
        }
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(paths.gt_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) gts.push_back(ground_truth_from_json(read_json(f.string())));
        if (gts.empty()) throw InputError("no ground-truth files in " + paths.gt_dir);
    });
    if (pre != kOk) return pre;

    std::vector<std::string> missing;
    std::vector<std::size_t> present;
    std::set<std::string> gt_keys;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const auto& key = gts[i].file_key;
        gt_keys.insert(key);
        if (fs::is_regular_file(fs::path(paths.pred_dir) / (key + ".segments.json"))) {
            present.push_back(i);
        } else {
            missing.push_back(key);
            log.error("missing_prediction", {{"file_key", key}, {"expected", (fs::path(paths.pred_dir) / (key + ".segments.json")).string()}});
        }
    }
    for (const auto& e : fs::directory_iterator(paths.pred_dir)) {
        const auto name = e.path().filename().string();
        if (name.ends_with(".segments.json") && !gt_keys.contains(file_key_for_path(name))) {
            log.warn("prediction_without_gt", {{"file_key", file_key_for_path(name)}});
        }
    }

    std::vector<std::optional<EvalReport>> reports(present.size());
    std::vector<std::string> keys;
    for (std::size_t i : present) keys.push_back(gts[i].file_key);
    EvalOptions opts;
    opts.segmenter = cfg.segmenter;
    std::vector<std::string> indices(present.size());
    for (std::size_t i = 0; i < present.size(); ++i) indices[i] = std::to_string(i);
    int code = for_each_input(indices, cfg.jobs, "eval", log, [&](const std::string& idx) {
        const std::size_t i = std::stoul(idx);
        const auto& gt = gts[present[i]];
        const auto doc_path = find_doc(paths.docs_dir, gt.file_key);
        if (!doc_path) throw EvaluationError("no document for " + gt.file_key + " in " + paths.docs_dir);
        const BookDocument doc = load_checked(doc_path->string(), log);
        const auto pred = segmentation_from_json(
            read_json((fs::path(paths.pred_dir) / (gt.file_key + ".segments.json")).string()));
        EvalReport report = evaluate_file(pred, gt, doc, opts);
        write_atomic(cfg.out_dir / (gt.file_key + ".eval.json"), dump(to_json(report)));
        reports[i] = std::move(report);
    });

    std::vector<EvalReport> done;
    for (auto& r : reports) {
        if (r) done.push_back(*r);
    }
    const fs::path csv = paths.out_csv.empty() ? cfg.out_dir / "corpus.csv" : fs::path(paths.out_csv);
    const int written = guarded("eval", csv.string(), log, [&] {
        write_atomic(csv, corpus_csv(done));
        write_atomic(csv.parent_path() / "summary.csv", summary_csv(summarize_by_depth(done)));
        log.info("written", {{"path", csv.string()}, {"files", std::to_string(done.size())}});
    });
    if (code == kOk) code = written;
    if (code == kOk && !missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ",") + m;
        log.error("eval_incomplete", {{"missing", names}});
        code = kMismatch;
    }
    return code;
}

int cmd_report(const std::string& corpus, const std::string& out_path, Logger& log, std::ostream& out) {
    return guarded("report", corpus, log, [&] {
        if (!fs::is_regular_file(corpus)) throw InputError("file not found: " + corpus);
        std::ifstream in(corpus, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        std::vector<EvalReport> reports;
        try {
            reports = reports_from_csv(buf.str());
        } catch (const std::invalid_argument& e) {
            throw FormatError(std::string("corpus CSV: ") + e.what());
        }
        const std::string summary = summary_csv(summarize_by_depth(reports));
        out << summary;
        if (!out_path.empty()) write_atomic(out_path, summary);
    });
}

}  // namespace bookseg::cli
