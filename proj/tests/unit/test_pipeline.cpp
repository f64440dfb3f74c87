#include <doctest.h>

#include <sys/wait.h>

#include <random>
#include <sstream>

#include "bookseg/pipeline.hpp"
#include "../support/synth.hpp"
#include "../support/util.hpp"

using namespace bookseg;
using namespace bookseg::cli;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;
namespace fs = std::filesystem;

namespace {

const std::string kBin = BOOKSEG_BIN;
const std::string kData = TEST_DATA_DIR;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(const std::string& args, const fs::path& scratch) {
    const auto out = scratch / "stdout.txt";
    const auto err = scratch / "stderr.txt";
    const std::string cmd = kBin + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out);
    r.err = read_file(err);
    return r;
}

synth::Book write_book(const fs::path& dir, const std::string& key, unsigned seed, synth::BookOptions opts = {}) {
    std::mt19937_64 rng(seed);
    opts.file_key = key;
    if (opts.pages == 20) opts.pages = 8;
    if (opts.headings == 28) opts.headings = 10;
    auto book = synth::make_book(rng, opts);
    write_file(dir / (key + ".xml"), book.xml);
    return book;
}

void write_gt(const fs::path& dir, const synth::Book& book) {
    GroundTruthToc gt{book.file_key, {}};
    for (const auto& h : book.headings) gt.entries.push_back({h.level, h.title, h.page});
    write_file(dir / (book.file_key + ".json"), to_json(gt).dump(2));
}

PipelineConfig config_in(const fs::path& out) {
    PipelineConfig c;
    c.out_dir = out;
    return c;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("logger writes key=value lines") {
    std::ostringstream s;
    Logger log(s);
    log.info("written", {{"path", "/tmp/a b.json"}, {"n", "3"}, {"empty", ""}, {"q", "say \"hi\""}});
    CHECK(s.str() == "level=info event=written path=\"/tmp/a b.json\" n=3 empty=\"\" q=\"say \\\"hi\\\"\"\n");
    std::ostringstream q;
    Logger quiet(q, true);
    quiet.info("x");
    quiet.warn("y");
    CHECK(q.str() == "level=warn event=y\n");
}

TEST_CASE("atomic write creates directories and leaves no temp files") {
    TempDir d;
    write_atomic(d / "a/b/c.txt", "one");
    write_atomic(d / "a/b/c.txt", "two");
    CHECK(read_file(d / "a/b/c.txt") == "two");
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(d / "a/b")) ++n;
    CHECK(n == 1);
}

TEST_CASE("config validation maps to usage errors") {
    PipelineConfig c;
    c.jobs = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = {};
    c.record = "a";
    c.replay = "b";
    CHECK_THROWS_AS(c.validate(), InputError);
    c = {};
    c.refiner.max_level = 12;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = {};
    c.mock_rules = "/nonexistent/rules.json";
    CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("ingest and toc-segment in process") {
    TempDir d;
    const auto book = write_book(d.path(), "alpha", 1);
    std::ostringstream err, out;
    Logger log(err);
    auto cfg = config_in(d / "out");
    CHECK(cmd_ingest({(d / "alpha.xml").string()}, true, cfg, log, out) == kOk);
    CHECK(out.str().rfind("alpha pages=8 nodes=", 0) == 0);
    CHECK(out.str().find("outline=yes") != std::string::npos);
    const auto doc = load_document((d / "out/alpha.json").string());
    CHECK(doc == parse_book_file((d / "alpha.xml").string()));
    const auto toc = ground_truth_from_json(nlohmann::json::parse(read_file(d / "out/alpha.toc.json")));
    CHECK(toc.entries.size() == book.headings.size());

    CHECK(cmd_toc_segment({(d / "out/alpha.json").string()}, cfg, log) == kOk);
    const auto seg = nlohmann::json::parse(read_file(d / "out/alpha.segments.json"));
    CHECK(seg["file_key"] == "alpha");
    CHECK(read_file(d / "out/alpha.unmatched.jsonl").empty());
    CHECK(err.str().find("event=written") != std::string::npos);
}

TEST_CASE("external headings through segment") {
    TempDir d;
    const auto book = write_book(d.path(), "beta", 2);
    std::vector<DetectedHeading> hs;
    for (const auto& h : book.headings) hs.push_back({h.level, h.title, h.page, HeadingSource::external});
    hs.push_back({1, "Nowhere To Be Found", 3, HeadingSource::external});
    write_file(d / "beta.headings.json", to_json(hs).dump());
    std::ostringstream err;
    Logger log(err);
    CHECK(cmd_segment((d / "beta.xml").string(), (d / "beta.headings.json").string(), config_in(d.path()), log) == kOk);
    const auto lines = read_file(d / "beta.unmatched.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 1);
    CHECK(lines.find("Nowhere To Be Found") != std::string::npos);
    CHECK(err.str().find("event=unmatched_heading") != std::string::npos);
}

TEST_CASE("self evaluation is perfect and the summary averages") {
    TempDir d;
    fs::create_directories(d / "gt");
    std::vector<synth::Book> books;
    for (unsigned i = 0; i < 3; ++i) {
        synth::BookOptions o;
        o.max_depth = 2 + static_cast<int>(i % 2);
        books.push_back(write_book(d / "docs", "book" + std::to_string(i), 10 + i, o));
        write_gt(d / "gt", books.back());
    }
    std::ostringstream err;
    Logger log(err);
    auto cfg = config_in(d / "pred");
    cfg.jobs = 3;
    std::vector<std::string> inputs;
    for (const auto& b : books) inputs.push_back((d / "docs" / (b.file_key + ".xml")).string());
    REQUIRE(cmd_toc_segment(inputs, cfg, log) == kOk);

    auto eval_cfg = config_in(d / "eval");
    REQUIRE(cmd_eval({(d / "pred").string(), (d / "gt").string(), (d / "docs").string(), ""}, eval_cfg, log) == kOk);
    const auto reports = reports_from_csv(read_file(d / "eval/corpus.csv"));
    REQUIRE(reports.size() == 3);
    for (const auto& r : reports) {
        CHECK(r.precision_ed == 1.0);
        CHECK(r.recall_ed == 1.0);
        CHECK(r.tree_edit_distance == 0);
        CHECK(*r.pk == 0.0);
        const auto j = nlohmann::json::parse(read_file(d / "eval" / (r.file_key + ".eval.json")));
        CHECK(j["precision_ed"] == 1.0);
    }
    CHECK(fs::exists(d / "eval/summary.csv"));

    // Degrade one prediction and check the report means by hand.
    auto hs = headings_from_outline(parse_book_file((d / "docs/book1.xml").string()));
    hs.resize(hs.size() / 2);
    write_file(d / "book1.headings.json", to_json(hs).dump());
    REQUIRE(cmd_segment((d / "docs/book1.xml").string(), (d / "book1.headings.json").string(), cfg, log) == kOk);
    REQUIRE(cmd_eval({(d / "pred").string(), (d / "gt").string(), (d / "docs").string(), ""}, eval_cfg, log) == kOk);
    const auto after = reports_from_csv(read_file(d / "eval/corpus.csv"));
    double p = 0, r = 0, ted = 0;
    for (const auto& x : after) {
        p += x.precision_ed;
        r += x.recall_ed;
        ted += static_cast<double>(x.tree_edit_distance);
    }
    std::ostringstream summary;
    CHECK(cmd_report((d / "eval/corpus.csv").string(), (d / "eval/again.csv").string(), log, summary) == kOk);
    const auto rows = summarize_by_depth(after);
    CHECK(rows.back().files == 3);
    CHECK(rows.back().precision_ed == doctest::Approx(p / 3));
    CHECK(rows.back().recall_ed == doctest::Approx(r / 3));
    CHECK(rows.back().tree_edit_distance == doctest::Approx(ted / 3));
    CHECK(rows.back().recall_ed < 1.0);
    CHECK(summary.str() == read_file(d / "eval/again.csv"));
    CHECK(summary.str() == read_file(d / "eval/summary.csv"));
}

TEST_CASE("candidates, refine and llm-segment in process") {
    TempDir d;
    const auto book = write_book(d.path(), "gamma", 3);
    write_file(d / "ocr/gamma.tsv", synth::render_tsv(book.layout));
    std::ostringstream err;
    Logger log(err);
    auto cfg = config_in(d / "out");
    cfg.mock_rules = kData + "/mock_rules.json";
    cfg.ocr = (d / "ocr").string();
    REQUIRE(cmd_candidates({(d / "gamma.xml").string()}, cfg, log) == kOk);
    const auto cands = candidates_from_json(nlohmann::json::parse(read_file(d / "out/gamma.candidates.json")));
    CHECK(cands.size() >= book.headings.size());

    REQUIRE(cmd_refine({(d / "out/gamma.candidates.json").string()}, cfg, log) == kOk);
    const auto refined = headings_from_json(nlohmann::json::parse(read_file(d / "out/gamma.headings.json")));
    REQUIRE(refined.size() == book.headings.size());
    for (std::size_t i = 0; i < refined.size(); ++i) {
        CHECK(refined[i].text == book.headings[i].title);
        CHECK(refined[i].level == book.headings[i].level);
    }

    auto llm = config_in(d / "llm");
    llm.mock_rules = cfg.mock_rules;
    llm.ocr = (d / "nowhere").string();
    REQUIRE(cmd_llm_segment({(d / "gamma.xml").string()}, llm, log) == kOk);
    CHECK(err.str().find("event=ocr_missing") != std::string::npos);
    CHECK(fs::exists(d / "llm/gamma.segments.json"));
    CHECK(read_file(d / "llm/gamma.headings.json") == read_file(d / "out/gamma.headings.json"));
}

TEST_CASE("parallel runs write the same bytes") {
    TempDir d;
    std::vector<std::string> inputs;
    for (unsigned i = 0; i < 4; ++i) {
        write_book(d / "docs", "p" + std::to_string(i), 30 + i);
        inputs.push_back((d / "docs" / ("p" + std::to_string(i) + ".xml")).string());
    }
    std::ostringstream err;
    Logger log(err);
    auto one = config_in(d / "one");
    one.mock_rules = kData + "/mock_rules.json";
    auto four = one;
    four.out_dir = d / "four";
    four.jobs = 4;
    REQUIRE(cmd_llm_segment(inputs, one, log) == kOk);
    REQUIRE(cmd_llm_segment(inputs, four, log) == kOk);
    for (const auto& e : fs::directory_iterator(d / "one")) {
        CHECK(read_file(e.path()) == read_file(d / "four" / e.path().filename()));
    }
}

TEST_CASE("cli exit codes") {
    TempDir d;
    write_book(d.path(), "ok", 4);
    synth::BookOptions no_outline;
    no_outline.outline = false;
    write_book(d.path(), "bare", 5, no_outline);
    const auto full = read_file(d / "ok.xml");
    write_file(d / "cut.xml", full.substr(0, full.size() / 2));

    CHECK(run("--help", d.path()).code == 0);
    CHECK(run("", d.path()).code == 2);
    CHECK(run("ingest", d.path()).code == 2);
    CHECK(run("frobnicate x", d.path()).code == 2);
    CHECK(run("toc-segment --fuzzy-threshold 120 " + (d / "ok.xml").string(), d.path()).code == 2);

    const auto missing = run("ingest " + (d / "nope.xml").string() + " -o " + (d / "o").string(), d.path());
    CHECK(missing.code == 2);
    CHECK(missing.err.find("file not found") != std::string::npos);

    const auto cut = run("ingest " + (d / "cut.xml").string() + " -o " + (d / "o").string(), d.path());
    CHECK(cut.code == 3);
    CHECK(cut.err.find("at byte ") != std::string::npos);

    const auto bare = run("toc-segment " + (d / "bare.xml").string() + " -o " + (d / "o").string(), d.path());
    CHECK(bare.code == 4);
    CHECK(bare.err.find("hint=") != std::string::npos);
    CHECK(bare.err.find("llm-segment") != std::string::npos);

    const auto ok = run("toc-segment " + (d / "ok.xml").string() + " -o " + (d / "o").string(), d.path());
    CHECK(ok.code == 0);
    CHECK(fs::exists(d / "o/ok.segments.json"));

    // Bad file among good ones: the others still complete.
    const auto mixed = run("toc-segment -j 2 " + (d / "ok.xml").string() + " " + (d / "cut.xml").string() + " -o " +
                               (d / "m").string(),
                           d.path());
    CHECK(mixed.code == 3);
    CHECK(fs::exists(d / "m/ok.segments.json"));

    write_file(d / "bad_rules.json", R"({"rules":[{"pattern":"(","heading":true}]})");
    const auto rules = run("llm-segment --mock " + (d / "bad_rules.json").string() + " " + (d / "ok.xml").string() +
                               " -o " + (d / "o").string(),
                           d.path());
    CHECK(rules.code == 2);

    write_file(d / "ok.tsv", "not\ta\ttsv\n");
    const auto tsv = run("candidates --ocr " + (d / "ok.tsv").string() + " " + (d / "ok.xml").string() + " -o " +
                             (d / "o").string(),
                         d.path());
    CHECK(tsv.code == 3);

    const auto dead = run("llm-segment --endpoint http://127.0.0.1:1/v1 --max-retries 0 " + (d / "ok.xml").string() +
                              " -o " + (d / "o").string(),
                          d.path());
    CHECK(dead.code == 4);
}

TEST_CASE("cli eval with a missing prediction exits 5") {
    TempDir d;
    const auto a = write_book(d / "docs", "a", 6);
    const auto b = write_book(d / "docs", "b", 7);
    write_gt(d / "gt", a);
    write_gt(d / "gt", b);
    REQUIRE(run("toc-segment " + (d / "docs/a.xml").string() + " -o " + (d / "pred").string(), d.path()).code == 0);
    const auto r = run("eval --pred " + (d / "pred").string() + " --gt " + (d / "gt").string() + " --docs " +
                           (d / "docs").string() + " -o " + (d / "eval").string(),
                       d.path());
    CHECK(r.code == 5);
    CHECK(r.err.find("event=missing_prediction file_key=b") != std::string::npos);
    const auto rows = reports_from_csv(read_file(d / "eval/corpus.csv"));
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].file_key == "a");
    CHECK(rows[0].recall_ed == 1.0);

    CHECK(run("eval --pred " + (d / "nope").string() + " --gt " + (d / "gt").string() + " --docs " +
                  (d / "docs").string(),
              d.path())
              .code == 2);
    write_file(d / "bad.csv", "oops\n");
    CHECK(run("report " + (d / "bad.csv").string(), d.path()).code == 3);
    const auto rep = run("report " + (d / "eval/corpus.csv").string(), d.path());
    CHECK(rep.code == 0);
    CHECK(rep.out.rfind("max_depth,files,P_ED,R_ED,TED,Pk,WD\n", 0) == 0);
}

TEST_CASE("toml config sets shared options and flags win") {
    TempDir d;
    const auto book = write_book(d.path(), "cfg", 8);
    write_file(d / "bookseg.toml", "out-dir = \"" + (d / "from_config").string() +
                                       "\"\nmock = \"" + kData + "/mock_rules.json\"\nbatch-size = 3\n");
    const auto r = run("--config " + (d / "bookseg.toml").string() + " llm-segment --record " +
                           (d / "t.json").string() + " " + (d / "cfg.xml").string(),
                       d.path());
    CHECK(r.code == 0);
    CHECK(fs::exists(d / "from_config/cfg.segments.json"));
    const auto t = nlohmann::json::parse(read_file(d / "t.json"));
    CHECK(t["exchanges"].size() == (book.headings.size() + 2) / 3);

    const auto over = run("--config " + (d / "bookseg.toml").string() + " llm-segment -q -o " +
                              (d / "flag").string() + " " + (d / "cfg.xml").string(),
                          d.path());
    CHECK(over.code == 0);
    CHECK(over.err.empty());
    CHECK(fs::exists(d / "flag/cfg.segments.json"));

    const auto replay = run("llm-segment --replay " + (d / "t.json").string() + " --batch-size 3 -o " +
                                (d / "replayed").string() + " " + (d / "cfg.xml").string(),
                            d.path());
    CHECK(replay.code == 0);
    CHECK(read_file(d / "replayed/cfg.segments.json") == read_file(d / "from_config/cfg.segments.json"));
}

}  // TEST_SUITE
