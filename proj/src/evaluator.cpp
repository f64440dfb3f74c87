#include "bookseg/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "bookseg/matching.hpp"
#include "bookseg/text.hpp"

namespace bookseg {

std::vector<DetectedHeading> GroundTruthToc::as_headings() const {
    std::vector<DetectedHeading> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(DetectedHeading{e.level, e.title, e.page, HeadingSource::external});
    return out;
}

int GroundTruthToc::max_depth() const {
    int depth = 0;
    for (const auto& e : entries) depth = std::max(depth, e.level);
    return depth;
}

nlohmann::json to_json(const GroundTruthToc& gt) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : gt.entries) entries.push_back({{"level", e.level}, {"title", e.title}, {"page", e.page}});
    return {{"file_key", gt.file_key}, {"entries", std::move(entries)}};
}

GroundTruthToc ground_truth_from_json(const nlohmann::json& j) {
    GroundTruthToc gt;
    gt.file_key = j.at("file_key").get<std::string>();
    for (const auto& e : j.at("entries")) {
        GroundTruthEntry entry{e.at("level").get<int>(), e.at("title").get<std::string>(), e.at("page").get<int>()};
        if (entry.level < 1) throw std::invalid_argument("GT entry level must be >= 1");
        if (entry.page < 1) throw std::invalid_argument("GT entry page must be >= 1");
        gt.entries.push_back(std::move(entry));
    }
    return gt;
}

TitleScores title_pr_ed(const std::vector<DetectedHeading>& pred, const GroundTruthToc& gt, std::size_t tolerance) {
    std::vector<std::string> p_text, g_text;
    std::vector<std::u32string> p32, g32;
    for (const auto& h : pred) {
        p_text.push_back(text::trim(h.text));
        p32.push_back(text::decode_utf8(p_text.back()));
    }
    for (const auto& e : gt.entries) {
        g_text.push_back(text::trim(e.title));
        g32.push_back(text::decode_utf8(g_text.back()));
    }

    struct Pair {
        bool other_page;
        std::size_t dist;
        std::size_t p, g;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < gt.entries.size(); ++j) {
            const std::size_t d = levenshtein_bounded(p32[i], g32[j], tolerance);
            if (d <= tolerance) pairs.push_back({pred[i].page != gt.entries[j].page, d, i, j});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
        return std::forward_as_tuple(a.other_page, a.dist, p_text[a.p], pred[a.p].page, g_text[a.g], gt.entries[a.g].page) <
               std::forward_as_tuple(b.other_page, b.dist, p_text[b.p], pred[b.p].page, g_text[b.g], gt.entries[b.g].page);
    });

    std::vector<bool> p_used(pred.size(), false), g_used(gt.entries.size(), false);
    TitleScores scores;
    for (const auto& x : pairs) {
        if (p_used[x.p] || g_used[x.g]) continue;
        p_used[x.p] = g_used[x.g] = true;
        ++scores.counts.tp;
    }
    scores.counts.fp = pred.size() - scores.counts.tp;
    scores.counts.fn = gt.entries.size() - scores.counts.tp;
    const auto& c = scores.counts;
    scores.precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    scores.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return scores;
}

std::size_t LabeledTree::add(std::string label, std::optional<std::size_t> parent) {
    if (nodes.empty() == parent.has_value()) {
        throw std::invalid_argument("the first node is the root; every later node needs a parent");
    }
    nodes.push_back(Node{std::move(label), {}});
    const std::size_t id = nodes.size() - 1;
    if (parent) nodes.at(*parent).children.push_back(id);
    return id;
}

LabeledTree labeled_tree(const SectionTree& tree) {
    LabeledTree out;
    out.nodes.reserve(tree.size());
    for (const auto& n : tree.nodes) out.nodes.push_back(LabeledTree::Node{normalize(n.heading), n.children});
    if (!out.nodes.empty()) out.nodes.front().label.clear();
    return out;
}

namespace {

struct Postorder {
    std::vector<const std::string*> label;  // 1-based
    std::vector<std::size_t> leftmost;      // 1-based: postorder index of leftmost leaf descendant
    std::vector<std::size_t> keyroots;
};

Postorder postorder(const LabeledTree& t) {
    Postorder p;
    p.label.push_back(nullptr);
    p.leftmost.push_back(0);
    if (t.nodes.empty()) return p;

    // Iterative post-order walk; frames hold (node, next child, first post id in subtree).
    struct Frame {
        std::size_t node;
        std::size_t next;
        std::size_t first;
    };
    std::vector<Frame> stack{{0, 0, 1}};
    while (!stack.empty()) {
        Frame& f = stack.back();
        const auto& kids = t.nodes[f.node].children;
        if (f.next < kids.size()) {
            const std::size_t child = kids[f.next++];
            stack.push_back(Frame{child, 0, p.label.size()});
            continue;
        }
        // The leftmost leaf of a subtree is the first node numbered inside it.
        p.label.push_back(&t.nodes[f.node].label);
        p.leftmost.push_back(f.first);
        stack.pop_back();
    }

    const std::size_t n = p.label.size() - 1;
    std::vector<bool> seen(n + 1, false);
    for (std::size_t i = n; i >= 1; --i) {
        if (!seen[p.leftmost[i]]) {
            seen[p.leftmost[i]] = true;
            p.keyroots.push_back(i);
        }
    }
    std::sort(p.keyroots.begin(), p.keyroots.end());
    return p;
}

}  // namespace

std::size_t zss_distance(const LabeledTree& a, const LabeledTree& b) {
    const Postorder pa = postorder(a);
    const Postorder pb = postorder(b);
    const std::size_t n = pa.label.size() - 1;
    const std::size_t m = pb.label.size() - 1;
    if (n == 0 || m == 0) return n + m;

    std::vector<std::vector<std::size_t>> treedist(n + 1, std::vector<std::size_t>(m + 1, 0));
    std::vector<std::vector<std::size_t>> fd(n + 2, std::vector<std::size_t>(m + 2, 0));

    for (std::size_t i : pa.keyroots) {
        for (std::size_t j : pb.keyroots) {
            const std::size_t li = pa.leftmost[i];
            const std::size_t lj = pb.leftmost[j];
            // fd indices are offset so that (li - 1) maps to 0.
            fd[0][0] = 0;
            for (std::size_t x = li; x <= i; ++x) fd[x - li + 1][0] = fd[x - li][0] + 1;
            for (std::size_t y = lj; y <= j; ++y) fd[0][y - lj + 1] = fd[0][y - lj] + 1;
            for (std::size_t x = li; x <= i; ++x) {
                for (std::size_t y = lj; y <= j; ++y) {
                    const std::size_t xi = x - li + 1;
                    const std::size_t yj = y - lj + 1;
                    const std::size_t del = fd[xi - 1][yj] + 1;
                    const std::size_t ins = fd[xi][yj - 1] + 1;
                    if (pa.leftmost[x] == li && pb.leftmost[y] == lj) {
                        const std::size_t rel = *pa.label[x] == *pb.label[y] ? 0 : 1;
                        fd[xi][yj] = std::min({del, ins, fd[xi - 1][yj - 1] + rel});
                        treedist[x][y] = fd[xi][yj];
                    } else {
                        const std::size_t px = pa.leftmost[x] - li;
                        const std::size_t py = pb.leftmost[y] - lj;
                        fd[xi][yj] = std::min({del, ins, fd[px][py] + treedist[x][y]});
                    }
                }
            }
        }
    }
    return treedist[n][m];
}

std::size_t zss_distance(const SectionTree& a, const SectionTree& b) {
    return zss_distance(labeled_tree(a), labeled_tree(b));
}

BoundarySequence linearize_boundaries(const SegmentationResult& segments, const BookDocument& doc,
                                      int top_tolerance) {
    const std::size_t n = document_line_count(doc, top_tolerance);
    BoundarySequence b(n, false);
    for (const auto& seg : segments.segments) {
        if (seg.level == 0) continue;
        if (seg.start_line >= n) {
            throw EvaluationError("segment '" + seg.heading + "' starts at line " + std::to_string(seg.start_line) +
                                  " but the document has " + std::to_string(n) + " lines");
        }
        if (seg.start_line > 0) b[seg.start_line] = true;
    }
    return b;
}

std::size_t default_window(const BoundarySequence& ref) {
    if (ref.empty()) return 2;
    std::size_t segments = 1;
    for (std::size_t i = 1; i < ref.size(); ++i) segments += ref[i] ? 1 : 0;
    const double mean = static_cast<double>(ref.size()) / static_cast<double>(segments);
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(mean / 2.0)));
}

namespace {

std::vector<std::size_t> prefix_counts(const BoundarySequence& b) {
    std::vector<std::size_t> c(b.size(), 0);
    for (std::size_t i = 1; i < b.size(); ++i) c[i] = c[i - 1] + (b[i] ? 1 : 0);
    return c;
}

std::size_t checked_window(const BoundarySequence& ref, const BoundarySequence& hyp, std::optional<std::size_t> k) {
    if (ref.size() != hyp.size()) {
        throw EvaluationError("boundary sequences differ in length (" + std::to_string(ref.size()) + " vs " +
                              std::to_string(hyp.size()) + ")");
    }
    const std::size_t w = k.value_or(default_window(ref));
    if (w == 0) throw EvaluationError("window size must be positive");
    if (ref.size() < 2 || ref.size() < w + 1) {
        throw EvaluationError("sequence of length " + std::to_string(ref.size()) + " is too short for window " +
                              std::to_string(w));
    }
    return w;
}

}  // namespace

double pk(const BoundarySequence& ref, const BoundarySequence& hyp, std::optional<std::size_t> k) {
    const std::size_t w = checked_window(ref, hyp, k);
    const auto cr = prefix_counts(ref);
    const auto ch = prefix_counts(hyp);
    const std::size_t windows = ref.size() - w;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < windows; ++i) {
        const bool same_ref = cr[i + w] == cr[i];
        const bool same_hyp = ch[i + w] == ch[i];
        errors += same_ref != same_hyp ? 1 : 0;
    }
    return static_cast<double>(errors) / static_cast<double>(windows);
}

double window_diff(const BoundarySequence& ref, const BoundarySequence& hyp, std::optional<std::size_t> k) {
    const std::size_t w = checked_window(ref, hyp, k);
    const auto cr = prefix_counts(ref);
    const auto ch = prefix_counts(hyp);
    const std::size_t windows = ref.size() - w;
    std::size_t errors = 0;
    for (std::size_t i = 0; i < windows; ++i) {
        errors += (cr[i + w] - cr[i]) != (ch[i + w] - ch[i]) ? 1 : 0;
    }
    return static_cast<double>(errors) / static_cast<double>(windows);
}

std::vector<DetectedHeading> segment_headings(const SegmentationResult& result) {
    std::vector<DetectedHeading> out;
    for (const auto& s : result.segments) {
        if (s.level == 0) continue;
        out.push_back(DetectedHeading{s.level, s.heading, s.start_page, HeadingSource::external});
    }
    return out;
}

EvalReport evaluate_file(const SegmentationResult& pred, const GroundTruthToc& gt, const BookDocument& doc,
                         const EvalOptions& opts) {
    if (pred.file_key != gt.file_key || doc.file_key != gt.file_key) {
        throw EvaluationError("file_key mismatch: prediction '" + pred.file_key + "', ground truth '" + gt.file_key +
                              "', document '" + doc.file_key + "'");
    }
    EvalReport report;
    report.file_key = gt.file_key;
    report.max_depth = gt.max_depth();

    const auto scores = title_pr_ed(segment_headings(pred), gt, opts.title_tolerance);
    report.precision_ed = scores.precision;
    report.recall_ed = scores.recall;
    report.counts = scores.counts;

    const auto gt_headings = gt.as_headings();
    report.tree_edit_distance = zss_distance(build_section_tree(pred.segments), build_section_tree(gt_headings));

    const auto reference = segment_document(doc, gt_headings, opts.segmenter);
    const auto ref = linearize_boundaries(reference, doc, opts.segmenter.top_tolerance);
    const auto hyp = linearize_boundaries(pred, doc, opts.segmenter.top_tolerance);
    if (ref.size() != hyp.size()) throw EvaluationError("inconsistent line unitization between prediction and GT");
    const std::size_t k = default_window(ref);
    if (ref.size() >= 2 && ref.size() >= k + 1) {
        report.pk = pk(ref, hyp, k);
        report.window_diff = window_diff(ref, hyp, k);
    }
    return report;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (!v) continue;
        sum += *v;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

DepthSummary summarize(int depth, const std::vector<const EvalReport*>& group) {
    DepthSummary s;
    s.max_depth = depth;
    s.files = group.size();
    std::vector<std::optional<double>> pks;
    std::vector<std::optional<double>> wds;
    for (const auto* r : group) {
        s.precision_ed += r->precision_ed;
        s.recall_ed += r->recall_ed;
        s.tree_edit_distance += static_cast<double>(r->tree_edit_distance);
        pks.push_back(r->pk);
        wds.push_back(r->window_diff);
    }
    if (!group.empty()) {
        const auto n = static_cast<double>(group.size());
        s.precision_ed /= n;
        s.recall_ed /= n;
        s.tree_edit_distance /= n;
    }
    s.pk = mean_of(pks);
    s.window_diff = mean_of(wds);
    return s;
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
    return {{"file_key", r.file_key},
            {"max_depth", r.max_depth},
            {"precision_ed", r.precision_ed},
            {"recall_ed", r.recall_ed},
            {"tree_edit_distance", r.tree_edit_distance},
            {"pk", optional_number(r.pk)},
            {"window_diff", optional_number(r.window_diff)},
            {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}}};
}

std::string corpus_csv(const std::vector<EvalReport>& reports) {
    std::string out = "file_key,max_depth,P_ED,R_ED,TED,Pk,WD\n";
    for (const auto& r : reports) {
        out += csv_field(r.file_key) + "," + std::to_string(r.max_depth) + "," + fmt(r.precision_ed) + "," +
               fmt(r.recall_ed) + "," + std::to_string(r.tree_edit_distance) + "," + fmt(r.pk) + "," +
               fmt(r.window_diff) + "\n";
    }
    return out;
}

std::vector<DepthSummary> summarize_by_depth(const std::vector<EvalReport>& reports) {
    std::map<int, std::vector<const EvalReport*>> groups;
    std::vector<const EvalReport*> all;
    for (const auto& r : reports) {
        groups[r.max_depth].push_back(&r);
        all.push_back(&r);
    }
    std::vector<DepthSummary> rows;
    for (const auto& [depth, group] : groups) rows.push_back(summarize(depth, group));
    rows.push_back(summarize(0, all));
    return rows;
}

std::string summary_csv(const std::vector<DepthSummary>& rows) {
    std::string out = "max_depth,files,P_ED,R_ED,TED,Pk,WD\n";
    for (const auto& r : rows) {
        out += (r.max_depth == 0 ? std::string("all") : std::to_string(r.max_depth)) + "," + std::to_string(r.files) +
               "," + fmt(r.precision_ed) + "," + fmt(r.recall_ed) + "," + fmt(r.tree_edit_distance) + "," +
               fmt(r.pk) + "," + fmt(r.window_diff) + "\n";
    }
    return out;
}

std::vector<EvalReport> reports_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || text::trim(line) != "file_key,max_depth,P_ED,R_ED,TED,Pk,WD") {
        throw std::invalid_argument("corpus CSV header mismatch");
    }
    std::vector<EvalReport> out;
    auto opt = [](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        return std::stod(s);
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_row(line);
        if (f.size() != 7) throw std::invalid_argument("corpus CSV row has " + std::to_string(f.size()) + " fields");
        EvalReport r;
        r.file_key = f[0];
        r.max_depth = std::stoi(f[1]);
        r.precision_ed = std::stod(f[2]);
        r.recall_ed = std::stod(f[3]);
        r.tree_edit_distance = static_cast<std::size_t>(std::stoull(f[4]));
        r.pk = opt(f[5]);
        r.window_diff = opt(f[6]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace bookseg
