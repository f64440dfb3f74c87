#include "bookseg/refiner.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bookseg/text.hpp"

namespace bookseg {

void RefinerConfig::validate() const {
    if (max_level < 1 || max_level > 10) throw RefinerConfigError("max_level must lie in [1, 10]");
    if (batch_size < 1) throw RefinerConfigError("batch_size must be >= 1");
    if (max_retries < 0) throw RefinerConfigError("max_retries must be >= 0");
    if (temperature < 0.0) throw RefinerConfigError("temperature must be >= 0");
    if (backoff_ms < 0) throw RefinerConfigError("backoff_ms must be >= 0");
}

namespace {

std::string one_line(std::string_view s) { return text::collapse_whitespace(s); }

}  // namespace

std::string build_prompt(const std::vector<HeadingCandidate>& batch, const std::vector<IndexedHeading>& context,
                         const RefinerConfig& cfg) {
    std::ostringstream p;
    p << "# " << kPromptVersion << "\n"
      << "You receive heading candidates extracted from one book, in reading order.\n"
      << "For every candidate:\n"
      << "1. Clean the text: remove noise such as fragmented text, stray special characters,\n"
      << "   page numbers and dot leaders. Keep the numbering and wording of real headings.\n"
      << "2. Decide whether it is a true section heading or noise, based on its text, its\n"
      << "   layout features and the trailing text that follows it.\n"
      << "3. Assign a hierarchy level to every heading. Books typically use 2-3 levels, up to "
      << cfg.max_level << " if needed.\n"
      << "   Level 1 is the top level. Stay consistent with the previously identified headings\n"
      << "   listed under CONTEXT: equivalent headings get the same level.\n"
      << "4. Respond ONLY with a JSON array containing one object per candidate:\n"
      << "   {\"candidate_index\": <number>, \"is_heading\": <true|false>, \"cleaned_text\": <string>, "
         "\"level\": <1-"
      << cfg.max_level << ">}\n"
      << "   Omit \"level\" when is_heading is false. No prose, no code fences.\n\n";

    p << "CONTEXT (previously identified headings):\n";
    if (context.empty()) p << "(none)\n";
    for (const auto& h : context) p << "- level " << h.level << ": " << one_line(h.text) << "\n";

    p << "\nCANDIDATES:\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& c = batch[i];
        const auto& f = c.features;
        p << "[" << i + 1 << "] text: " << one_line(c.text) << "\n"
          << "    page: " << c.page << "\n"
          << "    source: " << to_string(c.source) << "\n";
        if (!f.font_id.empty()) p << "    font: " << f.font_id << " size:" << f.font_size << "\n";
        p << "    bold: " << (f.bold ? "true" : "false") << "\n"
          << "    box: left:" << f.left << " top:" << f.top << " width:" << f.width << " height:" << f.height << "\n";
        if (c.conf) p << "    ocr_conf: " << static_cast<int>(*c.conf + 0.5) << "\n";
        p << "    trailing_text: " << one_line(c.trailing_text) << "\n";
    }
    return p.str();
}

namespace {

std::string_view json_slice(std::string_view s) {
    const auto open = s.find('[');
    const auto close = s.rfind(']');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return {};
    return s.substr(open, close - open + 1);
}

}  // namespace

std::vector<RefinerVerdict> parse_verdicts(std::string_view response, std::size_t batch_len, int max_level) {
    const auto slice = json_slice(response);
    if (slice.empty()) throw VerdictSchemaError("response contains no JSON array");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(slice);
    } catch (const nlohmann::json::parse_error& e) {
        throw VerdictSchemaError(std::string("response is not valid JSON: ") + e.what());
    }
    if (!j.is_array()) throw VerdictSchemaError("response is not a JSON array");

    std::vector<RefinerVerdict> out;
    std::vector<bool> seen(batch_len + 1, false);
    for (const auto& e : j) {
        if (!e.is_object()) throw VerdictSchemaError("verdict is not an object");
        const auto idx = e.find("candidate_index");
        if (idx == e.end() || !idx->is_number_integer()) throw VerdictSchemaError("verdict without integer candidate_index");
        const auto n = idx->get<long long>();
        if (n < 1 || static_cast<std::size_t>(n) > batch_len) {
            throw VerdictSchemaError("candidate_index " + std::to_string(n) + " out of range 1.." + std::to_string(batch_len));
        }
        if (seen[n]) throw VerdictSchemaError("candidate_index " + std::to_string(n) + " appears twice");
        seen[n] = true;

        RefinerVerdict v;
        v.candidate_index = static_cast<std::size_t>(n);
        const auto heading = e.find("is_heading");
        if (heading == e.end() || !heading->is_boolean()) throw VerdictSchemaError("verdict without boolean is_heading");
        v.is_heading = heading->get<bool>();
        const auto cleaned = e.find("cleaned_text");
        if (cleaned == e.end() || !cleaned->is_string()) throw VerdictSchemaError("verdict without string cleaned_text");
        v.cleaned_text = one_line(cleaned->get<std::string>());

        const auto level = e.find("level");
        const bool has_level = level != e.end() && !level->is_null();
        if (v.is_heading) {
            if (!has_level || !level->is_number_integer()) throw VerdictSchemaError("heading verdict without integer level");
            const auto l = level->get<long long>();
            if (l < 1 || l > max_level) throw VerdictSchemaError("level " + std::to_string(l) + " out of range");
            v.level = static_cast<int>(l);
            if (v.cleaned_text.empty()) throw VerdictSchemaError("heading verdict with empty cleaned_text");
        } else if (has_level) {
            throw VerdictSchemaError("level given for a non-heading verdict");
        }
        out.push_back(std::move(v));
    }
    if (out.size() != batch_len) {
        throw VerdictSchemaError("expected " + std::to_string(batch_len) + " verdicts, got " + std::to_string(out.size()));
    }
    std::sort(out.begin(), out.end(),
              [](const RefinerVerdict& a, const RefinerVerdict& b) { return a.candidate_index < b.candidate_index; });
    return out;
}

nlohmann::json to_json(const std::vector<RefinerVerdict>& verdicts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : verdicts) {
        nlohmann::json j{{"candidate_index", v.candidate_index}, {"is_heading", v.is_heading}, {"cleaned_text", v.cleaned_text}};
        if (v.level) j["level"] = *v.level;
        arr.push_back(std::move(j));
    }
    return arr;
}

// ---------------------------------------------------------------- mock

MockBackend::MockBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {}

MockBackend MockBackend::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("rules") || !j["rules"].is_array()) {
        throw RefinerConfigError("mock rules must be an object with a \"rules\" array");
    }
    std::vector<MockRule> rules;
    for (const auto& r : j["rules"]) {
        MockRule rule;
        if (!r.is_object() || !r.contains("pattern") || !r["pattern"].is_string()) {
            throw RefinerConfigError("mock rule needs a string \"pattern\"");
        }
        rule.pattern = r["pattern"].get<std::string>();
        try {
            rule.re = std::regex(rule.pattern, std::regex::ECMAScript);
        } catch (const std::regex_error& e) {
            throw RefinerConfigError("invalid mock rule regex '" + rule.pattern + "': " + e.what());
        }
        rule.heading = r.value("heading", false);
        if (r.contains("level")) {
            const auto& l = r["level"];
            if (l.is_string() && l.get<std::string>() == "numbering") {
                rule.level_from_numbering = true;
            } else if (l.is_number_integer() && l.get<int>() >= 1 && l.get<int>() <= 10) {
                rule.level = l.get<int>();
            } else {
                throw RefinerConfigError("mock rule level must be 1..10 or \"numbering\"");
            }
        }
        rules.push_back(std::move(rule));
    }
    return MockBackend(std::move(rules));
}

MockBackend MockBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RefinerConfigError("cannot read mock rules " + path);
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw RefinerConfigError("mock rules " + path + ": " + e.what());
    }
}

namespace {

int numbering_depth(const std::string& text) {
    static const std::regex numbering(R"(^\s*(\d+(?:\.\d+)*))");
    std::smatch m;
    if (!std::regex_search(text, m, numbering)) return 1;
    const std::string n = m[1].str();
    return std::min(10, 1 + static_cast<int>(std::count(n.begin(), n.end(), '.')));
}

}  // namespace

RefinerVerdict MockBackend::judge(std::size_t index, const std::string& text) const {
    RefinerVerdict v;
    v.candidate_index = index;
    v.cleaned_text = text;
    for (const auto& rule : rules_) {
        if (!std::regex_search(text, rule.re)) continue;
        v.is_heading = rule.heading;
        if (rule.heading) v.level = rule.level_from_numbering ? numbering_depth(text) : rule.level;
        break;
    }
    return v;
}

std::string MockBackend::complete(const std::string& prompt) {
    static const std::regex candidate_line(R"(^\[(\d+)\] text: (.*)$)");
    std::istringstream in(prompt);
    std::string line;
    bool in_candidates = false;
    std::vector<RefinerVerdict> verdicts;
    while (std::getline(in, line)) {
        if (line == "CANDIDATES:") {
            in_candidates = true;
            continue;
        }
        std::smatch m;
        if (in_candidates && std::regex_match(line, m, candidate_line)) {
            verdicts.push_back(judge(std::stoul(m[1].str()), m[2].str()));
        }
    }
    return to_json(verdicts).dump();
}

// ---------------------------------------------------------------- transcripts

namespace {

constexpr std::string_view kTranscriptFormat = "bookseg-transcript/1";

}  // namespace

RecordingBackend::RecordingBackend(ChatBackend& inner, std::string model_name)
    : inner_(inner), model_name_(std::move(model_name)) {}

std::string RecordingBackend::complete(const std::string& prompt) {
    std::string response = inner_.complete(prompt);
    exchanges_.push_back({prompt, response});
    return response;
}

nlohmann::json RecordingBackend::transcript() const {
    nlohmann::json ex = nlohmann::json::array();
    for (const auto& e : exchanges_) ex.push_back({{"prompt", e.prompt}, {"response", e.response}});
    return {{"format", kTranscriptFormat}, {"prompt_version", kPromptVersion}, {"model", model_name_}, {"exchanges", ex}};
}

void RecordingBackend::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw RefinerConfigError("cannot write transcript " + path);
        out << transcript().dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw RefinerConfigError("cannot write transcript " + path);
}

ReplayBackend::ReplayBackend(const nlohmann::json& t) {
    if (!t.is_object() || t.value("format", std::string()) != kTranscriptFormat) {
        throw RefinerConfigError("not a " + std::string(kTranscriptFormat) + " transcript");
    }
    if (t.value("prompt_version", std::string()) != kPromptVersion) {
        throw RefinerConfigError("transcript was recorded with prompt version '" + t.value("prompt_version", std::string()) +
                                 "', current is '" + std::string(kPromptVersion) + "'");
    }
    for (const auto& e : t.at("exchanges")) {
        exchanges_.push_back({e.at("prompt").get<std::string>(), e.at("response").get<std::string>()});
    }
}

ReplayBackend ReplayBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RefinerConfigError("cannot read transcript " + path);
    try {
        return ReplayBackend(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw RefinerConfigError("transcript " + path + ": " + e.what());
    }
}

std::string ReplayBackend::complete(const std::string& prompt) {
    if (next_ >= exchanges_.size()) throw RefinerError("transcript exhausted after " + std::to_string(next_) + " exchanges");
    const auto& e = exchanges_[next_];
    if (e.prompt != prompt) {
        throw RefinerError("prompt " + std::to_string(next_ + 1) + " differs from the recorded transcript");
    }
    ++next_;
    return e.response;
}

// ---------------------------------------------------------------- refine

std::vector<DetectedHeading> refine(const std::vector<HeadingCandidate>& candidates, ChatBackend& backend,
                                    const RefinerConfig& cfg) {
    cfg.validate();
    std::vector<DetectedHeading> out;
    std::vector<IndexedHeading> confirmed;

    for (std::size_t start = 0; start < candidates.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(candidates.size(), start + cfg.batch_size);
        const std::vector<HeadingCandidate> batch(candidates.begin() + static_cast<std::ptrdiff_t>(start),
                                                  candidates.begin() + static_cast<std::ptrdiff_t>(end));
        const std::size_t keep = std::min(confirmed.size(), cfg.max_context);
        const std::vector<IndexedHeading> context(confirmed.end() - static_cast<std::ptrdiff_t>(keep), confirmed.end());
        const std::string prompt = build_prompt(batch, context, cfg);

        std::string raw;
        std::string problem;
        std::optional<std::vector<RefinerVerdict>> verdicts;
        for (int attempt = 0; attempt <= cfg.max_retries && !verdicts; ++attempt) {
            raw = backend.complete(prompt);
            try {
                verdicts = parse_verdicts(raw, batch.size(), cfg.max_level);
            } catch (const VerdictSchemaError& e) {
                problem = e.what();
            }
        }
        if (!verdicts) {
            throw RefinerError("batch of candidates " + std::to_string(start + 1) + ".." + std::to_string(end) +
                                   " rejected after " + std::to_string(cfg.max_retries + 1) + " attempts: " + problem +
                                   "; raw response: " + raw,
                               raw);
        }
        for (const auto& v : *verdicts) {
            if (!v.is_heading) continue;
            const auto& c = batch[v.candidate_index - 1];
            out.push_back(DetectedHeading{*v.level, v.cleaned_text, c.page, HeadingSource::llm});
            confirmed.push_back(IndexedHeading{v.cleaned_text, *v.level});
        }
    }
    return out;
}

}  // namespace bookseg
