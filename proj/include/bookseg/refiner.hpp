#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bookseg/candidates.hpp"
#include "bookseg/headings.hpp"

namespace bookseg {

/// Bumped whenever the prompt wording changes; recorded transcripts carry it.
inline constexpr std::string_view kPromptVersion = "bookseg-refine/1";

struct RefinerConfig {
    std::string endpoint_url = "http://127.0.0.1:8000/v1/chat/completions";
    std::string model_name = "local-model";
    std::string api_key_env = "BOOKSEG_API_KEY";
    std::size_t batch_size = 40;
    int max_level = 10;
    double temperature = 0.0;
    int max_retries = 3;
    int backoff_ms = 500;
    int timeout_s = 120;
    /// Only the most recent confirmations are carried into the next prompt.
    std::size_t max_context = 50;

    void validate() const;
};

struct RefinerVerdict {
    std::size_t candidate_index = 1;  // 1-based within the batch
    bool is_heading = false;
    std::string cleaned_text;
    std::optional<int> level;

    bool operator==(const RefinerVerdict&) const = default;
};

class RefinerConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A response that is not a JSON array of well-formed verdicts.
class VerdictSchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A batch that could not be refined. raw_response holds the last reply, if any.
class RefinerError : public std::runtime_error {
public:
    RefinerError(const std::string& what, std::string raw = {})
        : std::runtime_error(what), raw_response(std::move(raw)) {}
    std::string raw_response;
};

std::string build_prompt(const std::vector<HeadingCandidate>& batch, const std::vector<IndexedHeading>& context,
                         const RefinerConfig& cfg = {});

/// Extracts the JSON array from `response` (code fences and surrounding prose
/// are tolerated) and checks it against the batch: every index 1..batch_len
/// exactly once, cleaned_text present, level present iff is_heading and in
/// [1, max_level]. Verdicts come back sorted by index.
std::vector<RefinerVerdict> parse_verdicts(std::string_view response, std::size_t batch_len, int max_level);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the assistant message for a single-turn conversation.
    virtual std::string complete(const std::string& prompt) = 0;
};

/// Chat-completions endpoint over HTTP(S). The bearer token is read from the
/// environment variable named in the config (no header when it is unset).
/// Connection failures, 429 and 5xx are retried with exponential backoff.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(RefinerConfig cfg);
    std::string complete(const std::string& prompt) override;

    nlohmann::json request_body(const std::string& prompt) const;
    /// choices[0].message.content of a chat-completions response body.
    static std::string extract_content(const std::string& body);

private:
    RefinerConfig cfg_;
};

struct MockRule {
    std::string pattern;
    std::regex re;
    bool heading = false;
    /// Fixed level; ignored when level_from_numbering is set.
    int level = 1;
    /// Level = number of dot-separated components of the leading numbering ("3.1" -> 2).
    bool level_from_numbering = false;
};

/// Offline stand-in: reads the numbered candidate texts back out of the
/// prompt and answers from an ordered rule list. The first rule whose regex
/// finds a match decides; with no match the candidate is not a heading.
///
/// Rules JSON: {"rules": [{"pattern": "^\\d+\\.\\d+", "heading": true, "level": 2},
///                        {"pattern": "^\\d+ ", "heading": true, "level": "numbering"}]}
class MockBackend : public ChatBackend {
public:
    explicit MockBackend(std::vector<MockRule> rules);
    static MockBackend from_json(const nlohmann::json& j);
    static MockBackend from_file(const std::string& path);

    std::string complete(const std::string& prompt) override;
    RefinerVerdict judge(std::size_t index, const std::string& text) const;

private:
    std::vector<MockRule> rules_;
};

struct TranscriptExchange {
    std::string prompt;
    std::string response;
};

/// Records every exchange of the wrapped backend.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(ChatBackend& inner, std::string model_name);
    std::string complete(const std::string& prompt) override;
    nlohmann::json transcript() const;
    void save(const std::string& path) const;

private:
    ChatBackend& inner_;
    std::string model_name_;
    std::vector<TranscriptExchange> exchanges_;
};

/// Serves a recorded transcript in order; each prompt must equal the recorded one.
class ReplayBackend : public ChatBackend {
public:
    explicit ReplayBackend(const nlohmann::json& transcript);
    static ReplayBackend from_file(const std::string& path);
    std::string complete(const std::string& prompt) override;
    std::size_t remaining() const { return exchanges_.size() - next_; }

private:
    std::vector<TranscriptExchange> exchanges_;
    std::size_t next_ = 0;
};

/// Batches in document order, carrying confirmed (text, level) pairs forward.
/// Schema-invalid replies are re-requested up to max_retries times before the
/// batch fails with RefinerError.
std::vector<DetectedHeading> refine(const std::vector<HeadingCandidate>& candidates, ChatBackend& backend,
                                    const RefinerConfig& cfg = {});

nlohmann::json to_json(const std::vector<RefinerVerdict>& verdicts);

}  // namespace bookseg
