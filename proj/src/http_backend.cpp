#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include "bookseg/refiner.hpp"

namespace bookseg {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw RefinerConfigError("endpoint URL needs a scheme: " + url);
    const auto s = url.substr(0, scheme);
    if (s != "http" && s != "https") throw RefinerConfigError("unsupported endpoint scheme '" + s + "'");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

bool transient(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpChatBackend::HttpChatBackend(RefinerConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    split_url(cfg_.endpoint_url);
}

nlohmann::json HttpChatBackend::request_body(const std::string& prompt) const {
    return {{"model", cfg_.model_name},
            {"temperature", cfg_.temperature},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
}

std::string HttpChatBackend::extract_content(const std::string& body) {
    try {
        const auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw RefinerError(std::string("malformed chat-completions response: ") + e.what(), body);
    }
}

std::string HttpChatBackend::complete(const std::string& prompt) {
    const auto ep = split_url(cfg_.endpoint_url);
    httplib::Client client(ep.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(cfg_.timeout_s));

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = request_body(prompt).dump();

    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
        auto res = client.Post(ep.path, headers, body, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) return extract_content(res->body);
        last_error = "HTTP " + std::to_string(res->status);
        if (!transient(res->status)) throw RefinerError(last_error + " from " + cfg_.endpoint_url, res->body);
    }
    throw RefinerError(last_error + " from " + cfg_.endpoint_url + " after " + std::to_string(cfg_.max_retries + 1) +
                       " attempts");
}

}  // namespace bookseg
