// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/image.hpp"
#include "caicl/vlm.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <string>
#include <thread>

namespace caicl {

inline constexpr const char* kApiKeyEnv = "CAICL_API_KEY";

struct RemoteConfig {
    /// Scheme, host, optional port and optional path prefix, e.g. "https://api.example.com".
    std::string base_url;
    std::string model;
    /// Empty means read from CAICL_API_KEY.
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{500};
    int max_in_flight = 4;
};

/// Wire body for a chat request. Keys are emitted in a fixed order so the
/// bytes are reproducible; descriptor sidecars are never included.
inline std::string serialize_chat_request(const ChatRequest& req)
{
    using oj = nlohmann::ordered_json;
    oj body;
    body["model"] = req.model;
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    auto messages = oj::array();
    for (const auto& m : req.messages) {
        auto content = oj::array();
        for (const auto& p : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&p)) {
                oj part;
                part["type"] = "text";
                part["text"] = t->text;
                content.push_back(std::move(part));
            } else {
                const auto& img = std::get<ImagePart>(p);
                oj part;
                part["type"] = "image_url";
                part["image_url"] = {{"url", "data:image/png;base64," + base64_encode(img.image.png())}};
                content.push_back(std::move(part));
            }
        }
        oj msg;
        msg["role"] = m.role;
        msg["content"] = std::move(content);
        messages.push_back(std::move(msg));
    }
    body["messages"] = std::move(messages);
    return body.dump();
}

/// Completion text from a response body (choices[0].message.content). Throws BackendError(BadResponse).
inline std::string parse_chat_response(const std::string& body)
{
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw BackendError(BackendErrorKind::BadResponse, "response is not valid JSON");
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) {
            std::string text;
            for (const auto& part : content)
                if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
            return text;
        }
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendErrorKind::BadResponse, std::string("unexpected response shape: ") + e.what());
    }
    throw BackendError(BackendErrorKind::BadResponse, "message content is neither text nor parts");
}

/// Error variant for a completed HTTP exchange with a non-200 status.
inline BackendErrorKind classify_status(int status)
{
    if (status == 429) return BackendErrorKind::RateLimited;
    if (status == 408 || status == 504) return BackendErrorKind::Timeout;
    if (status >= 500) return BackendErrorKind::Transport;
    return BackendErrorKind::BadResponse;
}

/// Error variant for an exchange that produced no response. httplib reports
/// an expired read timeout as a plain read error, so elapsed time decides.
inline BackendErrorKind classify_transport(httplib::Error err, std::chrono::milliseconds elapsed,
                                           std::chrono::milliseconds timeout)
{
    if (err == httplib::Error::ConnectionTimeout) return BackendErrorKind::Timeout;
    if ((err == httplib::Error::Read || err == httplib::Error::Write) && elapsed * 10 >= timeout * 9)
        return BackendErrorKind::Timeout;
    return BackendErrorKind::Transport;
}

/// OpenAI-compatible chat-completions client.
class RemoteBackend : public VlmBackend {
public:
    explicit RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)), slots_(std::max(1, cfg_.max_in_flight))
    {
        if (cfg_.api_key.empty())
            if (const char* k = std::getenv(kApiKeyEnv)) cfg_.api_key = k;
        if (cfg_.api_key.empty())
            throw BackendSetupError(std::string(kApiKeyEnv) +
                                    " is not set; export it with your API key or use --backend mock");
        if (cfg_.model.empty()) throw BackendSetupError("remote backend needs a model id (--model)");
        const auto scheme_end = cfg_.base_url.find("://");
        if (scheme_end == std::string::npos) throw BackendSetupError("base_url must start with http:// or https://");
        const std::string scheme = cfg_.base_url.substr(0, scheme_end);
        if (scheme != "http" && scheme != "https") throw BackendSetupError("unsupported scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (scheme == "https") throw BackendSetupError("this build has no TLS support; use an http:// base_url");
#endif
        const auto path_start = cfg_.base_url.find('/', scheme_end + 3);
        origin_ = cfg_.base_url.substr(0, path_start);
        prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    ChatResponse complete(const ChatRequest& request) override
    {
        ChatRequest req = request;
        if (req.model.empty()) req.model = cfg_.model;
        req.temperature = 0.0;
        const std::string body = serialize_chat_request(req);

        slots_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{slots_};

        for (int attempt = 0;; ++attempt) {
            try {
                return post_once(body);
            } catch (const BackendError& e) {
                const bool retryable =
                    e.kind() == BackendErrorKind::RateLimited || e.kind() == BackendErrorKind::Timeout;
                if (!retryable || attempt >= cfg_.max_retries) throw;
                std::this_thread::sleep_for(cfg_.backoff_base * (1LL << attempt));
            }
        }
    }

    std::string id() const override { return "remote:" + cfg_.model; }

    const RemoteConfig& config() const { return cfg_; }
    std::string endpoint() const { return origin_ + prefix_ + "/v1/chat/completions"; }

private:
    ChatResponse post_once(const std::string& body)
    {
        httplib::Client cli(origin_);
        cli.set_connection_timeout(cfg_.timeout);
        cli.set_read_timeout(cfg_.timeout);
        cli.set_write_timeout(cfg_.timeout);
        const httplib::Headers headers{{"Authorization", "Bearer " + cfg_.api_key}};

        const auto t0 = std::chrono::steady_clock::now();
        auto res = cli.Post(prefix_ + "/v1/chat/completions", headers, body, "application/json");
        const auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
        if (!res)
            throw BackendError(classify_transport(res.error(), elapsed, cfg_.timeout),
                               "request to " + origin_ + " failed: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw BackendError(classify_status(res->status), "HTTP " + std::to_string(res->status));

        ChatResponse out;
        out.text = parse_chat_response(res->body);
        out.backend_id = id();
        const auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.contains("usage") && j["usage"].is_object()) {
            out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
            out.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
        }
        return out;
    }

    RemoteConfig cfg_;
    std::counting_semaphore<1024> slots_;
    std::string origin_;
    std::string prefix_;
};

} // namespace caicl
