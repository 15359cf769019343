// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/image.hpp"
#include "caicl/scene.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace caicl {

struct TextPart {
    std::string text;
};

/// Image content. `descriptor` is a sidecar for the mock backend and is never put on the wire.
struct ImagePart {
    Image image;
    std::optional<Descriptor> descriptor;
};

using ContentPart = std::variant<TextPart, ImagePart>;

struct Message {
    std::string role = "user";
    std::vector<ContentPart> parts;
};

struct ChatRequest {
    std::string model;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 512;
    /// Per-request randomness for stochastic backends. Not serialized.
    std::uint64_t seed = 0;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse {
    std::string text;
    Usage usage;
    std::string backend_id;
};

/// Vision-language completion backend. Implementations must be safe for concurrent `complete` calls.
class VlmBackend {
public:
    virtual ~VlmBackend() = default;

    /// Throws BackendError on failure.
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Text of all user-visible parts, images rendered as "<image>" markers.
inline std::string prompt_text(const ChatRequest& req)
{
    std::string out;
    for (const auto& m : req.messages) {
        for (const auto& p : m.parts) {
            if (const auto* t = std::get_if<TextPart>(&p))
                out += t->text;
            else
                out += "<image>\n";
        }
    }
    return out;
}

inline std::size_t count_images(const ChatRequest& req)
{
    std::size_t n = 0;
    for (const auto& m : req.messages)
        for (const auto& p : m.parts) n += std::holds_alternative<ImagePart>(p);
    return n;
}

} // namespace caicl
