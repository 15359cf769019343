// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace caicl {

// Copies of data/prompts/*.v1.txt; a test keeps them byte-identical.
inline constexpr std::string_view kLocalizationTemplateV1 = R"txt(
You are helping a robot find a target object among numbered candidate images.
Before choosing anything, scan every candidate image and identify all objects present.
Find the two candidate images that are most easily confused with each other, paying most attention to objects that resemble the query object.
Focus on elemental composition (shape, texture, relative size) and color distribution. Do not consider the orientation or pose of the objects.
{query}
{candidates}
Report how many candidate images there are, the serial numbers of the two most confusable images, why they are confusable, what deserves special attention, and the details that tell them apart.
Answer with exactly these lines:
num_images: <number of candidate images>
confusable_pair: <serial>, <serial>
reason: <why the two images are easily confused>
attention: <the feature that deserves special attention>
details: <the details that distinguish the two images>
)txt";

inline constexpr std::string_view kRecognitionTemplateV1 = R"txt(
You are helping a robot find a target object among numbered candidate images.
Identify which candidate image shows the same object as the query image.
Compare elemental composition (shape, texture, relative size) and color distribution; orientation and pose do not matter.
{query}
{candidates}
[guided] A prior analysis located the candidates that are most easily confused. Focus specifically on resolving these confusions.
[guided] attention: {attention}
[guided] details: {details}
Reason about the candidates, then give the serial number of the best matching image and justify your choice.
Answer with exactly these lines:
best_match: <serial of the best matching image>
justification: <why this image matches the query>
)txt";

/// Prompt wording. Placeholders: `{query}` and `{candidates}` on their own
/// lines expand to labeled image parts; `{attention}` and `{details}` are
/// substituted inline. Lines prefixed with "[guided] " appear only when a
/// confusion report is available.
struct PromptTemplates {
    std::string version = "v1";
    std::string localization;
    std::string recognition;

    static const PromptTemplates& defaults()
    {
        static const PromptTemplates t{"v1", std::string(kLocalizationTemplateV1.substr(1)),
                                       std::string(kRecognitionTemplateV1.substr(1))};
        return t;
    }

    /// Reads localization.<version>.txt and recognition.<version>.txt from `dir`.
    static PromptTemplates load(const std::filesystem::path& dir, const std::string& version = "v1")
    {
        auto read = [&](const std::string& name) {
            const auto path = dir / (name + "." + version + ".txt");
            std::ifstream in(path, std::ios::binary);
            if (!in) throw ConfigError("cannot read prompt template " + path.string());
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        return {version, read("localization"), read("recognition")};
    }
};

} // namespace caicl
