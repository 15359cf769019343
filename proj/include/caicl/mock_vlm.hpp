// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/formats.hpp"
#include "caicl/palette.hpp"
#include "caicl/rng.hpp"
#include "caicl/scene.hpp"
#include "caicl/vlm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace caicl {

/// Shortcut-prone recognizer. When the top two candidates are close it picks
/// the runner-up with probability p_shortcut, or p_guided once valid guidance
/// names a dimension on which they differ.
struct MockBehavior {
    double p_base = 0.02;
    double p_shortcut = 0.30;
    double p_guided = 0.05;
    double theta_gap = 0.10;

    void validate() const
    {
        if (!(p_guided >= 0 && p_guided <= p_shortcut && p_shortcut <= 1))
            throw InvalidSpec("mock behavior requires 0 <= p_guided <= p_shortcut <= 1");
        if (!(p_base >= 0 && p_base <= 1)) throw InvalidSpec("mock behavior requires 0 <= p_base <= 1");
        if (!(theta_gap >= 0)) throw InvalidSpec("theta_gap must be non-negative");
    }
};

/// Attribute a recognition prompt asks the model to focus on.
struct GuidanceHint {
    Attribute attribute = Attribute::Size;
};

/// Gaps are compared with this slack so that exact ties in decimal arithmetic
/// (for example 1.0 - 0.9) land on the non-confusable side.
inline constexpr double kGapSlack = 1e-9;

/// True when `a` and `b` differ on `attr`.
inline bool differs_on(const Descriptor& a, const Descriptor& b, Attribute attr)
{
    switch (attr) {
    case Attribute::Shape: return a.shape != b.shape;
    case Attribute::Texture: return a.texture != b.texture;
    case Attribute::Color: return a.color != b.color;
    case Attribute::Size: return std::abs(a.size - b.size) > 1e-9;
    }
    return false;
}

/// Candidate indices sorted by similarity to `query`, descending; ties keep input order.
inline std::vector<std::size_t> rank_candidates(const Descriptor& query, std::span<const Descriptor> cands,
                                                const SimilarityParams& sim, std::vector<double>* scores = nullptr)
{
    std::vector<double> s(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) s[i] = similarity(query, cands[i], sim);
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    if (scores) *scores = std::move(s);
    return order;
}

/// Returns the chosen 1-based serial. Consumes one uniform draw, plus one index
/// draw on a base-rate error; a single candidate consumes nothing.
inline int mock_decide(const Descriptor& query, std::span<const Descriptor> cands,
                       const std::optional<GuidanceHint>& guidance, const MockBehavior& behavior, Rng& rng,
                       const SimilarityParams& sim = {})
{
    if (cands.empty()) throw NoCandidates("mock_decide needs at least one candidate");
    if (cands.size() == 1) return 1;

    std::vector<double> s;
    const auto order = rank_candidates(query, cands, sim, &s);
    const std::size_t top = order[0], second = order[1];
    const double gap = s[top] - s[second];
    const double u = rng.uniform();

    if (gap >= behavior.theta_gap - kGapSlack) {
        if (u < 1.0 - behavior.p_base) return static_cast<int>(top) + 1;
        auto pick = rng.index(cands.size() - 1);
        if (pick >= top) ++pick;
        return static_cast<int>(pick) + 1;
    }
    const bool valid = guidance && differs_on(cands[top], cands[second], guidance->attribute);
    const double p = valid ? behavior.p_guided : behavior.p_shortcut;
    return static_cast<int>(u < p ? second : top) + 1;
}

struct MockLocalization {
    std::pair<int, int> pair{1, 2};
    Attribute attribute = Attribute::Size;
    bool any_difference = false;
    std::string reason;
    std::string attention;
    std::string details;
};

namespace detail {

inline std::string fmt_size(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string describe(const Descriptor& d)
{
    return d.color + " " + d.texture + " " + d.shape;
}

} // namespace detail

/// Most similar candidate pair and the attribute that best separates it.
inline MockLocalization mock_localize(std::span<const Descriptor> cands, const SimilarityParams& sim = {})
{
    if (cands.size() < 2) throw NotEnoughCandidates("mock_localize needs at least two candidates");

    std::size_t bi = 0, bj = 1;
    double best = -1;
    for (std::size_t i = 0; i < cands.size(); ++i)
        for (std::size_t j = i + 1; j < cands.size(); ++j) {
            const double s = similarity(cands[i], cands[j], sim);
            if (s > best) {
                best = s;
                bi = i;
                bj = j;
            }
        }

    const Descriptor& a = cands[bi];
    const Descriptor& b = cands[bj];
    const double disagreement[4] = {static_cast<double>(a.shape != b.shape), static_cast<double>(a.texture != b.texture),
                                    static_cast<double>(a.color != b.color),
                                    1.0 - size_agreement(a.size, b.size, sim.size_scale)};
    std::size_t arg = 3;
    double top = 0;
    for (std::size_t k = 0; k < 4; ++k)
        if (disagreement[k] > top) {
            top = disagreement[k];
            arg = k;
        }

    MockLocalization r;
    r.pair = {static_cast<int>(bi) + 1, static_cast<int>(bj) + 1};
    r.attribute = kAttributeOrder[arg];
    r.any_difference = top > 0;
    const std::string si = "image " + std::to_string(r.pair.first);
    const std::string sj = "image " + std::to_string(r.pair.second);
    r.reason = si + " and " + sj + " both show a " + detail::describe(a) + " of similar appearance";
    r.attention = std::string("compare the ") + to_string(r.attribute) + " of " + si + " and " + sj;
    if (!r.any_difference) {
        r.details = "no visible difference in shape, texture, color or size";
        return r;
    }
    switch (r.attribute) {
    case Attribute::Shape: r.details = si + " is a " + a.shape + " while " + sj + " is a " + b.shape; break;
    case Attribute::Texture:
        r.details = si + " has a " + a.texture + " texture while " + sj + " has a " + b.texture + " texture";
        break;
    case Attribute::Color: r.details = si + " is " + a.color + " while " + sj + " is " + b.color; break;
    case Attribute::Size:
        r.details = si + " is " + (a.size > b.size ? "larger" : "smaller") + " than " + sj + " (" +
                    detail::fmt_size(a.size) + " vs " + detail::fmt_size(b.size) + ")";
        break;
    }
    return r;
}

namespace detail {

inline std::optional<Attribute> first_attribute_word(std::string_view text)
{
    std::string lower(text);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::optional<Attribute> hit;
    std::size_t at = std::string::npos;
    auto consider = [&](std::string_view word, Attribute attr) {
        const auto p = lower.find(word);
        if (p != std::string::npos && p < at) {
            at = p;
            hit = attr;
        }
    };
    consider("shape", Attribute::Shape);
    consider("texture", Attribute::Texture);
    consider("color", Attribute::Color);
    consider("colour", Attribute::Color);
    consider("size", Attribute::Size);
    return hit;
}

/// Guidance carried by a recognition prompt: the first attribute word in the
/// attention value, else in the details value. None when neither line exists.
inline std::optional<GuidanceHint> guidance_from_text(std::string_view text)
{
    const auto kv = scan_keys(text, std::array<std::string_view, 2>{"attention", "details"});
    if (kv.empty()) return std::nullopt;
    for (const char* key : {"attention", "details"})
        if (auto it = kv.find(key); it != kv.end())
            if (auto a = first_attribute_word(it->second)) return GuidanceHint{*a};
    return std::nullopt;
}

} // namespace detail

/// Deterministic stand-in for a VLM. Reads descriptors from image sidecars
/// (first image is the query, the rest are candidates in order) and draws from
/// Rng(request.seed), so a response is a pure function of the request.
class MockBackend : public VlmBackend {
public:
    explicit MockBackend(MockBehavior behavior = {}, SimilarityParams sim = {}) : behavior_(behavior), sim_(sim)
    {
        behavior_.validate();
        sim_.validate();
    }

    const MockBehavior& behavior() const { return behavior_; }

    ChatResponse complete(const ChatRequest& request) override
    {
        std::string text;
        std::vector<Descriptor> images;
        for (const auto& m : request.messages)
            for (const auto& p : m.parts) {
                if (const auto* t = std::get_if<TextPart>(&p)) {
                    text += t->text;
                    continue;
                }
                const auto& img = std::get<ImagePart>(p);
                if (!img.descriptor) throw BackendError(BackendErrorKind::BadResponse, "mock needs descriptor sidecars");
                images.push_back(*img.descriptor);
            }
        if (images.size() < 2) throw BackendError(BackendErrorKind::BadResponse, "mock needs a query and a candidate");
        const std::span<const Descriptor> cands(images.data() + 1, images.size() - 1);

        ChatResponse out;
        out.backend_id = id();
        if (text.find("confusable_pair") != std::string::npos) {
            if (cands.size() < 2) throw BackendError(BackendErrorKind::BadResponse, "localization needs two candidates");
            const auto loc = mock_localize(cands, sim_);
            out.text = render_format1({static_cast<int>(cands.size()), loc.pair, loc.reason, loc.attention, loc.details});
        } else {
            Rng rng(request.seed);
            const int pick = mock_decide(images.front(), cands, detail::guidance_from_text(text), behavior_, rng, sim_);
            out.text = render_format2(
                {pick, "image " + std::to_string(pick) + " shows a " +
                           detail::describe(cands[static_cast<std::size_t>(pick) - 1]) + " like the query"});
        }
        out.usage = {static_cast<int>(text.size() / 4), static_cast<int>(out.text.size() / 4)};
        return out;
    }

    std::string id() const override { return "mock"; }

private:
    MockBehavior behavior_;
    SimilarityParams sim_;
};

} // namespace caicl
