// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/formats.hpp"
#include "caicl/perception.hpp"
#include "caicl/prompts.hpp"
#include "caicl/rng.hpp"
#include "caicl/scene.hpp"
#include "caicl/vlm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace caicl {

namespace detail {

inline std::vector<const ObjectCrop*> by_serial(const std::vector<ObjectCrop>& candidates)
{
    std::vector<const ObjectCrop*> out;
    for (const auto& c : candidates) out.push_back(&c);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->serial < b->serial; });
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i]->serial != static_cast<int>(i) + 1) throw InvalidSpec("candidate serials must be 1..n");
    return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to)
{
    for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size()))
        s.replace(p, from.size(), to);
}

/// Expands a prompt template into one user message. Consecutive text lines
/// share a part; each image is preceded by its own label part.
inline ChatRequest expand_template(std::string_view tmpl, const ObjectCrop& query,
                                   const std::vector<const ObjectCrop*>& candidates,
                                   const std::optional<ConfusionReport>& report)
{
    Message msg;
    std::string pending;
    auto flush = [&] {
        if (!pending.empty()) msg.parts.emplace_back(TextPart{std::move(pending)});
        pending.clear();
    };
    auto image = [&](std::string label, const ObjectCrop& c) {
        pending += label;
        flush();
        msg.parts.emplace_back(ImagePart{c.image, c.oracle_descriptor});
    };

    constexpr std::string_view kGuided = "[guided] ";
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto eol = tmpl.find('\n', pos);
        std::string line(tmpl.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
        pos = eol == std::string_view::npos ? tmpl.size() : eol + 1;

        if (line.rfind(kGuided, 0) == 0) {
            if (!report) continue;
            line.erase(0, kGuided.size());
        }
        if (line == "{query}") {
            image("query\n", query);
        } else if (line == "{candidates}") {
            for (const auto* c : candidates) image("image " + std::to_string(c->serial) + "\n", *c);
        } else {
            if (report) {
                replace_all(line, "{attention}", report->attention);
                replace_all(line, "{details}", report->details);
            }
            pending += line + "\n";
        }
    }
    flush();

    ChatRequest req;
    req.messages.push_back(std::move(msg));
    return req;
}

} // namespace detail

/// Phase-1 request: find the most confusable candidate pair. Candidates appear in serial order.
inline ChatRequest build_localization_prompt(const ObjectCrop& query, const std::vector<ObjectCrop>& candidates,
                                             const PromptTemplates& templates = PromptTemplates::defaults())
{
    if (candidates.size() < 2) throw NotEnoughCandidates("localization needs at least two candidates");
    return detail::expand_template(templates.localization, query, detail::by_serial(candidates), std::nullopt);
}

/// Phase-2 request. Without a report this is exactly the vanilla recognition prompt.
inline ChatRequest build_recognition_prompt(const ObjectCrop& query, const std::vector<ObjectCrop>& candidates,
                                            const std::optional<ConfusionReport>& report,
                                            const PromptTemplates& templates = PromptTemplates::defaults())
{
    if (candidates.empty()) throw NoCandidates("recognition needs at least one candidate");
    const int n = static_cast<int>(candidates.size());
    if (report) {
        const auto [i, j] = report->confusable_pair;
        if (!(i >= 1 && i < j && j <= n))
            throw InvalidReportSerials("report pair (" + std::to_string(i) + ", " + std::to_string(j) +
                                       ") invalid for " + std::to_string(n) + " candidates");
    }
    return detail::expand_template(templates.recognition, query, detail::by_serial(candidates), report);
}

enum class FallbackMode { FallbackToVanilla, Fail };

inline const char* to_string(FallbackMode f) { return f == FallbackMode::Fail ? "fail" : "fallback-to-vanilla"; }

inline FallbackMode parse_fallback_mode(std::string_view s)
{
    if (s == "fallback-to-vanilla" || s == "vanilla") return FallbackMode::FallbackToVanilla;
    if (s == "fail") return FallbackMode::Fail;
    throw ConfigError("unknown fallback mode '" + std::string(s) + "' (expected fallback-to-vanilla or fail)");
}

struct MatchPolicy {
    bool localization_enabled = true;
    /// Extra attempts per phase after a parse failure; each resends the identical request.
    int parse_retry_limit = 2;
    FallbackMode fallback = FallbackMode::FallbackToVanilla;
    std::string model;
    PromptTemplates templates = PromptTemplates::defaults();

    void validate() const
    {
        if (parse_retry_limit < 0) throw ConfigError("parse_retry_limit must be >= 0");
    }
};

/// One backend round trip.
struct PhaseRecord {
    std::string phase; // "localization" or "recognition"
    std::string prompt;
    std::string response;
    std::string error; // empty on a clean parse
};

struct PhaseTrace {
    std::vector<PhaseRecord> requests;
    bool fallback = false;
    std::optional<ConfusionReport> report;
    std::vector<std::string> notes;
};

struct MatchDecision {
    int best_match = 0;
    std::string justification;
    std::string raw_response;
    PhaseTrace trace;
};

enum class MatcherKind { Caicl, Vanilla };

inline const char* to_string(MatcherKind m) { return m == MatcherKind::Caicl ? "caicl" : "vanilla"; }

inline MatcherKind parse_matcher_kind(std::string_view s)
{
    if (s == "caicl") return MatcherKind::Caicl;
    if (s == "vanilla") return MatcherKind::Vanilla;
    throw ConfigError("unknown matcher '" + std::string(s) + "' (expected caicl or vanilla)");
}

namespace detail {

struct PhaseOutcome {
    std::optional<ChatResponse> response;
    bool backend_failed = false;
    std::string last_error;
};

/// Sends `req` up to 1 + retry_limit times until `accept` parses the response.
template <class Accept>
PhaseOutcome run_phase(const char* phase, ChatRequest req, VlmBackend& backend, const MatchPolicy& policy,
                       PhaseTrace& trace, Accept&& accept)
{
    PhaseOutcome out;
    req.model = policy.model;
    const std::string prompt = prompt_text(req);
    for (int attempt = 0; attempt <= policy.parse_retry_limit; ++attempt) {
        PhaseRecord rec{phase, prompt, {}, {}};
        try {
            auto resp = backend.complete(req);
            rec.response = resp.text;
            try {
                accept(resp.text);
                trace.requests.push_back(std::move(rec));
                out.response = std::move(resp);
                return out;
            } catch (const ParseError& e) {
                rec.error = e.what();
            } catch (const OutOfRangeSerial& e) {
                rec.error = e.what();
            } catch (const InvalidReportSerials& e) {
                rec.error = e.what();
            }
            out.last_error = rec.error;
            trace.requests.push_back(std::move(rec));
        } catch (const BackendError& e) {
            rec.error = e.what();
            out.last_error = rec.error;
            out.backend_failed = true;
            trace.requests.push_back(std::move(rec));
            return out;
        }
    }
    return out;
}

} // namespace detail

/// Runs the matcher selected by `policy.localization_enabled`.
///
/// Draws exactly one value from `rng`; localization and recognition requests
/// get seeds derived from it, so vanilla and CAICL share the recognition seed
/// for the same draw.
inline MatchDecision run_match(const ObjectCrop& query, const std::vector<ObjectCrop>& candidates,
                               VlmBackend& backend, const MatchPolicy& policy, Rng& rng)
{
    policy.validate();
    if (candidates.empty()) throw NoCandidates("no candidate crops to match against");
    const std::uint64_t match_seed = rng.next_u64();
    const int n = static_cast<int>(candidates.size());

    MatchDecision d;
    auto& trace = d.trace;
    std::optional<ConfusionReport> report;

    if (policy.localization_enabled && n == 1) {
        trace.fallback = true;
        trace.notes.emplace_back("single candidate: localization skipped");
    } else if (policy.localization_enabled) {
        auto req = build_localization_prompt(query, candidates, policy.templates);
        req.seed = derive_seed(match_seed, "localization");
        const auto out = detail::run_phase("localization", std::move(req), backend, policy, trace,
                                           [&](const std::string& text) {
                                               auto r = parse_localization_response(text);
                                               if (r.confusable_pair.second > n)
                                                   throw InvalidReportSerials("report pair exceeds candidate count");
                                               report = std::move(r);
                                           });
        if (!out.response) {
            report.reset();
            if (policy.fallback == FallbackMode::Fail)
                throw MatchFailed(out.backend_failed ? MatchFailed::Cause::Backend : MatchFailed::Cause::Parse,
                                  "localization: " + out.last_error);
            trace.fallback = true;
            trace.notes.push_back("localization failed, using vanilla recognition: " + out.last_error);
        } else if (report->num_images != n) {
            trace.notes.push_back("reported num_images " + std::to_string(report->num_images) + " but " +
                                  std::to_string(n) + " candidates were shown");
        }
    }
    trace.report = report;

    const std::uint64_t rec_seed = derive_seed(match_seed, "recognition");
    auto recognize = [&](const std::optional<ConfusionReport>& r) {
        auto req = build_recognition_prompt(query, candidates, r, policy.templates);
        req.seed = rec_seed;
        return detail::run_phase("recognition", std::move(req), backend, policy, trace, [&](const std::string& text) {
            const auto a = parse_recognition_response(text, n);
            d.best_match = a.best_match;
            d.justification = a.justification;
        });
    };

    auto out = recognize(report);
    if (!out.response && !out.backend_failed && report && policy.fallback == FallbackMode::FallbackToVanilla) {
        trace.fallback = true;
        trace.notes.push_back("guided recognition failed, using vanilla prompt: " + out.last_error);
        out = recognize(std::nullopt);
    }
    if (!out.response)
        throw MatchFailed(out.backend_failed ? MatchFailed::Cause::Backend : MatchFailed::Cause::Parse,
                          "recognition: " + out.last_error);
    d.raw_response = out.response->text;
    return d;
}

/// Two-phase confusion-aware match.
inline MatchDecision match_caicl(const ObjectCrop& query, const std::vector<ObjectCrop>& candidates,
                                 VlmBackend& backend, MatchPolicy policy, Rng& rng)
{
    policy.localization_enabled = true;
    return run_match(query, candidates, backend, policy, rng);
}

/// Single recognition call without confusion analysis.
inline MatchDecision match_vanilla(const ObjectCrop& query, const std::vector<ObjectCrop>& candidates,
                                   VlmBackend& backend, MatchPolicy policy, Rng& rng)
{
    policy.localization_enabled = false;
    return run_match(query, candidates, backend, policy, rng);
}

inline MatchDecision match(MatcherKind kind, const ObjectCrop& query, const std::vector<ObjectCrop>& candidates,
                           VlmBackend& backend, const MatchPolicy& policy, Rng& rng)
{
    return kind == MatcherKind::Caicl ? match_caicl(query, candidates, backend, policy, rng)
                                      : match_vanilla(query, candidates, backend, policy, rng);
}

/// Trace as JSON. With `full_prompts` false, prompts are replaced by their FNV-1a digest.
inline nlohmann::ordered_json to_json(const PhaseTrace& t, bool full_prompts = true)
{
    nlohmann::ordered_json j;
    auto reqs = nlohmann::ordered_json::array();
    for (const auto& r : t.requests) {
        nlohmann::ordered_json e;
        e["phase"] = r.phase;
        if (full_prompts)
            e["prompt"] = r.prompt;
        else
            e["prompt_digest"] = hex64(fnv1a64(r.prompt));
        e["response"] = r.response;
        e["error"] = r.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.error);
        reqs.push_back(std::move(e));
    }
    j["requests"] = std::move(reqs);
    j["fallback"] = t.fallback;
    if (t.report) {
        j["report"] = {{"num_images", t.report->num_images},
                       {"confusable_pair", {t.report->confusable_pair.first, t.report->confusable_pair.second}},
                       {"reason", t.report->reason},
                       {"attention", t.report->attention},
                       {"details", t.report->details}};
    } else {
        j["report"] = nullptr;
    }
    j["notes"] = t.notes;
    return j;
}

inline nlohmann::ordered_json to_json(const MatchDecision& d, bool full_prompts = true)
{
    nlohmann::ordered_json j;
    j["best_match"] = d.best_match;
    j["justification"] = d.justification;
    j["raw_response"] = d.raw_response;
    j["trace"] = to_json(d.trace, full_prompts);
    return j;
}

} // namespace caicl
