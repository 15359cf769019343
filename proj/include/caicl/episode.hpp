// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/matcher.hpp"
#include "caicl/perception.hpp"
#include "caicl/rng.hpp"
#include "caicl/scene.hpp"
#include "caicl/task.hpp"
#include "caicl/vlm.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace caicl {

inline constexpr const char* kEpisodeSchema = "caicl.episode.v1";

enum class FailureCause { Segmentation, RecognitionConfusion, RecognitionOther, Planning, Backend };

inline constexpr std::array<FailureCause, 5> kAllCauses = {FailureCause::Segmentation,
                                                           FailureCause::RecognitionConfusion,
                                                           FailureCause::RecognitionOther, FailureCause::Planning,
                                                           FailureCause::Backend};

inline const char* to_string(FailureCause c)
{
    switch (c) {
    case FailureCause::Segmentation: return "Segmentation";
    case FailureCause::RecognitionConfusion: return "RecognitionConfusion";
    case FailureCause::RecognitionOther: return "RecognitionOther";
    case FailureCause::Planning: return "Planning";
    case FailureCause::Backend: return "Backend";
    }
    return "Backend";
}

inline FailureCause parse_failure_cause(std::string_view s)
{
    for (auto c : kAllCauses)
        if (s == to_string(c)) return c;
    throw ConfigError("unknown failure cause '" + std::string(s) + "'");
}

/// Planner fault injected after binding, to exercise the planning failure class.
enum class PlanCorruption { None, DropLastAction, PerturbTarget };

struct EpisodeOptions {
    PlanCorruption corruption = PlanCorruption::None;
    SimilarityParams similarity;
    RenderOpts render;
    /// Log prompts verbatim; otherwise only their digests.
    bool full_prompts = true;
    /// Record wall time. Off by default because it breaks byte-identical replay.
    bool record_timing = false;
};

struct ReferentOutcome {
    int slot = 0; // 1-based
    ReferentRole role = ReferentRole::Subject;
    std::string true_object;
    std::optional<MatchDecision> decision;
    std::string match_error;
    std::optional<MatchFailed::Cause> failure;
    /// Ground-truth source of the chosen crop.
    std::optional<std::string> chosen_source;
    bool chosen_merged = false;
    /// Object the executor grasps when aiming at the chosen crop.
    std::optional<std::string> bound_object;

    bool correct() const { return chosen_source == true_object && !chosen_merged; }
};

struct EpisodeLog {
    TaskKind kind = TaskKind::T01;
    GeneralizationLevel level = GeneralizationLevel::L1;
    std::uint64_t seed = 0;
    MatcherKind matcher = MatcherKind::Caicl;
    std::string backend_id;
    bool success = false;
    std::optional<FailureCause> attribution;
    std::vector<ObjectCrop> crops;
    std::vector<ReferentOutcome> referents;
    std::vector<Action> plan;
    std::vector<Action> oracle_plan;
    std::string final_scene_digest;
    std::optional<double> wall_ms;

    std::size_t request_count() const
    {
        std::size_t n = 0;
        for (const auto& r : referents)
            if (r.decision) n += r.decision->trace.requests.size();
        return n;
    }
};

/// Applies `c` to a plan. Perturbing moves the last target 10 units toward the
/// workspace center, or adds 90 degrees to a rotation.
inline std::vector<Action> corrupt_plan(std::vector<Action> plan, PlanCorruption c, const Scene& scene)
{
    if (plan.empty() || c == PlanCorruption::None) return plan;
    if (c == PlanCorruption::DropLastAction) {
        plan.pop_back();
        return plan;
    }
    Action& a = plan.back();
    if (a.kind == ActionKind::Rotate) {
        a.angle_deg += 90;
        return plan;
    }
    Pose target = a.target_pose ? *a.target_pose : scene.at(*a.target_container).pose;
    if (a.target_container) target.rotation_deg = scene.at(a.subject).pose.rotation_deg;
    target.x += target.x < scene.workspace.width / 2 ? 10 : -10;
    a = Action::pick_place_to(a.subject, target);
    return plan;
}

/// Stage-ordered blame for a failed episode: segmentation, then recognition
/// (confusion before other), then a backend failure during matching, then
/// planning, then backend as the remainder.
inline FailureCause attribute_failure(const EpisodeLog& log, const TaskInstance& task,
                                      const SimilarityParams& sim = {})
{
    if (log.success) throw NotAFailure("episode succeeded");

    for (const auto& r : log.referents) {
        bool has_own_crop = false;
        for (const auto& c : log.crops)
            if (c.covered_objects.size() == 1 && c.covered_objects.front() == r.true_object) has_own_crop = true;
        if (!has_own_crop) return FailureCause::Segmentation;
    }
    for (const auto& r : log.referents)
        if (r.decision && !r.correct() && r.chosen_source &&
            similarity(task.scene.at(*r.chosen_source), task.scene.at(r.true_object), sim) >= sim.theta_conf)
            return FailureCause::RecognitionConfusion;
    for (const auto& r : log.referents)
        if ((r.decision && !r.correct()) || r.failure == MatchFailed::Cause::Parse)
            return FailureCause::RecognitionOther;
    for (const auto& r : log.referents)
        if (r.failure == MatchFailed::Cause::Backend) return FailureCause::Backend;
    if (log.plan != log.oracle_plan) return FailureCause::Planning;
    return FailureCause::Backend;
}

/// Runs one task end to end: segment, match each referent, bind, plan, execute, check.
/// Never throws for pipeline failures; they become the logged outcome.
inline EpisodeLog run_episode(const TaskInstance& task, MatcherKind matcher, VlmBackend& backend,
                              const FaultModel& faults, const MatchPolicy& policy, std::uint64_t seed,
                              const EpisodeOptions& opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeLog log;
    log.kind = task.kind;
    log.level = task.level;
    log.seed = seed;
    log.matcher = matcher;
    log.backend_id = backend.id();

    Rng seg_rng(derive_seed(seed, "segment"));
    Rng match_rng(derive_seed(seed, "match"));
    log.crops = segment(task.scene, faults, seg_rng, opts.render);

    std::vector<std::optional<std::string>> bindings;
    for (std::size_t s = 0; s < task.referent_count(); ++s) {
        ReferentOutcome r;
        r.slot = static_cast<int>(s) + 1;
        r.role = task.roles[s];
        r.true_object = task.instruction.referent_ids[s];
        if (log.crops.empty()) {
            r.match_error = "no candidate crops";
            r.failure = MatchFailed::Cause::Parse;
        } else {
            try {
                r.decision = match(matcher, task.instruction.query_crops[s], log.crops, backend, policy, match_rng);
                const auto& crop = log.crops[static_cast<std::size_t>(r.decision->best_match) - 1];
                r.chosen_source = crop.source_object;
                r.chosen_merged = crop.merged();
                r.bound_object = grasp_target(task.scene, crop);
            } catch (const MatchFailed& e) {
                r.match_error = e.what();
                r.failure = e.cause();
            }
        }
        bindings.push_back(r.bound_object);
        log.referents.push_back(std::move(r));
    }

    log.oracle_plan = oracle_plan(task);
    log.plan = corrupt_plan(plan_with_bindings(task, bindings), opts.corruption, task.scene);
    Scene final_scene = task.scene;
    try {
        final_scene = apply_plan(task.scene, log.plan);
        log.success = check_success(task, final_scene);
    } catch (const Error&) {
        log.success = false;
    }
    log.final_scene_digest = scene_digest(final_scene);
    if (!log.success) log.attribution = attribute_failure(log, task, opts.similarity);
    if (opts.record_timing)
        log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

/// One JSON object per episode with a stable key order.
inline nlohmann::ordered_json to_json(const EpisodeLog& log, bool full_prompts = true)
{
    using oj = nlohmann::ordered_json;
    oj j;
    j["schema_version"] = kEpisodeSchema;
    j["task"] = {{"kind", to_string(log.kind)}, {"level", to_string(log.level)}, {"seed", log.seed}};
    j["matcher"] = to_string(log.matcher);
    j["backend"] = log.backend_id;
    j["success"] = log.success;
    j["attribution"] = log.attribution ? oj(to_string(*log.attribution)) : oj(nullptr);
    j["segmentation"] = summarize(log.crops);
    auto refs = oj::array();
    for (const auto& r : log.referents) {
        oj e;
        e["slot"] = r.slot;
        e["role"] = to_string(r.role);
        e["true_object"] = r.true_object;
        e["best_match"] = r.decision ? oj(r.decision->best_match) : oj(nullptr);
        e["chosen_source"] = r.chosen_source ? oj(*r.chosen_source) : oj(nullptr);
        e["bound_object"] = r.bound_object ? oj(*r.bound_object) : oj(nullptr);
        e["correct"] = r.correct();
        e["error"] = r.match_error.empty() ? oj(nullptr) : oj(r.match_error);
        e["decision"] = r.decision ? to_json(*r.decision, full_prompts) : oj(nullptr);
        refs.push_back(std::move(e));
    }
    j["referents"] = std::move(refs);
    auto plan = oj::array();
    for (const auto& a : log.plan) plan.push_back(to_json(a));
    j["plan"] = std::move(plan);
    j["final_scene_digest"] = log.final_scene_digest;
    j["timing"] = log.wall_ms ? oj({{"wall_ms", *log.wall_ms}}) : oj(nullptr);
    return j;
}

} // namespace caicl
