// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/perception.hpp"
#include "caicl/render.hpp"
#include "caicl/rng.hpp"
#include "caicl/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace caicl {

enum class TaskKind { T01, T02, T03, T04, T05, T17 };

inline constexpr std::array<TaskKind, 6> kAllTasks = {TaskKind::T01, TaskKind::T02, TaskKind::T03,
                                                      TaskKind::T04, TaskKind::T05, TaskKind::T17};

inline const char* to_string(TaskKind k)
{
    switch (k) {
    case TaskKind::T01: return "T01";
    case TaskKind::T02: return "T02";
    case TaskKind::T03: return "T03";
    case TaskKind::T04: return "T04";
    case TaskKind::T05: return "T05";
    case TaskKind::T17: return "T17";
    }
    return "?";
}

/// Accepts "T01", "t01", "01" and "1".
inline TaskKind parse_task_kind(std::string_view s)
{
    std::string t(s);
    if (!t.empty() && (t[0] == 't' || t[0] == 'T')) t.erase(0, 1);
    while (t.size() > 1 && t[0] == '0') t.erase(0, 1);
    if (t == "1") return TaskKind::T01;
    if (t == "2") return TaskKind::T02;
    if (t == "3") return TaskKind::T03;
    if (t == "4") return TaskKind::T04;
    if (t == "5") return TaskKind::T05;
    if (t == "17") return TaskKind::T17;
    throw ConfigError("unknown task '" + std::string(s) + "' (expected one of t01 t02 t03 t04 t05 t17)");
}

enum class ReferentRole { Subject, Container, Exemplar };

inline const char* to_string(ReferentRole r)
{
    switch (r) {
    case ReferentRole::Subject: return "subject";
    case ReferentRole::Container: return "container";
    case ReferentRole::Exemplar: return "exemplar";
    }
    return "?";
}

struct InstructionSegment {
    enum class Kind { Text, Query, GoalScene };
    Kind kind = Kind::Text;
    std::string text;  // Text only
    int referent = -1; // Query only: referent slot
};

/// Multimodal instruction. `referent_ids` is ground truth for the harness and
/// must not reach a matcher.
struct Instruction {
    std::vector<InstructionSegment> segments;
    std::vector<ObjectCrop> query_crops; // one per referent slot
    std::optional<Image> goal_image;
    std::vector<std::string> referent_ids;

    /// Text with image slots shown as <query N> / <goal scene>.
    std::string text() const
    {
        std::string out;
        for (const auto& s : segments) {
            switch (s.kind) {
            case InstructionSegment::Kind::Text: out += s.text; break;
            case InstructionSegment::Kind::Query: out += "<query " + std::to_string(s.referent + 1) + ">"; break;
            case InstructionSegment::Kind::GoalScene: out += "<goal scene>"; break;
            }
        }
        return out;
    }
};

/// Goal predicate parameters. `goal_set` is hidden ground truth (T02).
struct TaskGoal {
    double angle_deg = 0;           // T03
    std::vector<Pose> target_poses; // T04 goal poses / T05 zone centers, per subject slot
    std::optional<Scene> goal_scene; // T04
    std::vector<std::string> goal_set; // T02
};

struct TaskOptions {
    /// Non-referent objects in the scene, including confusable twins.
    int distractor_count = 3;
    /// Referent slots (from slot 0) that get a confusable twin among the distractors.
    int confusable_distractors = 1;
    int t05_steps = 3;
    /// Positional tolerance as a fraction of the workspace diagonal.
    double eps_pos_fraction = 0.02;
    double eps_ang_deg = 5.0;
    SceneConfig scene;
    RenderOpts render;
};

struct TaskInstance {
    TaskKind kind = TaskKind::T01;
    GeneralizationLevel level = GeneralizationLevel::L1;
    std::uint64_t seed = 0;
    Scene scene;
    Instruction instruction;
    std::vector<ReferentRole> roles;
    TaskGoal goal;
    double eps_pos = 0;
    double eps_ang = 0;

    std::size_t referent_count() const { return roles.size(); }
};

inline std::vector<ReferentRole> referent_roles(TaskKind kind, int t05_steps = 3)
{
    using R = ReferentRole;
    switch (kind) {
    case TaskKind::T01: return {R::Subject, R::Container};
    case TaskKind::T02: return {R::Exemplar, R::Container};
    case TaskKind::T03: return {R::Subject};
    case TaskKind::T04: return {R::Subject, R::Subject};
    case TaskKind::T05: return std::vector<R>(static_cast<std::size_t>(t05_steps), R::Subject);
    case TaskKind::T17: return {R::Subject, R::Container, R::Subject};
    }
    return {};
}

inline constexpr std::array<double, 7> kRotationAngles = {30, 45, 60, 90, 120, 135, 150};

inline std::array<Pose, 4> zone_centers(const Workspace& ws)
{
    return {Pose{0.2 * ws.width, 0.2 * ws.height, 0}, Pose{0.8 * ws.width, 0.2 * ws.height, 0},
            Pose{0.2 * ws.width, 0.8 * ws.height, 0}, Pose{0.8 * ws.width, 0.8 * ws.height, 0}};
}

inline constexpr std::array<const char*, 4> kZoneNames = {"top-left", "top-right", "bottom-left", "bottom-right"};

namespace detail {

inline std::optional<Pose> free_pose(const Scene& scene, const ObjectSpec& mover, double min_travel, double clearance,
                                     Rng& rng)
{
    const double r = mover.size / 2;
    const auto& ws = scene.workspace;
    for (int a = 0; a < 400; ++a) {
        const double x = round_to(rng.uniform(r, ws.width - r), 0.01);
        const double y = round_to(rng.uniform(r, ws.height - r), 0.01);
        if (std::hypot(x - mover.pose.x, y - mover.pose.y) < min_travel) continue;
        const bool clear = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const ObjectSpec& o) {
            return o.object_id == mover.object_id || std::hypot(o.pose.x - x, o.pose.y - y) >= r + o.size / 2 + clearance;
        });
        if (clear) return Pose{x, y, mover.pose.rotation_deg};
    }
    return std::nullopt;
}

inline Scene move_object(Scene s, const std::string& id, const Pose& p)
{
    for (auto& o : s.objects)
        if (o.object_id == id) o.pose = p;
    return s;
}

} // namespace detail

/// Actions for `task` given the object bound to each referent slot. Unbound
/// slots drop the actions that need them. Reads the current scene for attributes
/// and start poses, as an executor that has grasped the object would.
inline std::vector<Action> plan_with_bindings(const TaskInstance& task,
                                              const std::vector<std::optional<std::string>>& bindings)
{
    const Scene& scene = task.scene;
    auto bound = [&](std::size_t slot) -> const std::optional<std::string>& {
        static const std::optional<std::string> none;
        return slot < bindings.size() ? bindings[slot] : none;
    };
    std::vector<Action> plan;
    switch (task.kind) {
    case TaskKind::T01:
        if (bound(0) && bound(1)) plan.push_back(Action::pick_place_into(*bound(0), *bound(1)));
        break;
    case TaskKind::T02:
        if (bound(0) && bound(1)) {
            const auto& texture = scene.at(*bound(0)).texture;
            for (const auto& o : scene.objects)
                if (o.object_id != *bound(1) && o.texture == texture)
                    plan.push_back(Action::pick_place_into(o.object_id, *bound(1)));
        }
        break;
    case TaskKind::T03:
        if (bound(0)) plan.push_back(Action::rotate(*bound(0), task.goal.angle_deg));
        break;
    case TaskKind::T04:
    case TaskKind::T05:
        for (std::size_t i = 0; i < task.referent_count(); ++i) {
            if (!bound(i) || i >= task.goal.target_poses.size()) continue;
            Pose target = task.goal.target_poses[i];
            if (task.kind == TaskKind::T05) target.rotation_deg = scene.at(*bound(i)).pose.rotation_deg;
            plan.push_back(Action::pick_place_to(*bound(i), target));
        }
        break;
    case TaskKind::T17: {
        if (!bound(1)) break;
        std::vector<std::string> moved;
        for (std::size_t slot : {0u, 2u}) {
            if (!bound(slot)) continue;
            plan.push_back(Action::pick_place_into(*bound(slot), *bound(1)));
            moved.push_back(*bound(slot));
        }
        for (const auto& id : moved) plan.push_back(Action::pick_place_to(id, scene.at(id).pose));
        break;
    }
    }
    return plan;
}

/// The plan a perfect perception stage would produce.
inline std::vector<Action> oracle_plan(const TaskInstance& task)
{
    std::vector<std::optional<std::string>> b(task.instruction.referent_ids.begin(),
                                              task.instruction.referent_ids.end());
    return plan_with_bindings(task, b);
}

/// True iff the final scene satisfies the task's goal within eps_pos / eps_ang.
inline bool check_success(const TaskInstance& task, const Scene& final_scene)
{
    for (const auto& o : final_scene.objects)
        if (!task.scene.find(o.object_id)) throw InvalidSpec("final scene contains unknown object " + o.object_id);
    const auto& ids = task.instruction.referent_ids;
    auto pos = [&](const std::string& id) -> const Pose& { return final_scene.at(id).pose; };
    auto near = [&](const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y) <= task.eps_pos; };

    switch (task.kind) {
    case TaskKind::T01: return near(pos(ids[0]), pos(ids[1]));
    case TaskKind::T02: {
        const auto& container = pos(ids[1]);
        for (const auto& o : final_scene.objects) {
            if (o.object_id == ids[1]) continue;
            const bool member = std::find(task.goal.goal_set.begin(), task.goal.goal_set.end(), o.object_id) !=
                                task.goal.goal_set.end();
            if (member != near(o.pose, container)) return false;
        }
        return true;
    }
    case TaskKind::T03: {
        const auto& before = task.scene.at(ids[0]).pose;
        const auto& after = pos(ids[0]);
        const double want = add_angle(before.rotation_deg, task.goal.angle_deg);
        return near(before, after) && angle_distance(after.rotation_deg, want) <= task.eps_ang;
    }
    case TaskKind::T04: {
        for (const auto& g : task.goal.goal_scene->objects)
            if (!near(pos(g.object_id), g.pose)) return false;
        return true;
    }
    case TaskKind::T05: {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (!near(pos(ids[i]), task.goal.target_poses[i])) return false;
        return true;
    }
    case TaskKind::T17: {
        // Both subjects went into the container in instruction order, then came back.
        std::size_t step = 0;
        const std::array<std::string, 2> order = {ids[0], ids[2]};
        for (const auto& p : final_scene.placements)
            if (step < order.size() && p.subject == order[step] && p.container == ids[1]) ++step;
        if (step != order.size()) return false;
        return near(pos(ids[0]), task.scene.at(ids[0]).pose) && near(pos(ids[2]), task.scene.at(ids[2]).pose);
    }
    }
    return false;
}

/// Deterministic task instance. Slots from 0 up to `confusable_distractors`
/// each get a confusable twin in the scene; remaining slots use distinct objects.
inline TaskInstance instantiate_task(TaskKind kind, GeneralizationLevel level, std::uint64_t seed,
                                     const TaskOptions& opts = {})
{
    const auto roles = referent_roles(kind, opts.t05_steps);
    const int slots = static_cast<int>(roles.size());
    if (kind == TaskKind::T05 && (opts.t05_steps < 1 || opts.t05_steps > 4))
        throw InfeasibleConfig("t05_steps must be in 1..4");
    if (opts.distractor_count < 0 || opts.confusable_distractors < 0)
        throw InfeasibleConfig("distractor counts must be non-negative");
    const int twins = std::min(opts.confusable_distractors, slots);
    if (opts.confusable_distractors > opts.distractor_count)
        throw InfeasibleConfig("confusable_distractors exceeds distractor_count");

    SceneConfig cfg = opts.scene;
    cfg.object_count = slots + opts.distractor_count;
    cfg.confusable_pairs = opts.confusable_distractors;
    if (cfg.object_count - 2 * cfg.confusable_pairs < slots - twins)
        throw InfeasibleConfig("not enough distinct objects for the referent slots");

    TaskInstance t;
    t.kind = kind;
    t.level = level;
    t.seed = seed;
    t.roles = roles;
    t.scene = generate_scene(cfg, level, derive_seed(seed, "task-scene", static_cast<std::uint64_t>(kind)));
    t.eps_pos = opts.eps_pos_fraction * t.scene.workspace.diagonal();
    t.eps_ang = opts.eps_ang_deg;
    Rng rng(derive_seed(seed, "task", static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(level)));

    // Referent selection: one member of each of the first `twins` confusable pairs, then singles.
    const auto pairs = confusable_pairs(t.scene, cfg.similarity);
    std::vector<bool> paired(t.scene.objects.size(), false);
    for (const auto& [i, j] : pairs) paired[i] = paired[j] = true;
    std::vector<std::string> singles;
    for (std::size_t i = 0; i < t.scene.objects.size(); ++i)
        if (!paired[i]) singles.push_back(t.scene.objects[i].object_id);
    shuffle(singles, rng);

    auto& ids = t.instruction.referent_ids;
    for (int s = 0; s < slots; ++s) {
        if (s < twins) {
            const auto& [i, j] = pairs[static_cast<std::size_t>(s)];
            ids.push_back(t.scene.objects[rng.index(2) == 0 ? i : j].object_id);
        } else {
            ids.push_back(singles[static_cast<std::size_t>(s - twins)]);
        }
    }

    auto& segs = t.instruction.segments;
    auto text = [&](std::string s) { segs.push_back({InstructionSegment::Kind::Text, std::move(s), -1}); };
    auto query = [&](int slot) { segs.push_back({InstructionSegment::Kind::Query, {}, slot}); };

    switch (kind) {
    case TaskKind::T01:
        text("Put the ");
        query(0);
        text(" into the ");
        query(1);
        text(".");
        break;
    case TaskKind::T02: {
        text("Put all objects with the same texture as ");
        query(0);
        text(" into the ");
        query(1);
        text(".");
        const auto& texture = t.scene.at(ids[0]).texture;
        for (const auto& o : t.scene.objects)
            if (o.object_id != ids[1] && o.texture == texture) t.goal.goal_set.push_back(o.object_id);
        break;
    }
    case TaskKind::T03: {
        t.goal.angle_deg = kRotationAngles[rng.index(kRotationAngles.size())];
        text("Rotate the ");
        query(0);
        char buf[64];
        std::snprintf(buf, sizeof buf, " by %g degrees.", t.goal.angle_deg);
        text(buf);
        break;
    }
    case TaskKind::T04: {
        Scene goal = t.scene;
        for (int s = 0; s < slots; ++s) {
            const auto& mover = goal.at(ids[static_cast<std::size_t>(s)]);
            const auto p = detail::free_pose(goal, mover, 4 * t.eps_pos, cfg.clearance, rng);
            if (!p) throw InfeasibleConfig("no free goal pose for T04");
            t.goal.target_poses.push_back(*p);
            goal = detail::move_object(std::move(goal), mover.object_id, *p);
        }
        text("Rearrange to this scene: ");
        segs.push_back({InstructionSegment::Kind::GoalScene, {}, -1});
        text(" Move the ");
        query(0);
        text(" and the ");
        query(1);
        text(" to where they appear in it.");
        const auto render_opts = opts.render;
        const auto palette = cfg.palette;
        t.instruction.goal_image = Image::deferred(render_opts.scene_px, render_opts.scene_px,
                                                   [goal, render_opts, palette] {
                                                       return render_scene(goal, render_opts, palette);
                                                   });
        t.goal.goal_scene = std::move(goal);
        break;
    }
    case TaskKind::T05: {
        const auto zones = zone_centers(t.scene.workspace);
        for (int s = 0; s < slots; ++s) {
            t.goal.target_poses.push_back(zones[static_cast<std::size_t>(s)]);
            text(s == 0 ? "First put the " : ", then put the ");
            query(s);
            text(std::string(" in the ") + kZoneNames[static_cast<std::size_t>(s)] + " zone");
        }
        text(".");
        break;
    }
    case TaskKind::T17:
        text("Put the ");
        query(0);
        text(" into the ");
        query(1);
        text(", then put the ");
        query(2);
        text(" into the ");
        query(1);
        text(", then restore both to their original positions.");
        break;
    }

    const Scene& crop_source = t.goal.goal_scene ? *t.goal.goal_scene : t.scene;
    for (const auto& id : ids) t.instruction.query_crops.push_back(make_query_crop(crop_source, id, opts.render, cfg.palette));
    return t;
}

inline nlohmann::ordered_json to_json(const TaskInstance& t)
{
    nlohmann::ordered_json j;
    j["kind"] = to_string(t.kind);
    j["level"] = to_string(t.level);
    j["seed"] = t.seed;
    j["instruction"] = t.instruction.text();
    auto refs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < t.roles.size(); ++i)
        refs.push_back({{"slot", i + 1}, {"role", to_string(t.roles[i])}, {"object", t.instruction.referent_ids[i]}});
    j["referents"] = std::move(refs);
    nlohmann::ordered_json goal;
    if (t.kind == TaskKind::T03) goal["angle"] = t.goal.angle_deg;
    if (!t.goal.target_poses.empty()) {
        auto poses = nlohmann::ordered_json::array();
        for (const auto& p : t.goal.target_poses) poses.push_back(to_json(p));
        goal["target_poses"] = std::move(poses);
    }
    if (!t.goal.goal_set.empty()) goal["set"] = t.goal.goal_set;
    j["goal"] = std::move(goal);
    j["eps_pos"] = t.eps_pos;
    j["eps_ang"] = t.eps_ang;
    j["scene"] = to_json(t.scene);
    return j;
}

} // namespace caicl
