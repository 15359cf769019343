// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/palette.hpp"
#include "caicl/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace caicl {

enum class GeneralizationLevel { L1, L2, L3 };

inline constexpr std::array<GeneralizationLevel, 3> kAllLevels = {GeneralizationLevel::L1, GeneralizationLevel::L2,
                                                                  GeneralizationLevel::L3};

inline const char* to_string(GeneralizationLevel l)
{
    switch (l) {
    case GeneralizationLevel::L1: return "L1";
    case GeneralizationLevel::L2: return "L2";
    case GeneralizationLevel::L3: return "L3";
    }
    return "?";
}

/// Accepts "L1"/"l1"/"1" and friends.
inline GeneralizationLevel parse_level(std::string_view s)
{
    if (s == "L1" || s == "l1" || s == "1") return GeneralizationLevel::L1;
    if (s == "L2" || s == "l2" || s == "2") return GeneralizationLevel::L2;
    if (s == "L3" || s == "l3" || s == "3") return GeneralizationLevel::L3;
    throw UnknownLevel("unknown generalization level '" + std::string(s) + "'");
}

struct Pose {
    double x = 0;
    double y = 0;
    double rotation_deg = 0;

    friend bool operator==(const Pose&, const Pose&) = default;
};

struct Workspace {
    double width = 100;
    double height = 100;

    bool contains(double x, double y) const { return x >= 0 && x <= width && y >= 0 && y <= height; }
    double diagonal() const { return std::hypot(width, height); }

    friend bool operator==(const Workspace&, const Workspace&) = default;
};

/// Pose-free appearance record. This is what similarity sees and what the mock backend receives.
struct Descriptor {
    std::string shape;
    std::string texture;
    std::string color;
    double size = 0;

    friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

struct ObjectSpec {
    std::string object_id;
    std::string shape;
    std::string texture;
    std::string color;
    double size = 0;
    Pose pose;

    Descriptor descriptor() const { return {shape, texture, color, size}; }

    friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// Weighted agreement over (shape, texture, color, size). Weights are normalized by their sum.
struct SimilarityParams {
    double w_shape = 0.4;
    double w_texture = 0.3;
    double w_color = 0.2;
    double w_size = 0.1;
    /// |size difference| at which size agreement reaches zero.
    double size_scale = 4.0;
    /// Pairs at or above this score are confusable.
    double theta_conf = 0.85;

    double weight_sum() const { return w_shape + w_texture + w_color + w_size; }

    void validate() const
    {
        if (w_shape < 0 || w_texture < 0 || w_color < 0 || w_size < 0 || weight_sum() <= 0)
            throw InvalidSpec("similarity weights must be non-negative with a positive sum");
        if (size_scale <= 0) throw InvalidSpec("size_scale must be positive");
        if (theta_conf < 0 || theta_conf > 1) throw InvalidSpec("theta_conf must lie in [0,1]");
    }
};

inline double size_agreement(double a, double b, double size_scale)
{
    return 1.0 - std::min(1.0, std::abs(a - b) / size_scale);
}

inline double similarity(const Descriptor& a, const Descriptor& b, const SimilarityParams& p = {})
{
    const double agree = p.w_shape * (a.shape == b.shape) + p.w_texture * (a.texture == b.texture) +
                         p.w_color * (a.color == b.color) + p.w_size * size_agreement(a.size, b.size, p.size_scale);
    return std::clamp(agree / p.weight_sum(), 0.0, 1.0);
}

inline double similarity(const ObjectSpec& a, const ObjectSpec& b, const SimilarityParams& p = {})
{
    return similarity(a.descriptor(), b.descriptor(), p);
}

/// Records each pick-place the environment executed, in order.
struct Placement {
    std::string subject;
    std::string container; // empty when placed at a free pose
    double x = 0;
    double y = 0;

    friend bool operator==(const Placement&, const Placement&) = default;
};

struct Scene {
    Workspace workspace;
    std::vector<ObjectSpec> objects;
    std::uint64_t seed = 0;
    GeneralizationLevel level = GeneralizationLevel::L1;
    std::vector<Placement> placements;

    const ObjectSpec* find(std::string_view id) const
    {
        for (const auto& o : objects)
            if (o.object_id == id) return &o;
        return nullptr;
    }

    const ObjectSpec& at(std::string_view id) const
    {
        if (const auto* o = find(id)) return *o;
        throw UnknownObject("no object '" + std::string(id) + "' in scene");
    }

    friend bool operator==(const Scene&, const Scene&) = default;
};

inline void validate_object(const ObjectSpec& o, const PaletteRegistry& palette, const Workspace& ws)
{
    if (!palette.shapes.contains(o.shape)) throw InvalidSpec("unknown shape class '" + o.shape + "'");
    if (!palette.textures.contains(o.texture)) throw InvalidSpec("unknown texture class '" + o.texture + "'");
    if (!palette.colors.contains(o.color)) throw InvalidSpec("unknown color class '" + o.color + "'");
    if (!(o.size > 0)) throw InvalidSpec("object size must be positive");
    if (!ws.contains(o.pose.x, o.pose.y)) throw OutOfBounds("pose of '" + o.object_id + "' outside workspace");
}

struct SceneConfig {
    int object_count = 4;
    int confusable_pairs = 1;
    Workspace workspace;
    double size_min = 6;
    double size_max = 12;
    /// Required free gap between object footprints; negative values tolerate that much overlap.
    double clearance = 2.0;
    int placement_attempts = 400;
    int restarts = 32;
    SimilarityParams similarity;
    PaletteRegistry palette = PaletteRegistry::defaults();
    ComboCatalog l1_catalog = ComboCatalog::defaults();
};

inline double round_to(double v, double step) { return std::round(v / step) * step; }

inline std::string object_id_for(int index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "obj%02d", index + 1);
    return buf;
}

namespace detail {

struct Look {
    std::string shape, texture, color;
    friend bool operator==(const Look&, const Look&) = default;
};

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng)
{
    return v[static_cast<std::size_t>(rng.index(v.size()))];
}

inline std::vector<std::string> concat(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    auto out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

/// One appearance for a group, honoring the level's combination rules.
inline std::optional<Look> draw_look(const SceneConfig& cfg, GeneralizationLevel level, bool marker_group, Rng& rng)
{
    const auto& pal = cfg.palette;
    const auto& colors = pal.colors.train;
    for (int tries = 0; tries < 256; ++tries) {
        Look l;
        l.color = pick(colors, rng);
        if (level == GeneralizationLevel::L3 && marker_group) {
            if (rng.index(2) == 0) {
                l.shape = pick(pal.shapes.holdout, rng);
                l.texture = pick(concat(pal.textures.train, pal.textures.holdout), rng);
            } else {
                l.shape = pick(concat(pal.shapes.train, pal.shapes.holdout), rng);
                l.texture = pick(pal.textures.holdout, rng);
            }
            return l;
        }
        l.shape = pick(pal.shapes.train, rng);
        l.texture = pick(pal.textures.train, rng);
        const bool in_catalog = cfg.l1_catalog.contains(l.shape, l.texture);
        if (level == GeneralizationLevel::L1 && !in_catalog) continue;
        if (level == GeneralizationLevel::L2 && in_catalog) continue;
        return l;
    }
    return std::nullopt;
}

inline int count_confusable_pairs(const std::vector<ObjectSpec>& objs, const SimilarityParams& p)
{
    int count = 0;
    for (std::size_t i = 0; i < objs.size(); ++i)
        for (std::size_t j = i + 1; j < objs.size(); ++j)
            if (similarity(objs[i], objs[j], p) >= p.theta_conf) ++count;
    return count;
}

inline bool place_all(std::vector<ObjectSpec>& objs, const SceneConfig& cfg, Rng& rng)
{
    const auto& ws = cfg.workspace;
    for (std::size_t i = 0; i < objs.size(); ++i) {
        const double r = objs[i].size / 2;
        if (2 * r > ws.width || 2 * r > ws.height) return false;
        bool placed = false;
        for (int a = 0; a < cfg.placement_attempts && !placed; ++a) {
            const double x = round_to(rng.uniform(r, ws.width - r), 0.01);
            const double y = round_to(rng.uniform(r, ws.height - r), 0.01);
            placed = std::all_of(objs.begin(), objs.begin() + static_cast<std::ptrdiff_t>(i), [&](const ObjectSpec& o) {
                return std::hypot(o.pose.x - x, o.pose.y - y) >= r + o.size / 2 + cfg.clearance;
            });
            if (placed) objs[i].pose = {x, y, round_to(rng.uniform(0, 360), 0.1)};
        }
        if (!placed) return false;
        if (objs[i].pose.rotation_deg >= 360) objs[i].pose.rotation_deg = 0;
    }
    return true;
}

} // namespace detail

/// Largest size difference that keeps an otherwise identical pair at or above theta_conf.
inline double max_confusable_size_delta(const SimilarityParams& p)
{
    const double w = p.w_size / p.weight_sum();
    if (w <= 0) return p.size_scale;
    return p.size_scale * std::min(1.0, (1.0 - p.theta_conf) / w);
}

/// Builds a scene with exactly `confusable_pairs` pairs at or above theta_conf.
///
/// Pairs share shape, texture and color and differ only slightly in size. Every
/// other object gets a distinct appearance. L1 draws shape x texture from the
/// catalog, L2 only from combinations outside it, and L3 gives the first group a
/// holdout shape or texture.
inline Scene generate_scene(const SceneConfig& cfg, GeneralizationLevel level, std::uint64_t seed)
{
    if (level != GeneralizationLevel::L1 && level != GeneralizationLevel::L2 && level != GeneralizationLevel::L3)
        throw UnknownLevel("unknown generalization level");
    const int n = cfg.object_count;
    const int k = cfg.confusable_pairs;
    if (n < 1 || k < 0 || 2 * k > n)
        throw InfeasibleConfig("need object_count >= 1 and 0 <= 2*confusable_pairs <= object_count");
    if (!(cfg.size_min > 0) || cfg.size_max < cfg.size_min) throw InfeasibleConfig("invalid size range");
    cfg.similarity.validate();

    Rng rng(derive_seed(seed, "scene", static_cast<std::uint64_t>(level)));
    const int groups = n - k;
    const double delta_max = max_confusable_size_delta(cfg.similarity);

    for (int restart = 0; restart < cfg.restarts; ++restart) {
        std::vector<detail::Look> looks;
        bool ok = true;
        for (int g = 0; g < groups && ok; ++g) {
            std::optional<detail::Look> look;
            for (int t = 0; t < 64; ++t) {
                look = detail::draw_look(cfg, level, g == 0, rng);
                if (look && std::find(looks.begin(), looks.end(), *look) == looks.end()) break;
                look.reset();
            }
            if (look)
                looks.push_back(*look);
            else
                ok = false;
        }
        if (!ok) continue;

        std::vector<ObjectSpec> objs;
        for (int g = 0; g < groups; ++g) {
            const auto& l = looks[static_cast<std::size_t>(g)];
            if (g < k) {
                const double span = cfg.size_max - cfg.size_min;
                const double delta = round_to(std::min(rng.uniform(0.25, 0.5) * delta_max, span), 0.01);
                const double base = round_to(rng.uniform(cfg.size_min, cfg.size_max - delta), 0.01);
                objs.push_back({"", l.shape, l.texture, l.color, base, {}});
                objs.push_back({"", l.shape, l.texture, l.color, base + delta, {}});
            } else {
                objs.push_back({"", l.shape, l.texture, l.color,
                                round_to(rng.uniform(cfg.size_min, cfg.size_max), 0.01), {}});
            }
        }
        if (detail::count_confusable_pairs(objs, cfg.similarity) != k) continue;
        bool has_duplicate = false;
        for (std::size_t i = 0; i < objs.size(); ++i)
            for (std::size_t j = i + 1; j < objs.size(); ++j)
                if (objs[i].descriptor() == objs[j].descriptor()) has_duplicate = true;
        if (has_duplicate) continue;
        if (!detail::place_all(objs, cfg, rng)) continue;

        std::vector<int> ids(objs.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
        shuffle(ids, rng);
        for (std::size_t i = 0; i < objs.size(); ++i) objs[i].object_id = object_id_for(ids[i]);
        std::sort(objs.begin(), objs.end(),
                  [](const ObjectSpec& a, const ObjectSpec& b) { return a.object_id < b.object_id; });
        return Scene{cfg.workspace, std::move(objs), seed, level, {}};
    }
    throw InfeasibleConfig("could not generate " + std::to_string(n) + " objects with " + std::to_string(k) +
                           " confusable pairs in the workspace");
}

/// All (i, j) index pairs with similarity >= theta_conf.
inline std::vector<std::pair<std::size_t, std::size_t>> confusable_pairs(const Scene& s, const SimilarityParams& p = {})
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < s.objects.size(); ++i)
        for (std::size_t j = i + 1; j < s.objects.size(); ++j)
            if (similarity(s.objects[i], s.objects[j], p) >= p.theta_conf) out.emplace_back(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// Actions

enum class ActionKind { PickPlace, Rotate };

struct Action {
    ActionKind kind = ActionKind::PickPlace;
    std::string subject;
    std::optional<Pose> target_pose;
    std::optional<std::string> target_container;
    double angle_deg = 0;

    static Action pick_place_to(std::string subject, Pose p) { return {ActionKind::PickPlace, std::move(subject), p, {}, 0}; }
    static Action pick_place_into(std::string subject, std::string container)
    {
        return {ActionKind::PickPlace, std::move(subject), {}, std::move(container), 0};
    }
    static Action rotate(std::string subject, double angle) { return {ActionKind::Rotate, std::move(subject), {}, {}, angle}; }

    friend bool operator==(const Action&, const Action&) = default;
};

/// Adds `delta` degrees and wraps into [0, 360). A zero or full-turn delta leaves `angle` bit-identical.
inline double add_angle(double angle, double delta)
{
    const double d = std::fmod(delta, 360.0);
    if (d == 0) return angle;
    double r = angle + d;
    if (r >= 360) r -= 360;
    if (r < 0) r += 360;
    return r;
}

/// Smallest absolute difference between two angles in degrees.
inline double angle_distance(double a, double b)
{
    const double d = std::fmod(std::abs(a - b), 360.0);
    return std::min(d, 360.0 - d);
}

inline Scene apply_action(const Scene& scene, const Action& action)
{
    Scene next = scene;
    auto it = std::find_if(next.objects.begin(), next.objects.end(),
                            [&](const ObjectSpec& o) { return o.object_id == action.subject; });
    if (it == next.objects.end()) throw UnknownObject("no object '" + action.subject + "' in scene");

    if (action.kind == ActionKind::Rotate) {
        it->pose.rotation_deg = add_angle(it->pose.rotation_deg, action.angle_deg);
        return next;
    }
    if (action.target_container) {
        const auto& container = scene.at(*action.target_container);
        it->pose.x = container.pose.x;
        it->pose.y = container.pose.y;
        next.placements.push_back({action.subject, container.object_id, container.pose.x, container.pose.y});
    } else if (action.target_pose) {
        const auto& p = *action.target_pose;
        if (!scene.workspace.contains(p.x, p.y)) throw OutOfBounds("target pose outside workspace");
        it->pose = p;
        next.placements.push_back({action.subject, "", p.x, p.y});
    } else {
        throw InvalidSpec("pick-place action without target");
    }
    return next;
}

inline Scene apply_plan(Scene scene, const std::vector<Action>& plan)
{
    for (const auto& a : plan) scene = apply_action(scene, a);
    return scene;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const Pose& p)
{
    return nlohmann::ordered_json::array({p.x, p.y, p.rotation_deg});
}

inline nlohmann::ordered_json to_json(const ObjectSpec& o)
{
    nlohmann::ordered_json j;
    j["id"] = o.object_id;
    j["shape"] = o.shape;
    j["texture"] = o.texture;
    j["color"] = o.color;
    j["size"] = o.size;
    j["pose"] = to_json(o.pose);
    return j;
}

inline nlohmann::ordered_json to_json(const Action& a)
{
    nlohmann::ordered_json j;
    j["kind"] = a.kind == ActionKind::Rotate ? "rotate" : "pick_place";
    j["subject"] = a.subject;
    if (a.kind == ActionKind::Rotate) {
        j["angle"] = a.angle_deg;
    } else if (a.target_container) {
        j["container"] = *a.target_container;
    } else if (a.target_pose) {
        j["pose"] = to_json(*a.target_pose);
    }
    return j;
}

inline nlohmann::ordered_json to_json(const Scene& s)
{
    nlohmann::ordered_json j;
    j["workspace"] = nlohmann::ordered_json::array({s.workspace.width, s.workspace.height});
    j["seed"] = s.seed;
    j["level"] = to_string(s.level);
    auto objs = nlohmann::ordered_json::array();
    for (const auto& o : s.objects) objs.push_back(to_json(o));
    j["objects"] = std::move(objs);
    auto pl = nlohmann::ordered_json::array();
    for (const auto& p : s.placements) pl.push_back({p.subject, p.container, p.x, p.y});
    j["placements"] = std::move(pl);
    return j;
}

inline Pose pose_from_json(const nlohmann::json& j) { return {j.at(0), j.at(1), j.at(2)}; }

inline ObjectSpec object_from_json(const nlohmann::json& j)
{
    return {j.at("id"), j.at("shape"), j.at("texture"), j.at("color"), j.at("size"), pose_from_json(j.at("pose"))};
}

inline Scene scene_from_json(const nlohmann::json& j)
{
    Scene s;
    s.workspace = {j.at("workspace").at(0), j.at("workspace").at(1)};
    s.seed = j.at("seed");
    s.level = parse_level(j.at("level").get<std::string>());
    for (const auto& o : j.at("objects")) s.objects.push_back(object_from_json(o));
    for (const auto& p : j.at("placements")) s.placements.push_back({p.at(0), p.at(1), p.at(2), p.at(3)});
    return s;
}

inline std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string scene_digest(const Scene& s) { return hex64(fnv1a64(to_json(s).dump())); }

} // namespace caicl
