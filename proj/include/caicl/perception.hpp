// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"
#include "caicl/image.hpp"
#include "caicl/render.hpp"
#include "caicl/rng.hpp"
#include "caicl/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace caicl {

/// A numbered candidate image handed to a matcher.
///
/// `oracle_descriptor` feeds the mock backend and is never serialized for a
/// remote one. `source_object` and `covered_objects` are ground truth for the
/// harness only; matchers must not read them.
struct ObjectCrop {
    int serial = 0; // 0 for instruction query crops
    Image image;
    Rect bbox;
    std::optional<Descriptor> oracle_descriptor;
    std::optional<std::string> source_object;
    std::vector<std::string> covered_objects;

    bool merged() const { return covered_objects.size() > 1; }
};

/// Injected segmentation faults. An empty `targets` list means every object is eligible.
struct FaultModel {
    double p_miss = 0;
    double p_merge = 0;
    std::vector<std::string> targets;

    void validate() const
    {
        if (!(p_miss >= 0 && p_miss <= 1) || !(p_merge >= 0 && p_merge <= 1))
            throw InvalidSpec("fault probabilities must lie in [0,1]");
    }

    bool eligible(const std::string& id) const
    {
        return targets.empty() || std::find(targets.begin(), targets.end(), id) != targets.end();
    }
};

namespace detail {

inline Image crop_image(std::vector<ObjectSpec> objs, const Rect& bbox, const RenderOpts& opts,
                        const PaletteRegistry& palette)
{
    return Image::deferred(opts.crop_px, opts.crop_px, [objs = std::move(objs), bbox, opts, palette] {
        return render_window(objs, bbox.cx(), bbox.cy(), crop_window_extent(bbox, opts), opts.crop_px, palette, opts);
    });
}

} // namespace detail

/// Crop of one scene object as an instruction query image (canonical orientation).
inline ObjectCrop make_query_crop(const Scene& scene, const std::string& object_id, const RenderOpts& opts = {},
                                  const PaletteRegistry& palette = PaletteRegistry::defaults())
{
    const auto& o = scene.at(object_id);
    RenderOpts q = opts;
    q.canonical_pose = true;
    const Rect fp = footprint(o);
    return {0, detail::crop_image({o}, fp, q, palette), fp, o.descriptor(), o.object_id, {o.object_id}};
}

/// Ground-truth segmentation with fault injection.
///
/// Without faults each object yields one crop and serials follow ascending
/// object_id. Every object consumes exactly two draws (miss, then merge) so the
/// stream is independent of fault outcomes.
inline std::vector<ObjectCrop> segment(const Scene& scene, const FaultModel& faults, Rng& rng,
                                       const RenderOpts& opts = {},
                                       const PaletteRegistry& palette = PaletteRegistry::defaults())
{
    faults.validate();
    std::vector<ObjectSpec> objs = scene.objects;
    std::sort(objs.begin(), objs.end(), [](const auto& a, const auto& b) { return a.object_id < b.object_id; });

    std::vector<double> u_miss(objs.size()), u_merge(objs.size());
    for (auto& u : u_miss) u = rng.uniform();
    for (auto& u : u_merge) u = rng.uniform();

    std::vector<bool> alive(objs.size());
    for (std::size_t i = 0; i < objs.size(); ++i)
        alive[i] = !(faults.eligible(objs[i].object_id) && u_miss[i] < faults.p_miss);

    std::vector<bool> consumed(objs.size(), false);
    std::vector<ObjectCrop> crops;
    for (std::size_t i = 0; i < objs.size(); ++i) {
        if (!alive[i] || consumed[i]) continue;
        consumed[i] = true;
        std::vector<std::size_t> group{i};
        if (faults.eligible(objs[i].object_id) && u_merge[i] < faults.p_merge) {
            std::optional<std::size_t> nearest;
            double best = 0;
            for (std::size_t j = 0; j < objs.size(); ++j) {
                if (j == i || !alive[j] || consumed[j]) continue;
                const double d = std::hypot(objs[j].pose.x - objs[i].pose.x, objs[j].pose.y - objs[i].pose.y);
                if (!nearest || d < best) {
                    nearest = j;
                    best = d;
                }
            }
            if (nearest) {
                consumed[*nearest] = true;
                group.push_back(*nearest);
            }
        }

        ObjectCrop crop;
        crop.serial = static_cast<int>(crops.size()) + 1;
        std::size_t dominant = group.front();
        crop.bbox = footprint(objs[dominant]);
        std::vector<ObjectSpec> shown;
        for (auto g : group) {
            crop.bbox = crop.bbox.united(footprint(objs[g]));
            crop.covered_objects.push_back(objs[g].object_id);
            shown.push_back(objs[g]);
            if (objs[g].size > objs[dominant].size) dominant = g;
        }
        std::sort(crop.covered_objects.begin(), crop.covered_objects.end());
        crop.oracle_descriptor = objs[dominant].descriptor();
        crop.source_object = objs[dominant].object_id;
        crop.image = detail::crop_image(std::move(shown), crop.bbox, opts, palette);
        crops.push_back(std::move(crop));
    }
    return crops;
}

/// Compact, image-free record of a segmentation pass (for logs and determinism checks).
inline nlohmann::ordered_json summarize(const std::vector<ObjectCrop>& crops)
{
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : crops) {
        nlohmann::ordered_json j;
        j["serial"] = c.serial;
        j["covers"] = c.covered_objects;
        j["bbox"] = {c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1};
        arr.push_back(std::move(j));
    }
    return arr;
}

/// Object whose footprint contains the crop's bbox center (nearest center wins), if any.
/// This is where a gripper aimed at the crop would close.
inline std::optional<std::string> grasp_target(const Scene& scene, const ObjectCrop& crop)
{
    std::optional<std::string> hit;
    double best = 0;
    for (const auto& o : scene.objects) {
        const double d = std::hypot(o.pose.x - crop.bbox.cx(), o.pose.y - crop.bbox.cy());
        if (d > o.size / 2) continue;
        if (!hit || d < best) {
            hit = o.object_id;
            best = d;
        }
    }
    return hit;
}

} // namespace caicl
