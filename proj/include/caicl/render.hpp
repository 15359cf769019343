// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/image.hpp"
#include "caicl/scene.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace caicl {

struct RenderOpts {
    int scene_px = 448;
    int crop_px = 224;
    /// Workspace extent shown by a single-object crop. Fixed so apparent size reflects true size.
    double crop_extent = 24.0;
    /// Draw crops at rotation 0 (query images show the object in its canonical orientation).
    bool canonical_pose = false;
    Rgb background{236, 236, 230};
};

/// Workspace-aligned rectangle.
struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    double cx() const { return (x0 + x1) / 2; }
    double cy() const { return (y0 + y1) / 2; }
    Rect united(const Rect& o) const
    {
        return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
    }

    friend bool operator==(const Rect&, const Rect&) = default;
};

inline Rect footprint(const ObjectSpec& o)
{
    const double r = o.size / 2;
    return {o.pose.x - r, o.pose.y - r, o.pose.x + r, o.pose.y + r};
}

namespace detail {

struct Poly {
    std::vector<std::pair<double, double>> v;
};

inline Poly regular(int n, double phase_deg, double r_outer = 1.0, double r_inner = 0.0)
{
    Poly p;
    const int steps = r_inner > 0 ? 2 * n : n;
    for (int i = 0; i < steps; ++i) {
        const double a = (phase_deg + 360.0 * i / steps) * std::numbers::pi / 180.0;
        const double r = (r_inner > 0 && (i % 2)) ? r_inner : r_outer;
        p.v.emplace_back(r * std::cos(a), r * std::sin(a));
    }
    return p;
}

inline bool inside_poly(const Poly& p, double u, double v)
{
    bool in = false;
    for (std::size_t i = 0, j = p.v.size() - 1; i < p.v.size(); j = i++) {
        const auto [xi, yi] = p.v[i];
        const auto [xj, yj] = p.v[j];
        if ((yi > v) != (yj > v) && u < (xj - xi) * (v - yi) / (yj - yi) + xi) in = !in;
    }
    return in;
}

/// Shape membership in unit-radius local coordinates. Unknown shapes render as circles.
inline bool inside_shape(const std::string& shape, double u, double v)
{
    static const Poly tri = regular(3, -90);
    static const Poly pent = regular(5, -90);
    static const Poly hex = regular(6, 0);
    static const Poly star = regular(5, -90, 1.0, 0.45);
    static const Poly diamond{{{0, -1}, {0.62, 0}, {0, 1}, {-0.62, 0}}};
    if (shape == "square") return std::abs(u) <= 0.72 && std::abs(v) <= 0.72;
    if (shape == "triangle") return inside_poly(tri, u, v);
    if (shape == "pentagon") return inside_poly(pent, u, v);
    if (shape == "hexagon") return inside_poly(hex, u, v);
    if (shape == "diamond") return inside_poly(diamond, u, v);
    if (shape == "star") return inside_poly(star, u, v);
    if (shape == "cross")
        return (std::abs(u) <= 0.32 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.32 && std::abs(u) <= 1.0);
    return u * u + v * v <= 1.0;
}

inline double frac(double x) { return x - std::floor(x); }

/// True where the texture pattern darkens the fill.
inline bool texture_mark(const std::string& texture, double u, double v)
{
    if (texture == "stripes") return static_cast<long>(std::floor(u * 3.5)) & 1;
    if (texture == "checker") return (static_cast<long>(std::floor(u * 3)) + static_cast<long>(std::floor(v * 3))) & 1;
    if (texture == "dots") {
        const double fu = frac(u * 2.5) - 0.5, fv = frac(v * 2.5) - 0.5;
        return fu * fu + fv * fv < 0.06;
    }
    if (texture == "grid") return frac(u * 3) < 0.18 || frac(v * 3) < 0.18;
    if (texture == "diagonal") return static_cast<long>(std::floor((u + v) * 3)) & 1;
    return false;
}

/// Draws `o` into `r`, where `r` shows the workspace window starting at (x0, y0) at `scale` px/unit.
inline void draw_object(Raster& r, const ObjectSpec& o, const PaletteRegistry& palette, double x0, double y0,
                        double scale, bool canonical)
{
    const double rad = o.size / 2;
    const double theta = (canonical ? 0.0 : o.pose.rotation_deg) * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const auto it = palette.rgb.find(o.color);
    const Rgb fill = it != palette.rgb.end() ? it->second : Rgb{128, 128, 128};
    const Rgb dark{static_cast<std::uint8_t>(fill[0] * 0.55), static_cast<std::uint8_t>(fill[1] * 0.55),
                   static_cast<std::uint8_t>(fill[2] * 0.55)};

    const int px0 = std::max(0, static_cast<int>(std::floor((o.pose.x - rad - x0) * scale)));
    const int px1 = std::min(r.width - 1, static_cast<int>(std::ceil((o.pose.x + rad - x0) * scale)));
    const int py0 = std::max(0, static_cast<int>(std::floor((o.pose.y - rad - y0) * scale)));
    const int py1 = std::min(r.height - 1, static_cast<int>(std::ceil((o.pose.y + rad - y0) * scale)));
    for (int py = py0; py <= py1; ++py) {
        const double dy = y0 + (py + 0.5) / scale - o.pose.y;
        for (int px = px0; px <= px1; ++px) {
            const double dx = x0 + (px + 0.5) / scale - o.pose.x;
            const double u = (dx * c + dy * s) / rad;
            const double v = (-dx * s + dy * c) / rad;
            if (!inside_shape(o.shape, u, v)) continue;
            const Rgb& col = texture_mark(o.texture, u, v) ? dark : fill;
            auto* p = r.at(px, py);
            p[0] = col[0];
            p[1] = col[1];
            p[2] = col[2];
        }
    }
}

} // namespace detail

/// Rasterizes `objects` inside a square window centered on `center_x/center_y`.
inline ImageBlob render_window(std::span<const ObjectSpec> objects, double center_x, double center_y, double extent,
                               int px, const PaletteRegistry& palette, const RenderOpts& opts)
{
    Raster r(px, px, opts.background);
    const double scale = px / extent;
    const double x0 = center_x - extent / 2, y0 = center_y - extent / 2;
    for (const auto& o : objects) detail::draw_object(r, o, palette, x0, y0, scale, opts.canonical_pose);
    return encode_png(r);
}

/// Whole-scene top-down image, scene_px x scene_px.
inline ImageBlob render_scene(const Scene& scene, const RenderOpts& opts = {},
                              const PaletteRegistry& palette = PaletteRegistry::defaults())
{
    Raster r(opts.scene_px, opts.scene_px, opts.background);
    const double scale_x = opts.scene_px / scene.workspace.width;
    const double scale_y = opts.scene_px / scene.workspace.height;
    const double scale = std::min(scale_x, scale_y);
    for (const auto& obj : scene.objects) detail::draw_object(r, obj, palette, 0, 0, scale, false);
    return encode_png(r);
}

/// Window that a crop of `objs` covers: at least crop_extent, grown to fit their union footprint.
inline double crop_window_extent(const Rect& bbox, const RenderOpts& opts)
{
    return std::max({opts.crop_extent, (bbox.x1 - bbox.x0) * 1.15, (bbox.y1 - bbox.y0) * 1.15});
}

/// Masked crop of a single object, crop_px x crop_px.
inline ImageBlob render_object(const Scene& scene, std::string_view object_id, const RenderOpts& opts = {},
                               const PaletteRegistry& palette = PaletteRegistry::defaults())
{
    const auto& o = scene.at(object_id);
    const Rect fp = footprint(o);
    return render_window(std::span(&o, 1), fp.cx(), fp.cy(), crop_window_extent(fp, opts), opts.crop_px, palette,
                         opts);
}

struct WholeScene {};
using RenderTarget = std::variant<WholeScene, std::string>;

inline ImageBlob render(const Scene& scene, const RenderTarget& target, const RenderOpts& opts = {},
                        const PaletteRegistry& palette = PaletteRegistry::defaults())
{
    if (std::holds_alternative<WholeScene>(target)) return render_scene(scene, opts, palette);
    return render_object(scene, std::get<std::string>(target), opts, palette);
}

} // namespace caicl
