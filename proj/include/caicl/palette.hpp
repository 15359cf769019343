// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace caicl {

// Copies of data/palette.v1.json and data/l1_catalog.v1.json. A test keeps them byte-identical.
inline constexpr std::string_view kDefaultPaletteJson = R"json(
{
  "schema": "caicl.palette",
  "version": 1,
  "shapes": {
    "train": ["square", "circle", "triangle", "pentagon", "hexagon", "diamond"],
    "holdout": ["star", "cross"]
  },
  "textures": {
    "train": ["solid", "stripes", "checker", "dots", "grid"],
    "holdout": ["diagonal"]
  },
  "colors": {
    "train": ["red", "green", "blue", "yellow", "purple", "orange", "cyan", "brown"],
    "holdout": []
  },
  "rgb": {
    "red": [214, 48, 49],
    "green": [46, 160, 67],
    "blue": [45, 85, 214],
    "yellow": [232, 196, 40],
    "purple": [136, 64, 180],
    "orange": [240, 128, 32],
    "cyan": [38, 186, 200],
    "brown": [140, 90, 50]
  }
}
)json";

inline constexpr std::string_view kDefaultL1CatalogJson = R"json(
{
  "schema": "caicl.l1_catalog",
  "version": 1,
  "combinations": [
    ["square", "solid"], ["square", "checker"], ["square", "grid"],
    ["circle", "stripes"], ["circle", "dots"],
    ["triangle", "solid"], ["triangle", "checker"], ["triangle", "grid"],
    ["pentagon", "stripes"], ["pentagon", "dots"],
    ["hexagon", "solid"], ["hexagon", "checker"], ["hexagon", "grid"],
    ["diamond", "stripes"], ["diamond", "dots"]
  ]
}
)json";

enum class Attribute { Shape, Texture, Color, Size };

inline const char* to_string(Attribute a)
{
    switch (a) {
    case Attribute::Shape: return "shape";
    case Attribute::Texture: return "texture";
    case Attribute::Color: return "color";
    case Attribute::Size: return "size";
    }
    return "size";
}

inline constexpr std::array<Attribute, 4> kAttributeOrder = {Attribute::Shape, Attribute::Texture, Attribute::Color,
                                                             Attribute::Size};

/// Train/holdout split for one categorical dimension.
struct ClassSplit {
    std::vector<std::string> train;
    std::vector<std::string> holdout;

    bool contains(std::string_view id) const { return is_train(id) || is_holdout(id); }
    bool is_train(std::string_view id) const { return std::find(train.begin(), train.end(), id) != train.end(); }
    bool is_holdout(std::string_view id) const
    {
        return std::find(holdout.begin(), holdout.end(), id) != holdout.end();
    }
};

using Rgb = std::array<std::uint8_t, 3>;

/// Registered shape/texture/color classes with their train and holdout splits.
struct PaletteRegistry {
    ClassSplit shapes;
    ClassSplit textures;
    ClassSplit colors;
    std::map<std::string, Rgb> rgb;

    /// Validates disjoint splits, non-empty shape/texture holdouts and an RGB entry per color.
    void validate() const
    {
        for (const auto* split : {&shapes, &textures, &colors}) {
            if (split->train.empty()) throw InvalidSpec("palette: empty train split");
            std::set<std::string> seen;
            for (const auto& c : split->train)
                if (!seen.insert(c).second) throw InvalidSpec("palette: duplicate class " + c);
            for (const auto& c : split->holdout)
                if (!seen.insert(c).second) throw InvalidSpec("palette: class in both splits " + c);
        }
        if (shapes.holdout.empty() || textures.holdout.empty())
            throw InvalidSpec("palette: shape and texture holdout splits must be non-empty");
        for (const auto& c : colors.train)
            if (!rgb.contains(c)) throw InvalidSpec("palette: no rgb for color " + c);
        for (const auto& c : colors.holdout)
            if (!rgb.contains(c)) throw InvalidSpec("palette: no rgb for color " + c);
    }

    bool is_holdout_object(std::string_view shape, std::string_view texture, std::string_view color) const
    {
        return shapes.is_holdout(shape) || textures.is_holdout(texture) || colors.is_holdout(color);
    }

    static PaletteRegistry from_json(const nlohmann::json& j)
    {
        try {
            if (j.at("schema") != "caicl.palette" || j.at("version") != 1)
                throw InvalidSpec("palette: unsupported schema/version");
            PaletteRegistry p;
            auto split = [&](const char* key) {
                return ClassSplit{j.at(key).at("train").get<std::vector<std::string>>(),
                                  j.at(key).at("holdout").get<std::vector<std::string>>()};
            };
            p.shapes = split("shapes");
            p.textures = split("textures");
            p.colors = split("colors");
            for (const auto& [name, v] : j.at("rgb").items()) p.rgb[name] = v.get<Rgb>();
            p.validate();
            return p;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidSpec(std::string("palette: ") + e.what());
        }
    }

    static const PaletteRegistry& defaults()
    {
        static const PaletteRegistry p = from_json(nlohmann::json::parse(kDefaultPaletteJson));
        return p;
    }
};

/// The fixed set of shape x texture combinations that L1 scenes draw from.
struct ComboCatalog {
    std::set<std::pair<std::string, std::string>> combos;

    bool contains(std::string_view shape, std::string_view texture) const
    {
        return combos.contains({std::string(shape), std::string(texture)});
    }

    static ComboCatalog from_json(const nlohmann::json& j)
    {
        try {
            if (j.at("schema") != "caicl.l1_catalog" || j.at("version") != 1)
                throw InvalidSpec("l1 catalog: unsupported schema/version");
            ComboCatalog c;
            for (const auto& e : j.at("combinations"))
                c.combos.emplace(e.at(0).get<std::string>(), e.at(1).get<std::string>());
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidSpec(std::string("l1 catalog: ") + e.what());
        }
    }

    static const ComboCatalog& defaults()
    {
        static const ComboCatalog c = from_json(nlohmann::json::parse(kDefaultL1CatalogJson));
        return c;
    }
};

inline nlohmann::json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace caicl
