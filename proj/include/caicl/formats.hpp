// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace caicl {

/// Phase-1 answer: which two candidates are most confusable and what tells them apart.
struct ConfusionReport {
    int num_images = 0;
    std::pair<int, int> confusable_pair{1, 2};
    std::string reason;
    std::string attention;
    std::string details;

    friend bool operator==(const ConfusionReport&, const ConfusionReport&) = default;
};

/// Phase-2 answer.
struct RecognitionAnswer {
    int best_match = 0;
    std::string justification;

    friend bool operator==(const RecognitionAnswer&, const RecognitionAnswer&) = default;
};

inline constexpr std::array<std::string_view, 5> kFormat1Keys = {"num_images", "confusable_pair", "reason",
                                                                 "attention", "details"};
inline constexpr std::array<std::string_view, 2> kFormat2Keys = {"best_match", "justification"};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline bool is_decoration(char c) { return c == '*' || c == '_' || c == '`' || c == '#' || c == '>' || c == '-'; }

inline std::string_view strip_decoration(std::string_view s)
{
    s = trim(s);
    while (!s.empty() && (is_decoration(s.front()) || std::isspace(static_cast<unsigned char>(s.front()))))
        s.remove_prefix(1);
    while (!s.empty() && (is_decoration(s.back()) || std::isspace(static_cast<unsigned char>(s.back()))))
        s.remove_suffix(1);
    return s;
}

inline std::string normalize_key(std::string_view s)
{
    std::string out;
    for (char c : strip_decoration(s)) {
        if (c == ' ' || c == '-')
            out += '_';
        else
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

/// Scans `key: value` lines. Keys match case-insensitively after stripping
/// markdown decoration; the first occurrence of each key wins.
template <std::size_t N>
std::map<std::string, std::string> scan_keys(std::string_view text, const std::array<std::string_view, N>& keys)
{
    std::map<std::string, std::string> found;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        const auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

        const auto colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        const std::string key = normalize_key(line.substr(0, colon));
        if (std::find(keys.begin(), keys.end(), key) == keys.end() || found.contains(key)) continue;
        found.emplace(key, std::string(strip_decoration(line.substr(colon + 1))));
    }
    return found;
}

inline std::vector<int> integers_in(std::string_view s)
{
    std::vector<int> out;
    for (std::size_t i = 0; i < s.size();) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        int v = 0;
        auto [ptr, ec] = std::from_chars(s.data() + i, s.data() + s.size(), v);
        if (ec != std::errc{}) v = -1;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
        out.push_back(v);
        (void)ptr;
    }
    return out;
}

} // namespace detail

/// Canonical format1 block.
inline std::string render_format1(const ConfusionReport& r)
{
    return "num_images: " + std::to_string(r.num_images) + "\nconfusable_pair: " +
           std::to_string(r.confusable_pair.first) + ", " + std::to_string(r.confusable_pair.second) +
           "\nreason: " + r.reason + "\nattention: " + r.attention + "\ndetails: " + r.details + "\n";
}

/// Canonical format2 block.
inline std::string render_format2(const RecognitionAnswer& a)
{
    return "best_match: " + std::to_string(a.best_match) + "\njustification: " + a.justification + "\n";
}

/// Tolerant format1 parser. The pair is normalized to i < j. Throws ParseError
/// naming every missing or invalid key, in canonical key order.
inline ConfusionReport parse_localization_response(std::string_view text)
{
    const auto kv = detail::scan_keys(text, kFormat1Keys);
    std::vector<std::string> bad;
    ConfusionReport r;

    std::optional<int> num;
    if (auto it = kv.find("num_images"); it != kv.end()) {
        const auto ints = detail::integers_in(it->second);
        if (!ints.empty() && ints.front() >= 0) num = ints.front();
    }
    if (!num) bad.emplace_back("num_images");

    bool pair_ok = false;
    if (auto it = kv.find("confusable_pair"); it != kv.end()) {
        const auto ints = detail::integers_in(it->second);
        if (ints.size() >= 2) {
            int i = ints[0], j = ints[1];
            if (i > j) std::swap(i, j);
            pair_ok = i >= 1 && i < j && (!num || j <= *num);
            r.confusable_pair = {i, j};
        }
    }
    if (!pair_ok) bad.emplace_back("confusable_pair");

    for (const char* key : {"reason", "attention", "details"}) {
        auto it = kv.find(key);
        if (it == kv.end() || it->second.empty()) bad.emplace_back(key);
    }
    if (!bad.empty()) throw ParseError(std::move(bad), "format1");

    r.num_images = *num;
    r.reason = kv.at("reason");
    r.attention = kv.at("attention");
    r.details = kv.at("details");
    return r;
}

/// Tolerant format2 parser. Range is checked before completeness, so an
/// out-of-range serial throws OutOfRangeSerial even when justification is absent.
inline RecognitionAnswer parse_recognition_response(std::string_view text, int candidate_count)
{
    const auto kv = detail::scan_keys(text, kFormat2Keys);
    std::vector<std::string> bad;
    RecognitionAnswer a;

    std::optional<int> serial;
    if (auto it = kv.find("best_match"); it != kv.end()) {
        const auto ints = detail::integers_in(it->second);
        if (!ints.empty()) serial = ints.front();
    }
    if (serial && (*serial < 1 || *serial > candidate_count)) throw OutOfRangeSerial(*serial, candidate_count);
    if (!serial) bad.emplace_back("best_match");
    if (auto it = kv.find("justification"); it == kv.end() || it->second.empty()) bad.emplace_back("justification");
    if (!bad.empty()) throw ParseError(std::move(bad), "format2");

    a.best_match = *serial;
    a.justification = kv.at("justification");
    return a;
}

} // namespace caicl
