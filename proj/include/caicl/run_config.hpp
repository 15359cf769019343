// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/benchmark.hpp"
#include "caicl/errors.hpp"
#include "caicl/mock_vlm.hpp"
#include "caicl/palette.hpp"
#include "caicl/remote_vlm.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace caicl {

enum class BackendKind { Mock, Remote };

inline const char* to_string(BackendKind b) { return b == BackendKind::Remote ? "remote" : "mock"; }

inline BackendKind parse_backend_kind(std::string_view s)
{
    if (s == "mock") return BackendKind::Mock;
    if (s == "remote") return BackendKind::Remote;
    throw ConfigError("unknown backend '" + std::string(s) + "' (expected mock or remote)");
}

/// Everything a command needs. Resolved from defaults, then a config file, then flags.
struct RunConfig {
    BackendKind backend = BackendKind::Mock;
    RemoteConfig remote;
    MockBehavior mock;
    SuiteConfig suite;
    std::string out_dir = "caicl-out";
    std::optional<std::string> dump_prompts;

    void validate() const
    {
        suite.validate();
        try {
            mock.validate();
        } catch (const InvalidSpec& e) {
            throw ConfigError(e.what());
        }
        if (backend == BackendKind::Remote) {
            if (remote.base_url.empty()) throw ConfigError("remote backend needs base_url (--base-url)");
            if (remote.model.empty()) throw ConfigError("remote backend needs a model id (--model)");
        }
    }
};

/// Command-line values; unset members leave lower-precedence values alone.
struct CliOverrides {
    std::optional<std::string> backend;
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::optional<std::string> tasks;  // comma-separated
    std::optional<std::string> levels; // comma-separated
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> out_dir;
    std::optional<std::string> dump_prompts;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',' || c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::vector<TaskKind> parse_tasks(const std::vector<std::string>& items)
{
    std::vector<TaskKind> out;
    for (const auto& s : items) out.push_back(parse_task_kind(s));
    if (out.empty()) throw ConfigError("task list is empty");
    return out;
}

inline std::vector<GeneralizationLevel> parse_levels(const std::vector<std::string>& items)
{
    std::vector<GeneralizationLevel> out;
    for (const auto& s : items) {
        try {
            out.push_back(parse_level(s));
        } catch (const UnknownLevel& e) {
            throw ConfigError(e.what());
        }
    }
    if (out.empty()) throw ConfigError("level list is empty");
    return out;
}

inline void check_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.contains(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

} // namespace detail

/// Overlays a config document onto `cfg`. Unknown keys are errors.
///
/// Schema: {backend, remote{base_url, model, timeout_ms, max_in_flight},
/// mock{p_base, p_shortcut, p_guided, theta_gap}, suite{tasks, levels,
/// episodes, seed, distractor_count, confusable_distractors},
/// policy{parse_retry_limit, fallback}, jobs, out_dir}.
inline RunConfig apply_config_json(RunConfig cfg, const nlohmann::json& j)
{
    using detail::read;
    detail::check_keys(j, "config", {"backend", "remote", "mock", "suite", "policy", "jobs", "out_dir"});
    if (j.contains("backend")) {
        std::string b;
        read(j, "backend", b, "config");
        cfg.backend = parse_backend_kind(b);
    }
    if (j.contains("remote")) {
        const auto& r = j["remote"];
        detail::check_keys(r, "remote", {"base_url", "model", "timeout_ms", "max_in_flight"});
        read(r, "base_url", cfg.remote.base_url, "remote");
        read(r, "model", cfg.remote.model, "remote");
        if (r.contains("timeout_ms")) {
            long ms = 0;
            read(r, "timeout_ms", ms, "remote");
            cfg.remote.timeout = std::chrono::milliseconds(ms);
        }
        read(r, "max_in_flight", cfg.remote.max_in_flight, "remote");
    }
    if (j.contains("mock")) {
        const auto& m = j["mock"];
        detail::check_keys(m, "mock", {"p_base", "p_shortcut", "p_guided", "theta_gap"});
        read(m, "p_base", cfg.mock.p_base, "mock");
        read(m, "p_shortcut", cfg.mock.p_shortcut, "mock");
        read(m, "p_guided", cfg.mock.p_guided, "mock");
        read(m, "theta_gap", cfg.mock.theta_gap, "mock");
    }
    if (j.contains("suite")) {
        const auto& s = j["suite"];
        detail::check_keys(s, "suite",
                           {"tasks", "levels", "episodes", "seed", "distractor_count", "confusable_distractors"});
        if (s.contains("tasks")) {
            std::vector<std::string> v;
            read(s, "tasks", v, "suite");
            cfg.suite.tasks = detail::parse_tasks(v);
        }
        if (s.contains("levels")) {
            std::vector<std::string> v;
            read(s, "levels", v, "suite");
            cfg.suite.levels = detail::parse_levels(v);
        }
        read(s, "episodes", cfg.suite.episodes, "suite");
        read(s, "seed", cfg.suite.seed, "suite");
        read(s, "distractor_count", cfg.suite.task.distractor_count, "suite");
        read(s, "confusable_distractors", cfg.suite.task.confusable_distractors, "suite");
    }
    if (j.contains("policy")) {
        const auto& p = j["policy"];
        detail::check_keys(p, "policy", {"parse_retry_limit", "fallback"});
        read(p, "parse_retry_limit", cfg.suite.policy.parse_retry_limit, "policy");
        if (p.contains("fallback")) {
            std::string f;
            read(p, "fallback", f, "policy");
            cfg.suite.policy.fallback = parse_fallback_mode(f);
        }
    }
    read(j, "jobs", cfg.suite.jobs, "config");
    read(j, "out_dir", cfg.out_dir, "config");
    return cfg;
}

inline RunConfig apply_overrides(RunConfig cfg, const CliOverrides& o)
{
    if (o.backend) cfg.backend = parse_backend_kind(*o.backend);
    if (o.base_url) cfg.remote.base_url = *o.base_url;
    if (o.model) cfg.remote.model = *o.model;
    if (o.tasks) cfg.suite.tasks = detail::parse_tasks(detail::split_list(*o.tasks));
    if (o.levels) cfg.suite.levels = detail::parse_levels(detail::split_list(*o.levels));
    if (o.episodes) cfg.suite.episodes = *o.episodes;
    if (o.seed) cfg.suite.seed = *o.seed;
    if (o.jobs) cfg.suite.jobs = *o.jobs;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.dump_prompts) cfg.dump_prompts = *o.dump_prompts;
    return cfg;
}

/// Flags override the config file, which overrides built-in defaults.
inline RunConfig resolve_run_config(const CliOverrides& flags, const std::optional<nlohmann::json>& file = std::nullopt)
{
    RunConfig cfg;
    if (file) cfg = apply_config_json(std::move(cfg), *file);
    cfg = apply_overrides(std::move(cfg), flags);
    cfg.validate();
    return cfg;
}

/// Builds the configured backend. Throws BackendSetupError for environment problems.
inline std::unique_ptr<VlmBackend> make_backend(const RunConfig& cfg)
{
    if (cfg.backend == BackendKind::Mock) return std::make_unique<MockBackend>(cfg.mock, cfg.suite.task.scene.similarity);
    return std::make_unique<RemoteBackend>(cfg.remote);
}

} // namespace caicl
