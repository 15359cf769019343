// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "caicl/episode.hpp"
#include "caicl/errors.hpp"
#include "caicl/matcher.hpp"
#include "caicl/rng.hpp"
#include "caicl/task.hpp"
#include "caicl/vlm.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace caicl {

struct SuiteConfig {
    std::vector<TaskKind> tasks{kAllTasks.begin(), kAllTasks.end()};
    std::vector<GeneralizationLevel> levels{kAllLevels.begin(), kAllLevels.end()};
    int episodes = 200;
    std::uint64_t seed = 0;
    std::vector<MatcherKind> matchers{MatcherKind::Vanilla, MatcherKind::Caicl};
    TaskOptions task;
    FaultModel faults;
    MatchPolicy policy;
    EpisodeOptions episode{PlanCorruption::None, {}, {}, false, false};
    int jobs = 1;

    void validate() const
    {
        if (tasks.empty()) throw ConfigError("suite lists no tasks");
        if (levels.empty()) throw ConfigError("suite lists no levels");
        if (matchers.empty()) throw ConfigError("suite lists no matchers");
        if (episodes < 0) throw ConfigError("episodes must be >= 0");
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
        try {
            faults.validate();
        } catch (const InvalidSpec& e) {
            throw ConfigError(e.what());
        }
        policy.validate();
    }
};

/// Seed shared by every matcher for episode `index` of a (task, level) cell.
inline std::uint64_t episode_seed(std::uint64_t suite_seed, TaskKind task, GeneralizationLevel level, int index)
{
    return derive_seed(suite_seed, "episode", static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(level),
                       static_cast<std::uint64_t>(index));
}

/// Digest of the suite parameters that affect results.
inline std::string suite_digest(const SuiteConfig& s, const std::string& backend_id)
{
    nlohmann::ordered_json j;
    auto tasks = nlohmann::ordered_json::array();
    for (auto t : s.tasks) tasks.push_back(to_string(t));
    auto levels = nlohmann::ordered_json::array();
    for (auto l : s.levels) levels.push_back(to_string(l));
    auto matchers = nlohmann::ordered_json::array();
    for (auto m : s.matchers) matchers.push_back(to_string(m));
    j["tasks"] = tasks;
    j["levels"] = levels;
    j["episodes"] = s.episodes;
    j["seed"] = s.seed;
    j["matchers"] = matchers;
    j["distractors"] = s.task.distractor_count;
    j["confusable"] = s.task.confusable_distractors;
    j["faults"] = {s.faults.p_miss, s.faults.p_merge};
    j["retry"] = s.policy.parse_retry_limit;
    j["fallback"] = to_string(s.policy.fallback);
    j["prompts"] = s.policy.templates.version;
    j["backend"] = backend_id;
    return hex64(fnv1a64(j.dump()));
}

struct CellResult {
    int episodes = 0;
    int successes = 0;
    std::map<FailureCause, int> causes;

    /// Success rate in percent; none for an empty cell.
    std::optional<double> rate() const
    {
        if (episodes == 0) return std::nullopt;
        return 100.0 * successes / episodes;
    }
    int failures() const { return episodes - successes; }
};

using CellKey = std::tuple<TaskKind, GeneralizationLevel>;
using RateGrid = std::map<CellKey, CellResult>;

/// Published success rates (percent) used as fixed reference columns.
namespace reference {

inline constexpr std::array<TaskKind, 6> kTasks = {TaskKind::T01, TaskKind::T02, TaskKind::T03,
                                                   TaskKind::T04, TaskKind::T05, TaskKind::T17};

// Per level (L1, L2, L3), per task in kTasks order.
inline constexpr double kVanilla[3][6] = {{87.9, 89.6, 97.8, 75.3, 73.2, 84.1},
                                          {88.1, 89.4, 97.6, 74.3, 71.8, 83.1},
                                          {88.2, 89.6, 97.8, 75.8, 68.7, 81.7}};
inline constexpr double kCaicl[3][6] = {{93.1, 92.5, 98.8, 86.2, 85.5, 92.2},
                                        {94.6, 92.2, 99.3, 85.7, 83.5, 90.7},
                                        {93.7, 92.8, 98.9, 86.7, 81.5, 90.4}};
// Averages over all twelve evaluated tasks, per level.
inline constexpr double kVanillaAvg[3] = {81.2, 80.5, 80.2};
inline constexpr double kCaiclAvg[3] = {85.5, 85.0, 84.9};

struct ModelRow {
    const char* model;
    double rates[6];
};
inline constexpr std::array<ModelRow, 4> kByModel = {{{"LLaVA-v1.5", {80.2, 79.4, 83.2, 74.5, 70.7, 69.4}},
                                                      {"Qwen2-VL", {85.0, 84.4, 87.8, 79.7, 76.8, 78.4}},
                                                      {"Gemini 1.5 Pro", {93.5, 93.2, 99.0, 88.4, 83.4, 91.2}},
                                                      {"GPT-4o", {93.8, 92.5, 99.0, 86.2, 83.5, 91.7}}}};

inline std::size_t task_index(TaskKind t)
{
    return static_cast<std::size_t>(std::find(kTasks.begin(), kTasks.end(), t) - kTasks.begin());
}

inline double cell(MatcherKind m, TaskKind t, GeneralizationLevel l)
{
    const auto li = static_cast<std::size_t>(l);
    return m == MatcherKind::Caicl ? kCaicl[li][task_index(t)] : kVanilla[li][task_index(t)];
}

inline double average(MatcherKind m, GeneralizationLevel l)
{
    const auto li = static_cast<std::size_t>(l);
    return m == MatcherKind::Caicl ? kCaiclAvg[li] : kVanillaAvg[li];
}

} // namespace reference

struct BenchReport {
    std::vector<TaskKind> tasks;
    std::vector<GeneralizationLevel> levels;
    std::vector<MatcherKind> matchers;
    int episodes_per_cell = 0;
    std::map<MatcherKind, RateGrid> grids;
    std::string suite_digest;
    std::string backend_id;

    CellResult pooled(MatcherKind m) const
    {
        CellResult p;
        auto it = grids.find(m);
        if (it == grids.end()) return p;
        for (const auto& [k, c] : it->second) {
            p.episodes += c.episodes;
            p.successes += c.successes;
            for (const auto& [cause, n] : c.causes) p.causes[cause] += n;
        }
        return p;
    }
};

struct BenchResult {
    BenchReport report;
    /// One serialized EpisodeLog per line, ordered by task, level, index, matcher.
    std::vector<std::string> log_lines;
};

/// Runs every (task, level, index, matcher) episode. Results are independent of
/// `jobs` because seeds depend only on cell coordinates and reduction is by index.
inline BenchResult run_benchmark(const SuiteConfig& suite, VlmBackend& backend)
{
    suite.validate();
    struct Job {
        TaskKind task;
        GeneralizationLevel level;
        int index;
    };
    std::vector<Job> jobs;
    for (auto t : suite.tasks)
        for (auto l : suite.levels)
            for (int i = 0; i < suite.episodes; ++i) jobs.push_back({t, l, i});

    const std::size_t m = suite.matchers.size();
    struct Outcome {
        bool success = false;
        std::optional<FailureCause> cause;
    };
    std::vector<Outcome> outcomes(jobs.size() * m);
    std::vector<std::string> lines(jobs.size() * m);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;

    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < jobs.size();) {
            try {
                const auto& job = jobs[k];
                const auto seed = episode_seed(suite.seed, job.task, job.level, job.index);
                const auto task = instantiate_task(job.task, job.level, seed, suite.task);
                for (std::size_t mi = 0; mi < m; ++mi) {
                    const auto log = run_episode(task, suite.matchers[mi], backend, suite.faults, suite.policy, seed,
                                           suite.episode);
                    lines[k * m + mi] = to_json(log, suite.episode.full_prompts).dump();
                    outcomes[k * m + mi] = {log.success, log.attribution};
                }
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (!error) error = std::current_exception();
                next = jobs.size();
            }
        }
    };
    const int threads = std::min<int>(suite.jobs, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);

    BenchResult out;
    auto& r = out.report;
    r.tasks = suite.tasks;
    r.levels = suite.levels;
    r.matchers = suite.matchers;
    r.episodes_per_cell = suite.episodes;
    r.backend_id = backend.id();
    r.suite_digest = suite_digest(suite, r.backend_id);
    for (auto mk : suite.matchers)
        for (auto t : suite.tasks)
            for (auto l : suite.levels) r.grids[mk][{t, l}];
    for (std::size_t k = 0; k < jobs.size(); ++k)
        for (std::size_t mi = 0; mi < m; ++mi) {
            const auto& o = outcomes[k * m + mi];
            auto& cell = r.grids[suite.matchers[mi]][{jobs[k].task, jobs[k].level}];
            ++cell.episodes;
            if (o.success) ++cell.successes;
            if (o.cause) ++cell.causes[*o.cause];
        }
    out.log_lines = std::move(lines);
    return out;
}

// ---------------------------------------------------------------------------
// Comparison

struct ZTest {
    double z = 0;
    double p_value = 1;
};

/// Pooled two-proportion z-test. A zero standard error yields z = 0, p = 1.
inline ZTest two_proportion_z(int x1, int n1, int x2, int n2)
{
    if (n1 <= 0 || n2 <= 0) return {};
    const double p1 = static_cast<double>(x1) / n1, p2 = static_cast<double>(x2) / n2;
    const double p = static_cast<double>(x1 + x2) / (n1 + n2);
    const double se = std::sqrt(p * (1 - p) * (1.0 / n1 + 1.0 / n2));
    if (se == 0) return {};
    const double z = (p1 - p2) / se;
    return {z, std::erfc(std::abs(z) / std::sqrt(2.0))};
}

struct CellComparison {
    TaskKind task;
    GeneralizationLevel level;
    CellResult a;
    CellResult b;
    double delta_pp = 0; // rate(a) - rate(b)
    ZTest test;
};

struct ComparisonSummary {
    std::vector<CellComparison> cells;
    double pooled_delta_pp = 0;
    ZTest pooled;
};

/// Per-cell and pooled differences, a minus b. Grids must have identical cells and counts.
inline ComparisonSummary compare(const RateGrid& a, const RateGrid& b)
{
    if (a.size() != b.size()) throw GridMismatch("grids have different cell sets");
    ComparisonSummary s;
    int xa = 0, na = 0, xb = 0, nb = 0;
    for (const auto& [key, ca] : a) {
        auto it = b.find(key);
        if (it == b.end()) throw GridMismatch("cell missing from second grid");
        const auto& cb = it->second;
        if (ca.episodes != cb.episodes) throw GridMismatch("cells have different episode counts");
        CellComparison c{std::get<0>(key), std::get<1>(key), ca, cb, 0, {}};
        if (ca.episodes > 0) c.delta_pp = *ca.rate() - *cb.rate();
        c.test = two_proportion_z(ca.successes, ca.episodes, cb.successes, cb.episodes);
        s.cells.push_back(c);
        xa += ca.successes;
        na += ca.episodes;
        xb += cb.successes;
        nb += cb.episodes;
    }
    if (na > 0 && nb > 0) s.pooled_delta_pp = 100.0 * xa / na - 100.0 * xb / nb;
    s.pooled = two_proportion_z(xa, na, xb, nb);
    return s;
}

inline ComparisonSummary compare(const BenchReport& r, MatcherKind a = MatcherKind::Caicl,
                                 MatcherKind b = MatcherKind::Vanilla)
{
    auto ia = r.grids.find(a), ib = r.grids.find(b);
    if (ia == r.grids.end() || ib == r.grids.end()) throw GridMismatch("report lacks one of the matchers");
    return compare(ia->second, ib->second);
}

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline std::string fixed(double v, int digits = 1)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string opt_rate(const std::optional<double>& r) { return r ? fixed(*r) : ""; }

inline std::string pvalue(double p)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, p < 1e-4 ? "%.2e" : "%.4f", p);
    return buf;
}

/// Left-aligned first column, right-aligned rest, two spaces between columns.
inline std::string align(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> w;
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (w.size() <= i) w.push_back(0);
            w[i] = std::max(w[i], r[i].size());
        }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) line += "  ";
            const std::string pad(w[i] - r[i].size(), ' ');
            line += i == 0 ? r[i] + pad : pad + r[i];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

} // namespace detail

/// Machine-readable report: one row per (task, level, matcher) cell.
inline std::string report_csv(const BenchReport& r)
{
    std::string out = "task,level,matcher,episodes,successes,rate";
    for (auto c : kAllCauses) out += std::string(",") + to_string(c);
    out += ",paper_ref=Table1\n";
    for (auto t : r.tasks)
        for (auto l : r.levels)
            for (auto m : r.matchers) {
                const auto& c = r.grids.at(m).at({t, l});
                out += std::string(to_string(t)) + "," + to_string(l) + "," + to_string(m) + "," +
                       std::to_string(c.episodes) + "," + std::to_string(c.successes) + "," +
                       detail::opt_rate(c.rate());
                for (auto cause : kAllCauses) {
                    auto it = c.causes.find(cause);
                    out += "," + std::to_string(it == c.causes.end() ? 0 : it->second);
                }
                out += "," + detail::fixed(reference::cell(m, t, l)) + "\n";
            }
    return out;
}

/// Machine-readable comparison: per-cell deltas and z-tests, then the pooled row.
inline std::string comparison_csv(const ComparisonSummary& s)
{
    std::string out = "task,level,rate_a,rate_b,delta_pp,z,p_value\n";
    for (const auto& c : s.cells)
        out += std::string(to_string(c.task)) + "," + to_string(c.level) + "," + detail::opt_rate(c.a.rate()) +
               "," + detail::opt_rate(c.b.rate()) + "," + detail::fixed(c.delta_pp, 2) + "," +
               detail::fixed(c.test.z, 3) + "," + detail::pvalue(c.test.p_value) + "\n";
    out += "pooled,all,,," + detail::fixed(s.pooled_delta_pp, 2) + "," + detail::fixed(s.pooled.z, 3) + "," +
           detail::pvalue(s.pooled.p_value) + "\n";
    return out;
}

/// Human-readable report: measured rates beside the reference columns.
inline std::string report_text(const BenchReport& r)
{
    std::ostringstream out;
    out << "suite " << r.suite_digest << "  backend " << r.backend_id << "  episodes/cell " << r.episodes_per_cell
        << "\n\n";
    for (auto l : r.levels) {
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> head{std::string("Level ") + to_string(l)};
        for (auto t : r.tasks) head.emplace_back(to_string(t));
        head.emplace_back("Avg");
        rows.push_back(head);
        for (auto m : r.matchers) {
            std::vector<std::string> row{std::string("measured ") + to_string(m)};
            double sum = 0;
            int cells = 0;
            for (auto t : r.tasks) {
                const auto rate = r.grids.at(m).at({t, l}).rate();
                row.push_back(detail::opt_rate(rate));
                if (rate) {
                    sum += *rate;
                    ++cells;
                }
            }
            row.push_back(cells ? detail::fixed(sum / cells) : "");
            rows.push_back(row);
        }
        for (auto m : r.matchers) {
            std::vector<std::string> row{std::string("paper_ref=Table1 ") + to_string(m)};
            for (auto t : r.tasks) row.push_back(detail::fixed(reference::cell(m, t, l)));
            row.push_back(detail::fixed(reference::average(m, l)));
            rows.push_back(row);
        }
        out << detail::align(rows) << "\n";
    }
    if (r.grids.contains(MatcherKind::Caicl) && r.grids.contains(MatcherKind::Vanilla)) {
        out << "paper_ref=Table1 average delta (caicl - vanilla):";
        for (auto l : r.levels)
            out << " " << to_string(l) << " " << detail::fixed(reference::average(MatcherKind::Caicl, l)) << " vs "
                << detail::fixed(reference::average(MatcherKind::Vanilla, l)) << " = "
                << (reference::average(MatcherKind::Caicl, l) >= reference::average(MatcherKind::Vanilla, l) ? "+"
                                                                                                               : "")
                << detail::fixed(reference::average(MatcherKind::Caicl, l) -
                                 reference::average(MatcherKind::Vanilla, l))
                << " pp;";
        out << "\n\n";
    }

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"paper_ref=Table2"};
    for (auto t : reference::kTasks) head.emplace_back(to_string(t));
    rows.push_back(head);
    for (const auto& row : reference::kByModel) {
        std::vector<std::string> cells{row.model};
        for (double v : row.rates) cells.push_back(detail::fixed(v));
        rows.push_back(cells);
    }
    out << detail::align(rows) << "\n";

    std::vector<std::vector<std::string>> causes;
    std::vector<std::string> chead{"failures"};
    for (auto c : kAllCauses) chead.emplace_back(to_string(c));
    causes.push_back(chead);
    for (auto m : r.matchers) {
        const auto p = r.pooled(m);
        std::vector<std::string> row{to_string(m)};
        for (auto c : kAllCauses) {
            auto it = p.causes.find(c);
            row.push_back(std::to_string(it == p.causes.end() ? 0 : it->second));
        }
        causes.push_back(row);
    }
    out << detail::align(causes);
    return out.str();
}

inline std::string comparison_text(const ComparisonSummary& s, const char* label_a = "caicl",
                                   const char* label_b = "vanilla")
{
    std::vector<std::vector<std::string>> rows{{"cell", label_a, label_b, "delta_pp", "z", "p"}};
    for (const auto& c : s.cells)
        rows.push_back({std::string(to_string(c.task)) + "/" + to_string(c.level), detail::opt_rate(c.a.rate()),
                        detail::opt_rate(c.b.rate()), detail::fixed(c.delta_pp, 1), detail::fixed(c.test.z, 2),
                        detail::pvalue(c.test.p_value)});
    rows.push_back({"pooled", "", "", detail::fixed(s.pooled_delta_pp, 1), detail::fixed(s.pooled.z, 2),
                    detail::pvalue(s.pooled.p_value)});
    return detail::align(rows);
}

} // namespace caicl
