// SPDX-License-Identifier: Apache-2.0
// Command-line front end: bench, episode, analyze.
// Exit codes: 0 done, 1 unexpected error, 2 configuration error, 3 environment error.

#include "caicl/caicl.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace caicl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitEnvironment = 3;

struct CommonFlags {
    CliOverrides o;
    std::optional<std::string> config;
};

void add_common(CLI::App& cmd, CommonFlags& f)
{
    cmd.add_option("--config", f.config, "JSON config file (flags override it)");
    cmd.add_option("--backend", f.o.backend, "mock or remote");
    cmd.add_option("--base-url", f.o.base_url, "remote endpoint base URL");
    cmd.add_option("--model", f.o.model, "remote model id");
    cmd.add_option("--seed", f.o.seed, "suite seed");
    cmd.add_option("--jobs", f.o.jobs, "worker threads");
    cmd.add_option("--out-dir", f.o.out_dir, "output directory");
    cmd.add_option("--dump-prompts", f.o.dump_prompts, "write every prompt sent to this directory");
}

RunConfig load(const CommonFlags& f)
{
    std::optional<nlohmann::json> file;
    if (f.config) file = read_json_file(*f.config);
    return resolve_run_config(f.o, file);
}

void write_file(const fs::path& p, const std::string& body)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << body;
}

void dump_prompts(const fs::path& dir, const std::string& prefix, const EpisodeLog& log)
{
    for (const auto& r : log.referents) {
        if (!r.decision) continue;
        int n = 0;
        for (const auto& req : r.decision->trace.requests) {
            char name[96];
            std::snprintf(name, sizeof name, "%sslot%d_%02d_%s.txt", prefix.c_str(), r.slot, ++n, req.phase.c_str());
            write_file(dir / name, req.prompt);
        }
    }
}

int cmd_bench(const CommonFlags& f)
{
    RunConfig cfg = load(f);
    auto backend = make_backend(cfg);
    if (cfg.dump_prompts) cfg.suite.episode.full_prompts = true;
    const auto result = run_benchmark(cfg.suite, *backend);

    const fs::path out = cfg.out_dir;
    std::string jsonl;
    for (const auto& line : result.log_lines) jsonl += line + "\n";
    write_file(out / "episodes.jsonl", jsonl);
    write_file(out / "report.csv", report_csv(result.report));
    std::string text = report_text(result.report);
    if (result.report.grids.contains(MatcherKind::Caicl) && result.report.grids.contains(MatcherKind::Vanilla)) {
        const auto cmp = compare(result.report);
        write_file(out / "comparison.csv", comparison_csv(cmp));
        text += "\n" + comparison_text(cmp);
    }
    write_file(out / "report.txt", text);
    if (cfg.dump_prompts) {
        std::size_t i = 0;
        for (const auto& line : result.log_lines) {
            const auto j = nlohmann::json::parse(line);
            for (const auto& r : j["referents"]) {
                if (r["decision"].is_null()) continue;
                int n = 0;
                for (const auto& req : r["decision"]["trace"]["requests"]) {
                    char name[96];
                    std::snprintf(name, sizeof name, "ep%06zu_slot%d_%02d_%s.txt", i, r["slot"].get<int>(), ++n,
                                  req["phase"].get<std::string>().c_str());
                    write_file(fs::path(*cfg.dump_prompts) / name, req["prompt"].get<std::string>());
                }
            }
            ++i;
        }
    }
    std::cout << text;
    std::cout << "wrote " << (out / "episodes.jsonl").string() << ", report.csv, report.txt\n";
    return 0;
}

int cmd_episode(const CommonFlags& f, const std::string& task_id, const std::string& level_id, int index,
                const std::string& matcher_id)
{
    RunConfig cfg = load(f);
    const auto kind = parse_task_kind(task_id);
    GeneralizationLevel level;
    try {
        level = parse_level(level_id);
    } catch (const UnknownLevel& e) {
        throw ConfigError(e.what());
    }
    const auto matcher = parse_matcher_kind(matcher_id);
    auto backend = make_backend(cfg);

    const auto seed = episode_seed(cfg.suite.seed, kind, level, index);
    const auto task = instantiate_task(kind, level, seed, cfg.suite.task);
    auto opts = cfg.suite.episode;
    opts.full_prompts = true;
    const auto log = run_episode(task, matcher, *backend, cfg.suite.faults, cfg.suite.policy, seed, opts);
    if (cfg.dump_prompts) dump_prompts(*cfg.dump_prompts, "", log);

    std::cout << to_json(log, true).dump() << "\n";
    std::cerr << to_string(kind) << " " << to_string(level) << " " << to_string(matcher) << ": "
              << (log.success ? "success" : std::string("failure (") + to_string(*log.attribution) + ")") << ", "
              << log.request_count() << " backend request(s)\n";
    return 0;
}

int cmd_analyze(const std::string& path, bool reference)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read log file " + path);
    std::map<FailureCause, int> hist;
    int episodes = 0, failures = 0;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ConfigError("line " + std::to_string(lineno) + " is not JSON");
        const auto schema = j.value("schema_version", std::string{});
        if (schema != kEpisodeSchema)
            throw ConfigError("line " + std::to_string(lineno) + ": schema_version '" + schema + "', expected '" +
                              kEpisodeSchema + "'");
        ++episodes;
        if (j.value("success", false)) continue;
        ++failures;
        if (j["attribution"].is_string()) ++hist[parse_failure_cause(j["attribution"].get<std::string>())];
    }

    std::cout << "episodes: " << episodes << "\nfailures: " << failures << "\n";
    for (const auto& [cause, n] : hist) std::cout << to_string(cause) << ": " << n << "\n";
    const int confusion = hist.count(FailureCause::RecognitionConfusion) ? hist[FailureCause::RecognitionConfusion] : 0;
    const int other = hist.count(FailureCause::RecognitionOther) ? hist[FailureCause::RecognitionOther] : 0;
    if (failures > 0) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "recognition: %.1f%% of failures (confusion %d, other %d)\n",
                      100.0 * (confusion + other) / failures, confusion, other);
        std::cout << buf;
    }
    if (reference) std::cout << "paper_ref: recognition ≈ 60% of failures\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Confusion-aware recognition benchmark for tabletop manipulation"};
    app.require_subcommand(1);

    CommonFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "run both matchers over a task suite and write reports");
    add_common(*bench, bench_flags);
    bench->add_option("--tasks", bench_flags.o.tasks, "comma-separated task ids, e.g. t01,t17");
    bench->add_option("--levels", bench_flags.o.levels, "comma-separated levels, e.g. l1,l3");
    bench->add_option("--episodes", bench_flags.o.episodes, "episodes per task x level cell");

    CommonFlags ep_flags;
    std::string task_id, level_id = "l1", matcher_id = "caicl";
    int index = 0;
    auto* episode = app.add_subcommand("episode", "run one episode and print its full log");
    add_common(*episode, ep_flags);
    episode->add_option("--task", task_id, "task id")->required();
    episode->add_option("--level", level_id, "generalization level");
    episode->add_option("--matcher", matcher_id, "caicl or vanilla");
    episode->add_option("--index", index, "episode index within the cell (matches bench seeding)");

    std::string log_path;
    bool reference = false;
    auto* analyze = app.add_subcommand("analyze", "summarize failure causes in an episode log");
    analyze->add_option("log", log_path, "episodes.jsonl")->required();
    analyze->add_flag("--reference", reference, "print the published failure split alongside");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*bench) return cmd_bench(bench_flags);
        if (*episode) return cmd_episode(ep_flags, task_id, level_id, index, matcher_id);
        if (*analyze) return cmd_analyze(log_path, reference);
    } catch (const BackendSetupError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InfeasibleConfig& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
