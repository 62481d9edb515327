// SPDX-License-Identifier: Apache-2.0
#include "knowagent/self_learning.hpp"

#include "knowagent/error.hpp"
#include "knowagent/text.hpp"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace knowagent
{

namespace
{

std::string drop_reason(const Trajectory& traj, const ValidationReport& report, double tau)
{
    if (traj.terminated_by == Termination::PolicyError || traj.error)
        return "policy_error";
    for (auto flag: {StepFlag::ParseError, StepFlag::InvalidAction, StepFlag::MisorderedAction, StepFlag::PathMismatch})
        for (const auto& v: report.verdicts)
            if (v.has(flag))
                return std::string(to_string(flag));
    if (!is_correct(traj, tau))
        return "outcome";
    return {};
}

std::string shell_quote(const std::string& s)
{
    auto out = std::string("'");
    for (char c: s)
        out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

bool executable_exists(const std::string& command)
{
    auto words = text::split(text::trim(command), " ");
    if (words.empty() || words.front().empty())
        return false;
    const auto& program = words.front();
    if (program.find('/') != std::string::npos)
        return fs::exists(program);
    const char* path = std::getenv("PATH");
    for (const auto& dir: text::split(path ? path : "", ":"))
        if (!dir.empty() && fs::exists(fs::path(dir) / program))
            return true;
    return false;
}

double evaluate(const PolicyClient& policy, const ActionKnowledge& kb, const LoopConfig& config, const fs::path& dir)
{
    auto batch = run_batch(config.test, kb, policy, config.episode, config.parallelism);
    write_trajectories((dir / "test_trajectories.jsonl").string(), batch.trajectories);
    return batch.metrics.mean_reward;
}

std::string fixed(double v, int digits)
{
    auto os = std::ostringstream {};
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

} // namespace

bool is_correct(const Trajectory& traj, double tau)
{
    return traj.outcome.reward >= tau;
}

FilterResult filter_trajectories(const std::vector<Trajectory>& trajectories, const ActionKnowledge& kb, double tau,
                                 const ValidationOptions& options)
{
    auto result = FilterResult {};
    for (const auto& traj: trajectories)
    {
        auto reason = drop_reason(traj, validate_trajectory(kb, traj, options), tau);
        if (reason.empty())
            result.kept.push_back(traj);
        else
            result.dropped.push_back(FilterDrop {traj.task_id, std::move(reason)});
    }
    return result;
}

bool TrajectoryStore::offer(Trajectory traj, size_t iteration)
{
    auto it = _best.find(traj.task_id);
    if (it != _best.end() && traj.steps.size() >= it->second.trajectory.steps.size())
        return false;
    auto id = traj.task_id;
    _best[id] = Entry {std::move(traj), iteration};
    return true;
}

void TrajectoryStore::archive(size_t iteration, std::vector<Trajectory> trajectories)
{
    _archive[iteration] = std::move(trajectories);
}

size_t TrajectoryStore::total_steps() const
{
    size_t n = 0;
    for (const auto& [id, entry]: _best)
        n += entry.trajectory.steps.size();
    return n;
}

std::map<std::string, size_t> TrajectoryStore::path_lengths() const
{
    auto out = std::map<std::string, size_t> {};
    for (const auto& [id, entry]: _best)
        out[id] = entry.trajectory.steps.size();
    return out;
}

std::vector<Trajectory> synthesize(const PolicyClient& policy, const ActionKnowledge& kb, std::span<const Scenario> tasks,
                                   const EpisodeConfig& config, size_t parallelism, TrajectoryStore* store, size_t iteration)
{
    auto batch = run_batch(tasks, kb, policy, config, parallelism);
    if (store)
        store->archive(iteration, batch.trajectories);
    return std::move(batch.trajectories);
}

MergeStats filter_and_merge(const std::vector<Trajectory>& trajectories, TrajectoryStore& store, const ActionKnowledge& kb,
                            double tau, size_t iteration, const ValidationOptions& options)
{
    auto stats = MergeStats {};
    stats.filter = filter_trajectories(trajectories, kb, tau, options);
    for (const auto& traj: stats.filter.kept)
    {
        auto known = store.best().contains(traj.task_id);
        if (store.offer(traj, iteration))
            ++(known ? stats.replaced : stats.added);
    }
    return stats;
}

TuningDataset emit_tuning_dataset(const TrajectoryStore& store, const ActionKnowledge& kb)
{
    if (store.empty())
        throw Error(ErrorCode::EmptyStore, "trajectory store is empty");

    auto tmpl = build_template(kb);
    auto instruction = render_system_prompt(tmpl);
    auto dataset = TuningDataset {};
    auto sources = Json::object();
    auto iterations = std::map<size_t, size_t> {};

    for (const auto& [taskId, entry]: store.best())
    {
        const auto& traj = entry.trajectory;
        for (size_t t = 0; t < traj.steps.size(); ++t)
        {
            dataset.records.push_back(TuningRecord {
                .instruction = instruction,
                .input = tmpl.task_prefix + traj.task_text + serialize_scratchpad(traj, kb, t),
                .output = format_step_output(traj.steps[t], kb),
            });
        }
        sources[taskId] = Json {{"iteration", entry.iteration}, {"steps", traj.steps.size()}};
        ++iterations[entry.iteration];
    }

    auto perIteration = Json::object();
    for (const auto& [i, n]: iterations)
        perIteration[std::to_string(i)] = n;
    dataset.manifest = Json {
        {"kb", kb.task_id()},
        {"records", dataset.records.size()},
        {"trajectories", store.size()},
        {"steps", store.total_steps()},
        {"trajectories_by_iteration", std::move(perIteration)},
        {"sources", std::move(sources)},
    };
    return dataset;
}

void write_tuning_dataset(const TuningDataset& dataset, const std::string& path)
{
    auto out = std::string {};
    for (const auto& r: dataset.records)
        out += Json {{"instruction", r.instruction}, {"input", r.input}, {"output", r.output}}.dump() + "\n";
    text::write_file(path, out);
    auto manifestPath = fs::path(path).replace_extension(".manifest.json");
    text::write_file(manifestPath.string(), dataset.manifest.dump(2) + "\n");
}

std::vector<TuningRecord> read_tuning_dataset(const std::string& path)
{
    auto records = std::vector<TuningRecord> {};
    for (const auto& line: text::split_lines(text::read_file(path)))
    {
        if (text::trim(line).empty())
            continue;
        auto doc = Json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw Error(ErrorCode::MalformedDocument, path + ": invalid JSON line");
        try
        {
            records.push_back(TuningRecord {doc.at("instruction").get<std::string>(), doc.at("input").get<std::string>(),
                                            doc.at("output").get<std::string>()});
        }
        catch (const nlohmann::json::exception& e)
        {
            throw Error(ErrorCode::MalformedDocument, path + ": " + e.what());
        }
    }
    return records;
}

std::string run_tune_hook(const std::string& command, const std::string& dataset, const std::string& base_model,
                          const std::string& out_dir, size_t iteration)
{
    if (!executable_exists(command))
        throw Error(ErrorCode::TuneHookMissing, "tune hook not found: '" + command + "'");

    auto cmdline = command + " --dataset " + shell_quote(dataset) + " --base-model " + shell_quote(base_model)
                   + " --out " + shell_quote(out_dir);
    auto* pipe = ::popen(cmdline.c_str(), "r");
    if (!pipe)
        throw Error(ErrorCode::TuneHookFailure, "iteration " + std::to_string(iteration) + ": cannot start tune hook");

    auto output = std::string {};
    auto buffer = std::array<char, 4096> {};
    while (auto n = std::fread(buffer.data(), 1, buffer.size(), pipe))
        output.append(buffer.data(), n);
    auto status = ::pclose(pipe);
    auto code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;

    if (code == 127)
        throw Error(ErrorCode::TuneHookMissing, "tune hook could not be executed: '" + command + "'");
    if (code != 0)
        throw Error(ErrorCode::TuneHookFailure,
                    "iteration " + std::to_string(iteration) + ": tune hook exited with status " + std::to_string(code));

    auto lines = text::split_lines(output);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it)
        if (auto id = text::trim(*it); !id.empty())
            return std::string(id);
    throw Error(ErrorCode::TuneHookFailure, "iteration " + std::to_string(iteration) + ": tune hook printed no policy id");
}

LoopResult self_learning_loop(const ActionKnowledge& kb, const LoopConfig& config)
{
    if (config.train.empty() || config.test.empty())
        throw Error(ErrorCode::EmptyInput, "self-learning needs non-empty training and test task lists");
    if (config.max_iterations == 0)
        throw Error(ErrorCode::Usage, "max_iterations must be at least 1");
    if (!executable_exists(config.tune_command))
        throw Error(ErrorCode::TuneHookMissing, "tune hook not found: '" + config.tune_command + "'");

    auto factory = config.factory ? config.factory : [](const std::string& id) { return make_policy(id); };
    auto root = fs::path(config.out_dir);
    auto result = LoopResult {};
    auto store = TrajectoryStore {};

    auto policyId = config.base_policy;
    auto policy = factory(policyId);
    fs::create_directories(root / "baseline");
    auto perf = evaluate(*policy, kb, config, root / "baseline");
    result.base_perf = perf;

    for (size_t i = 0; i < config.max_iterations; ++i)
    {
        auto dir = root / "iterations" / std::to_string(i);
        fs::create_directories(dir);

        auto record = IterationRecord {};
        record.index = i;
        record.policy_id = policyId;

        auto synthesized = synthesize(*policy, kb, config.train, config.episode, config.parallelism, &store, i);
        record.synthesized = synthesized.size();
        write_trajectories((dir / "trajectories.jsonl").string(), synthesized);

        auto previousTotal = store.size();
        auto merge = filter_and_merge(synthesized, store, kb, config.tau, i, config.episode.validation);
        record.kept_after_filter = merge.filter.kept.size();
        record.merged_total = store.size();

        auto datasetPath = (dir / "dataset.jsonl").string();
        auto report = Json {{"iteration", i},
                            {"policy", policyId},
                            {"synthesized", record.synthesized},
                            {"kept_after_filter", record.kept_after_filter},
                            {"store_before", previousTotal},
                            {"added", merge.added},
                            {"replaced", merge.replaced},
                            {"merged_total", record.merged_total}};
        auto drops = Json::array();
        for (const auto& d: merge.filter.dropped)
            drops.push_back(Json {{"task_id", d.task_id}, {"reason", d.reason}});
        report["dropped"] = std::move(drops);

        if (store.empty())
        {
            text::write_file((dir / "report.json").string(), report.dump(2) + "\n");
            throw Error(ErrorCode::EmptyStore, "iteration " + std::to_string(i) + ": no trajectory survived filtering");
        }
        write_tuning_dataset(emit_tuning_dataset(store, kb), datasetPath);
        text::write_file((dir / "report.json").string(), report.dump(2) + "\n");

        ++result.tune_invocations;
        auto tuned = run_tune_hook(config.tune_command, datasetPath, policyId, (dir / "model").string(), i);
        auto tunedPolicy = factory(tuned);
        auto tunedPerf = evaluate(*tunedPolicy, kb, config, dir);

        record.tuned_policy = tuned;
        record.test_perf = tunedPerf;
        record.delta_perf = tunedPerf - perf;
        report["tuned_policy"] = tuned;
        report["test_perf"] = tunedPerf;
        report["delta_perf"] = record.delta_perf;
        text::write_file((dir / "report.json").string(), report.dump(2) + "\n");
        result.iterations.push_back(record);

        policyId = tuned;
        policy = tunedPolicy;
        perf = tunedPerf;
        if (record.delta_perf <= config.epsilon)
        {
            result.halt_reason = "delta<=epsilon";
            break;
        }
    }
    if (result.halt_reason.empty())
        result.halt_reason = "max_iterations";
    result.final_policy = policyId;
    text::write_file((root / "summary.json").string(), to_json(result).dump(2) + "\n");
    return result;
}

Json to_json(const IterationRecord& r)
{
    return Json {{"index", r.index},
                 {"policy_id", r.policy_id},
                 {"tuned_policy", r.tuned_policy},
                 {"synthesized", r.synthesized},
                 {"kept_after_filter", r.kept_after_filter},
                 {"merged_total", r.merged_total},
                 {"test_perf", r.test_perf},
                 {"delta_perf", r.delta_perf}};
}

Json to_json(const LoopResult& result)
{
    auto iterations = Json::array();
    for (const auto& r: result.iterations)
        iterations.push_back(to_json(r));
    return Json {{"base_perf", result.base_perf},
                 {"iterations", std::move(iterations)},
                 {"halt_reason", result.halt_reason},
                 {"tune_invocations", result.tune_invocations},
                 {"final_policy", result.final_policy}};
}

std::string summary_table(const LoopResult& result)
{
    auto os = std::ostringstream {};
    os << std::left << std::setw(10) << "iteration" << std::right << std::setw(8) << "kept" << std::setw(8) << "merged"
       << std::setw(8) << "perf" << std::setw(9) << "dperf" << "\n";
    os << std::left << std::setw(10) << "base" << std::right << std::setw(8) << "-" << std::setw(8) << "-" << std::setw(8)
       << fixed(result.base_perf, 4) << std::setw(9) << "-" << "\n";
    for (const auto& r: result.iterations)
    {
        auto delta = (r.delta_perf >= 0 ? "+" : "") + fixed(r.delta_perf, 4);
        os << std::left << std::setw(10) << r.index << std::right << std::setw(8) << r.kept_after_filter << std::setw(8)
           << r.merged_total << std::setw(8) << fixed(r.test_perf, 4) << std::setw(9) << delta << "\n";
    }
    os << "halt: " << result.halt_reason << " after " << result.tune_invocations << " tune invocation(s)\n";
    return os.str();
}

} // namespace knowagent
